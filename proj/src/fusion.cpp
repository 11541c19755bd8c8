// Copyright (c) 2026 The canid authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "canid/fusion.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "canid/error.hpp"
#include "canid/io_util.hpp"

namespace canid::fusion {

const ScoreRow* ScoreTable::find(const std::string& utt_id) const {
  for (const auto& r : rows)
    if (r.utt_id == utt_id) return &r;
  return nullptr;
}

void validate_row(const ScoreRow& row, size_t n_classes) {
  if (row.probs.size() != n_classes)
    throw DataError("score row '" + row.utt_id + "' has wrong class count");
  double sum = 0.0;
  for (double p : row.probs) {
    if (!(p >= 0.0)) throw DataError("score row '" + row.utt_id + "' has a negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw DataError("score row '" + row.utt_id + "' does not sum to 1");
}

ScoreRow fuse(const ScoreRow& acoustic, const ScoreRow& text, double lambda) {
  if (acoustic.utt_id != text.utt_id)
    throw DataError("fuse: utterance mismatch ('" + acoustic.utt_id + "' vs '" +
                    text.utt_id + "')");
  if (acoustic.probs.size() != text.probs.size()) throw DataError("fuse: class count mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DataError("fuse: lambda must be in [0, 1]");
  ScoreRow out;
  out.utt_id = acoustic.utt_id;
  out.ref_label = acoustic.ref_label;
  out.probs.resize(acoustic.probs.size());
  for (size_t i = 0; i < out.probs.size(); ++i)
    out.probs[i] = (1.0 - lambda) * acoustic.probs[i] + lambda * text.probs[i];
  return out;
}

ScoreRow fuse_logit(const ScoreRow& acoustic, const ScoreRow& text, double lambda) {
  if (acoustic.utt_id != text.utt_id)
    throw DataError("fuse_logit: utterance mismatch ('" + acoustic.utt_id + "' vs '" +
                    text.utt_id + "')");
  if (acoustic.probs.size() != text.probs.size())
    throw DataError("fuse_logit: class count mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DataError("fuse_logit: lambda must be in [0, 1]");
  ScoreRow out;
  out.utt_id = acoustic.utt_id;
  out.ref_label = acoustic.ref_label;
  const size_t k = acoustic.probs.size();
  std::vector<double> mixed(k);
  double mx = -1e300;
  for (size_t i = 0; i < k; ++i) {
    const double la = std::log(std::max(acoustic.probs[i], 1e-300));
    const double lt = std::log(std::max(text.probs[i], 1e-300));
    mixed[i] = (1.0 - lambda) * la + lambda * lt;
    mx = std::max(mx, mixed[i]);
  }
  double z = 0.0;
  out.probs.resize(k);
  for (size_t i = 0; i < k; ++i) {
    out.probs[i] = std::exp(mixed[i] - mx);
    z += out.probs[i];
  }
  for (double& p : out.probs) p /= z;
  return out;
}

int classify(const ScoreRow& row) {
  if (row.probs.empty()) throw DataError("classify: empty probability vector");
  int arg = 0;
  for (size_t i = 1; i < row.probs.size(); ++i)
    if (row.probs[i] > row.probs[static_cast<size_t>(arg)]) arg = static_cast<int>(i);
  return arg;
}

std::vector<double> lambda_grid() {
  std::vector<double> grid(11);
  for (int i = 0; i <= 10; ++i) grid[static_cast<size_t>(i)] = static_cast<double>(i) / 10.0;
  return grid;
}

namespace {

double accuracy_at(const ScoreTable& acoustic, const ScoreTable& text,
                   const std::map<std::string, std::string>& refs, double lambda,
                   bool logit_space) {
  int correct = 0;
  for (const auto& ar : acoustic.rows) {
    const ScoreRow* tr = text.find(ar.utt_id);
    if (tr == nullptr)
      throw DataError("grid_search_lambda: utterance '" + ar.utt_id + "' missing from text table");
    auto it = refs.find(ar.utt_id);
    if (it == refs.end())
      throw DataError("grid_search_lambda: no reference label for '" + ar.utt_id + "'");
    const ScoreRow fused = logit_space ? fuse_logit(ar, *tr, lambda) : fuse(ar, *tr, lambda);
    const int ref = acoustic.labels.index_of(it->second);
    if (ref < 0)
      throw DataError("grid_search_lambda: unknown reference label '" + it->second + "'");
    if (classify(fused) == ref) ++correct;
  }
  return acoustic.rows.empty() ? 0.0
                               : static_cast<double>(correct) /
                                     static_cast<double>(acoustic.rows.size());
}

}  // namespace

GridSearchResult grid_search_lambda(const ScoreTable& acoustic, const ScoreTable& text,
                                    const std::map<std::string, std::string>& refs,
                                    bool logit_space) {
  if (!(acoustic.labels == text.labels))
    throw DataError("grid_search_lambda: label order mismatch between tables");
  if (acoustic.rows.size() != text.rows.size())
    throw DataError("grid_search_lambda: tables have different utterance counts");

  GridSearchResult result;
  result.best_accuracy = -1.0;
  for (double lambda : lambda_grid()) {
    const double acc = accuracy_at(acoustic, text, refs, lambda, logit_space);
    result.curve.push_back({lambda, acc});
    if (acc > result.best_accuracy) {  // strict: ties keep the smaller lambda
      result.best_accuracy = acc;
      result.best_lambda = lambda;
    }
  }
  return result;
}

ScoreTable fuse_tables(const ScoreTable& acoustic, const ScoreTable& text, double lambda,
                       bool logit_space) {
  if (!(acoustic.labels == text.labels))
    throw DataError("fuse_tables: label order mismatch between tables");
  ScoreTable out;
  out.labels = acoustic.labels;
  for (const auto& ar : acoustic.rows) {
    const ScoreRow* tr = text.find(ar.utt_id);
    if (tr == nullptr)
      throw DataError("fuse_tables: utterance '" + ar.utt_id + "' missing from text table");
    out.rows.push_back(logit_space ? fuse_logit(ar, *tr, lambda) : fuse(ar, *tr, lambda));
  }
  return out;
}

void save_score_table(const ScoreTable& table, const std::string& path) {
  std::string out = "utt_id,label";
  for (const auto& l : table.labels.labels) {
    if (l.find(',') != std::string::npos) throw DataError("label contains a comma: " + l);
    out += ",p_" + l;
  }
  out += '\n';
  char buf[64];
  for (const auto& r : table.rows) {
    if (r.utt_id.find(',') != std::string::npos)
      throw DataError("utt_id contains a comma: " + r.utt_id);
    validate_row(r, table.labels.size());
    out += r.utt_id;
    out += ',';
    out += r.ref_label;
    for (double p : r.probs) {
      std::snprintf(buf, sizeof(buf), ",%.12g", p);
      out += buf;
    }
    out += '\n';
  }
  write_file_text(path, out);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

ScoreTable load_score_table(const std::string& path) {
  std::istringstream in(read_file_text(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty score table: " + path);

  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "utt_id" || header[1] != "label")
    throw DataError("bad score table header in " + path);
  ScoreTable table;
  for (size_t i = 2; i < header.size(); ++i) {
    if (header[i].rfind("p_", 0) != 0)
      throw DataError("bad probability column '" + header[i] + "' in " + path);
    table.labels.labels.push_back(header[i].substr(2));
  }

  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2 + table.labels.size())
      throw DataError("score table line " + std::to_string(line_no) + " has wrong field count");
    ScoreRow r;
    r.utt_id = fields[0];
    r.ref_label = fields[1];
    for (size_t i = 2; i < fields.size(); ++i) {
      try {
        r.probs.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        throw DataError("score table line " + std::to_string(line_no) + ": bad number '" +
                        fields[i] + "'");
      }
    }
    validate_row(r, table.labels.size());
    table.rows.push_back(std::move(r));
  }
  return table;
}

void save_lambda_curve(const std::vector<LambdaCurvePoint>& curve, const std::string& path) {
  std::string out = "lambda,valid_acc\n";
  char buf[64];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%.1f,%.12g\n", p.lambda, p.accuracy);
    out += buf;
  }
  write_file_text(path, out);
}

std::vector<LambdaCurvePoint> load_lambda_curve(const std::string& path) {
  std::istringstream in(read_file_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "lambda,valid_acc")
    throw DataError("bad lambda curve header in " + path);
  std::vector<LambdaCurvePoint> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw DataError("bad lambda curve line in " + path);
    curve.push_back({std::stod(fields[0]), std::stod(fields[1])});
  }
  return curve;
}

}  // namespace canid::fusion
