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

#include "canid/textdid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "canid/error.hpp"
#include "canid/io_util.hpp"
#include "canid/kern.hpp"

namespace canid::textdid {

namespace {

constexpr uint32_t kBoundary = 0x2581;  // "▁"

std::vector<uint32_t> utf8_decode(const std::string& s) {
  std::vector<uint32_t> out;
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    uint32_t cp = 0;
    int extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07;
      extra = 3;
    } else {
      throw DataError("invalid UTF-8 byte in text");
    }
    if (extra > 0 && i + static_cast<size_t>(extra) >= s.size())
      throw DataError("truncated UTF-8 sequence in text");
    for (int k = 1; k <= extra; ++k) {
      const unsigned char cc = static_cast<unsigned char>(s[i + static_cast<size_t>(k)]);
      if ((cc >> 6) != 0x2) throw DataError("invalid UTF-8 continuation byte in text");
      cp = (cp << 6) | (cc & 0x3F);
    }
    out.push_back(cp);
    i += static_cast<size_t>(1 + extra);
  }
  return out;
}

void utf8_append(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode_span(const std::vector<uint32_t>& cps, size_t begin, size_t len) {
  std::string out;
  for (size_t i = begin; i < begin + len; ++i) utf8_append(out, cps[i]);
  return out;
}

std::vector<uint32_t> padded_codepoints(const std::string& normalized) {
  std::vector<uint32_t> cps = utf8_decode(normalized);
  std::vector<uint32_t> out;
  out.reserve(cps.size() + 2);
  out.push_back(kBoundary);
  out.insert(out.end(), cps.begin(), cps.end());
  out.push_back(kBoundary);
  return out;
}

// Windows made only of boundary markers carry no text content and would make
// every input non-OOV; they are not tokens.
bool all_boundary(const std::vector<uint32_t>& cps, size_t begin, size_t len) {
  for (size_t i = begin; i < begin + len; ++i)
    if (cps[i] != kBoundary) return false;
  return true;
}

}  // namespace

std::string normalize_text(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    const bool ws = ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r';
    if (ws) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    out.push_back(ch);
  }
  return out;
}

NgramVocab build_vocab(const std::vector<std::string>& texts, int n_min, int n_max,
                       int min_count) {
  if (n_min < 1 || n_max < n_min) throw DataError("build_vocab: bad n-gram range");
  std::map<std::string, int64_t> counts;
  bool any_nonempty = false;
  for (const auto& raw : texts) {
    const std::string norm = normalize_text(raw);
    if (norm.empty()) continue;
    any_nonempty = true;
    const std::vector<uint32_t> cps = padded_codepoints(norm);
    for (int n = n_min; n <= n_max; ++n)
      for (size_t i = 0; i + static_cast<size_t>(n) <= cps.size(); ++i) {
        if (all_boundary(cps, i, static_cast<size_t>(n))) continue;
        ++counts[encode_span(cps, i, static_cast<size_t>(n))];
      }
  }
  if (!any_nonempty) throw DataError("build_vocab: all texts empty");

  std::vector<std::pair<std::string, int64_t>> kept;
  for (const auto& [tok, cnt] : counts)
    if (cnt >= min_count) kept.emplace_back(tok, cnt);
  if (kept.empty()) throw DataError("build_vocab: empty vocabulary after min_count filter");

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  NgramVocab vocab;
  vocab.n_min = n_min;
  vocab.n_max = n_max;
  vocab.min_count = min_count;
  for (const auto& [tok, cnt] : kept) {
    vocab.index.emplace(tok, static_cast<int>(vocab.tokens.size()));
    vocab.tokens.push_back(tok);
  }
  return vocab;
}

SparseVec featurize(const std::string& text, const NgramVocab& vocab) {
  const std::string norm = normalize_text(text);
  if (norm.empty()) return {};
  const std::vector<uint32_t> cps = padded_codepoints(norm);

  std::map<int, double> counts;
  for (int n = vocab.n_min; n <= vocab.n_max; ++n)
    for (size_t i = 0; i + static_cast<size_t>(n) <= cps.size(); ++i) {
      if (all_boundary(cps, i, static_cast<size_t>(n))) continue;
      auto it = vocab.index.find(encode_span(cps, i, static_cast<size_t>(n)));
      if (it != vocab.index.end()) counts[it->second] += 1.0;
    }
  if (counts.empty()) return {};

  double norm2 = 0.0;
  for (const auto& [idx, c] : counts) norm2 += c * c;
  const double inv = 1.0 / std::sqrt(norm2);
  SparseVec out;
  out.reserve(counts.size());
  for (const auto& [idx, c] : counts) out.emplace_back(idx, c * inv);
  return out;
}

std::vector<double> TextModel::predict(const std::string& text) const {
  const int k = static_cast<int>(labels.size());
  const int v = static_cast<int>(vocab.size());
  const SparseVec phi = featurize(text, vocab);
  std::vector<double> logits(bias);
  for (int j = 0; j < k; ++j) {
    const double* wj = weights.data() + static_cast<size_t>(j) * v;
    for (const auto& [idx, val] : phi) logits[static_cast<size_t>(j)] += wj[idx] * val;
  }
  const double m = kern::max(logits.data(), logits.size());
  double z = 0.0;
  std::vector<double> p(logits.size());
  for (size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] - m);
    z += p[j];
  }
  for (double& x : p) x /= z;
  return p;
}

TextDataset featurize_corpus(const Manifest& m, const NgramVocab& vocab, const LabelSet& labels) {
  TextDataset data;
  data.n_classes = static_cast<int>(labels.size());
  data.vocab_size = static_cast<int>(vocab.size());
  for (const auto& r : m.records) {
    const int y = labels.index_of(r.dialect);
    if (y < 0) throw DataError("featurize_corpus: dialect '" + r.dialect + "' not in label set");
    data.x.push_back(featurize(r.text.value_or(""), vocab));
    data.y.push_back(y);
  }
  return data;
}

double text_loss_grad(const TextDataset& data, const std::vector<double>& w,
                      const std::vector<double>& b, double l2, std::vector<double>* gw,
                      std::vector<double>* gb) {
  const int k = data.n_classes;
  const int v = data.vocab_size;
  const size_t n = data.x.size();
  if (gw != nullptr) gw->assign(w.size(), 0.0);
  if (gb != nullptr) gb->assign(b.size(), 0.0);

  double loss = 0.0;
  std::vector<double> logits(static_cast<size_t>(k));
  const double invn = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      double acc = b[static_cast<size_t>(j)];
      const double* wj = w.data() + static_cast<size_t>(j) * v;
      for (const auto& [idx, val] : data.x[i]) acc += wj[idx] * val;
      logits[static_cast<size_t>(j)] = acc;
    }
    const double mx = kern::max(logits.data(), logits.size());
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(logits[static_cast<size_t>(j)] - mx);
    const double logz = std::log(z) + mx;
    loss += (logz - logits[static_cast<size_t>(data.y[i])]) * invn;
    if (gw == nullptr && gb == nullptr) continue;
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(logits[static_cast<size_t>(j)] - logz);
      const double d = (p - (data.y[i] == j ? 1.0 : 0.0)) * invn;
      if (gb != nullptr) (*gb)[static_cast<size_t>(j)] += d;
      if (gw != nullptr) {
        double* gwj = gw->data() + static_cast<size_t>(j) * v;
        for (const auto& [idx, val] : data.x[i]) gwj[idx] += d * val;
      }
    }
  }
  loss += l2 * kern::sumsq(w.data(), w.size());
  if (gw != nullptr) kern::axpy(2.0 * l2, w.data(), gw->data(), w.size());
  return loss;
}

TextModel train_text(const Manifest& m, const TextTrainHyper& hyper,
                     std::vector<double>* loss_history) {
  if (m.records.empty()) throw DataError("train_text: empty corpus");
  std::vector<std::string> texts;
  std::set<std::string> classes;
  for (const auto& r : m.records) {
    if (!r.text.has_value() || normalize_text(*r.text).empty())
      throw DataError("train_text: record '" + r.id + "' has empty text");
    texts.push_back(*r.text);
    classes.insert(r.dialect);
  }
  if (classes.size() < 2) throw DataError("train_text: single-class corpus");

  TextModel model;
  model.labels = m.label_set;
  model.vocab = build_vocab(texts, hyper.n_min, hyper.n_max, hyper.min_count);
  model.l2 = hyper.l2;
  const int k = static_cast<int>(model.labels.size());
  const int v = static_cast<int>(model.vocab.size());
  model.weights.assign(static_cast<size_t>(k) * v, 0.0);
  model.bias.assign(static_cast<size_t>(k), 0.0);

  const TextDataset data = featurize_corpus(m, model.vocab, model.labels);

  // Proximal gradient on CE + l2*||W||^2: the cross-entropy part is stepped
  // explicitly, the quadratic penalty exactly via its prox. The step is
  // backtracked on the composite loss, so the recorded loss never increases
  // regardless of how stiff the penalty is.
  std::vector<double> gw, gb;
  double lr = hyper.lr;
  const double ce = text_loss_grad(data, model.weights, model.bias, 0.0, &gw, &gb);
  double loss = ce + hyper.l2 * kern::sumsq(model.weights.data(), model.weights.size());
  if (loss_history != nullptr) loss_history->push_back(loss);

  std::vector<double> w_try(model.weights.size()), b_try(model.bias.size());
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    bool accepted = false;
    while (!accepted) {
      w_try = model.weights;
      b_try = model.bias;
      kern::axpy(-lr, gw.data(), w_try.data(), w_try.size());
      kern::scale(1.0 / (1.0 + 2.0 * lr * hyper.l2), w_try.data(), w_try.size());
      kern::axpy(-lr, gb.data(), b_try.data(), b_try.size());
      const double ce_new = text_loss_grad(data, w_try, b_try, 0.0, nullptr, nullptr);
      const double new_loss = ce_new + hyper.l2 * kern::sumsq(w_try.data(), w_try.size());
      if (new_loss <= loss) {
        model.weights.swap(w_try);
        model.bias.swap(b_try);
        loss = new_loss;
        accepted = true;
      } else {
        lr *= 0.5;
        if (lr < 1e-14) break;  // step-size exhausted: converged
      }
    }
    if (!accepted) break;
    if (loss_history != nullptr) loss_history->push_back(loss);
    text_loss_grad(data, model.weights, model.bias, 0.0, &gw, &gb);
  }
  if (!std::isfinite(loss)) throw NumericError("train_text: non-finite loss");
  return model;
}

void save_text_model(const TextModel& model, const std::string& path) {
  nlohmann::ordered_json header;
  header["format_version"] = 1;
  header["vocab"] = {{"n_min", model.vocab.n_min},
                     {"n_max", model.vocab.n_max},
                     {"min_count", model.vocab.min_count},
                     {"tokens", model.vocab.tokens}};
  header["label_order"] = model.labels.labels;
  header["l2"] = model.l2;
  const std::string head = header.dump();

  std::vector<uint8_t> out;
  put_u32le(out, static_cast<uint32_t>(head.size()));
  out.insert(out.end(), head.begin(), head.end());
  for (double x : model.weights) put_f64le(out, x);
  for (double x : model.bias) put_f64le(out, x);
  write_file_bytes(path, out.data(), out.size());
}

TextModel load_text_model(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 4) throw DataError("text model truncated: " + path);
  const uint32_t head_len = get_u32le(bytes.data());
  if (bytes.size() < 4 + static_cast<size_t>(head_len))
    throw DataError("text model truncated: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(std::string(bytes.begin() + 4, bytes.begin() + 4 + head_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("text model header parse error: " + std::string(e.what()));
  }

  TextModel model;
  model.vocab.n_min = header.at("vocab").at("n_min").get<int>();
  model.vocab.n_max = header.at("vocab").at("n_max").get<int>();
  model.vocab.min_count = header.at("vocab").at("min_count").get<int>();
  model.vocab.tokens = header.at("vocab").at("tokens").get<std::vector<std::string>>();
  for (size_t i = 0; i < model.vocab.tokens.size(); ++i)
    model.vocab.index.emplace(model.vocab.tokens[i], static_cast<int>(i));
  model.labels.labels = header.at("label_order").get<std::vector<std::string>>();
  model.l2 = header.at("l2").get<double>();

  const size_t k = model.labels.size();
  const size_t v = model.vocab.size();
  const size_t need = (k * v + k) * 8;
  if (bytes.size() != 4 + head_len + need)
    throw DataError("text model blob size mismatch: " + path);
  const uint8_t* blob = bytes.data() + 4 + head_len;
  model.weights.resize(k * v);
  model.bias.resize(k);
  for (size_t i = 0; i < k * v; ++i) model.weights[i] = get_f64le(blob + 8 * i);
  for (size_t i = 0; i < k; ++i) model.bias[i] = get_f64le(blob + 8 * (k * v + i));
  return model;
}

}  // namespace canid::textdid
