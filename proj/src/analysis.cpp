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

#include "canid/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "canid/error.hpp"
#include "canid/io_util.hpp"
#include "canid/kern.hpp"
#include "canid/rng.hpp"

namespace canid::analysis {

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts) t += c;
  return t;
}

int64_t ConfusionMatrix::trace() const {
  int64_t t = 0;
  for (size_t i = 0; i < labels.size(); ++i) t += at(static_cast<int>(i), static_cast<int>(i));
  return t;
}

int64_t ConfusionMatrix::row_sum(int ref) const {
  int64_t t = 0;
  for (size_t i = 0; i < labels.size(); ++i) t += at(ref, static_cast<int>(i));
  return t;
}

EvalReport evaluate(const std::vector<std::pair<std::string, std::string>>& hypotheses,
                    const std::vector<std::pair<std::string, std::string>>& references,
                    const LabelSet& labels, const std::string& system,
                    const std::string& split) {
  if (hypotheses.size() != references.size())
    throw DataError("evaluate: hypothesis and reference counts differ");
  EvalReport report;
  report.system = system;
  report.split = split;
  report.confusion.labels = labels;
  report.confusion.counts.assign(labels.size() * labels.size(), 0);

  for (size_t i = 0; i < hypotheses.size(); ++i) {
    if (hypotheses[i].first != references[i].first)
      throw DataError("evaluate: misaligned utterance ids ('" + hypotheses[i].first +
                      "' vs '" + references[i].first + "')");
    const int hyp = labels.index_of(hypotheses[i].second);
    const int ref = labels.index_of(references[i].second);
    if (hyp < 0) throw DataError("evaluate: unknown hypothesis label '" + hypotheses[i].second + "'");
    if (ref < 0) throw DataError("evaluate: unknown reference label '" + references[i].second + "'");
    ++report.confusion.at(ref, hyp);
  }

  const int64_t total = report.confusion.total();
  report.accuracy = total == 0 ? 0.0
                               : static_cast<double>(report.confusion.trace()) /
                                     static_cast<double>(total);
  for (size_t c = 0; c < labels.size(); ++c) {
    const int64_t rs = report.confusion.row_sum(static_cast<int>(c));
    report.recalls.push_back(
        rs == 0 ? 0.0
                : static_cast<double>(report.confusion.at(static_cast<int>(c),
                                                          static_cast<int>(c))) /
                      static_cast<double>(rs));
  }
  return report;
}

EvalReport evaluate_table(const fusion::ScoreTable& table, const std::string& system,
                          const std::string& split) {
  std::vector<std::pair<std::string, std::string>> hyps, refs;
  for (const auto& r : table.rows) {
    hyps.emplace_back(r.utt_id, table.labels.labels[static_cast<size_t>(fusion::classify(r))]);
    refs.emplace_back(r.utt_id, r.ref_label);
  }
  return evaluate(hyps, refs, table.labels, system, split);
}

std::vector<double> mean_pool_frames(const dsp::FeatureMatrix& frames) {
  if (frames.frames < 1) throw DataError("mean_pool_frames: empty input");
  std::vector<double> out(static_cast<size_t>(frames.dims), 0.0);
  for (int t = 0; t < frames.frames; ++t)
    kern::add(out.data(), frames.row(t), out.data(), out.size());
  kern::scale(1.0 / frames.frames, out.data(), out.size());
  return out;
}

// ---------------------------------------------------------------------------
// PCA (cyclic Jacobi on the covariance)
// ---------------------------------------------------------------------------

namespace {

// Eigendecomposition of a symmetric d x d matrix. a is destroyed; on exit
// eigvals holds the diagonal and vecs columns hold the eigenvectors.
void jacobi_eigen(std::vector<double>& a, int d, std::vector<double>& eigvals,
                  std::vector<double>& vecs) {
  vecs.assign(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) vecs[static_cast<size_t>(i) * d + i] = 1.0;

  auto A = [&](int r, int c) -> double& { return a[static_cast<size_t>(r) * d + c]; };
  auto V = [&](int r, int c) -> double& { return vecs[static_cast<size_t>(r) * d + c]; };

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < d; ++i) {
          const double aip = A(i, p), aiq = A(i, q);
          A(i, p) = c * aip - s * aiq;
          A(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < d; ++i) {
          const double api = A(p, i), aqi = A(q, i);
          A(p, i) = c * api - s * aqi;
          A(q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < d; ++i) {
          const double vip = V(i, p), viq = V(i, q);
          V(i, p) = c * vip - s * viq;
          V(i, q) = s * vip + c * viq;
        }
      }
  }
  eigvals.resize(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) eigvals[static_cast<size_t>(i)] = A(i, i);
}

}  // namespace

PcaResult pca(const std::vector<double>& x, int n, int d, int k) {
  if (n < 2) throw DataError("pca: need at least two rows");
  if (k < 1 || k > std::min(n - 1, d)) throw DataError("pca: k out of range");
  if (x.size() != static_cast<size_t>(n) * d) throw DataError("pca: data size mismatch");

  std::vector<double> centered = x;
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    kern::add(mean.data(), centered.data() + static_cast<size_t>(i) * d, mean.data(), d);
  kern::scale(1.0 / n, mean.data(), d);
  for (int i = 0; i < n; ++i)
    kern::sub(centered.data() + static_cast<size_t>(i) * d, mean.data(),
              centered.data() + static_cast<size_t>(i) * d, d);

  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = centered.data() + static_cast<size_t>(i) * d;
    for (int a = 0; a < d; ++a)
      kern::axpy(row[a], row, cov.data() + static_cast<size_t>(a) * d, d);
  }
  kern::scale(1.0 / (n - 1), cov.data(), cov.size());

  std::vector<double> eigvals, vecs;
  jacobi_eigen(cov, d, eigvals, vecs);

  std::vector<int> order(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (eigvals[static_cast<size_t>(a)] != eigvals[static_cast<size_t>(b)])
      return eigvals[static_cast<size_t>(a)] > eigvals[static_cast<size_t>(b)];
    return a < b;
  });

  PcaResult res;
  res.n = n;
  res.d = d;
  res.k = k;
  res.components.assign(static_cast<size_t>(k) * d, 0.0);
  res.explained.resize(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) {
    const int col = order[static_cast<size_t>(j)];
    res.explained[static_cast<size_t>(j)] = std::max(eigvals[static_cast<size_t>(col)], 0.0);
    double* comp = res.components.data() + static_cast<size_t>(j) * d;
    for (int i = 0; i < d; ++i) comp[i] = vecs[static_cast<size_t>(i) * d + col];
    // Deterministic sign: the largest-magnitude component is positive.
    int arg = 0;
    for (int i = 1; i < d; ++i)
      if (std::abs(comp[i]) > std::abs(comp[arg])) arg = i;
    if (comp[arg] < 0.0)
      for (int i = 0; i < d; ++i) comp[i] = -comp[i];
  }

  res.projected.assign(static_cast<size_t>(n) * k, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j)
      res.projected[static_cast<size_t>(i) * k + j] =
          kern::dot(centered.data() + static_cast<size_t>(i) * d,
                    res.components.data() + static_cast<size_t>(j) * d, d);
  return res;
}

// ---------------------------------------------------------------------------
// t-SNE
// ---------------------------------------------------------------------------

namespace {

std::vector<double> pairwise_sq_dists(const std::vector<double>& x, int n, int d) {
  std::vector<double> sq(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    sq[static_cast<size_t>(i)] = kern::sumsq(x.data() + static_cast<size_t>(i) * d, d);
  std::vector<double> dist(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double dd = sq[static_cast<size_t>(i)] + sq[static_cast<size_t>(j)] -
                        2.0 * kern::dot(x.data() + static_cast<size_t>(i) * d,
                                        x.data() + static_cast<size_t>(j) * d, d);
      dist[static_cast<size_t>(i) * n + j] = dist[static_cast<size_t>(j) * n + i] =
          std::max(dd, 0.0);
    }
  return dist;
}

// Shannon entropy (nats) and row probabilities for a given precision.
double row_entropy(const std::vector<double>& dist, int n, int i, double beta,
                   std::vector<double>* p_row) {
  double z = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j == i) {
      (*p_row)[static_cast<size_t>(j)] = 0.0;
      continue;
    }
    const double p = std::exp(-beta * dist[static_cast<size_t>(i) * n + j]);
    (*p_row)[static_cast<size_t>(j)] = p;
    z += p;
  }
  if (z <= 0.0) z = 1e-300;
  double h = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    const double p = (*p_row)[static_cast<size_t>(j)] / z;
    (*p_row)[static_cast<size_t>(j)] = p;
    if (p > 1e-300) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

TsneAffinities gaussian_affinities(const std::vector<double>& x, int n, int d,
                                   double perplexity) {
  if (n < 4) throw DataError("tsne: need at least 4 points");
  const double perp = std::min(perplexity, (n - 1) / 3.0);
  if (perp < 1.0) throw DataError("tsne: perplexity infeasible for this point count");
  const double target = std::log(perp);
  const std::vector<double> dist = pairwise_sq_dists(x, n, d);

  TsneAffinities aff;
  aff.n = n;
  aff.p_cond.assign(static_cast<size_t>(n) * n, 0.0);
  aff.betas.assign(static_cast<size_t>(n), 1.0);

  std::vector<double> p_row(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = 1e300;
    double h = 0.0;
    for (int it = 0; it < 200; ++it) {
      h = row_entropy(dist, n, i, beta, &p_row);
      if (std::abs(h - target) < 1e-5) break;
      if (h > target) {  // too flat: sharpen
        lo = beta;
        beta = hi >= 1e300 ? beta * 2.0 : (lo + hi) / 2.0;
      } else {
        hi = beta;
        beta = (lo + hi) / 2.0;
      }
    }
    aff.betas[static_cast<size_t>(i)] = beta;
    for (int j = 0; j < n; ++j)
      aff.p_cond[static_cast<size_t>(i) * n + j] = p_row[static_cast<size_t>(j)];
  }
  return aff;
}

TsneResult tsne(const std::vector<double>& x, int n, int d, const TsneParams& params) {
  const TsneAffinities aff = gaussian_affinities(x, n, d, params.perplexity);

  // Symmetrize: P = (P_cond + P_cond^T) / 2n, floored for stability.
  std::vector<double> p(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      p[static_cast<size_t>(i) * n + j] =
          std::max((aff.p_cond[static_cast<size_t>(i) * n + j] +
                    aff.p_cond[static_cast<size_t>(j) * n + i]) /
                       (2.0 * n),
                   1e-12);
    }

  TsneResult res;
  res.y.assign(static_cast<size_t>(n) * 2, 0.0);
  Rng rng(derive_seed(params.seed, "tsne/init"));
  for (double& v : res.y) v = 1e-2 * rng.gaussian();

  std::vector<double> vel(static_cast<size_t>(n) * 2, 0.0);
  std::vector<double> gains(static_cast<size_t>(n) * 2, 1.0);
  std::vector<double> qnum(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> grad(static_cast<size_t>(n) * 2, 0.0);

  for (int iter = 1; iter <= params.iters; ++iter) {
    const bool exaggerate = iter <= params.exaggeration_iters;
    const double ex = exaggerate ? params.exaggeration : 1.0;
    const double momentum = exaggerate ? 0.5 : 0.8;

    double qz = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double dx = res.y[static_cast<size_t>(i) * 2] - res.y[static_cast<size_t>(j) * 2];
        const double dy =
            res.y[static_cast<size_t>(i) * 2 + 1] - res.y[static_cast<size_t>(j) * 2 + 1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        qnum[static_cast<size_t>(i) * n + j] = qnum[static_cast<size_t>(j) * n + i] = q;
        qz += 2.0 * q;
      }
    if (qz < 1e-300) qz = 1e-300;

    std::fill(grad.begin(), grad.end(), 0.0);
    double kl = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double pij = p[static_cast<size_t>(i) * n + j];
        const double qn = qnum[static_cast<size_t>(i) * n + j];
        const double qij = std::max(qn / qz, 1e-12);
        const double mult = 4.0 * (ex * pij - qij) * qn;
        grad[static_cast<size_t>(i) * 2] +=
            mult * (res.y[static_cast<size_t>(i) * 2] - res.y[static_cast<size_t>(j) * 2]);
        grad[static_cast<size_t>(i) * 2 + 1] +=
            mult *
            (res.y[static_cast<size_t>(i) * 2 + 1] - res.y[static_cast<size_t>(j) * 2 + 1]);
        if (j > i) kl += 2.0 * pij * std::log(pij / qij);
      }
    res.kl_history.push_back(kl);

    for (size_t c = 0; c < res.y.size(); ++c) {
      const bool same_sign = (grad[c] > 0.0) == (vel[c] > 0.0);
      gains[c] = same_sign ? std::max(gains[c] * 0.8, 0.01) : gains[c] + 0.2;
      vel[c] = momentum * vel[c] - params.learning_rate * gains[c] * grad[c];
      res.y[c] += vel[c];
    }
    double cx = 0.0, cy = 0.0;
    for (int i = 0; i < n; ++i) {
      cx += res.y[static_cast<size_t>(i) * 2];
      cy += res.y[static_cast<size_t>(i) * 2 + 1];
    }
    cx /= n;
    cy /= n;
    for (int i = 0; i < n; ++i) {
      res.y[static_cast<size_t>(i) * 2] -= cx;
      res.y[static_cast<size_t>(i) * 2 + 1] -= cy;
    }
  }
  return res;
}

Projection2D project_embeddings(
    const std::vector<std::pair<std::string, std::vector<double>>>& embeddings,
    const Manifest& m, int pca_k, const TsneParams& params) {
  const int n = static_cast<int>(embeddings.size());
  if (n < 4) throw DataError("project_embeddings: need at least 4 utterances");
  const int d = static_cast<int>(embeddings[0].second.size());
  if (d < 2) throw DataError("project_embeddings: embedding dim must be >= 2");

  std::vector<double> x(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(embeddings[static_cast<size_t>(i)].second.size()) != d)
      throw DataError("project_embeddings: ragged embedding table");
    std::copy(embeddings[static_cast<size_t>(i)].second.begin(),
              embeddings[static_cast<size_t>(i)].second.end(),
              x.begin() + static_cast<size_t>(i) * d);
  }

  const int k = std::max(1, std::min({pca_k, n - 1, d}));
  const PcaResult pc = pca(x, n, d, k);
  const TsneResult ts = tsne(pc.projected, n, k, params);

  Projection2D proj;
  for (int i = 0; i < n; ++i) {
    const auto& id = embeddings[static_cast<size_t>(i)].first;
    const UtteranceRecord* rec = m.find(id);
    if (rec == nullptr) throw DataError("project_embeddings: '" + id + "' not in manifest");
    proj.rows.push_back({id, rec->dialect, ts.y[static_cast<size_t>(i) * 2],
                         ts.y[static_cast<size_t>(i) * 2 + 1]});
  }
  return proj;
}

double cluster_separation_ratio(const Projection2D& proj) {
  std::map<std::string, std::pair<double, double>> centroids;
  std::map<std::string, int> counts;
  for (const auto& r : proj.rows) {
    centroids[r.dialect].first += r.x;
    centroids[r.dialect].second += r.y;
    ++counts[r.dialect];
  }
  for (auto& [dialect, c] : centroids) {
    c.first /= counts[dialect];
    c.second /= counts[dialect];
  }
  double intra = 0.0;
  for (const auto& r : proj.rows) {
    const auto& c = centroids[r.dialect];
    intra += std::hypot(r.x - c.first, r.y - c.second);
  }
  intra /= static_cast<double>(proj.rows.size());

  double inter = 0.0;
  int pairs = 0;
  for (auto a = centroids.begin(); a != centroids.end(); ++a)
    for (auto b = std::next(a); b != centroids.end(); ++b) {
      inter += std::hypot(a->second.first - b->second.first,
                          a->second.second - b->second.second);
      ++pairs;
    }
  if (pairs == 0 || intra <= 0.0) return 0.0;
  return (inter / pairs) / intra;
}

// ---------------------------------------------------------------------------
// Emitters
// ---------------------------------------------------------------------------

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

}  // namespace

void emit_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::ordered_json j;
  j["system"] = report.system;
  j["split"] = report.split;
  j["accuracy"] = report.accuracy;
  j["labels"] = report.confusion.labels.labels;
  j["recalls"] = report.recalls;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  const int k = static_cast<int>(report.confusion.labels.size());
  for (int r = 0; r < k; ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int c = 0; c < k; ++c) row.push_back(report.confusion.at(r, c));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  write_file_text(path, j.dump(2) + "\n");
}

EvalReport load_report_json(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("report parse error in " + path + ": " + e.what());
  }
  EvalReport report;
  report.system = j.at("system").get<std::string>();
  report.split = j.at("split").get<std::string>();
  report.accuracy = j.at("accuracy").get<double>();
  report.recalls = j.at("recalls").get<std::vector<double>>();
  report.confusion.labels.labels = j.at("labels").get<std::vector<std::string>>();
  const int k = static_cast<int>(report.confusion.labels.size());
  report.confusion.counts.assign(static_cast<size_t>(k) * k, 0);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c)
      report.confusion.at(r, c) = j.at("confusion").at(r).at(c).get<int64_t>();
  return report;
}

void emit_report_md(const EvalReport& report, const std::string& path) {
  const auto& labels = report.confusion.labels.labels;
  std::string out;
  out += "# Dialect identification report\n\n";
  out += "System: " + report.system + "\n";
  out += "Split: " + report.split + "\n\n";
  out += "| Model | Accuracy |\n|---|---|\n";
  out += "| " + report.system + " | " + fmt("%.6g", report.accuracy) + " |\n\n";
  out += "| Dialect | Recall |\n|---|---|\n";
  for (size_t c = 0; c < labels.size(); ++c)
    out += "| " + labels[c] + " | " + fmt("%.6g", report.recalls[c]) + " |\n";
  out += "\nConfusion matrix (rows = reference, columns = hypothesis):\n\n";
  out += "| ref\\hyp |";
  for (const auto& l : labels) out += " " + l + " |";
  out += "\n|---|";
  for (size_t c = 0; c < labels.size(); ++c) out += "---|";
  out += "\n";
  for (size_t r = 0; r < labels.size(); ++r) {
    out += "| " + labels[r] + " |";
    for (size_t c = 0; c < labels.size(); ++c)
      out += " " + std::to_string(report.confusion.at(static_cast<int>(r),
                                                      static_cast<int>(c))) + " |";
    out += "\n";
  }
  write_file_text(path, out);
}

void emit_confusion_csv(const EvalReport& report, const std::string& path) {
  const auto& labels = report.confusion.labels.labels;
  std::string out = "ref\\hyp";
  for (const auto& l : labels) out += "," + l;
  out += "\n";
  for (size_t r = 0; r < labels.size(); ++r) {
    out += labels[r];
    for (size_t c = 0; c < labels.size(); ++c)
      out += "," + std::to_string(report.confusion.at(static_cast<int>(r),
                                                      static_cast<int>(c)));
    out += "\n";
  }
  write_file_text(path, out);
}

ConfusionMatrix parse_confusion_csv(const std::string& path) {
  std::istringstream in(read_file_text(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty confusion csv: " + path);
  ConfusionMatrix cm;
  {
    std::istringstream hs(line);
    std::string field;
    bool first = true;
    while (std::getline(hs, field, ',')) {
      if (first) {
        first = false;
        continue;
      }
      cm.labels.labels.push_back(field);
    }
  }
  const size_t k = cm.labels.size();
  cm.counts.assign(k * k, 0);
  size_t r = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (r >= k) throw DataError("confusion csv has too many rows: " + path);
    std::istringstream ls(line);
    std::string field;
    size_t c = 0;
    bool first = true;
    while (std::getline(ls, field, ',')) {
      if (first) {
        first = false;
        continue;
      }
      if (c >= k) throw DataError("confusion csv has too many columns: " + path);
      cm.counts[r * k + c] = std::stoll(field);
      ++c;
    }
    if (c != k) throw DataError("confusion csv row is short: " + path);
    ++r;
  }
  if (r != k) throw DataError("confusion csv is missing rows: " + path);
  return cm;
}

void emit_delta_md(const EvalReport& baseline, const EvalReport& fused,
                   const std::string& path) {
  if (!(baseline.confusion.labels == fused.confusion.labels))
    throw DataError("emit_delta_md: label order mismatch");
  const auto& labels = baseline.confusion.labels.labels;
  std::string out;
  out += "# Fusion delta report\n\n";
  out += "Baseline: " + baseline.system + " (accuracy " + fmt("%.6g", baseline.accuracy) + ")\n";
  out += "Fused: " + fused.system + " (accuracy " + fmt("%.6g", fused.accuracy) + ")\n";
  out += "Accuracy delta: " + fmt("%+.1f", (fused.accuracy - baseline.accuracy) * 100.0) +
         " points\n\n";
  out += "| Dialect | Baseline recall | Fused recall | Delta (points) |\n|---|---|---|---|\n";
  for (size_t c = 0; c < labels.size(); ++c) {
    const double delta = (fused.recalls[c] - baseline.recalls[c]) * 100.0;
    out += "| " + labels[c] + " | " + fmt("%.6g", baseline.recalls[c]) + " | " +
           fmt("%.6g", fused.recalls[c]) + " | " + fmt("%+.1f", delta) + " |\n";
  }
  write_file_text(path, out);
}

void emit_projection_csv(const Projection2D& proj, const std::string& path) {
  std::string out = "utt_id,dialect,x,y\n";
  char buf[96];
  for (const auto& r : proj.rows) {
    std::snprintf(buf, sizeof(buf), ",%.12g,%.12g\n", r.x, r.y);
    out += r.utt_id + "," + r.dialect + buf;
  }
  write_file_text(path, out);
}

Projection2D load_projection_csv(const std::string& path) {
  std::istringstream in(read_file_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "utt_id,dialect,x,y")
    throw DataError("bad projection csv header in " + path);
  Projection2D proj;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Projection2D::Row r;
    std::string xs, ys;
    if (!std::getline(ls, r.utt_id, ',') || !std::getline(ls, r.dialect, ',') ||
        !std::getline(ls, xs, ',') || !std::getline(ls, ys, ','))
      throw DataError("bad projection csv line in " + path);
    r.x = std::stod(xs);
    r.y = std::stod(ys);
    proj.rows.push_back(std::move(r));
  }
  return proj;
}

namespace {

// Colors follow the paper's figure convention: Co red, Mu green, Ul blue.
const char* kClassColors[] = {"#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#8c564b"};

}  // namespace

void emit_projection_svg(const Projection2D& proj, const LabelSet& labels,
                         const std::string& path) {
  const int w = 640, h = 480, margin = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& r : proj.rows) {
    xmin = std::min(xmin, r.x);
    xmax = std::max(xmax, r.x);
    ymin = std::min(ymin, r.y);
    ymax = std::max(ymax, r.y);
  }
  if (proj.rows.empty()) xmin = xmax = ymin = ymax = 0.0;
  const double xr = std::max(xmax - xmin, 1e-9), yr = std::max(ymax - ymin, 1e-9);

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         std::to_string(w) + "\" height=\"" + std::to_string(h) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" fill=\"white\" stroke=\"black\"/>\n";
  for (size_t li = 0; li < labels.size(); ++li) {
    out += "<text x=\"" + std::to_string(margin + 80 * static_cast<int>(li)) + "\" y=\"20\" fill=\"" +
           kClassColors[li % 5] + "\">" + labels.labels[li] + "</text>\n";
  }
  char buf[160];
  for (const auto& r : proj.rows) {
    const double px = margin + (r.x - xmin) / xr * (w - 2 * margin);
    const double py = h - margin - (r.y - ymin) / yr * (h - 2 * margin);
    const int li = labels.index_of(r.dialect);
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"4\" fill=\"%s\" fill-opacity=\"0.8\"/>\n",
                  px, py, kClassColors[(li < 0 ? 0 : li) % 5]);
    out += buf;
  }
  out += "</svg>\n";
  write_file_text(path, out);
}

void emit_curve_svg(const std::vector<fusion::LambdaCurvePoint>& curve,
                    const std::string& path) {
  const int w = 560, h = 360, margin = 50;
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         std::to_string(w) + "\" height=\"" + std::to_string(h) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" fill=\"white\" stroke=\"black\"/>\n";
  out += "<text x=\"" + std::to_string(w / 2 - 30) + "\" y=\"" + std::to_string(h - 10) +
         "\">lambda</text>\n";
  out += "<text x=\"12\" y=\"" + std::to_string(h / 2) + "\">acc</text>\n";
  char buf[64];
  // axes with lambda ticks at 0, 0.2, ..., 1 and accuracy ticks at 0..1
  for (int i = 0; i <= 5; ++i) {
    const double frac = i / 5.0;
    const double px = margin + frac * (w - 2 * margin);
    std::snprintf(buf, sizeof(buf), "%.1f", frac);
    out += "<text x=\"" + fmt("%.1f", px - 8) + "\" y=\"" + std::to_string(h - margin + 18) +
           "\" font-size=\"11\">" + buf + "</text>\n";
  }
  out += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < curve.size(); ++i) {
    const double px = margin + curve[i].lambda * (w - 2 * margin);
    const double py = h - margin - curve[i].accuracy * (h - 2 * margin);
    std::snprintf(buf, sizeof(buf), "%s%.3f,%.3f", i == 0 ? "" : " ", px, py);
    out += buf;
  }
  out += "\"/>\n";
  for (const auto& p : curve) {
    const double px = margin + p.lambda * (w - 2 * margin);
    const double py = h - margin - p.accuracy * (h - 2 * margin);
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\" fill=\"#1f77b4\"/>\n",
                  px, py);
    out += buf;
  }
  out += "</svg>\n";
  write_file_text(path, out);
}

}  // namespace canid::analysis
