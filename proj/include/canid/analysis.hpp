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

#ifndef CANID_ANALYSIS_HPP_
#define CANID_ANALYSIS_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "canid/corpus.hpp"
#include "canid/dsp.hpp"
#include "canid/fusion.hpp"

namespace canid::analysis {

struct ConfusionMatrix {
  LabelSet labels;
  std::vector<int64_t> counts;  // K x K row-major; rows = reference

  int64_t& at(int ref, int hyp) { return counts[static_cast<size_t>(ref) * labels.size() + hyp]; }
  int64_t at(int ref, int hyp) const {
    return counts[static_cast<size_t>(ref) * labels.size() + hyp];
  }
  int64_t total() const;
  int64_t trace() const;
  int64_t row_sum(int ref) const;
};

struct EvalReport {
  std::string system;
  std::string split;
  double accuracy = 0.0;
  std::vector<double> recalls;  // per class: confusion[c][c] / row_sum(c)
  ConfusionMatrix confusion;
};

// Exact integer confusion counts; accuracy = trace / total. The two lists
// must be aligned by utterance id.
EvalReport evaluate(const std::vector<std::pair<std::string, std::string>>& hypotheses,
                    const std::vector<std::pair<std::string, std::string>>& references,
                    const LabelSet& labels, const std::string& system,
                    const std::string& split);

// Classify each score row and evaluate against the embedded reference labels.
EvalReport evaluate_table(const fusion::ScoreTable& table, const std::string& system,
                          const std::string& split);

std::vector<double> mean_pool_frames(const dsp::FeatureMatrix& frames);

struct PcaResult {
  int n = 0, d = 0, k = 0;
  std::vector<double> projected;   // n x k
  std::vector<double> components;  // k x d, orthonormal rows
  std::vector<double> explained;   // k eigenvalues, non-increasing
};

// Column-centered projection onto the top-k covariance eigendirections,
// computed by cyclic Jacobi rotations.
PcaResult pca(const std::vector<double>& x, int n, int d, int k);

struct TsneParams {
  double perplexity = 30.0;  // clamped to (n - 1) / 3
  int iters = 1000;
  uint64_t seed = 0;
  double learning_rate = 200.0;
  int exaggeration_iters = 250;
  double exaggeration = 12.0;
};

struct TsneAffinities {
  int n = 0;
  std::vector<double> p_cond;  // n x n conditional, rows sum to 1
  std::vector<double> betas;   // per-point Gaussian precisions
};

// Per-point bandwidths found by binary search to the target entropy
// log(perplexity) within 1e-5.
TsneAffinities gaussian_affinities(const std::vector<double>& x, int n, int d,
                                   double perplexity);

struct TsneResult {
  std::vector<double> y;           // n x 2
  std::vector<double> kl_history;  // KL(P||Q) per iteration (true P)
};

TsneResult tsne(const std::vector<double>& x, int n, int d, const TsneParams& params);

struct Projection2D {
  struct Row {
    std::string utt_id;
    std::string dialect;
    double x = 0.0, y = 0.0;
  };
  std::vector<Row> rows;
};

// PCA to min(pca_k, n-1, d) dimensions, then t-SNE to 2.
Projection2D project_embeddings(
    const std::vector<std::pair<std::string, std::vector<double>>>& embeddings,
    const Manifest& m, int pca_k, const TsneParams& params);

// Mean inter-class centroid distance over mean within-class spread.
double cluster_separation_ratio(const Projection2D& proj);

// Emitters; all byte-deterministic given their input.
void emit_report_json(const EvalReport& report, const std::string& path);
EvalReport load_report_json(const std::string& path);
void emit_report_md(const EvalReport& report, const std::string& path);
void emit_confusion_csv(const EvalReport& report, const std::string& path);
ConfusionMatrix parse_confusion_csv(const std::string& path);
void emit_delta_md(const EvalReport& baseline, const EvalReport& fused,
                   const std::string& path);
void emit_projection_csv(const Projection2D& proj, const std::string& path);
Projection2D load_projection_csv(const std::string& path);
void emit_projection_svg(const Projection2D& proj, const LabelSet& labels,
                         const std::string& path);
void emit_curve_svg(const std::vector<fusion::LambdaCurvePoint>& curve,
                    const std::string& path);

}  // namespace canid::analysis

#endif  // CANID_ANALYSIS_HPP_
