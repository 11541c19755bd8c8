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

#ifndef CANID_FUSION_HPP_
#define CANID_FUSION_HPP_

#include <map>
#include <string>
#include <vector>

#include "canid/corpus.hpp"

namespace canid::fusion {

// Per-utterance probability vector over the dialect set, plus the reference
// label so score files are self-contained for evaluation.
struct ScoreRow {
  std::string utt_id;
  std::string ref_label;
  std::vector<double> probs;
};

struct ScoreTable {
  LabelSet labels;
  std::vector<ScoreRow> rows;

  const ScoreRow* find(const std::string& utt_id) const;
};

// probs >= 0 and summing to 1 within 1e-6.
void validate_row(const ScoreRow& row, size_t n_classes);

// P = (1 - lambda) * P_acoustic + lambda * P_text, elementwise.
ScoreRow fuse(const ScoreRow& acoustic, const ScoreRow& text, double lambda);

// Log-domain variant: convex combination of log-probabilities, re-normalized.
ScoreRow fuse_logit(const ScoreRow& acoustic, const ScoreRow& text, double lambda);

// Argmax; exact ties resolve to the lowest label index.
int classify(const ScoreRow& row);

// The 11-point grid {0.0, 0.1, ..., 1.0}.
std::vector<double> lambda_grid();

struct LambdaCurvePoint {
  double lambda = 0.0;
  double accuracy = 0.0;
};

struct GridSearchResult {
  double best_lambda = 0.0;
  double best_accuracy = 0.0;
  std::vector<LambdaCurvePoint> curve;
};

// Exhaustive search over the grid; ties prefer the smaller lambda (the
// acoustic model). References come from utt_id -> dialect.
GridSearchResult grid_search_lambda(const ScoreTable& acoustic, const ScoreTable& text,
                                    const std::map<std::string, std::string>& refs,
                                    bool logit_space = false);

ScoreTable fuse_tables(const ScoreTable& acoustic, const ScoreTable& text, double lambda,
                       bool logit_space = false);

// CSV: utt_id,label,p_<L0>,p_<L1>,... with 12 significant digits.
void save_score_table(const ScoreTable& table, const std::string& path);
ScoreTable load_score_table(const std::string& path);

// CSV: lambda,valid_acc
void save_lambda_curve(const std::vector<LambdaCurvePoint>& curve, const std::string& path);
std::vector<LambdaCurvePoint> load_lambda_curve(const std::string& path);

}  // namespace canid::fusion

#endif  // CANID_FUSION_HPP_
