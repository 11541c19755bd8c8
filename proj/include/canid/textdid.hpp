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

#ifndef CANID_TEXTDID_HPP_
#define CANID_TEXTDID_HPP_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "canid/corpus.hpp"

namespace canid::textdid {

// Character n-gram vocabulary over normalized text (lowercased, whitespace
// collapsed, padded with the boundary marker U+2581). Tokens are ordered by
// count descending, then lexicographically; indices are dense.
struct NgramVocab {
  int n_min = 1;
  int n_max = 3;
  int min_count = 2;
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  size_t size() const { return tokens.size(); }
};

std::string normalize_text(const std::string& text);

NgramVocab build_vocab(const std::vector<std::string>& texts, int n_min = 1,
                       int n_max = 3, int min_count = 2);

// Sparse L2-normalized count vector, sorted by index. Out-of-vocabulary
// n-grams are dropped; fully OOV text gives the zero vector.
using SparseVec = std::vector<std::pair<int, double>>;
SparseVec featurize(const std::string& text, const NgramVocab& vocab);

struct TextModel {
  NgramVocab vocab;
  LabelSet labels;
  std::vector<double> weights;  // K x V row-major
  std::vector<double> bias;     // K
  double l2 = 1e-4;

  std::vector<double> predict(const std::string& text) const;  // probs, sum 1
};

struct TextTrainHyper {
  double lr = 1.0;
  int epochs = 300;
  double l2 = 1e-4;
  uint64_t seed = 0;
  int n_min = 1;
  int n_max = 3;
  int min_count = 2;
};

// Featurized training set for the multinomial logistic regression.
struct TextDataset {
  std::vector<SparseVec> x;
  std::vector<int> y;
  int n_classes = 0;
  int vocab_size = 0;
};

TextDataset featurize_corpus(const Manifest& m, const NgramVocab& vocab, const LabelSet& labels);

// Mean cross-entropy + l2 * ||W||^2 and its exact gradient.
double text_loss_grad(const TextDataset& data, const std::vector<double>& w,
                      const std::vector<double>& b, double l2, std::vector<double>* gw,
                      std::vector<double>* gb);

// Full-batch gradient descent with deterministic backtracking (the step is
// halved and retried whenever it would increase the loss), so the recorded
// loss sequence is non-increasing.
TextModel train_text(const Manifest& m, const TextTrainHyper& hyper,
                     std::vector<double>* loss_history = nullptr);

// Model file: u32le header length, JSON header (vocab, label order, hyper),
// float64le blob (weights row-major, then bias).
void save_text_model(const TextModel& model, const std::string& path);
TextModel load_text_model(const std::string& path);

}  // namespace canid::textdid

#endif  // CANID_TEXTDID_HPP_
