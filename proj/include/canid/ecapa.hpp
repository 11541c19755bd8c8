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

#ifndef CANID_ECAPA_HPP_
#define CANID_ECAPA_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "canid/corpus.hpp"
#include "canid/dsp.hpp"
#include "canid/gradnet.hpp"
#include "canid/tensor.hpp"

namespace canid::ecapa {

struct EcapaConfig {
  int in_dims = 60;
  int channels = 64;
  int n_blocks = 3;
  std::vector<int> dilations = {2, 3, 4};
  int res2_scale = 2;
  int se_reduction = 4;
  int attn_hidden = 32;
  int agg_channels = 128;
  int embed_dim = 48;
  int n_classes = 3;
  std::string loss = "xent";  // "xent" | "aam"
  double aam_margin = 0.2;
  double aam_scale = 30.0;
};

struct TrainHyper {
  double lr = 1e-3;
  int batch_size = 16;
  int max_epochs = 50;
  int patience = 5;  // early stop on validation accuracy
  uint64_t seed = 0;
};

struct TrainMeta {
  int epochs_run = 0;
  double best_valid_acc = 0.0;
};

// In-memory feature cache keyed by utterance id.
struct FeatureStore {
  std::map<std::string, dsp::FeatureMatrix> by_id;
  const dsp::FeatureMatrix& get(const std::string& id) const;
};

// Load <dir>/<id>.feat for every record in the manifest.
FeatureStore load_feature_dir(const std::string& dir, const Manifest& m);

// Scaled-down ECAPA-TDNN: conv(K=5)+relu+BN, SE-Res2 blocks with rising
// dilation, concatenated block outputs through a 1x1 conv, attentive stats
// pooling, a linear embedding layer, BN, and a softmax or AAM classifier.
class Model {
 public:
  static Model build(const EcapaConfig& cfg, const LabelSet& labels, uint64_t seed);

  struct Output {
    std::vector<double> embedding;  // pre-classifier linear output
    std::vector<double> probs;
  };

  // Inference (eval-mode BN) on a single utterance of shape {T, in_dims}.
  Output forward(const dsp::FeatureMatrix& feats) const;
  Output forward_masked(const Tensor& x, int valid_len) const;

  struct BatchItem {
    const dsp::FeatureMatrix* feats = nullptr;
    int label = 0;
  };

  // Train-mode loss over a padded, masked batch (mean over items). When
  // accumulate_grads is set, parameter grads are accumulated; running BN
  // stats update only when update_running is set.
  double batch_loss(const std::vector<BatchItem>& batch, bool accumulate_grads,
                    bool update_running);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  const EcapaConfig& config() const { return cfg_; }
  const LabelSet& labels() const { return labels_; }

 private:
  friend Model transfer_head(const Model&, const LabelSet&, uint64_t);
  Model() = default;

  EcapaConfig cfg_;
  LabelSet labels_;
  gradnet::Conv1d conv0_;
  gradnet::BatchNorm1d bn0_;
  std::vector<gradnet::Res2Block> blocks_;
  gradnet::Conv1d agg_;
  gradnet::AttentiveStatsPool pool_;
  gradnet::Linear emb_;
  gradnet::BatchNorm1d bn_emb_;
  gradnet::Linear cls_;  // for "aam" only cls_.w is used (no bias)
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_valid_acc = 0.0;
};

// Length-bucketed padded batches, seeded epoch shuffling, early stopping on
// validation accuracy. The model is left holding the best-epoch parameters.
TrainResult train(Model& model, const Manifest& train_m, const Manifest& valid_m,
                  const FeatureStore& feats, const TrainHyper& hyper);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

// Checkpoint: "CANID\x01", u32le header length, JSON header (config, label
// order, tensor manifest, meta), float64le blobs, trailing CRC32.
void save_checkpoint(const Model& model, const TrainMeta& meta, const std::string& path);
Model load_checkpoint(const std::string& path, TrainMeta* meta_out = nullptr);

// All non-classifier parameters restored bit-exactly; the classifier layer is
// re-initialized for the new label set.
Model transfer_head(const Model& source, const LabelSet& new_labels, uint64_t seed);

// One embedding row per utterance, manifest order preserved.
std::vector<std::pair<std::string, std::vector<double>>> extract_embeddings(
    const Model& model, const Manifest& m, const FeatureStore& feats);

// The bottleneck/tanh classification head used over external frame
// embeddings: per-frame linear D -> bottleneck, mean pool over frames, tanh,
// linear to K, softmax.
struct FrameHeadConfig {
  int in_dims = 0;
  int bottleneck_dim = 0;  // 0 picks 128 when in_dims == 1024, else in_dims/8
  int n_classes = 0;
};

class FrameHead {
 public:
  static FrameHead build(const FrameHeadConfig& cfg, uint64_t seed);
  std::vector<double> forward(const dsp::FeatureMatrix& frames) const;
  // Cross-entropy loss with grads accumulated into the head parameters.
  double loss_and_grads(const dsp::FeatureMatrix& frames, int label);
  std::vector<Parameter*> parameters();
  const FrameHeadConfig& config() const { return cfg_; }

 private:
  FrameHeadConfig cfg_;
  gradnet::Linear bottleneck_;
  gradnet::Linear out_;
};

}  // namespace canid::ecapa

#endif  // CANID_ECAPA_HPP_
