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

#include "canid/ecapa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "canid/error.hpp"
#include "canid/io_util.hpp"
#include "canid/kern.hpp"

namespace canid::ecapa {

namespace fs = std::filesystem;
using gradnet::Act;
using gradnet::act_backward;
using gradnet::act_forward;
using gradnet::mask_grad_rows;
using gradnet::mask_rows;

const dsp::FeatureMatrix& FeatureStore::get(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw DataError("missing features for utterance '" + id + "'");
  return it->second;
}

FeatureStore load_feature_dir(const std::string& dir, const Manifest& m) {
  FeatureStore store;
  for (const auto& r : m.records) {
    const std::string path = (fs::path(dir) / (r.id + ".feat")).string();
    store.by_id.emplace(r.id, dsp::load_features(path));
  }
  return store;
}

namespace {

Tensor to_tensor(const dsp::FeatureMatrix& f, int pad_to) {
  Tensor x({std::max(pad_to, f.frames), f.dims});
  for (int t = 0; t < f.frames; ++t)
    std::memcpy(x.row(t), f.row(t), sizeof(double) * f.dims);
  return x;
}

void validate_config(const EcapaConfig& c) {
  if (c.in_dims < 1) throw DataError("ecapa config: in_dims must be >= 1");
  if (c.n_classes < 2) throw DataError("ecapa config: n_classes must be >= 2");
  if (c.n_blocks < 1) throw DataError("ecapa config: n_blocks must be >= 1");
  if (static_cast<int>(c.dilations.size()) != c.n_blocks)
    throw DataError("ecapa config: dilations length must equal n_blocks");
  if (c.channels % c.res2_scale != 0)
    throw DataError("ecapa config: res2_scale must divide channels");
  if (c.channels % c.se_reduction != 0)
    throw DataError("ecapa config: se_reduction must divide channels");
  if (c.loss != "xent" && c.loss != "aam")
    throw DataError("ecapa config: loss must be 'xent' or 'aam'");
}

nlohmann::ordered_json config_to_json(const EcapaConfig& c) {
  nlohmann::ordered_json j;
  j["in_dims"] = c.in_dims;
  j["channels"] = c.channels;
  j["n_blocks"] = c.n_blocks;
  j["dilations"] = c.dilations;
  j["res2_scale"] = c.res2_scale;
  j["se_reduction"] = c.se_reduction;
  j["attn_hidden"] = c.attn_hidden;
  j["agg_channels"] = c.agg_channels;
  j["embed_dim"] = c.embed_dim;
  j["n_classes"] = c.n_classes;
  j["loss"] = c.loss;
  j["aam_margin"] = c.aam_margin;
  j["aam_scale"] = c.aam_scale;
  return j;
}

EcapaConfig config_from_json(const nlohmann::json& j) {
  EcapaConfig c;
  c.in_dims = j.at("in_dims").get<int>();
  c.channels = j.at("channels").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.dilations = j.at("dilations").get<std::vector<int>>();
  c.res2_scale = j.at("res2_scale").get<int>();
  c.se_reduction = j.at("se_reduction").get<int>();
  c.attn_hidden = j.at("attn_hidden").get<int>();
  c.agg_channels = j.at("agg_channels").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.loss = j.at("loss").get<std::string>();
  c.aam_margin = j.at("aam_margin").get<double>();
  c.aam_scale = j.at("aam_scale").get<double>();
  return c;
}

}  // namespace

Model Model::build(const EcapaConfig& cfg, const LabelSet& labels, uint64_t seed) {
  validate_config(cfg);
  if (static_cast<int>(labels.size()) != cfg.n_classes)
    throw DataError("ecapa build: label order length must equal n_classes");

  Model m;
  m.cfg_ = cfg;
  m.labels_ = labels;
  m.conv0_ = gradnet::Conv1d::make(cfg.in_dims, cfg.channels, 5, 1, "conv0");
  m.bn0_ = gradnet::BatchNorm1d::make(cfg.channels, "bn0");
  for (int i = 0; i < cfg.n_blocks; ++i)
    m.blocks_.push_back(gradnet::Res2Block::make(cfg.channels, cfg.res2_scale,
                                                 cfg.dilations[static_cast<size_t>(i)],
                                                 cfg.se_reduction,
                                                 "block" + std::to_string(i + 1)));
  m.agg_ = gradnet::Conv1d::make(cfg.n_blocks * cfg.channels, cfg.agg_channels, 1, 1, "agg");
  m.pool_ = gradnet::AttentiveStatsPool::make(cfg.agg_channels, cfg.attn_hidden, "pool");
  m.emb_ = gradnet::Linear::make(2 * cfg.agg_channels, cfg.embed_dim, "emb");
  m.bn_emb_ = gradnet::BatchNorm1d::make(cfg.embed_dim, "bn_emb");
  m.cls_ = gradnet::Linear::make(cfg.embed_dim, cfg.n_classes, "cls");
  if (cfg.loss == "aam") m.cls_.b.trainable = false;

  gradnet::init_parameters(m.parameters(), seed);
  return m;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> ps = {&conv0_.w, &conv0_.b, &bn0_.gamma, &bn0_.beta,
                                &bn0_.run_mean, &bn0_.run_var};
  for (auto& blk : blocks_) {
    ps.push_back(&blk.conv_in.w);
    ps.push_back(&blk.conv_in.b);
    for (auto& c : blk.convs) {
      ps.push_back(&c.w);
      ps.push_back(&c.b);
    }
    ps.push_back(&blk.conv_out.w);
    ps.push_back(&blk.conv_out.b);
    ps.push_back(&blk.se.w1);
    ps.push_back(&blk.se.b1);
    ps.push_back(&blk.se.w2);
    ps.push_back(&blk.se.b2);
  }
  ps.insert(ps.end(), {&agg_.w, &agg_.b, &pool_.w, &pool_.b, &pool_.v, &emb_.w, &emb_.b,
                       &bn_emb_.gamma, &bn_emb_.beta, &bn_emb_.run_mean, &bn_emb_.run_var,
                       &cls_.w, &cls_.b});
  return ps;
}

std::vector<const Parameter*> Model::parameters() const {
  auto ps = const_cast<Model*>(this)->parameters();
  return std::vector<const Parameter*>(ps.begin(), ps.end());
}

Model::Output Model::forward_masked(const Tensor& x_in, int valid_len) const {
  if (x_in.cols() != cfg_.in_dims) throw DataError("ecapa forward: input dim mismatch");
  if (valid_len < 1) throw DataError("ecapa forward: need at least one frame");

  Tensor x = x_in;
  mask_rows(x, valid_len);
  Tensor pre0 = conv0_.forward(x);
  Tensor r0 = act_forward(pre0, Act::kRelu);
  mask_rows(r0, valid_len);
  Tensor h = bn0_.forward_eval(r0);
  mask_rows(h, valid_len);

  std::vector<Tensor> outs;
  const Tensor* cur = &h;
  for (const auto& blk : blocks_) {
    outs.push_back(blk.forward(*cur, valid_len));
    cur = &outs.back();
  }

  const int c = cfg_.channels;
  Tensor cat({x.rows(), cfg_.n_blocks * c});
  for (int j = 0; j < cfg_.n_blocks; ++j)
    for (int t = 0; t < x.rows(); ++t)
      std::memcpy(cat.row(t) + j * c, outs[static_cast<size_t>(j)].row(t), sizeof(double) * c);

  Tensor aggp = agg_.forward(cat);
  Tensor aggr = act_forward(aggp, Act::kRelu);
  mask_rows(aggr, valid_len);
  Tensor pooled = pool_.forward(aggr, valid_len);
  Tensor embv = emb_.forward(pooled);
  Tensor embn = bn_emb_.forward_eval(embv);

  Output out;
  out.embedding.assign(embv.v(), embv.v() + embv.size());
  if (cfg_.loss == "aam") {
    out.probs = gradnet::aam_probs(embn, cls_.w, cfg_.aam_scale);
  } else {
    Tensor logits = cls_.forward(embn);
    out.probs = gradnet::softmax(std::vector<double>(logits.v(), logits.v() + logits.size()));
  }
  return out;
}

Model::Output Model::forward(const dsp::FeatureMatrix& feats) const {
  if (feats.frames < 1) throw DataError("ecapa forward: empty feature matrix");
  Tensor x = to_tensor(feats, feats.frames);
  return forward_masked(x, feats.frames);
}

double Model::batch_loss(const std::vector<BatchItem>& batch, bool accumulate_grads,
                         bool update_running) {
  if (batch.empty()) throw DataError("ecapa batch_loss: empty batch");
  const int bsz = static_cast<int>(batch.size());
  const int c = cfg_.channels;
  int t_max = 1;
  for (const auto& it : batch) t_max = std::max(t_max, it.feats->frames);

  std::vector<Tensor> xs, pre0(bsz), r0(bsz);
  std::vector<int> lens(bsz);
  xs.reserve(batch.size());
  for (int bi = 0; bi < bsz; ++bi) {
    xs.push_back(to_tensor(*batch[static_cast<size_t>(bi)].feats, t_max));
    lens[static_cast<size_t>(bi)] = batch[static_cast<size_t>(bi)].feats->frames;
  }
  for (int bi = 0; bi < bsz; ++bi) {
    pre0[bi] = conv0_.forward(xs[bi]);
    r0[bi] = act_forward(pre0[bi], Act::kRelu);
    mask_rows(r0[bi], lens[bi]);
  }
  std::vector<Tensor> h0 = bn0_.forward_train(r0, lens, update_running);
  for (int bi = 0; bi < bsz; ++bi) mask_rows(h0[bi], lens[bi]);

  // blkout[j][bi]; block j input is h0 for j = 0 else blkout[j-1].
  std::vector<std::vector<Tensor>> blkout(static_cast<size_t>(cfg_.n_blocks));
  for (int j = 0; j < cfg_.n_blocks; ++j) {
    blkout[j].resize(bsz);
    for (int bi = 0; bi < bsz; ++bi) {
      const Tensor& in = j == 0 ? h0[bi] : blkout[j - 1][bi];
      blkout[j][bi] = blocks_[static_cast<size_t>(j)].forward(in, lens[bi]);
    }
  }

  std::vector<Tensor> cat(bsz), aggp(bsz), aggr(bsz), pooled(bsz), embv(bsz);
  for (int bi = 0; bi < bsz; ++bi) {
    cat[bi] = Tensor({t_max, cfg_.n_blocks * c});
    for (int j = 0; j < cfg_.n_blocks; ++j)
      for (int t = 0; t < t_max; ++t)
        std::memcpy(cat[bi].row(t) + j * c, blkout[j][bi].row(t), sizeof(double) * c);
    aggp[bi] = agg_.forward(cat[bi]);
    aggr[bi] = act_forward(aggp[bi], Act::kRelu);
    mask_rows(aggr[bi], lens[bi]);
    pooled[bi] = pool_.forward(aggr[bi], lens[bi]);
    embv[bi] = emb_.forward(pooled[bi]);
  }

  Tensor embmat({bsz, cfg_.embed_dim});
  for (int bi = 0; bi < bsz; ++bi)
    std::memcpy(embmat.row(bi), embv[bi].v(), sizeof(double) * cfg_.embed_dim);
  std::vector<Tensor> embmat_vec;
  embmat_vec.push_back(std::move(embmat));
  std::vector<int> embl = {bsz};
  std::vector<Tensor> embn_vec = bn_emb_.forward_train(embmat_vec, embl, update_running);
  Tensor& embn = embn_vec[0];

  const double inv_b = 1.0 / static_cast<double>(bsz);
  double total_loss = 0.0;
  std::vector<Tensor> en(bsz), logits(bsz);
  for (int bi = 0; bi < bsz; ++bi) {
    en[bi] = Tensor({cfg_.embed_dim});
    std::memcpy(en[bi].v(), embn.row(bi), sizeof(double) * cfg_.embed_dim);
    const int label = batch[static_cast<size_t>(bi)].label;
    if (cfg_.loss == "aam") {
      total_loss += gradnet::aam_softmax(en[bi], cls_.w, label, cfg_.aam_margin,
                                         cfg_.aam_scale, accumulate_grads ? inv_b : 0.0) * inv_b;
    } else {
      logits[bi] = cls_.forward(en[bi]);
      gradnet::LossGrad lg = gradnet::softmax_xent(
          std::vector<double>(logits[bi].v(), logits[bi].v() + logits[bi].size()), label);
      total_loss += lg.loss * inv_b;
      if (accumulate_grads) {
        for (size_t i = 0; i < lg.grad.size(); ++i) logits[bi].g()[i] = lg.grad[i] * inv_b;
        cls_.backward(en[bi], logits[bi]);
      }
    }
  }
  if (!accumulate_grads) return total_loss;

  // Reverse pass.
  for (int bi = 0; bi < bsz; ++bi)
    std::memcpy(embn.grow(bi), en[bi].g(), sizeof(double) * cfg_.embed_dim);
  bn_emb_.backward(embmat_vec, embn_vec, embl);
  for (int bi = 0; bi < bsz; ++bi) {
    std::memcpy(embv[bi].g(), embmat_vec[0].grow(bi), sizeof(double) * cfg_.embed_dim);
    emb_.backward(pooled[bi], embv[bi]);
    pool_.backward(aggr[bi], pooled[bi], lens[bi]);
    mask_grad_rows(aggr[bi], lens[bi]);
    act_backward(aggp[bi], aggr[bi], Act::kRelu);
    agg_.backward(cat[bi], aggp[bi]);
    for (int j = 0; j < cfg_.n_blocks; ++j)
      for (int t = 0; t < t_max; ++t)
        std::memcpy(blkout[j][bi].grow(t), cat[bi].grow(t) + j * c, sizeof(double) * c);
  }
  for (int j = cfg_.n_blocks - 1; j >= 0; --j)
    for (int bi = 0; bi < bsz; ++bi) {
      Tensor& in = j == 0 ? h0[bi] : blkout[j - 1][bi];
      blocks_[static_cast<size_t>(j)].backward(in, blkout[j][bi], lens[bi]);
    }
  for (int bi = 0; bi < bsz; ++bi) mask_grad_rows(h0[bi], lens[bi]);
  bn0_.backward(r0, h0, lens);
  for (int bi = 0; bi < bsz; ++bi) {
    mask_grad_rows(r0[bi], lens[bi]);
    act_backward(pre0[bi], r0[bi], Act::kRelu);
    conv0_.backward(xs[bi], pre0[bi]);
  }
  return total_loss;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<double>> snapshot_params(const std::vector<Parameter*>& ps) {
  std::vector<std::vector<double>> snap;
  snap.reserve(ps.size());
  for (const Parameter* p : ps) snap.emplace_back(p->t.v(), p->t.v() + p->t.size());
  return snap;
}

void restore_params(const std::vector<Parameter*>& ps,
                    const std::vector<std::vector<double>>& snap) {
  for (size_t i = 0; i < ps.size(); ++i)
    std::memcpy(ps[i]->t.v(), snap[i].data(), sizeof(double) * snap[i].size());
}

}  // namespace

TrainResult train(Model& model, const Manifest& train_m, const Manifest& valid_m,
                  const FeatureStore& feats, const TrainHyper& hyper) {
  if (train_m.records.empty()) throw DataError("train: empty train set");
  if (hyper.batch_size < 1 || hyper.max_epochs < 1 || hyper.lr <= 0.0 || hyper.patience < 0)
    throw DataError("train: hyperparameters must be positive");

  struct Item {
    const dsp::FeatureMatrix* f;
    int label;
    std::string id;
  };
  std::vector<Item> items;
  std::set<int> classes_seen;
  for (const auto& r : train_m.records) {
    const int label = model.labels().index_of(r.dialect);
    if (label < 0) throw DataError("train: dialect '" + r.dialect + "' not in model label set");
    items.push_back({&feats.get(r.id), label, r.id});
    classes_seen.insert(label);
  }
  if (classes_seen.size() < 2)
    std::fprintf(stderr, "warning: training set contains a single class\n");

  // Length-bucketed batches: sort by frame count, chunk, shuffle chunk order.
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.f->frames != b.f->frames) return a.f->frames < b.f->frames;
    return a.id < b.id;
  });
  std::vector<std::vector<Model::BatchItem>> batches;
  for (size_t i = 0; i < items.size(); i += static_cast<size_t>(hyper.batch_size)) {
    std::vector<Model::BatchItem> b;
    for (size_t j = i; j < std::min(items.size(), i + static_cast<size_t>(hyper.batch_size)); ++j)
      b.push_back({items[j].f, items[j].label});
    batches.push_back(std::move(b));
  }
  // Fold a trailing singleton into its neighbor; batch statistics need >= 2
  // embeddings to carry gradient into the trunk.
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }

  gradnet::AdamConfig adam_cfg;
  adam_cfg.lr = hyper.lr;
  gradnet::Adam adam(model.parameters(), adam_cfg);

  TrainResult result;
  double best_acc = -1.0;
  int wait = 0;
  std::vector<std::vector<double>> best_snap;

  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    std::vector<size_t> order(batches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(hyper.seed, "epoch/" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t n_items = 0;
    for (size_t bi : order) {
      const double loss = model.batch_loss(batches[bi], true, true);
      if (!std::isfinite(loss)) throw NumericError("train: non-finite loss at epoch " +
                                                   std::to_string(epoch));
      adam.step();
      loss_sum += loss * static_cast<double>(batches[bi].size());
      n_items += batches[bi].size();
    }
    const double train_loss = loss_sum / static_cast<double>(n_items);

    int correct = 0;
    for (const auto& r : valid_m.records) {
      const auto out = model.forward(feats.get(r.id));
      int arg = 0;
      for (size_t i = 1; i < out.probs.size(); ++i)
        if (out.probs[i] > out.probs[static_cast<size_t>(arg)]) arg = static_cast<int>(i);
      if (arg == model.labels().index_of(r.dialect)) ++correct;
    }
    const double valid_acc = valid_m.records.empty()
                                 ? 0.0
                                 : static_cast<double>(correct) / valid_m.records.size();
    result.history.push_back({epoch, train_loss, valid_acc});

    if (valid_acc > best_acc) {
      best_acc = valid_acc;
      result.best_epoch = epoch;
      best_snap = snapshot_params(model.parameters());
      wait = 0;
    } else {
      ++wait;
    }
    if (wait >= hyper.patience) break;
  }

  if (!best_snap.empty()) restore_params(model.parameters(), best_snap);
  result.best_valid_acc = best_acc < 0.0 ? 0.0 : best_acc;
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::string out = "epoch,train_loss,valid_acc\n";
  char buf[128];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g\n", e.epoch, e.train_loss, e.valid_acc);
    out += buf;
  }
  write_file_text(path, out);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[6] = {'C', 'A', 'N', 'I', 'D', '\x01'};
}

void save_checkpoint(const Model& model, const TrainMeta& meta, const std::string& path) {
  const auto params = model.parameters();

  nlohmann::ordered_json header;
  header["format_version"] = 1;
  header["arch"] = config_to_json(model.config());
  header["label_order"] = model.labels().labels;
  header["meta"] = {{"epochs_run", meta.epochs_run}, {"best_valid_acc", meta.best_valid_acc}};
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const Parameter* p : params) {
    tensors.push_back({{"name", p->name}, {"shape", p->t.shape()}, {"offset", offset}});
    offset += p->t.size() * 8;
  }
  header["tensors"] = tensors;
  const std::string head = header.dump();

  std::vector<uint8_t> out(kMagic, kMagic + 6);
  put_u32le(out, static_cast<uint32_t>(head.size()));
  out.insert(out.end(), head.begin(), head.end());
  for (const Parameter* p : params)
    for (size_t i = 0; i < p->t.size(); ++i) put_f64le(out, p->t.v()[i]);
  const uint32_t crc = crc32(out.data(), out.size());
  put_u32le(out, crc);
  write_file_bytes(path, out.data(), out.size());
}

Model load_checkpoint(const std::string& path, TrainMeta* meta_out) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 14) throw DataError("checkpoint truncated: " + path);
  if (std::memcmp(bytes.data(), kMagic, 6) != 0)
    throw DataError("bad checkpoint magic (expected \"CANID\\x01\"): " + path);

  const uint32_t head_len = get_u32le(bytes.data() + 6);
  const size_t blob_start = 10 + static_cast<size_t>(head_len);
  if (bytes.size() < blob_start + 4) throw DataError("checkpoint truncated: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(
        std::string(bytes.begin() + 10, bytes.begin() + static_cast<long>(blob_start)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("checkpoint header parse error: " + std::string(e.what()));
  }
  if (header.at("format_version").get<int>() != 1)
    throw DataError("unsupported checkpoint format version in " + path);

  // The tensor manifest pins the expected file size; report short files as
  // truncation rather than a checksum failure.
  {
    uint64_t blob_bytes = 0;
    for (const auto& tj : header.at("tensors")) {
      uint64_t n = 8;
      for (int d : tj.at("shape").get<std::vector<int>>()) n *= static_cast<uint64_t>(d);
      blob_bytes = std::max(blob_bytes, tj.at("offset").get<uint64_t>() + n);
    }
    if (bytes.size() < blob_start + blob_bytes + 4)
      throw DataError("checkpoint truncated: " + path);
  }

  const uint32_t crc_stored = get_u32le(bytes.data() + bytes.size() - 4);
  const uint32_t crc_actual = crc32(bytes.data(), bytes.size() - 4);
  if (crc_stored != crc_actual) throw DataError("checkpoint checksum mismatch: " + path);

  const EcapaConfig cfg = config_from_json(header.at("arch"));
  LabelSet labels;
  labels.labels = header.at("label_order").get<std::vector<std::string>>();
  Model model = Model::build(cfg, labels, 0);

  auto params = model.parameters();
  std::set<std::string> filled;
  const size_t blob_end = bytes.size() - 4;
  for (const auto& tj : header.at("tensors")) {
    const std::string name = tj.at("name").get<std::string>();
    const auto shape = tj.at("shape").get<std::vector<int>>();
    const uint64_t offset = tj.at("offset").get<uint64_t>();
    Parameter* target = nullptr;
    for (Parameter* p : params)
      if (p->name == name) target = p;
    if (target == nullptr) throw DataError("checkpoint tensor '" + name + "' not in model");
    if (shape != target->t.shape())
      throw DataError("checkpoint tensor '" + name + "' shape mismatch");
    if (!filled.insert(name).second)
      throw DataError("checkpoint tensor '" + name + "' appears twice");
    const size_t start = blob_start + offset;
    const size_t need = target->t.size() * 8;
    if (start + need > blob_end) throw DataError("checkpoint truncated: " + path);
    for (size_t i = 0; i < target->t.size(); ++i)
      target->t.v()[i] = get_f64le(bytes.data() + start + 8 * i);
  }
  if (filled.size() != params.size())
    throw DataError("checkpoint is missing model tensors: " + path);

  if (meta_out != nullptr) {
    meta_out->epochs_run = header.at("meta").at("epochs_run").get<int>();
    meta_out->best_valid_acc = header.at("meta").at("best_valid_acc").get<double>();
  }
  return model;
}

Model transfer_head(const Model& source, const LabelSet& new_labels, uint64_t seed) {
  EcapaConfig cfg = source.cfg_;
  cfg.n_classes = static_cast<int>(new_labels.size());
  Model fresh = Model::build(cfg, new_labels, seed);

  auto dst = fresh.parameters();
  auto src = source.parameters();
  for (Parameter* d : dst) {
    if (d->name.rfind("cls.", 0) == 0) continue;  // classifier is re-initialized
    const Parameter* s = nullptr;
    for (const Parameter* p : src)
      if (p->name == d->name) s = p;
    if (s == nullptr || s->t.shape() != d->t.shape())
      throw DataError("transfer_head: incompatible source model at '" + d->name + "'");
    std::memcpy(d->t.v(), s->t.v(), sizeof(double) * d->t.size());
  }
  return fresh;
}

std::vector<std::pair<std::string, std::vector<double>>> extract_embeddings(
    const Model& model, const Manifest& m, const FeatureStore& feats) {
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  rows.reserve(m.records.size());
  for (const auto& r : m.records)
    rows.emplace_back(r.id, model.forward(feats.get(r.id)).embedding);
  return rows;
}

// ---------------------------------------------------------------------------
// FrameHead
// ---------------------------------------------------------------------------

FrameHead FrameHead::build(const FrameHeadConfig& cfg_in, uint64_t seed) {
  FrameHeadConfig cfg = cfg_in;
  if (cfg.in_dims < 2) throw DataError("frame head: in_dims must be >= 2");
  if (cfg.n_classes < 2) throw DataError("frame head: n_classes must be >= 2");
  if (cfg.bottleneck_dim == 0)
    cfg.bottleneck_dim = cfg.in_dims == 1024 ? 128 : std::max(1, cfg.in_dims / 8);
  if (cfg.bottleneck_dim >= cfg.in_dims)
    throw DataError("frame head: bottleneck_dim must be < in_dims");

  FrameHead h;
  h.cfg_ = cfg;
  h.bottleneck_ = gradnet::Linear::make(cfg.in_dims, cfg.bottleneck_dim, "fh.bottleneck");
  h.out_ = gradnet::Linear::make(cfg.bottleneck_dim, cfg.n_classes, "fh.out");
  gradnet::init_parameters(h.parameters(), seed);
  return h;
}

std::vector<Parameter*> FrameHead::parameters() {
  return {&bottleneck_.w, &bottleneck_.b, &out_.w, &out_.b};
}

namespace {

struct FrameHeadTrace {
  Tensor x, bot, pooled, th, logits;
};

FrameHeadTrace frame_head_run(const gradnet::Linear& bottleneck, const gradnet::Linear& out,
                              const dsp::FeatureMatrix& frames) {
  FrameHeadTrace tr;
  tr.x = Tensor({frames.frames, frames.dims});
  for (int t = 0; t < frames.frames; ++t)
    std::memcpy(tr.x.row(t), frames.row(t), sizeof(double) * frames.dims);
  tr.bot = bottleneck.forward(tr.x);
  const int bdim = tr.bot.cols();
  tr.pooled = Tensor({bdim});
  for (int t = 0; t < tr.bot.rows(); ++t)
    kern::add(tr.pooled.v(), tr.bot.row(t), tr.pooled.v(), bdim);
  kern::scale(1.0 / tr.bot.rows(), tr.pooled.v(), bdim);
  tr.th = act_forward(tr.pooled, Act::kTanh);
  tr.logits = out.forward(tr.th);
  return tr;
}

}  // namespace

std::vector<double> FrameHead::forward(const dsp::FeatureMatrix& frames) const {
  if (frames.frames < 1) throw DataError("frame head: empty input");
  if (frames.dims != cfg_.in_dims) throw DataError("frame head: input dim mismatch");
  FrameHeadTrace tr = frame_head_run(bottleneck_, out_, frames);
  return gradnet::softmax(std::vector<double>(tr.logits.v(), tr.logits.v() + tr.logits.size()));
}

double FrameHead::loss_and_grads(const dsp::FeatureMatrix& frames, int label) {
  if (frames.dims != cfg_.in_dims) throw DataError("frame head: input dim mismatch");
  FrameHeadTrace tr = frame_head_run(bottleneck_, out_, frames);
  gradnet::LossGrad lg = gradnet::softmax_xent(
      std::vector<double>(tr.logits.v(), tr.logits.v() + tr.logits.size()), label);
  std::memcpy(tr.logits.g(), lg.grad.data(), sizeof(double) * lg.grad.size());
  out_.backward(tr.th, tr.logits);
  act_backward(tr.pooled, tr.th, Act::kTanh);
  const int bdim = tr.bot.cols();
  const double inv_t = 1.0 / tr.bot.rows();
  for (int t = 0; t < tr.bot.rows(); ++t)
    kern::axpy(inv_t, tr.pooled.g(), tr.bot.grow(t), bdim);
  bottleneck_.backward(tr.x, tr.bot);
  return lg.loss;
}

}  // namespace canid::ecapa
