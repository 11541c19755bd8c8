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

// Acceptance suite: nine gate criteria, one pass/fail line each. Returns the
// number of failed criteria as the process exit code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canid/analysis.hpp"
#include "canid/corpus.hpp"
#include "canid/dsp.hpp"
#include "canid/ecapa.hpp"
#include "canid/fusion.hpp"
#include "canid/gradnet.hpp"
#include "canid/io_util.hpp"
#include "canid/kern.hpp"
#include "canid/rng.hpp"
#include "canid/textdid.hpp"

using namespace canid;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

fs::path g_work;

std::vector<double> random_vec(size_t n, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double fd_max_err(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& point, const std::vector<double>& analytic) {
  return gradnet::grad_check(f, point, analytic, 1e-4);
}

// ---------------------------------------------------------------------------
// Shared pipeline runs
// ---------------------------------------------------------------------------

struct PipelineRun {
  Manifest train, valid, test;
  ecapa::FeatureStore feats;
  ecapa::Model model;                  // trained acoustic model
  ecapa::TrainResult train_result;
  textdid::TextModel text_model;
  fusion::ScoreTable valid_ac, valid_tx, test_ac, test_tx;
};

ecapa::FeatureStore extract_features(const Manifest& m, const std::string& corpus_dir) {
  ecapa::FeatureStore store;
  dsp::MfccConfig cfg;
  for (const auto& r : m.records) {
    const Waveform w = read_wav(resolve_audio_path(corpus_dir + "/manifest.jsonl", r.audio));
    store.by_id.emplace(r.id, dsp::cmvn(dsp::mfcc(w, cfg, r.id)));
  }
  return store;
}

fusion::ScoreTable score_acoustic(const ecapa::Model& model, const Manifest& m,
                                  const ecapa::FeatureStore& feats) {
  fusion::ScoreTable t;
  t.labels = model.labels();
  for (const auto& r : m.records)
    t.rows.push_back({r.id, r.dialect, model.forward(feats.get(r.id)).probs});
  return t;
}

fusion::ScoreTable score_text(const textdid::TextModel& model, const Manifest& m) {
  fusion::ScoreTable t;
  t.labels = model.labels;
  for (const auto& r : m.records)
    t.rows.push_back({r.id, r.dialect, model.predict(r.text.value_or(""))});
  return t;
}

std::map<std::string, std::string> refs_of(const Manifest& m) {
  std::map<std::string, std::string> refs;
  for (const auto& r : m.records) refs[r.id] = r.dialect;
  return refs;
}

PipelineRun run_pipeline(const SynthSpec& spec, const std::string& name, uint64_t split_seed,
                         const ecapa::TrainHyper& hyper) {
  const std::string corpus_dir = (g_work / name).string();
  const Manifest all = synth_corpus(spec, corpus_dir);
  const SplitResult split = balanced_split(all, {0.6, 0.2, 0.2}, split_seed);

  PipelineRun run{split.train, split.valid, split.test, extract_features(all, corpus_dir),
                  ecapa::Model::build(
                      [&] {
                        ecapa::EcapaConfig cfg;
                        cfg.n_classes = static_cast<int>(all.label_set.size());
                        return cfg;
                      }(),
                      all.label_set, hyper.seed),
                  {}, {}, {}, {}, {}, {}};
  run.train_result = ecapa::train(run.model, run.train, run.valid, run.feats, hyper);
  run.text_model = textdid::train_text(run.train, {});
  run.valid_ac = score_acoustic(run.model, run.valid, run.feats);
  run.valid_tx = score_text(run.text_model, run.valid);
  run.test_ac = score_acoustic(run.model, run.test, run.feats);
  run.test_tx = score_text(run.text_model, run.test);
  return run;
}

double table_accuracy(const fusion::ScoreTable& t) {
  return analysis::evaluate_table(t, "s", "s").accuracy;
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient suite
// ---------------------------------------------------------------------------

Check criterion1() {
  Check c;
  const std::vector<uint64_t> seeds = {11, 12, 13, 14, 15};

  // conv1d
  for (uint64_t seed : seeds) {
    gradnet::Conv1d conv = gradnet::Conv1d::make(3, 4, 3, 2, "c");
    gradnet::init_parameters({&conv.w, &conv.b}, seed);
    const auto x0 = random_vec(6 * 3, seed * 100 + 3);
    const auto probe = random_vec(6 * 4, seed * 100 + 4);
    Tensor x({6, 3});
    std::memcpy(x.v(), x0.data(), 8 * x0.size());
    Tensor y = conv.forward(x);
    std::memcpy(y.g(), probe.data(), 8 * probe.size());
    conv.backward(x, y);
    auto f = [&](const std::vector<double>& flat) {
      Tensor xx({6, 3});
      std::memcpy(xx.v(), flat.data(), 8 * flat.size());
      const Tensor yy = conv.forward(xx);
      return kern::dot(yy.v(), probe.data(), yy.size());
    };
    c.expect(fd_max_err(f, x0, {x.g(), x.g() + x.size()}) <= 1e-4, "conv1d grad");
  }

  // activations
  for (uint64_t seed : seeds)
    for (auto kind : {gradnet::Act::kRelu, gradnet::Act::kTanh, gradnet::Act::kSigmoid}) {
      const auto x0 = random_vec(12, seed * 7 + static_cast<int>(kind), -2.0, 2.0);
      const auto probe = random_vec(12, seed * 7 + 99);
      Tensor x({12});
      std::memcpy(x.v(), x0.data(), 8 * 12);
      Tensor y = gradnet::act_forward(x, kind);
      std::memcpy(y.g(), probe.data(), 8 * 12);
      gradnet::act_backward(x, y, kind);
      auto f = [&](const std::vector<double>& flat) {
        Tensor xx({12});
        std::memcpy(xx.v(), flat.data(), 8 * 12);
        const Tensor yy = gradnet::act_forward(xx, kind);
        return kern::dot(yy.v(), probe.data(), 12);
      };
      c.expect(fd_max_err(f, x0, {x.g(), x.g() + 12}) <= 1e-4, "activation grad");
    }

  // batchnorm (train mode)
  for (uint64_t seed : seeds) {
    const auto x0 = random_vec(8 * 3, seed * 11 + 1);
    const auto probe = random_vec(8 * 3, seed * 11 + 2);
    auto loss_of = [&](const std::vector<double>& flat, std::vector<double>* grad_out) {
      gradnet::BatchNorm1d bn = gradnet::BatchNorm1d::make(3, "bn");
      bn.gamma.t.fill(1.0);
      bn.run_var.t.fill(1.0);
      std::vector<Tensor> xs(1, Tensor({8, 3}));
      std::memcpy(xs[0].v(), flat.data(), 8 * flat.size());
      auto ys = bn.forward_train(xs, {8}, false);
      const double val = kern::dot(ys[0].v(), probe.data(), ys[0].size());
      if (grad_out != nullptr) {
        std::memcpy(ys[0].g(), probe.data(), 8 * probe.size());
        bn.backward(xs, ys, {8});
        grad_out->assign(xs[0].g(), xs[0].g() + xs[0].size());
      }
      return val;
    };
    std::vector<double> analytic;
    loss_of(x0, &analytic);
    auto f = [&](const std::vector<double>& flat) { return loss_of(flat, nullptr); };
    c.expect(fd_max_err(f, x0, analytic) <= 1e-4, "batchnorm grad");
  }

  // se_gate
  for (uint64_t seed : seeds) {
    gradnet::SeGate se = gradnet::SeGate::make(6, 2, "se");
    gradnet::init_parameters({&se.w1, &se.b1, &se.w2, &se.b2}, seed);
    const auto x0 = random_vec(7 * 6, seed * 31 + 900);
    const auto probe = random_vec(7 * 6, seed * 31 + 901);
    Tensor x({7, 6});
    std::memcpy(x.v(), x0.data(), 8 * x0.size());
    Tensor y = se.forward(x, 7);
    std::memcpy(y.g(), probe.data(), 8 * probe.size());
    gradnet::SeGate copy = se;
    copy.backward(x, y, 7);
    auto f = [&](const std::vector<double>& flat) {
      Tensor xx({7, 6});
      std::memcpy(xx.v(), flat.data(), 8 * flat.size());
      const Tensor yy = se.forward(xx, 7);
      return kern::dot(yy.v(), probe.data(), yy.size());
    };
    c.expect(fd_max_err(f, x0, {x.g(), x.g() + x.size()}) <= 1e-4, "se_gate grad");
  }

  // res2_block
  for (uint64_t seed : seeds) {
    gradnet::Res2Block blk = gradnet::Res2Block::make(8, 2, 2, 4, "blk");
    std::vector<Parameter*> params = {&blk.conv_in.w, &blk.conv_in.b, &blk.conv_out.w,
                                      &blk.conv_out.b, &blk.se.w1, &blk.se.b1, &blk.se.w2,
                                      &blk.se.b2};
    for (auto& cv : blk.convs) {
      params.push_back(&cv.w);
      params.push_back(&cv.b);
    }
    gradnet::init_parameters(params, seed);
    const auto x0 = random_vec(7 * 8, seed * 51 + 1);
    const auto probe = random_vec(7 * 8, seed * 51 + 2);
    Tensor x({7, 8});
    std::memcpy(x.v(), x0.data(), 8 * x0.size());
    Tensor y = blk.forward(x, 7);
    std::memcpy(y.g(), probe.data(), 8 * probe.size());
    gradnet::Res2Block copy = blk;
    copy.backward(x, y, 7);
    auto f = [&](const std::vector<double>& flat) {
      Tensor xx({7, 8});
      std::memcpy(xx.v(), flat.data(), 8 * flat.size());
      const Tensor yy = blk.forward(xx, 7);
      return kern::dot(yy.v(), probe.data(), yy.size());
    };
    c.expect(fd_max_err(f, x0, {x.g(), x.g() + x.size()}) <= 1e-4, "res2_block grad");
  }

  // attentive stats pooling
  for (uint64_t seed : seeds) {
    gradnet::AttentiveStatsPool pool = gradnet::AttentiveStatsPool::make(5, 3, "pool");
    gradnet::init_parameters({&pool.w, &pool.b, &pool.v}, seed);
    const auto h0 = random_vec(8 * 5, seed * 61 + 1);
    const auto probe = random_vec(10, seed * 61 + 2);
    Tensor h({8, 5});
    std::memcpy(h.v(), h0.data(), 8 * h0.size());
    Tensor out = pool.forward(h, 8);
    std::memcpy(out.g(), probe.data(), 8 * probe.size());
    gradnet::AttentiveStatsPool copy = pool;
    copy.backward(h, out, 8);
    auto f = [&](const std::vector<double>& flat) {
      Tensor hh({8, 5});
      std::memcpy(hh.v(), flat.data(), 8 * flat.size());
      const Tensor oo = pool.forward(hh, 8);
      return kern::dot(oo.v(), probe.data(), oo.size());
    };
    c.expect(fd_max_err(f, h0, {h.g(), h.g() + h.size()}) <= 1e-4, "pool grad");
  }

  // softmax_xent
  for (uint64_t seed : seeds) {
    const auto logits = random_vec(5, seed * 13, -2.0, 2.0);
    const auto lg = gradnet::softmax_xent(logits, 2);
    auto f = [](const std::vector<double>& v) { return gradnet::softmax_xent(v, 2).loss; };
    c.expect(fd_max_err(f, logits, lg.grad) <= 1e-4, "softmax_xent grad");
  }

  // aam_softmax (embedding and weight grads)
  for (uint64_t seed : seeds) {
    const auto e0 = random_vec(5, seed * 17 + 1);
    const auto w0 = random_vec(3 * 5, seed * 17 + 2);
    Tensor emb({5});
    std::memcpy(emb.v(), e0.data(), 8 * 5);
    Parameter w{"w", Tensor({3, 5}), true};
    std::memcpy(w.t.v(), w0.data(), 8 * w0.size());
    gradnet::aam_softmax(emb, w, 1, 0.2, 30.0, 1.0);
    auto f_e = [&](const std::vector<double>& v) {
      Tensor ee({5});
      std::memcpy(ee.v(), v.data(), 8 * 5);
      Parameter ww{"w", Tensor({3, 5}), true};
      std::memcpy(ww.t.v(), w0.data(), 8 * w0.size());
      return gradnet::aam_softmax(ee, ww, 1, 0.2, 30.0, 0.0);
    };
    c.expect(fd_max_err(f_e, e0, {emb.g(), emb.g() + 5}) <= 1e-4, "aam emb grad");
    auto f_w = [&](const std::vector<double>& v) {
      Tensor ee({5});
      std::memcpy(ee.v(), e0.data(), 8 * 5);
      Parameter ww{"w", Tensor({3, 5}), true};
      std::memcpy(ww.t.v(), v.data(), 8 * v.size());
      return gradnet::aam_softmax(ee, ww, 1, 0.2, 30.0, 0.0);
    };
    c.expect(fd_max_err(f_w, w0, {w.t.g(), w.t.g() + w.t.size()}) <= 1e-4, "aam weight grad");
  }

  // end-to-end model gradient on a two-utterance batch
  {
    ecapa::EcapaConfig tiny;
    tiny.in_dims = 5;
    tiny.channels = 8;
    tiny.n_blocks = 2;
    tiny.dilations = {1, 2};
    tiny.res2_scale = 2;
    tiny.se_reduction = 2;
    tiny.attn_hidden = 3;
    tiny.agg_channels = 6;
    tiny.embed_dim = 4;
    tiny.n_classes = 3;
    ecapa::Model model = ecapa::Model::build(tiny, LabelSet::canonical(), 12);

    dsp::FeatureMatrix fa, fb;
    fa.frames = 6;
    fa.dims = 5;
    fa.data = random_vec(30, 120);
    fb.frames = 9;
    fb.dims = 5;
    fb.data = random_vec(45, 121);
    const std::vector<ecapa::Model::BatchItem> batch = {{&fa, 0}, {&fb, 2}};

    model.batch_loss(batch, true, false);
    auto params = model.parameters();
    std::vector<double> point, analytic;
    for (const Parameter* p : params)
      for (size_t i = 0; i < p->t.size(); ++i) {
        point.push_back(p->t.v()[i]);
        analytic.push_back(p->t.g()[i]);
      }
    for (Parameter* p : params) p->t.zero_grad();
    auto f = [&](const std::vector<double>& flat) {
      size_t off = 0;
      for (Parameter* p : params) {
        std::memcpy(p->t.v(), flat.data() + off, 8 * p->t.size());
        off += p->t.size();
      }
      return model.batch_loss(batch, false, false);
    };
    const double err = fd_max_err(f, point, analytic);
    c.expect(err <= 1e-3, "end-to-end grad err " + std::to_string(err));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 2: DSP suite
// ---------------------------------------------------------------------------

Check criterion2() {
  Check c;

  const auto d = dsp::dct2_orthonormal(80);
  double worst = 0.0;
  for (int i = 0; i < 80; ++i)
    for (int j = 0; j < 80; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 80; ++k) acc += d[i * 80 + k] * d[j * 80 + k];
      worst = std::max(worst, std::abs(acc - (i == j ? 1.0 : 0.0)));
    }
  c.expect(worst <= 1e-10, "DCT orthonormality " + std::to_string(worst));

  // gain invariance on a loud broadband signal (all bands above the floor)
  Waveform w;
  w.sample_rate = 16000;
  w.samples = random_vec(8000, 4, -15.0, 15.0);
  Waveform w10 = w;
  for (double& s : w10.samples) s *= 10.0;
  dsp::MfccConfig cfg;
  const dsp::FeatureMatrix a = dsp::mfcc(w, cfg, "x");
  const dsp::FeatureMatrix b = dsp::mfcc(w10, cfg, "x10");
  double gain_worst = 0.0;
  for (int t = 0; t < a.frames; ++t)
    for (int ch = 1; ch < a.dims; ++ch)
      gain_worst = std::max(gain_worst, std::abs(a.at(t, ch) - b.at(t, ch)));
  c.expect(gain_worst <= 1e-6, "gain invariance " + std::to_string(gain_worst));

  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const int frame_len = 16 + static_cast<int>(rng.below(185));
    const int hop = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(frame_len)));
    const int n = frame_len + static_cast<int>(rng.below(2000));
    Waveform wv;
    wv.sample_rate = 1000;
    wv.samples = random_vec(static_cast<size_t>(n), 900 + trial);
    dsp::MfccConfig fc;
    fc.frame_ms = frame_len;
    fc.hop_ms = hop;
    fc.n_mels = 8;
    fc.n_mfcc = 8;
    fc.fmin = 1.0;
    fc.fmax = 500.0;
    const dsp::FeatureMatrix f = dsp::mfcc(wv, fc, "t");
    if (f.frames != 1 + (n - frame_len) / hop) {
      c.expect(false, "frame count formula");
      break;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 3: fusion identities
// ---------------------------------------------------------------------------

Check criterion3() {
  Check c;

  const auto grid = fusion::lambda_grid();
  c.expect(grid.size() == 11, "grid size");
  for (int i = 0; i <= 10; ++i)
    c.expect(grid[static_cast<size_t>(i)] == i / 10.0, "grid point value");

  const fusion::ScoreRow a{"u", "Co", {0.5, 0.3, 0.2}};
  const fusion::ScoreRow t{"u", "Co", {0.1, 0.8, 0.1}};
  const fusion::ScoreRow f = fusion::fuse(a, t, 0.2);
  c.expect(std::abs(f.probs[0] - 0.42) <= 1e-12 && std::abs(f.probs[1] - 0.40) <= 1e-12 &&
               std::abs(f.probs[2] - 0.18) <= 1e-12,
           "hand-computed fuse example");

  fusion::ScoreTable ta, tt;
  ta.labels = tt.labels = LabelSet::canonical();
  std::map<std::string, std::string> refs;
  Rng rng(99);
  for (int i = 0; i < 80; ++i) {
    const std::string id = "u" + std::to_string(i);
    const std::string ref = ta.labels.labels[rng.below(3)];
    auto draw = [&rng] {
      std::vector<double> p(3);
      double z = 0.0;
      for (double& x : p) {
        x = rng.uniform(0.01, 1.0);
        z += x;
      }
      for (double& x : p) x /= z;
      return p;
    };
    ta.rows.push_back({id, ref, draw()});
    tt.rows.push_back({id, ref, draw()});
    refs[id] = ref;
  }
  const fusion::GridSearchResult res = fusion::grid_search_lambda(ta, tt, refs);

  auto count_correct = [&](const fusion::ScoreTable& table) {
    int correct = 0;
    for (const auto& r : table.rows)
      if (table.labels.labels[static_cast<size_t>(fusion::classify(r))] == refs.at(r.utt_id))
        ++correct;
    return correct;
  };
  c.expect(res.curve.front().accuracy * 80.0 == static_cast<double>(count_correct(ta)),
           "lambda 0 integer-equals acoustic");
  c.expect(res.curve.back().accuracy * 80.0 == static_cast<double>(count_correct(tt)),
           "lambda 1 integer-equals text");
  c.expect(res.best_accuracy >= res.curve.front().accuracy &&
               res.best_accuracy >= res.curve.back().accuracy,
           "grid winner >= endpoints");
  return c;
}

// ---------------------------------------------------------------------------
// Criteria 4-7 share trained pipelines
// ---------------------------------------------------------------------------

Check criterion4(std::optional<PipelineRun>& runA) {
  Check c;

  SynthSpec spec;
  spec.n_speakers_per_dialect = 10;
  spec.utts_per_speaker = 6;
  spec.dur_min_s = 2.0;
  spec.dur_max_s = 3.0;
  spec.separability = 1.0;
  spec.seed = 11;

  ecapa::TrainHyper hyper;
  hyper.seed = 3;
  runA.emplace(run_pipeline(spec, "corpusA", 5, hyper));

  // 6 train speakers per dialect under the balanced split
  std::map<std::string, std::map<std::string, int>> spk;
  for (const auto& r : runA->train.records) spk[r.dialect][r.speaker] = 1;
  for (const auto& d : runA->train.label_set.labels)
    c.expect(static_cast<int>(spk[d].size()) == 6, "train speakers per dialect");

  const double acoustic_test = table_accuracy(runA->test_ac);
  const double text_test = table_accuracy(runA->test_tx);
  c.expect(acoustic_test >= 0.90, "acoustic test acc " + std::to_string(acoustic_test));
  c.expect(text_test >= 0.95, "text test acc " + std::to_string(text_test));

  const fusion::GridSearchResult gs =
      fusion::grid_search_lambda(runA->valid_ac, runA->valid_tx, refs_of(runA->valid));
  c.expect(gs.best_accuracy >= gs.curve.front().accuracy &&
               gs.best_accuracy >= gs.curve.back().accuracy,
           "fused >= both single systems on validation");
  return c;
}

Check criterion5() {
  Check c;

  SynthSpec spec;
  spec.n_speakers_per_dialect = 10;
  spec.utts_per_speaker = 6;
  spec.dur_min_s = 2.0;
  spec.dur_max_s = 3.0;
  spec.separability = 1.0;
  spec.seed = 21;
  spec.merge_pair_a = 0;  // Co and Mu share one acoustic archetype
  spec.merge_pair_b = 1;

  ecapa::TrainHyper hyper;
  hyper.seed = 3;
  hyper.max_epochs = 20;
  hyper.patience = 6;
  PipelineRun run = run_pipeline(spec, "corpusB", 9, hyper);

  const fusion::GridSearchResult gs =
      fusion::grid_search_lambda(run.valid_ac, run.valid_tx, refs_of(run.valid));
  const fusion::ScoreTable fused_test =
      fusion::fuse_tables(run.test_ac, run.test_tx, gs.best_lambda);

  const analysis::EvalReport rep_ac = analysis::evaluate_table(run.test_ac, "acoustic", "test");
  const analysis::EvalReport rep_fu = analysis::evaluate_table(fused_test, "fused", "test");

  // Co and Mu must gain at least 5 points of recall; Ul must not lose more
  // than 5.
  c.expect(rep_fu.recalls[0] - rep_ac.recalls[0] >= 0.05,
           "Co recall gain " + std::to_string(rep_fu.recalls[0] - rep_ac.recalls[0]));
  c.expect(rep_fu.recalls[1] - rep_ac.recalls[1] >= 0.05,
           "Mu recall gain " + std::to_string(rep_fu.recalls[1] - rep_ac.recalls[1]));
  c.expect(rep_ac.recalls[2] - rep_fu.recalls[2] <= 0.05,
           "Ul recall drop " + std::to_string(rep_ac.recalls[2] - rep_fu.recalls[2]));
  return c;
}

int epochs_to_target(const std::vector<ecapa::EpochStats>& history, double target) {
  for (const auto& e : history)
    if (e.valid_acc >= target) return e.epoch;
  return 1 << 20;
}

Check criterion6(const PipelineRun& runA) {
  Check c;

  // bit-exact preservation of non-classifier parameters
  {
    ecapa::EcapaConfig cfg;
    cfg.n_classes = 3;
    ecapa::Model source = ecapa::Model::build(cfg, LabelSet::canonical(), 23);
    ecapa::Model moved = ecapa::transfer_head(source, LabelSet::canonical(), 999);
    auto sp = source.parameters();
    auto tp = moved.parameters();
    for (size_t i = 0; i < sp.size(); ++i) {
      if (sp[i]->name.rfind("cls.", 0) == 0) continue;
      if (std::memcmp(sp[i]->t.v(), tp[i]->t.v(), sp[i]->t.size() * 8) != 0)
        c.expect(false, "non-classifier parameter " + sp[i]->name + " changed");
    }
  }

  // source task: same archetypes, disjoint speakers
  SynthSpec spec;
  spec.n_speakers_per_dialect = 10;
  spec.utts_per_speaker = 6;
  spec.dur_min_s = 2.0;
  spec.dur_max_s = 3.0;
  spec.separability = 1.0;
  spec.seed = 31;
  const std::string corpus_dir = (g_work / "corpusC").string();
  const Manifest all = synth_corpus(spec, corpus_dir);
  const SplitResult split = balanced_split(all, {0.6, 0.2, 0.2}, 7);
  ecapa::FeatureStore feats = extract_features(all, corpus_dir);

  ecapa::TrainHyper hyper;
  hyper.seed = 3;
  ecapa::EcapaConfig cfg;
  cfg.n_classes = 3;
  ecapa::Model source = ecapa::Model::build(cfg, all.label_set, hyper.seed);
  ecapa::train(source, split.train, split.valid, feats, hyper);

  // finetune on the criterion-4 corpus with the same recipe as from scratch
  ecapa::Model finetune = ecapa::transfer_head(source, runA.train.label_set, hyper.seed);
  const ecapa::TrainResult ft =
      ecapa::train(finetune, runA.train, runA.valid, runA.feats, hyper);

  const int scratch_epochs = epochs_to_target(runA.train_result.history, 0.90);
  const int transfer_epochs = epochs_to_target(ft.history, 0.90);
  c.expect(transfer_epochs <= scratch_epochs,
           "transfer " + std::to_string(transfer_epochs) + " vs scratch " +
               std::to_string(scratch_epochs) + " epochs to 0.90");
  return c;
}

Check criterion7(const PipelineRun& runA) {
  Check c;

  // PCA against a power-iteration oracle on a 10x5 input
  {
    const int n = 10, d = 5, k = 3;
    const auto x = random_vec(static_cast<size_t>(n) * d, 11);
    const analysis::PcaResult res = analysis::pca(x, n, d, k);

    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) mean[j] += x[static_cast<size_t>(i) * d + j] / n;
    std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i)
      for (int a2 = 0; a2 < d; ++a2)
        for (int b2 = 0; b2 < d; ++b2)
          cov[static_cast<size_t>(a2) * d + b2] +=
              (x[static_cast<size_t>(i) * d + a2] - mean[a2]) *
              (x[static_cast<size_t>(i) * d + b2] - mean[b2]) / (n - 1);

    std::vector<std::vector<double>> oracle;
    std::vector<double> deflated = cov;
    for (int comp = 0; comp < k; ++comp) {
      std::vector<double> v = random_vec(static_cast<size_t>(d), 100 + comp);
      for (int iter = 0; iter < 4000; ++iter) {
        std::vector<double> wv(static_cast<size_t>(d), 0.0);
        for (int a2 = 0; a2 < d; ++a2)
          for (int b2 = 0; b2 < d; ++b2) wv[a2] += deflated[static_cast<size_t>(a2) * d + b2] * v[b2];
        double norm = 0.0;
        for (double e : wv) norm += e * e;
        norm = std::sqrt(norm);
        for (int j = 0; j < d; ++j) v[j] = wv[j] / norm;
      }
      double lambda = 0.0;
      for (int a2 = 0; a2 < d; ++a2)
        for (int b2 = 0; b2 < d; ++b2)
          lambda += v[a2] * deflated[static_cast<size_t>(a2) * d + b2] * v[b2];
      oracle.push_back(v);
      for (int a2 = 0; a2 < d; ++a2)
        for (int b2 = 0; b2 < d; ++b2)
          deflated[static_cast<size_t>(a2) * d + b2] -= lambda * v[a2] * v[b2];
    }
    std::vector<double> p1(static_cast<size_t>(d) * d, 0.0), p2 = p1;
    for (int comp = 0; comp < k; ++comp)
      for (int a2 = 0; a2 < d; ++a2)
        for (int b2 = 0; b2 < d; ++b2) {
          p1[static_cast<size_t>(a2) * d + b2] +=
              res.components[static_cast<size_t>(comp) * d + a2] *
              res.components[static_cast<size_t>(comp) * d + b2];
          p2[static_cast<size_t>(a2) * d + b2] += oracle[comp][a2] * oracle[comp][b2];
        }
    double frob = 0.0;
    for (size_t i = 0; i < p1.size(); ++i) frob += (p1[i] - p2[i]) * (p1[i] - p2[i]);
    c.expect(std::sqrt(frob) <= 1e-8, "pca vs eigensolver oracle " + std::to_string(std::sqrt(frob)));
  }

  // bandwidth search entropy
  {
    const int n = 20, d = 10;
    const auto x = random_vec(static_cast<size_t>(n) * d, 13);
    const double perplexity = 5.0;
    const analysis::TsneAffinities aff = analysis::gaussian_affinities(x, n, d, perplexity);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      double h = 0.0;
      for (int j = 0; j < n; ++j) {
        const double pv = aff.p_cond[static_cast<size_t>(i) * n + j];
        if (pv > 1e-300) h -= pv * std::log(pv);
      }
      worst = std::max(worst, std::abs(h - std::log(perplexity)));
    }
    c.expect(worst <= 1e-5, "entropy error " + std::to_string(worst));
  }

  // cluster separation of the trained sigma = 1 embeddings
  {
    const auto embeddings = ecapa::extract_embeddings(runA.model, runA.test, runA.feats);
    analysis::TsneParams params;
    params.seed = 1;
    const analysis::Projection2D proj =
        analysis::project_embeddings(embeddings, runA.test, 50, params);
    const double ratio = analysis::cluster_separation_ratio(proj);
    c.expect(ratio >= 3.0, "separation ratio " + std::to_string(ratio));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 8: format goldens
// ---------------------------------------------------------------------------

Check criterion8() {
  Check c;
  const std::string fixture_dir = CANID_FIXTURE_DIR;

  const fusion::ScoreTable table =
      fusion::load_score_table(fixture_dir + "/pretrained_ecapa_test.csv");
  const analysis::EvalReport rep = analysis::evaluate_table(table, "Pretrained ECAPA-TDNN", "test");
  c.expect(rep.accuracy == 0.73, "fixture accuracy " + std::to_string(rep.accuracy));

  const std::string md_path = (g_work / "table2.md").string();
  analysis::emit_report_md(rep, md_path);
  const std::string md = read_file_text(md_path);
  c.expect(md.find("| Pretrained ECAPA-TDNN | 0.73 |") != std::string::npos,
           "Table-2 layout line");

  const fusion::ScoreTable sa =
      fusion::load_score_table(fixture_dir + "/sweep_acoustic_valid.csv");
  const fusion::ScoreTable st = fusion::load_score_table(fixture_dir + "/sweep_text_valid.csv");
  std::map<std::string, std::string> refs;
  for (const auto& r : sa.rows) refs[r.utt_id] = r.ref_label;
  const fusion::GridSearchResult gs = fusion::grid_search_lambda(sa, st, refs);
  c.expect(gs.best_lambda == 0.2, "fixture lambda* " + std::to_string(gs.best_lambda));

  const std::string curve_a = (g_work / "sweep_a.csv").string();
  const std::string curve_b = (g_work / "sweep_b.csv").string();
  fusion::save_lambda_curve(gs.curve, curve_a);
  fusion::save_lambda_curve(gs.curve, curve_b);
  c.expect(read_file_bytes(curve_a) == read_file_bytes(curve_b), "sweep CSV determinism");
  const auto reload = fusion::load_lambda_curve(curve_a);
  double best = -1.0, best_lambda = -1.0;
  for (const auto& pt : reload)
    if (pt.accuracy > best) {
      best = pt.accuracy;
      best_lambda = pt.lambda;
    }
  c.expect(best_lambda == 0.2, "sweep CSV argmax");

  const std::string md2_path = (g_work / "table2_again.md").string();
  analysis::emit_report_md(rep, md2_path);
  c.expect(read_file_bytes(md_path) == read_file_bytes(md2_path), "report determinism");
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 9: determinism of every stage
// ---------------------------------------------------------------------------

Check criterion9() {
  Check c;

  SynthSpec spec;
  spec.n_speakers_per_dialect = 4;
  spec.utts_per_speaker = 3;
  spec.dur_min_s = 1.0;
  spec.dur_max_s = 1.5;
  spec.separability = 1.0;
  spec.seed = 77;

  const std::string dir_a = (g_work / "det_a").string();
  const std::string dir_b = (g_work / "det_b").string();
  const Manifest ma = synth_corpus(spec, dir_a);
  const Manifest mb = synth_corpus(spec, dir_b);
  c.expect(read_file_bytes(dir_a + "/manifest.jsonl") == read_file_bytes(dir_b + "/manifest.jsonl"),
           "synth manifest bytes");
  bool wavs_equal = true;
  for (const auto& r : ma.records)
    if (crc32_file(dir_a + "/" + r.audio) != crc32_file(dir_b + "/" + r.audio)) wavs_equal = false;
  c.expect(wavs_equal, "synth WAV bytes");

  // features stage
  dsp::MfccConfig mfcc_cfg;
  const Waveform w = read_wav(dir_a + "/" + ma.records[5].audio);
  const std::string feat_a = (g_work / "det_a.feat").string();
  const std::string feat_b = (g_work / "det_b.feat").string();
  dsp::save_features(dsp::cmvn(dsp::mfcc(w, mfcc_cfg, ma.records[5].id)), feat_a);
  dsp::save_features(dsp::cmvn(dsp::mfcc(w, mfcc_cfg, ma.records[5].id)), feat_b);
  c.expect(read_file_bytes(feat_a) == read_file_bytes(feat_b), "feature cache bytes");

  // training stage, compared by checkpoint CRC
  const SplitResult split = balanced_split(ma, {0.5, 0.25, 0.25}, 3);
  ecapa::FeatureStore feats = extract_features(ma, dir_a);
  ecapa::TrainHyper hyper;
  hyper.max_epochs = 4;
  hyper.patience = 4;
  hyper.batch_size = 8;
  hyper.seed = 5;
  ecapa::EcapaConfig cfg;
  cfg.n_classes = 3;

  auto train_once = [&](const std::string& path) {
    ecapa::Model model = ecapa::Model::build(cfg, ma.label_set, hyper.seed);
    const ecapa::TrainResult res = ecapa::train(model, split.train, split.valid, feats, hyper);
    ecapa::TrainMeta meta;
    meta.epochs_run = static_cast<int>(res.history.size());
    meta.best_valid_acc = res.best_valid_acc;
    ecapa::save_checkpoint(model, meta, path);
    return model;
  };
  const std::string ckpt_a = (g_work / "det_a.ckpt").string();
  const std::string ckpt_b = (g_work / "det_b.ckpt").string();
  const ecapa::Model model_a = train_once(ckpt_a);
  train_once(ckpt_b);
  c.expect(crc32_file(ckpt_a) == crc32_file(ckpt_b), "checkpoint CRC");

  // scoring and fusion stages
  const fusion::ScoreTable s1 = score_acoustic(model_a, split.valid, feats);
  const std::string sc_a = (g_work / "det_a_scores.csv").string();
  const std::string sc_b = (g_work / "det_b_scores.csv").string();
  fusion::save_score_table(s1, sc_a);
  fusion::save_score_table(score_acoustic(model_a, split.valid, feats), sc_b);
  c.expect(read_file_bytes(sc_a) == read_file_bytes(sc_b), "score table bytes");

  textdid::TextModel text = textdid::train_text(split.train, {});
  const fusion::ScoreTable s2 = score_text(text, split.valid);
  const fusion::GridSearchResult g1 = fusion::grid_search_lambda(s1, s2, refs_of(split.valid));
  const fusion::GridSearchResult g2 = fusion::grid_search_lambda(s1, s2, refs_of(split.valid));
  const std::string cu_a = (g_work / "det_a_curve.csv").string();
  const std::string cu_b = (g_work / "det_b_curve.csv").string();
  fusion::save_lambda_curve(g1.curve, cu_a);
  fusion::save_lambda_curve(g2.curve, cu_b);
  c.expect(read_file_bytes(cu_a) == read_file_bytes(cu_b), "lambda curve bytes");

  // projection stage
  const auto emb = ecapa::extract_embeddings(model_a, split.valid, feats);
  analysis::TsneParams params;
  params.seed = 9;
  params.iters = 400;
  const analysis::Projection2D p1 = analysis::project_embeddings(emb, split.valid, 50, params);
  const analysis::Projection2D p2 = analysis::project_embeddings(emb, split.valid, 50, params);
  const std::string pj_a = (g_work / "det_a_proj.csv").string();
  const std::string pj_b = (g_work / "det_b_proj.csv").string();
  analysis::emit_projection_csv(p1, pj_a);
  analysis::emit_projection_csv(p2, pj_b);
  c.expect(read_file_bytes(pj_a) == read_file_bytes(pj_b), "projection bytes");
  return c;
}

}  // namespace

int main() {
  g_work = fs::temp_directory_path() / "canid_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  int failures = 0;
  std::optional<PipelineRun> runA;

  struct Entry {
    int id;
    const char* label;
    std::function<Check()> fn;
    double budget_s;  // 0 = no runtime bound
  };
  const std::vector<Entry> entries = {
      {1, "gradient suite", criterion1, 60.0},
      {2, "DSP suite", criterion2, 10.0},
      {3, "fusion identities", criterion3, 0.0},
      {4, "oracle end-to-end", [&] { return criterion4(runA); }, 600.0},
      {5, "fusion helps the confusable pair", criterion5, 0.0},
      {6, "transfer", [&] { return criterion6(*runA); }, 0.0},
      {7, "projection oracle", [&] { return criterion7(*runA); }, 0.0},
      {8, "format goldens", criterion8, 0.0},
      {9, "determinism", criterion9, 0.0},
  };

  for (const auto& e : entries) {
    const double t0 = now_s();
    Check c;
    try {
      c = e.fn();
    } catch (const std::exception& ex) {
      c.ok = false;
      c.detail = std::string("exception: ") + ex.what();
    }
    const double dt = now_s() - t0;
    if (e.budget_s > 0.0 && dt > e.budget_s) {
      c.ok = false;
      c.detail += (c.detail.empty() ? "" : "; ");
      c.detail += "runtime " + std::to_string(dt) + "s over budget";
    }
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", c.ok ? "PASS" : "FAIL", e.id, e.label,
                dt, c.detail.empty() ? "" : " - ", c.detail.c_str());
    std::fflush(stdout);
    if (!c.ok) ++failures;
  }
  return failures;
}
