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

// canid: spoken dialect identification pipeline. File in, file out; every
// subcommand prints a one-line summary and writes only its declared outputs.
// Exit codes: 0 ok, 1 usage, 2 data/format error, 3 numeric failure.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "canid/analysis.hpp"
#include "canid/corpus.hpp"
#include "canid/dsp.hpp"
#include "canid/ecapa.hpp"
#include "canid/error.hpp"
#include "canid/fusion.hpp"
#include "canid/io_util.hpp"
#include "canid/textdid.hpp"
#include "canid/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Config precedence: CLI flags > JSON config file > built-in defaults.
class ConfigOverlay {
 public:
  ConfigOverlay(CLI::App* app, const std::string& config_path) : app_(app) {
    if (!config_path.empty()) {
      try {
        cfg_ = json::parse(canid::read_file_text(config_path));
      } catch (const json::parse_error& e) {
        throw canid::DataError("config file parse error: " + std::string(e.what()));
      }
    }
  }

  template <typename T>
  void fall_back(const std::string& flag, T* target) const {
    if (cfg_.is_null()) return;
    const std::string key = flag.substr(2);  // strip "--"
    if (app_->count(flag) == 0 && cfg_.contains(key)) *target = cfg_.at(key).get<T>();
  }

 private:
  CLI::App* app_;
  json cfg_;
};

int parse_threads_env() {
  const char* v = std::getenv("CANID_THREADS");
  if (v == nullptr) return 1;
  const int n = std::atoi(v);
  return n < 1 ? 1 : n;
}

canid::SplitFractions parse_fractions(const std::string& s) {
  canid::SplitFractions f;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &f.train, &f.valid, &f.test) != 3)
    throw canid::DataError("bad --fractions (want train,valid,test): " + s);
  return f;
}

std::map<std::string, std::string> refs_from_manifest(const canid::Manifest& m) {
  std::map<std::string, std::string> refs;
  for (const auto& r : m.records) refs[r.id] = r.dialect;
  return refs;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config, const std::string& out_dir, canid::SynthSpec spec,
              CLI::App* sub, const std::string& merge_pair) {
  ConfigOverlay overlay(sub, config);
  overlay.fall_back("--speakers", &spec.n_speakers_per_dialect);
  overlay.fall_back("--utts", &spec.utts_per_speaker);
  overlay.fall_back("--sigma", &spec.separability);
  overlay.fall_back("--seed", &spec.seed);

  if (!merge_pair.empty()) {
    const auto comma = merge_pair.find(',');
    if (comma == std::string::npos)
      throw canid::DataError("bad --merge-pair (want LabelA,LabelB): " + merge_pair);
    const canid::LabelSet labels = canid::LabelSet::canonical();
    spec.merge_pair_a = labels.index_of(merge_pair.substr(0, comma));
    spec.merge_pair_b = labels.index_of(merge_pair.substr(comma + 1));
    if (spec.merge_pair_a < 0 || spec.merge_pair_b < 0)
      throw canid::DataError("unknown dialect in --merge-pair: " + merge_pair);
  }

  const canid::Manifest m = canid::synth_corpus(spec, out_dir);
  std::printf("synth: wrote %zu utterances (speakers/dialect=%d, utts/speaker=%d, sigma=%.3g, "
              "seed=%llu) to %s\n",
              m.records.size(), spec.n_speakers_per_dialect, spec.utts_per_speaker,
              spec.separability, static_cast<unsigned long long>(spec.seed), out_dir.c_str());
  return 0;
}

int cmd_split(const std::string& manifest_path, const std::string& out_dir,
              const std::string& fractions, uint64_t seed) {
  const canid::Manifest m = canid::load_manifest(manifest_path);
  const canid::SplitFractions f = parse_fractions(fractions);
  const canid::SplitResult split = canid::balanced_split(m, f, seed);
  fs::create_directories(out_dir);
  canid::save_manifest(split.train, (fs::path(out_dir) / "train.jsonl").string());
  canid::save_manifest(split.valid, (fs::path(out_dir) / "valid.jsonl").string());
  canid::save_manifest(split.test, (fs::path(out_dir) / "test.jsonl").string());
  std::printf("split: %zu train / %zu valid / %zu test (fractions=%s, seed=%llu) -> %s\n",
              split.train.records.size(), split.valid.records.size(),
              split.test.records.size(), fractions.c_str(),
              static_cast<unsigned long long>(seed), out_dir.c_str());
  return 0;
}

int cmd_features(const std::string& config, CLI::App* sub, const std::string& manifest_path,
                 const std::string& out_dir, canid::dsp::MfccConfig mfcc_cfg, bool use_deltas,
                 int delta_width) {
  ConfigOverlay overlay(sub, config);
  overlay.fall_back("--n-mfcc", &mfcc_cfg.n_mfcc);
  overlay.fall_back("--n-mels", &mfcc_cfg.n_mels);

  const canid::Manifest m = canid::load_manifest(manifest_path);
  fs::create_directories(out_dir);

  const int n_threads = parse_threads_env();
  std::atomic<size_t> next{0};
  std::vector<std::string> errors(static_cast<size_t>(n_threads));
  auto worker = [&](int tid) {
    try {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= m.records.size()) break;
        const auto& r = m.records[i];
        const canid::Waveform w =
            canid::read_wav(canid::resolve_audio_path(manifest_path, r.audio));
        canid::dsp::FeatureMatrix f = canid::dsp::mfcc(w, mfcc_cfg, r.id);
        if (use_deltas) f = canid::dsp::deltas(f, delta_width);
        f = canid::dsp::cmvn(f);
        canid::dsp::save_features(f, (fs::path(out_dir) / (r.id + ".feat")).string());
      }
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(tid)] = e.what();
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (!err.empty()) throw canid::DataError(err);

  const int dims = use_deltas ? 3 * mfcc_cfg.n_mfcc : mfcc_cfg.n_mfcc;
  std::printf("features: wrote %zu caches (dims=%d, n_mels=%d, threads=%d) to %s\n",
              m.records.size(), dims, mfcc_cfg.n_mels, n_threads, out_dir.c_str());
  return 0;
}

int cmd_train_acoustic(const std::string& config, CLI::App* sub, const std::string& train_path,
                       const std::string& valid_path, const std::string& features_dir,
                       const std::string& out_path, std::string history_path,
                       canid::ecapa::TrainHyper hyper, canid::ecapa::EcapaConfig arch,
                       const std::string& init_from) {
  ConfigOverlay overlay(sub, config);
  overlay.fall_back("--lr", &hyper.lr);
  overlay.fall_back("--batch", &hyper.batch_size);
  overlay.fall_back("--epochs", &hyper.max_epochs);
  overlay.fall_back("--patience", &hyper.patience);
  overlay.fall_back("--seed", &hyper.seed);
  overlay.fall_back("--channels", &arch.channels);
  overlay.fall_back("--embed-dim", &arch.embed_dim);

  const canid::Manifest train_m = canid::load_manifest(train_path);
  const canid::Manifest valid_m = canid::load_manifest(valid_path);
  canid::ecapa::FeatureStore feats = canid::ecapa::load_feature_dir(features_dir, train_m);
  {
    canid::ecapa::FeatureStore vf = canid::ecapa::load_feature_dir(features_dir, valid_m);
    for (auto& [id, f] : vf.by_id) feats.by_id.emplace(id, std::move(f));
  }

  canid::ecapa::Model model = [&]() {
    if (!init_from.empty()) {
      const canid::ecapa::Model source = canid::ecapa::load_checkpoint(init_from);
      return canid::ecapa::transfer_head(source, train_m.label_set, hyper.seed);
    }
    canid::ecapa::EcapaConfig cfg = arch;
    cfg.in_dims = feats.get(train_m.records.front().id).dims;
    cfg.n_classes = static_cast<int>(train_m.label_set.size());
    return canid::ecapa::Model::build(cfg, train_m.label_set, hyper.seed);
  }();

  const canid::ecapa::TrainResult result =
      canid::ecapa::train(model, train_m, valid_m, feats, hyper);

  canid::ecapa::TrainMeta meta;
  meta.epochs_run = static_cast<int>(result.history.size());
  meta.best_valid_acc = result.best_valid_acc;
  canid::ecapa::save_checkpoint(model, meta, out_path);
  if (history_path.empty()) history_path = out_path + ".history.csv";
  canid::ecapa::write_history_csv(result.history, history_path);

  std::printf("train-acoustic: %d epochs, best valid acc %.4f at epoch %d (lr=%g, batch=%d, "
              "seed=%llu) -> %s\n",
              meta.epochs_run, result.best_valid_acc, result.best_epoch, hyper.lr,
              hyper.batch_size, static_cast<unsigned long long>(hyper.seed), out_path.c_str());
  return 0;
}

int cmd_train_text(const std::string& config, CLI::App* sub, const std::string& train_path,
                   const std::string& out_path, canid::textdid::TextTrainHyper hyper) {
  ConfigOverlay overlay(sub, config);
  overlay.fall_back("--lr", &hyper.lr);
  overlay.fall_back("--epochs", &hyper.epochs);
  overlay.fall_back("--l2", &hyper.l2);

  const canid::Manifest train_m = canid::load_manifest(train_path);
  std::vector<double> history;
  const canid::textdid::TextModel model = canid::textdid::train_text(train_m, hyper, &history);
  canid::textdid::save_text_model(model, out_path);

  int correct = 0;
  for (const auto& r : train_m.records) {
    const auto probs = model.predict(r.text.value_or(""));
    int arg = 0;
    for (size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[static_cast<size_t>(arg)]) arg = static_cast<int>(i);
    if (model.labels.labels[static_cast<size_t>(arg)] == r.dialect) ++correct;
  }
  std::printf("train-text: vocab %zu n-grams, final loss %.6g, train acc %.4f (l2=%g) -> %s\n",
              model.vocab.size(), history.empty() ? 0.0 : history.back(),
              static_cast<double>(correct) / static_cast<double>(train_m.records.size()),
              hyper.l2, out_path.c_str());
  return 0;
}

int cmd_score(const std::string& manifest_path, const std::string& checkpoint,
              const std::string& text_model_path, const std::string& features_dir,
              const std::string& out_path) {
  if (checkpoint.empty() == text_model_path.empty())
    throw canid::DataError("score: pass exactly one of --checkpoint or --text-model");
  const canid::Manifest m = canid::load_manifest(manifest_path);

  canid::fusion::ScoreTable table;
  std::string kind;
  if (!checkpoint.empty()) {
    if (features_dir.empty())
      throw canid::DataError("score: --features required with --checkpoint");
    kind = "acoustic";
    const canid::ecapa::Model model = canid::ecapa::load_checkpoint(checkpoint);
    const canid::ecapa::FeatureStore feats = canid::ecapa::load_feature_dir(features_dir, m);
    table.labels = model.labels();
    for (const auto& r : m.records) {
      if (model.labels().index_of(r.dialect) < 0)
        throw canid::DataError("score: dialect '" + r.dialect + "' not in model label set");
      canid::fusion::ScoreRow row;
      row.utt_id = r.id;
      row.ref_label = r.dialect;
      row.probs = model.forward(feats.get(r.id)).probs;
      table.rows.push_back(std::move(row));
    }
  } else {
    kind = "text";
    const canid::textdid::TextModel model = canid::textdid::load_text_model(text_model_path);
    table.labels = model.labels;
    for (const auto& r : m.records) {
      canid::fusion::ScoreRow row;
      row.utt_id = r.id;
      row.ref_label = r.dialect;
      row.probs = model.predict(r.text.value_or(""));
      table.rows.push_back(std::move(row));
    }
  }
  canid::fusion::save_score_table(table, out_path);
  std::printf("score: %s model over %zu utterances -> %s\n", kind.c_str(), table.rows.size(),
              out_path.c_str());
  return 0;
}

int cmd_fuse(const std::string& acoustic_path, const std::string& text_path,
             const std::string& labels_path, const std::string& curve_path,
             const std::string& out_path, double lambda, const std::string& space) {
  if (space != "prob" && space != "logit")
    throw canid::DataError("fuse: --space must be 'prob' or 'logit'");
  const bool logit_space = space == "logit";
  const canid::fusion::ScoreTable acoustic = canid::fusion::load_score_table(acoustic_path);
  const canid::fusion::ScoreTable text = canid::fusion::load_score_table(text_path);

  double chosen = lambda;
  if (lambda < 0.0) {  // grid search
    std::map<std::string, std::string> refs;
    if (!labels_path.empty()) {
      refs = refs_from_manifest(canid::load_manifest(labels_path));
    } else {
      for (const auto& r : acoustic.rows) refs[r.utt_id] = r.ref_label;
    }
    const canid::fusion::GridSearchResult res =
        canid::fusion::grid_search_lambda(acoustic, text, refs, logit_space);
    chosen = res.best_lambda;
    if (!curve_path.empty()) canid::fusion::save_lambda_curve(res.curve, curve_path);
    std::printf("fuse: lambda*=%.1f (valid acc %.4f, space=%s)%s%s\n", res.best_lambda,
                res.best_accuracy, space.c_str(), curve_path.empty() ? "" : ", curve -> ",
                curve_path.c_str());
  } else {
    if (!(lambda >= 0.0 && lambda <= 1.0))
      throw canid::DataError("fuse: --lambda must be in [0, 1]");
    std::printf("fuse: applying fixed lambda=%.2f (space=%s)\n", chosen, space.c_str());
  }

  if (!out_path.empty()) {
    const canid::fusion::ScoreTable fused =
        canid::fusion::fuse_tables(acoustic, text, chosen, logit_space);
    canid::fusion::save_score_table(fused, out_path);
    std::printf("fuse: wrote fused table (lambda=%.2f) -> %s\n", chosen, out_path.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& scores_path, const std::string& system,
             const std::string& split, const std::string& out_json, const std::string& out_md,
             const std::string& out_csv) {
  const canid::fusion::ScoreTable table = canid::fusion::load_score_table(scores_path);
  const canid::analysis::EvalReport report =
      canid::analysis::evaluate_table(table, system, split);
  if (!out_json.empty()) canid::analysis::emit_report_json(report, out_json);
  if (!out_md.empty()) canid::analysis::emit_report_md(report, out_md);
  if (!out_csv.empty()) canid::analysis::emit_confusion_csv(report, out_csv);
  std::printf("eval: %s/%s accuracy %.6g over %lld utterances\n", system.c_str(), split.c_str(),
              report.accuracy, static_cast<long long>(report.confusion.total()));
  return 0;
}

int cmd_project(const std::string& checkpoint, const std::string& manifest_path,
                const std::string& features_dir, const std::string& out_csv,
                const std::string& out_svg, int pca_k, canid::analysis::TsneParams params) {
  const canid::Manifest m = canid::load_manifest(manifest_path);
  const canid::ecapa::Model model = canid::ecapa::load_checkpoint(checkpoint);
  const canid::ecapa::FeatureStore feats = canid::ecapa::load_feature_dir(features_dir, m);
  const auto embeddings = canid::ecapa::extract_embeddings(model, m, feats);
  const canid::analysis::Projection2D proj =
      canid::analysis::project_embeddings(embeddings, m, pca_k, params);
  if (!out_csv.empty()) canid::analysis::emit_projection_csv(proj, out_csv);
  if (!out_svg.empty()) canid::analysis::emit_projection_svg(proj, m.label_set, out_svg);
  std::printf("project: %zu utterances, separation ratio %.3g (pca_k=%d, perplexity=%g, "
              "seed=%llu)\n",
              proj.rows.size(), canid::analysis::cluster_separation_ratio(proj), pca_k,
              params.perplexity, static_cast<unsigned long long>(params.seed));
  return 0;
}

int cmd_report(const std::string& report_path, const std::string& out_md,
               const std::string& out_csv, const std::string& curve_path,
               const std::string& curve_svg, const std::string& projection_path,
               const std::string& projection_svg, const std::string& baseline_path,
               const std::string& fused_path, const std::string& delta_md) {
  int artifacts = 0;
  if (!report_path.empty()) {
    const canid::analysis::EvalReport report = canid::analysis::load_report_json(report_path);
    if (!out_md.empty()) {
      canid::analysis::emit_report_md(report, out_md);
      ++artifacts;
    }
    if (!out_csv.empty()) {
      canid::analysis::emit_confusion_csv(report, out_csv);
      ++artifacts;
    }
  }
  if (!curve_path.empty() && !curve_svg.empty()) {
    canid::analysis::emit_curve_svg(canid::fusion::load_lambda_curve(curve_path), curve_svg);
    ++artifacts;
  }
  if (!projection_path.empty() && !projection_svg.empty()) {
    const canid::analysis::Projection2D proj =
        canid::analysis::load_projection_csv(projection_path);
    canid::analysis::emit_projection_svg(proj, canid::LabelSet::canonical(), projection_svg);
    ++artifacts;
  }
  if (!baseline_path.empty() && !fused_path.empty() && !delta_md.empty()) {
    canid::analysis::emit_delta_md(canid::analysis::load_report_json(baseline_path),
                                   canid::analysis::load_report_json(fused_path), delta_md);
    ++artifacts;
  }
  if (artifacts == 0)
    throw canid::DataError("report: nothing to do (pass --report/--curve/--projection/--delta)");
  std::printf("report: wrote %d artifact%s\n", artifacts, artifacts == 1 ? "" : "s");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"canid: spoken dialect identification toolkit"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic three-dialect corpus");
  std::string synth_config, synth_out, synth_merge;
  canid::SynthSpec spec;
  synth->add_option("--config", synth_config, "JSON config file");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--speakers", spec.n_speakers_per_dialect, "speakers per dialect");
  synth->add_option("--utts", spec.utts_per_speaker, "utterances per speaker");
  synth->add_option("--sr", spec.sample_rate, "sample rate");
  synth->add_option("--dur-min", spec.dur_min_s, "min duration seconds");
  synth->add_option("--dur-max", spec.dur_max_s, "max duration seconds");
  synth->add_option("--sigma", spec.separability, "dialect separability in (0,1]");
  synth->add_option("--seed", spec.seed, "random seed");
  synth->add_option("--merge-pair", synth_merge, "two dialects sharing one acoustic archetype");

  auto* split = app.add_subcommand("split", "speaker-disjoint balanced split");
  std::string split_manifest, split_out, split_fractions = "0.8,0.1,0.1";
  uint64_t split_seed = 0;
  split->add_option("--manifest", split_manifest, "input manifest")->required();
  split->add_option("--out-dir", split_out, "output directory")->required();
  split->add_option("--fractions", split_fractions, "train,valid,test fractions");
  split->add_option("--seed", split_seed, "random seed");

  auto* features = app.add_subcommand("features", "extract MFCC+CMVN features to a cache dir");
  std::string feat_config, feat_manifest, feat_out;
  canid::dsp::MfccConfig mfcc_cfg;
  bool feat_deltas = false;
  int feat_delta_width = 2;
  features->add_option("--config", feat_config, "JSON config file");
  features->add_option("--manifest", feat_manifest, "input manifest")->required();
  features->add_option("--out", feat_out, "cache directory")->required();
  features->add_option("--n-mfcc", mfcc_cfg.n_mfcc, "number of cepstra");
  features->add_option("--n-mels", mfcc_cfg.n_mels, "number of mel filters");
  features->add_option("--frame-ms", mfcc_cfg.frame_ms, "frame length ms");
  features->add_option("--hop-ms", mfcc_cfg.hop_ms, "hop length ms");
  features->add_option("--preemph", mfcc_cfg.preemph, "pre-emphasis coefficient");
  features->add_option("--fmin", mfcc_cfg.fmin, "mel range low Hz");
  features->add_option("--fmax", mfcc_cfg.fmax, "mel range high Hz (0 = Nyquist)");
  features->add_flag("--deltas", feat_deltas, "append delta and delta-delta features");
  features->add_option("--delta-width", feat_delta_width, "delta regression width");

  auto* ta = app.add_subcommand("train-acoustic", "train the ECAPA-lite dialect classifier");
  std::string ta_config, ta_train, ta_valid, ta_features, ta_out, ta_history, ta_init;
  canid::ecapa::TrainHyper ta_hyper;
  canid::ecapa::EcapaConfig ta_arch;
  ta->add_option("--config", ta_config, "JSON config file");
  ta->add_option("--train", ta_train, "train manifest")->required();
  ta->add_option("--valid", ta_valid, "validation manifest")->required();
  ta->add_option("--features", ta_features, "feature cache directory")->required();
  ta->add_option("--out", ta_out, "output checkpoint path")->required();
  ta->add_option("--history", ta_history, "training history CSV (default <out>.history.csv)");
  ta->add_option("--lr", ta_hyper.lr, "Adam learning rate");
  ta->add_option("--batch", ta_hyper.batch_size, "batch size");
  ta->add_option("--epochs", ta_hyper.max_epochs, "max epochs");
  ta->add_option("--patience", ta_hyper.patience, "early-stop patience");
  ta->add_option("--seed", ta_hyper.seed, "random seed");
  ta->add_option("--channels", ta_arch.channels, "TDNN channels");
  ta->add_option("--embed-dim", ta_arch.embed_dim, "embedding dimension");
  ta->add_option("--loss", ta_arch.loss, "loss: xent or aam");
  ta->add_option("--aam-margin", ta_arch.aam_margin, "AAM angular margin");
  ta->add_option("--aam-scale", ta_arch.aam_scale, "AAM logit scale");
  ta->add_option("--init-from", ta_init, "source checkpoint for transfer");

  auto* tt = app.add_subcommand("train-text", "train the character n-gram text classifier");
  std::string tt_config, tt_train, tt_out;
  canid::textdid::TextTrainHyper tt_hyper;
  tt->add_option("--config", tt_config, "JSON config file");
  tt->add_option("--train", tt_train, "train manifest")->required();
  tt->add_option("--out", tt_out, "output model path")->required();
  tt->add_option("--lr", tt_hyper.lr, "initial GD step size");
  tt->add_option("--epochs", tt_hyper.epochs, "GD steps");
  tt->add_option("--l2", tt_hyper.l2, "L2 penalty");
  tt->add_option("--seed", tt_hyper.seed, "random seed");
  tt->add_option("--n-min", tt_hyper.n_min, "min n-gram order");
  tt->add_option("--n-max", tt_hyper.n_max, "max n-gram order");
  tt->add_option("--min-count", tt_hyper.min_count, "min n-gram count");

  auto* score = app.add_subcommand("score", "emit a score table CSV for a model over a manifest");
  std::string sc_manifest, sc_checkpoint, sc_text_model, sc_features, sc_out;
  score->add_option("--manifest", sc_manifest, "manifest to score")->required();
  score->add_option("--checkpoint", sc_checkpoint, "acoustic checkpoint");
  score->add_option("--text-model", sc_text_model, "text model");
  score->add_option("--features", sc_features, "feature cache directory (acoustic)");
  score->add_option("--out", sc_out, "output CSV")->required();

  auto* fuse = app.add_subcommand("fuse", "late fusion with lambda grid search");
  std::string fu_acoustic, fu_text, fu_labels, fu_curve = "lambda_curve.csv", fu_out;
  std::string fu_space = "prob";
  double fu_lambda = -1.0;
  fuse->add_option("--acoustic", fu_acoustic, "acoustic score CSV")->required();
  fuse->add_option("--text", fu_text, "text score CSV")->required();
  fuse->add_option("--labels", fu_labels, "reference manifest (defaults to CSV labels)");
  fuse->add_option("--curve", fu_curve, "lambda sweep CSV output");
  fuse->add_option("--out", fu_out, "fused score CSV output");
  fuse->add_option("--lambda", fu_lambda, "fixed lambda (skips grid search)");
  fuse->add_option("--space", fu_space, "fusion space: prob or logit");

  auto* eval = app.add_subcommand("eval", "evaluate a score table");
  std::string ev_scores, ev_system = "system", ev_split = "split", ev_json, ev_md, ev_csv;
  eval->add_option("--scores", ev_scores, "score CSV")->required();
  eval->add_option("--system", ev_system, "system name");
  eval->add_option("--split", ev_split, "split name");
  eval->add_option("--out", ev_json, "report JSON output");
  eval->add_option("--md", ev_md, "report markdown output");
  eval->add_option("--csv", ev_csv, "confusion CSV output");

  auto* project = app.add_subcommand("project", "PCA + t-SNE embedding projection");
  std::string pj_checkpoint, pj_manifest, pj_features, pj_csv, pj_svg;
  int pj_pca_k = 50;
  canid::analysis::TsneParams pj_params;
  project->add_option("--checkpoint", pj_checkpoint, "acoustic checkpoint")->required();
  project->add_option("--manifest", pj_manifest, "manifest")->required();
  project->add_option("--features", pj_features, "feature cache directory")->required();
  project->add_option("--out", pj_csv, "projection CSV output");
  project->add_option("--svg", pj_svg, "projection SVG output");
  project->add_option("--pca-k", pj_pca_k, "PCA dimensions before t-SNE");
  project->add_option("--perplexity", pj_params.perplexity, "t-SNE perplexity");
  project->add_option("--iters", pj_params.iters, "t-SNE iterations");
  project->add_option("--seed", pj_params.seed, "t-SNE seed");

  auto* report = app.add_subcommand("report", "render stored artifacts");
  std::string rp_report, rp_md, rp_csv, rp_curve, rp_curve_svg, rp_proj, rp_proj_svg;
  std::string rp_baseline, rp_fused, rp_delta_md;
  report->add_option("--report", rp_report, "report JSON input");
  report->add_option("--md", rp_md, "markdown output");
  report->add_option("--csv", rp_csv, "confusion CSV output");
  report->add_option("--curve", rp_curve, "lambda curve CSV input");
  report->add_option("--curve-svg", rp_curve_svg, "lambda curve SVG output");
  report->add_option("--projection", rp_proj, "projection CSV input");
  report->add_option("--projection-svg", rp_proj_svg, "projection SVG output");
  report->add_option("--baseline", rp_baseline, "baseline report JSON");
  report->add_option("--fused", rp_fused, "fused report JSON");
  report->add_option("--delta-md", rp_delta_md, "delta markdown output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_config, synth_out, spec, synth, synth_merge);
    if (split->parsed())
      return cmd_split(split_manifest, split_out, split_fractions, split_seed);
    if (features->parsed())
      return cmd_features(feat_config, features, feat_manifest, feat_out, mfcc_cfg, feat_deltas,
                          feat_delta_width);
    if (ta->parsed())
      return cmd_train_acoustic(ta_config, ta, ta_train, ta_valid, ta_features, ta_out,
                                ta_history, ta_hyper, ta_arch, ta_init);
    if (tt->parsed()) return cmd_train_text(tt_config, tt, tt_train, tt_out, tt_hyper);
    if (score->parsed())
      return cmd_score(sc_manifest, sc_checkpoint, sc_text_model, sc_features, sc_out);
    if (fuse->parsed())
      return cmd_fuse(fu_acoustic, fu_text, fu_labels, fu_curve, fu_out, fu_lambda, fu_space);
    if (eval->parsed()) return cmd_eval(ev_scores, ev_system, ev_split, ev_json, ev_md, ev_csv);
    if (project->parsed())
      return cmd_project(pj_checkpoint, pj_manifest, pj_features, pj_csv, pj_svg, pj_pca_k,
                         pj_params);
    if (report->parsed())
      return cmd_report(rp_report, rp_md, rp_csv, rp_curve, rp_curve_svg, rp_proj, rp_proj_svg,
                        rp_baseline, rp_fused, rp_delta_md);
  } catch (const canid::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const canid::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
