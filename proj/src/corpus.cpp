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

#include "canid/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "canid/error.hpp"
#include "canid/io_util.hpp"
#include "canid/rng.hpp"
#include "canid/wav.hpp"

namespace canid {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string gender_name(Gender g) {
  switch (g) {
    case Gender::kF: return "F";
    case Gender::kM: return "M";
    default: return "unknown";
  }
}

Gender gender_from_name(const std::string& s) {
  if (s == "F") return Gender::kF;
  if (s == "M") return Gender::kM;
  if (s == "unknown" || s.empty()) return Gender::kUnknown;
  throw DataError("unknown gender value: " + s);
}

int LabelSet::index_of(const std::string& label) const {
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<int>(i);
  return -1;
}

const UtteranceRecord* Manifest::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

namespace {

UtteranceRecord parse_record(const ordered_json& j, size_t line_no) {
  auto require_string = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string())
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": missing or non-string field '" + key + "'");
    return j[key].get<std::string>();
  };
  UtteranceRecord r;
  r.id = require_string("id");
  r.audio = require_string("audio");
  r.dialect = require_string("dialect");
  r.speaker = require_string("speaker");
  if (j.contains("gender") && !j["gender"].is_null())
    r.gender = gender_from_name(j["gender"].get<std::string>());
  if (j.contains("text") && !j["text"].is_null())
    r.text = j["text"].get<std::string>();
  if (j.contains("duration_s") && !j["duration_s"].is_null()) {
    const double d = j["duration_s"].get<double>();
    if (!(d > 0.0))
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": duration_s must be > 0");
    r.duration_s = d;
  }
  return r;
}

}  // namespace

Manifest load_manifest(const std::string& path) {
  const std::string text = read_file_text(path);
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;

  Manifest m;
  bool have_header = false;
  bool any_line = false;
  std::set<std::string> seen_ids;
  std::set<std::string> dialects_seen;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    any_line = true;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("manifest parse error at line " + std::to_string(line_no) +
                      " of " + path + ": " + e.what());
    }
    if (line_no == 1 && j.is_object() && j.contains("label_set")) {
      for (const auto& l : j["label_set"]) m.label_set.labels.push_back(l.get<std::string>());
      have_header = true;
      continue;
    }
    UtteranceRecord r = parse_record(j, line_no);
    if (!seen_ids.insert(r.id).second)
      throw DataError("duplicate utterance id '" + r.id + "' at line " + std::to_string(line_no));
    if (have_header && m.label_set.index_of(r.dialect) < 0)
      throw DataError("unknown dialect label '" + r.dialect + "' at line " + std::to_string(line_no));
    dialects_seen.insert(r.dialect);
    m.records.push_back(std::move(r));
  }
  if (!any_line) throw DataError("empty manifest: " + path);
  if (!have_header) {
    m.label_set.labels.assign(dialects_seen.begin(), dialects_seen.end());  // sorted
  }
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::string out;
  {
    ordered_json header;
    header["label_set"] = m.label_set.labels;
    out += header.dump();
    out += '\n';
  }
  for (const auto& r : m.records) {
    ordered_json j;
    j["id"] = r.id;
    j["audio"] = r.audio;
    j["dialect"] = r.dialect;
    j["speaker"] = r.speaker;
    j["gender"] = gender_name(r.gender);
    if (r.text.has_value()) j["text"] = *r.text; else j["text"] = nullptr;
    if (r.duration_s.has_value()) j["duration_s"] = *r.duration_s; else j["duration_s"] = nullptr;
    out += j.dump();
    out += '\n';
  }
  write_file_text(path, out);
}

std::string resolve_audio_path(const std::string& manifest_path, const std::string& audio) {
  fs::path p(audio);
  if (p.is_absolute()) return audio;
  return (fs::path(manifest_path).parent_path() / p).string();
}

// ---------------------------------------------------------------------------
// balanced_split
// ---------------------------------------------------------------------------

SplitResult balanced_split(const Manifest& m, SplitFractions f, uint64_t seed) {
  const double fr[3] = {f.train, f.valid, f.test};
  double total = 0.0;
  for (double x : fr) {
    if (x < 0.0) throw DataError("split fractions must be non-negative");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("split fractions must sum to 1");

  // Speaker -> (dialect, gender); a speaker must be internally consistent.
  struct SpeakerInfo {
    std::string dialect;
    Gender gender;
  };
  std::map<std::string, SpeakerInfo> speakers;
  std::set<Gender> genders_present;
  for (const auto& r : m.records) {
    genders_present.insert(r.gender);
    auto it = speakers.find(r.speaker);
    if (it == speakers.end()) {
      speakers.emplace(r.speaker, SpeakerInfo{r.dialect, r.gender});
    } else if (it->second.dialect != r.dialect || it->second.gender != r.gender) {
      throw DataError("speaker '" + r.speaker + "' appears with conflicting dialect or gender");
    }
  }

  // (dialect, gender) cells; every cell must be populated for balance.
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> cells;
  for (const auto& [spk, info] : speakers)
    cells[{info.dialect, gender_name(info.gender)}].push_back(spk);
  for (const auto& dialect : m.label_set.labels) {
    for (Gender g : genders_present) {
      auto key = std::make_pair(dialect, gender_name(g));
      if (cells.find(key) == cells.end())
        throw DataError("infeasible balance: no speakers in cell (" + dialect + ", " +
                        gender_name(g) + ")");
    }
  }

  // Largest-remainder assignment of each cell's speakers across the splits.
  std::map<std::string, int> speaker_split;
  for (auto& [key, spks] : cells) {
    std::sort(spks.begin(), spks.end());
    Rng rng(derive_seed(seed, "split/" + key.first + "/" + key.second));
    rng.shuffle(spks);

    const size_t n = spks.size();
    size_t counts[3];
    double rema[3];
    size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double target = fr[s] * static_cast<double>(n);
      counts[s] = static_cast<size_t>(std::floor(target + 1e-12));
      rema[s] = target - static_cast<double>(counts[s]);
      assigned += counts[s];
    }
    while (assigned < n) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (rema[s] > rema[best] + 1e-12) best = s;
      ++counts[best];
      rema[best] = -1.0;
      ++assigned;
    }
    size_t idx = 0;
    for (int s = 0; s < 3; ++s)
      for (size_t k = 0; k < counts[s]; ++k) speaker_split[spks[idx++]] = s;
  }

  SplitResult out;
  out.train.label_set = out.valid.label_set = out.test.label_set = m.label_set;
  for (const auto& r : m.records) {
    switch (speaker_split.at(r.speaker)) {
      case 0: out.train.records.push_back(r); break;
      case 1: out.valid.records.push_back(r); break;
      default: out.test.records.push_back(r); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// synth_corpus
// ---------------------------------------------------------------------------

DialectArchetype dialectArchetypeAt(double position) {
  return {500.0 + 450.0 * position, 1800.0 + 450.0 * position};
}

DialectArchetype dialect_archetype(int dialect_index, double sigma) {
  return dialectArchetypeAt(sigma * static_cast<double>(dialect_index));
}

namespace {

// Two-pole resonator: the discrete damped sinusoid. r = exp(-pi*bw/sr).
struct Resonator {
  double a1, a2, y1 = 0.0, y2 = 0.0;
  Resonator(double freq_hz, double bw_hz, double sample_rate) {
    const double r = std::exp(-M_PI * bw_hz / sample_rate);
    a1 = 2.0 * r * std::cos(2.0 * M_PI * freq_hz / sample_rate);
    a2 = -r * r;
  }
  double step(double x) {
    const double y = x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// Small fixed alphabet; each dialect has its own bigram transition habits.
constexpr char kAlphabet[] = "abcdefgh";
constexpr int kAlphaN = 8;

char favored_start(int dialect, Rng& rng) {
  const int base = (2 * dialect) % kAlphaN;
  return kAlphabet[(base + static_cast<int>(rng.below(3))) % kAlphaN];
}

char next_char(int dialect, char prev, Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.60) {
    // Dialect-specific rotation is the dominant bigram signal.
    const int shift = 1 + 2 * dialect;
    int i = 0;
    for (int k = 0; k < kAlphaN; ++k)
      if (kAlphabet[k] == prev) i = k;
    return kAlphabet[(i + shift) % kAlphaN];
  }
  if (u < 0.85) return favored_start(dialect, rng);
  return kAlphabet[rng.below(kAlphaN)];
}

std::string synth_text(int dialect, Rng& rng) {
  std::string out;
  const int n_words = 6 + static_cast<int>(rng.below(7));
  for (int w = 0; w < n_words; ++w) {
    if (w > 0) out += ' ';
    const int len = 2 + static_cast<int>(rng.below(5));
    char c = favored_start(dialect, rng);
    out += c;
    for (int k = 1; k < len; ++k) {
      c = next_char(dialect, c, rng);
      out += c;
    }
  }
  return out;
}

// Syllable train through two formant resonators. Each syllable alternates
// between the archetype vowel and a contrast vowel whose offset depends on
// the archetype position, so utterances stay dialect-informative after
// per-utterance mean normalization and all dialects collapse as sigma -> 0.
std::vector<double> synth_audio(double f1, double f2, double position, double f0,
                                int n_samples, int sample_rate, Rng& rng) {
  const double mb1 = 1.12 + 0.10 * (position / 2.0);
  const double mb2 = 0.86 - 0.06 * (position / 2.0);
  const int period = std::max(2, static_cast<int>(std::lround(sample_rate / f0)));

  std::vector<double> x(n_samples, 0.0);
  int n = 0;
  bool vowel_b = rng.below(2) == 1;
  int phase = 0;
  while (n < n_samples) {
    const int voiced = static_cast<int>(rng.uniform(0.12, 0.22) * sample_rate);
    const int gap = static_cast<int>(rng.uniform(0.03, 0.08) * sample_rate);
    const double amp = rng.uniform(0.7, 1.0);
    const double g1 = vowel_b ? f1 * mb1 : f1;
    const double g2 = vowel_b ? f2 * mb2 : f2;
    Resonator r1(g1, 120.0, sample_rate);
    Resonator r2(g2, 160.0, sample_rate);
    for (int k = 0; k < voiced && n < n_samples; ++k, ++n, ++phase) {
      const double pulse = (phase % period == 0) ? 1.0 : 0.0;
      const double noise = 0.02 * rng.gaussian();
      x[n] = amp * (1.0 * r1.step(pulse + noise) + 0.35 * r2.step(pulse + noise));
    }
    for (int k = 0; k < gap && n < n_samples; ++k, ++n) x[n] = 0.005 * rng.gaussian();
    vowel_b = !vowel_b;
  }

  double peak = 1e-12;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = 0.85 / peak;
  for (double& v : x) v *= gain;
  return x;
}

}  // namespace

Manifest synth_corpus(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.n_speakers_per_dialect < 2) throw DataError("synth: need >= 2 speakers per dialect");
  if (spec.utts_per_speaker < 1) throw DataError("synth: need >= 1 utterance per speaker");
  if (!(spec.separability > 0.0 && spec.separability <= 1.0))
    throw DataError("synth: separability must be in (0, 1]");
  if (spec.dur_min_s > spec.dur_max_s) throw DataError("synth: dur_min_s > dur_max_s");

  const LabelSet labels = LabelSet::canonical();
  fs::create_directories(fs::path(out_dir) / "wav");

  Manifest m;
  m.label_set = labels;

  for (int d = 0; d < static_cast<int>(labels.size()); ++d) {
    // Archetype position; a merged pair shares the first member's position.
    int pos_index = d;
    if (spec.merge_pair_a >= 0 && d == spec.merge_pair_b) pos_index = spec.merge_pair_a;
    const double position = spec.separability * static_cast<double>(pos_index);
    const DialectArchetype arch = dialect_archetype(pos_index, spec.separability);

    for (int s = 0; s < spec.n_speakers_per_dialect; ++s) {
      const Gender gender = (s % 2 == 0) ? Gender::kF : Gender::kM;
      char spk_name[64];
      std::snprintf(spk_name, sizeof(spk_name), "%s_s%02d", labels.labels[d].c_str(), s);

      Rng spk_rng(derive_seed(spec.seed, std::string("speaker/") + spk_name));
      const double formant_jitter = spk_rng.uniform(0.97, 1.03);
      const double f0 = (gender == Gender::kF) ? spk_rng.uniform(170.0, 230.0)
                                               : spk_rng.uniform(95.0, 140.0);

      for (int u = 0; u < spec.utts_per_speaker; ++u) {
        char utt_id[96];
        std::snprintf(utt_id, sizeof(utt_id), "%s_u%02d", spk_name, u);
        Rng utt_rng(derive_seed(spec.seed, std::string("utt/") + utt_id));

        const double dur = utt_rng.uniform(spec.dur_min_s, spec.dur_max_s);
        const int n_samples = static_cast<int>(std::lround(dur * spec.sample_rate));
        const double f0_utt = f0 * utt_rng.uniform(0.95, 1.05);

        Waveform w;
        w.sample_rate = spec.sample_rate;
        w.samples = synth_audio(arch.f1 * formant_jitter, arch.f2 * formant_jitter, position,
                                f0_utt, n_samples, spec.sample_rate, utt_rng);

        const std::string rel_audio = std::string("wav/") + utt_id + ".wav";
        write_wav((fs::path(out_dir) / rel_audio).string(), w);

        UtteranceRecord r;
        r.id = utt_id;
        r.audio = rel_audio;
        r.dialect = labels.labels[d];
        r.speaker = spk_name;
        r.gender = gender;
        r.text = synth_text(d, utt_rng);
        r.duration_s = static_cast<double>(n_samples) / spec.sample_rate;
        m.records.push_back(std::move(r));
      }
    }
  }

  save_manifest(m, (fs::path(out_dir) / "manifest.jsonl").string());
  return m;
}

}  // namespace canid
