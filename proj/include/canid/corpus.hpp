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

#ifndef CANID_CORPUS_HPP_
#define CANID_CORPUS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace canid {

enum class Gender { kF, kM, kUnknown };

std::string gender_name(Gender g);
Gender gender_from_name(const std::string& s);

// Closed, ordered dialect label set. Canonical order is alphabetical:
// Co (Connacht), Mu (Munster), Ul (Ulster).
struct LabelSet {
  std::vector<std::string> labels;

  static LabelSet canonical() { return LabelSet{{"Co", "Mu", "Ul"}}; }
  int index_of(const std::string& label) const;
  size_t size() const { return labels.size(); }
  bool operator==(const LabelSet& o) const { return labels == o.labels; }
};

struct UtteranceRecord {
  std::string id;
  std::string audio;  // path, relative paths resolve against the manifest dir
  std::string dialect;
  std::string speaker;
  Gender gender = Gender::kUnknown;
  std::optional<std::string> text;
  std::optional<double> duration_s;
};

struct Manifest {
  LabelSet label_set;
  std::vector<UtteranceRecord> records;

  const UtteranceRecord* find(const std::string& id) const;
};

// JSON-lines, one record per line, optional first line {"label_set": [...]}.
// Without a header the label set is inferred as the sorted unique dialects.
Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

// Resolve a record's audio path against the directory of its manifest.
std::string resolve_audio_path(const std::string& manifest_path,
                               const std::string& audio);

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct SplitResult {
  Manifest train;
  Manifest valid;
  Manifest test;
};

// Speaker-disjoint split, balanced per (dialect, gender) cell by deterministic
// greedy largest-remainder assignment of speakers.
SplitResult balanced_split(const Manifest& m, SplitFractions fractions, uint64_t seed);

struct SynthSpec {
  int n_speakers_per_dialect = 4;  // >= 2, alternating F/M
  int utts_per_speaker = 5;        // >= 1
  int sample_rate = 16000;
  double dur_min_s = 1.0;
  double dur_max_s = 2.0;
  double separability = 1.0;  // sigma in (0, 1]
  uint64_t seed = 0;
  // When both >= 0, the two dialect indices share one acoustic archetype
  // (their text chains stay distinct). Used for confusable-pair corpora.
  int merge_pair_a = -1;
  int merge_pair_b = -1;
};

// Two "formant" resonance center frequencies per dialect. At sigma = 1 the
// per-dialect centers are pairwise >= 400 Hz apart; as sigma -> 0 they merge.
//   f1(d) = 500 + 450 * sigma * d,  f2(d) = 1800 + 450 * sigma * d
struct DialectArchetype {
  double f1 = 0;
  double f2 = 0;
};

DialectArchetype dialect_archetype(int dialect_index, double sigma);

// Writes out_dir/wav/<id>.wav per utterance plus out_dir/manifest.jsonl and
// returns the manifest. Byte-deterministic given the spec.
Manifest synth_corpus(const SynthSpec& spec, const std::string& out_dir);

}  // namespace canid

#endif  // CANID_CORPUS_HPP_
