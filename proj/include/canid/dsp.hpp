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

#ifndef CANID_DSP_HPP_
#define CANID_DSP_HPP_

#include <string>
#include <vector>

#include "canid/wav.hpp"

namespace canid::dsp {

struct MfccConfig {
  int n_mfcc = 60;
  int n_mels = 80;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double preemph = 0.97;
  double fmin = 20.0;
  double fmax = 0.0;  // 0 means sample_rate / 2
  // Window is Hamming; no alternative is offered.
};

struct FeatureMatrix {
  int frames = 0;
  int dims = 0;
  std::vector<double> data;  // row-major frames x dims
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  std::string source_id;

  double* row(int t) { return data.data() + static_cast<size_t>(t) * dims; }
  const double* row(int t) const { return data.data() + static_cast<size_t>(t) * dims; }
  double& at(int t, int d) { return data[static_cast<size_t>(t) * dims + d]; }
  double at(int t, int d) const { return data[static_cast<size_t>(t) * dims + d]; }
};

double hz_to_mel(double hz);    // 2595 * log10(1 + hz/700)
double mel_to_hz(double mel);
int next_pow2_at_least(int n);

// In-place radix-2 complex FFT; size must be a power of two. The inverse
// includes the 1/N scale.
void fft(std::vector<double>& re, std::vector<double>& im, bool inverse);

// Orthonormal DCT-II basis, n x n row-major (row k = basis vector k).
std::vector<double> dct2_orthonormal(int n);

// Triangular mel filters, n_mels x (n_fft/2 + 1) row-major. Throws when some
// filter would have empty support at this FFT resolution.
std::vector<double> mel_filterbank(const MfccConfig& cfg, int n_fft, int sample_rate);

// Pre-emphasis -> framing -> Hamming -> |FFT|^2 -> mel -> log(e + 1e-10) ->
// orthonormal DCT-II, first n_mfcc coefficients.
FeatureMatrix mfcc(const Waveform& w, const MfccConfig& cfg, const std::string& source_id);

// Per-utterance mean/variance normalization. Dimensions with variance below
// 1e-10 are only mean-shifted.
FeatureMatrix cmvn(const FeatureMatrix& f);

// Regression deltas with edge replication; output is [x, d, dd], 3x dims.
FeatureMatrix deltas(const FeatureMatrix& f, int width);

// Cache file: one-line JSON header (source_id, dims, frames, frame_ms,
// hop_ms), newline, then row-major little-endian float32 data.
void save_features(const FeatureMatrix& f, const std::string& path);
FeatureMatrix load_features(const std::string& path);

}  // namespace canid::dsp

#endif  // CANID_DSP_HPP_
