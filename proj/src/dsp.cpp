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

#include "canid/dsp.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

#include "canid/error.hpp"
#include "canid/io_util.hpp"
#include "canid/kern.hpp"

namespace canid::dsp {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

int next_pow2_at_least(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::vector<double>& re, std::vector<double>& im, bool inverse) {
  const size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw DataError("fft: size must be a power of two");

  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }

  if (inverse) {
    const double s = 1.0 / static_cast<double>(n);
    kern::scale(s, re.data(), n);
    kern::scale(s, im.data(), n);
  }
}

std::vector<double> dct2_orthonormal(int n) {
  std::vector<double> d(static_cast<size_t>(n) * n);
  const double s0 = std::sqrt(1.0 / n);
  const double sk = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      d[static_cast<size_t>(k) * n + i] =
          (k == 0 ? s0 : sk) * std::cos(M_PI * (i + 0.5) * k / n);
  return d;
}

std::vector<double> mel_filterbank(const MfccConfig& cfg, int n_fft, int sample_rate) {
  const double fmax = cfg.fmax > 0.0 ? cfg.fmax : sample_rate / 2.0;
  if (!(cfg.fmin < fmax) || fmax > sample_rate / 2.0 + 1e-9)
    throw DataError("mel_filterbank: need fmin < fmax <= Nyquist");
  if (cfg.n_mels < 1) throw DataError("mel_filterbank: n_mels must be >= 1");

  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m)
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));

  std::vector<double> fb(static_cast<size_t>(cfg.n_mels) * n_bins, 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], cen = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f < hi)
        w = (f <= cen) ? (f - lo) / (cen - lo) : (hi - f) / (hi - cen);
      if (w > 0.0) any = true;
      fb[static_cast<size_t>(m) * n_bins + k] = w;
    }
    if (!any)
      throw DataError("mel_filterbank: filter " + std::to_string(m) +
                      " has empty support; reduce n_mels or increase n_fft");
  }
  return fb;
}

FeatureMatrix mfcc(const Waveform& w, const MfccConfig& cfg, const std::string& source_id) {
  if (w.sample_rate <= 0) throw DataError("mfcc: sample rate must be positive");
  if (cfg.n_mfcc > cfg.n_mels) throw DataError("mfcc: n_mfcc must be <= n_mels");
  if (!(cfg.preemph >= 0.0 && cfg.preemph < 1.0)) throw DataError("mfcc: preemph in [0,1)");

  const int frame_len = static_cast<int>(std::lround(cfg.frame_ms * w.sample_rate / 1000.0));
  const int hop_len = static_cast<int>(std::lround(cfg.hop_ms * w.sample_rate / 1000.0));
  const int n = static_cast<int>(w.samples.size());
  if (frame_len <= 1 || hop_len < 1) throw DataError("mfcc: degenerate frame/hop");
  if (n < frame_len) throw DataError("mfcc: waveform shorter than one frame");

  // Pre-emphasis with replicated first sample.
  std::vector<double> x(w.samples.size());
  x[0] = w.samples[0] - cfg.preemph * w.samples[0];
  for (int t = 1; t < n; ++t) x[t] = w.samples[t] - cfg.preemph * w.samples[t - 1];

  std::vector<double> window(frame_len);
  for (int i = 0; i < frame_len; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (frame_len - 1));

  const int n_fft = next_pow2_at_least(frame_len);
  const int n_bins = n_fft / 2 + 1;
  const std::vector<double> fb = mel_filterbank(cfg, n_fft, w.sample_rate);
  const std::vector<double> dct = dct2_orthonormal(cfg.n_mels);

  const int frames = 1 + (n - frame_len) / hop_len;
  FeatureMatrix out;
  out.frames = frames;
  out.dims = cfg.n_mfcc;
  out.frame_ms = cfg.frame_ms;
  out.hop_ms = cfg.hop_ms;
  out.source_id = source_id;
  out.data.resize(static_cast<size_t>(frames) * cfg.n_mfcc);

  std::vector<double> re(n_fft), im(n_fft), power(n_bins), logmel(cfg.n_mels);
  constexpr double kLogFloor = 1e-10;
  for (int t = 0; t < frames; ++t) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    kern::mul(x.data() + static_cast<size_t>(t) * hop_len, window.data(), re.data(), frame_len);
    fft(re, im, false);
    for (int k = 0; k < n_bins; ++k) power[k] = re[k] * re[k] + im[k] * im[k];
    for (int m = 0; m < cfg.n_mels; ++m)
      logmel[m] = std::log(kern::dot(fb.data() + static_cast<size_t>(m) * n_bins,
                                     power.data(), n_bins) + kLogFloor);
    double* row = out.row(t);
    for (int c = 0; c < cfg.n_mfcc; ++c)
      row[c] = kern::dot(dct.data() + static_cast<size_t>(c) * cfg.n_mels,
                         logmel.data(), cfg.n_mels);
  }
  return out;
}

FeatureMatrix cmvn(const FeatureMatrix& f) {
  if (f.frames < 1) throw DataError("cmvn: need at least one frame");
  FeatureMatrix out = f;
  const size_t d = static_cast<size_t>(f.dims);
  std::vector<double> mean(d, 0.0), var(d, 0.0), sq(d);
  for (int t = 0; t < f.frames; ++t) kern::add(mean.data(), f.row(t), mean.data(), d);
  kern::scale(1.0 / f.frames, mean.data(), d);
  for (int t = 0; t < f.frames; ++t) {
    kern::sub(f.row(t), mean.data(), out.row(t), d);
    kern::mul(out.row(t), out.row(t), sq.data(), d);
    kern::add(var.data(), sq.data(), var.data(), d);
  }
  kern::scale(1.0 / f.frames, var.data(), d);
  constexpr double kVarFloor = 1e-10;
  std::vector<double> inv_std(d);
  for (size_t i = 0; i < d; ++i) inv_std[i] = var[i] > kVarFloor ? 1.0 / std::sqrt(var[i]) : 1.0;
  for (int t = 0; t < f.frames; ++t) kern::mul(out.row(t), inv_std.data(), out.row(t), d);
  return out;
}

FeatureMatrix deltas(const FeatureMatrix& f, int width) {
  if (width < 1) throw DataError("deltas: width must be >= 1");
  const int d = f.dims;
  double denom = 0.0;
  for (int k = 1; k <= width; ++k) denom += 2.0 * k * k;

  auto regress = [&](const FeatureMatrix& src, FeatureMatrix& dst) {
    dst = src;
    for (int t = 0; t < src.frames; ++t) {
      double* row = dst.row(t);
      std::fill(row, row + d, 0.0);
      for (int k = 1; k <= width; ++k) {
        const int tp = std::min(t + k, src.frames - 1);
        const int tm = std::max(t - k, 0);
        kern::axpy(static_cast<double>(k) / denom, src.row(tp), row, d);
        kern::axpy(-static_cast<double>(k) / denom, src.row(tm), row, d);
      }
    }
  };

  FeatureMatrix d1, d2;
  regress(f, d1);
  regress(d1, d2);

  FeatureMatrix out;
  out.frames = f.frames;
  out.dims = 3 * d;
  out.frame_ms = f.frame_ms;
  out.hop_ms = f.hop_ms;
  out.source_id = f.source_id;
  out.data.resize(static_cast<size_t>(out.frames) * out.dims);
  for (int t = 0; t < f.frames; ++t) {
    std::memcpy(out.row(t), f.row(t), sizeof(double) * d);
    std::memcpy(out.row(t) + d, d1.row(t), sizeof(double) * d);
    std::memcpy(out.row(t) + 2 * d, d2.row(t), sizeof(double) * d);
  }
  return out;
}

void save_features(const FeatureMatrix& f, const std::string& path) {
  nlohmann::ordered_json header;
  header["source_id"] = f.source_id;
  header["dims"] = f.dims;
  header["frames"] = f.frames;
  header["frame_ms"] = f.frame_ms;
  header["hop_ms"] = f.hop_ms;
  std::string head = header.dump();
  head += '\n';

  std::vector<uint8_t> out(head.begin(), head.end());
  out.reserve(out.size() + f.data.size() * 4);
  for (double v : f.data) put_f32le(out, static_cast<float>(v));
  write_file_bytes(path, out.data(), out.size());
}

FeatureMatrix load_features(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), static_cast<uint8_t>('\n'));
  if (nl == bytes.end()) throw DataError("feature cache missing header line: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(std::string(bytes.begin(), nl));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("feature cache header parse error in " + path + ": " + e.what());
  }

  FeatureMatrix f;
  f.source_id = header.at("source_id").get<std::string>();
  f.dims = header.at("dims").get<int>();
  f.frames = header.at("frames").get<int>();
  f.frame_ms = header.at("frame_ms").get<double>();
  f.hop_ms = header.at("hop_ms").get<double>();
  if (f.dims <= 0 || f.frames <= 0) throw DataError("feature cache has empty shape: " + path);

  const size_t expect = static_cast<size_t>(f.dims) * f.frames * 4;
  const size_t body = static_cast<size_t>(bytes.end() - (nl + 1));
  if (body != expect)
    throw DataError("feature cache truncated: " + path + " (expected " +
                    std::to_string(expect) + " payload bytes, got " + std::to_string(body) + ")");
  f.data.resize(static_cast<size_t>(f.dims) * f.frames);
  const uint8_t* p = &*(nl + 1);
  for (size_t i = 0; i < f.data.size(); ++i) f.data[i] = get_f32le(p + 4 * i);
  return f;
}

}  // namespace canid::dsp
