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

#include "canid/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>

#include "canid/error.hpp"
#include "canid/io_util.hpp"

namespace canid {

namespace {

void put_tag(std::vector<uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

int16_t to_pcm16(double x) {
  if (x > 1.0) x = 1.0;
  if (x < -1.0) x = -1.0;
  double scaled = std::round(x * 32767.0);
  if (scaled > 32767.0) scaled = 32767.0;
  if (scaled < -32768.0) scaled = -32768.0;
  return static_cast<int16_t>(scaled);
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw DataError("write_wav: sample rate must be positive");
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  std::vector<uint8_t> out;
  out.reserve(44 + data_bytes);

  put_tag(out, "RIFF");
  put_u32le(out, 36 + data_bytes);
  put_tag(out, "WAVE");

  put_tag(out, "fmt ");
  put_u32le(out, 16);
  out.push_back(1);  // PCM
  out.push_back(0);
  out.push_back(1);  // mono
  out.push_back(0);
  put_u32le(out, static_cast<uint32_t>(w.sample_rate));
  put_u32le(out, static_cast<uint32_t>(w.sample_rate) * 2);  // byte rate
  out.push_back(2);  // block align
  out.push_back(0);
  out.push_back(16);  // bits per sample
  out.push_back(0);

  put_tag(out, "data");
  put_u32le(out, data_bytes);
  for (double s : w.samples) {
    const uint16_t bits = static_cast<uint16_t>(to_pcm16(s));
    out.push_back(static_cast<uint8_t>(bits));
    out.push_back(static_cast<uint8_t>(bits >> 8));
  }
  write_file_bytes(path, out.data(), out.size());
}

Waveform read_wav(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file: " + path);
  }

  Waveform w;
  bool have_fmt = false, have_data = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t len = get_u32le(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + len > bytes.size()) throw DataError("truncated WAV chunk in " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (len < 16) throw DataError("short fmt chunk in " + path);
      const uint16_t format = static_cast<uint16_t>(bytes[body] | bytes[body + 1] << 8);
      const uint16_t channels = static_cast<uint16_t>(bytes[body + 2] | bytes[body + 3] << 8);
      const uint32_t rate = get_u32le(bytes.data() + body + 4);
      const uint16_t bits = static_cast<uint16_t>(bytes[body + 14] | bytes[body + 15] << 8);
      if (format != 1 || bits != 16) throw DataError("only PCM 16-bit WAV supported: " + path);
      if (channels != 1) throw DataError("only mono WAV supported: " + path);
      w.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("WAV data chunk before fmt in " + path);
      const size_t n = len / 2;
      w.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        const int16_t s = static_cast<int16_t>(
            static_cast<uint16_t>(bytes[body + 2 * i]) |
            static_cast<uint16_t>(bytes[body + 2 * i + 1]) << 8);
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      have_data = true;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || !have_data) throw DataError("missing fmt or data chunk in " + path);
  return w;
}

}  // namespace canid
