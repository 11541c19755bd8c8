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

#ifndef CANID_IO_UTIL_HPP_
#define CANID_IO_UTIL_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace canid {

std::vector<uint8_t> read_file_bytes(const std::string& path);
std::string read_file_text(const std::string& path);
void write_file_bytes(const std::string& path, const uint8_t* data, size_t n);
void write_file_text(const std::string& path, const std::string& text);

// CRC-32 (IEEE 802.3, reflected 0xEDB88320), as used by zip/png.
uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed = 0);
uint32_t crc32_file(const std::string& path);

// Little-endian scalar append/read helpers for binary formats.
void put_u32le(std::vector<uint8_t>& out, uint32_t v);
void put_u64le(std::vector<uint8_t>& out, uint64_t v);
void put_f64le(std::vector<uint8_t>& out, double v);
uint32_t get_u32le(const uint8_t* p);
uint64_t get_u64le(const uint8_t* p);
double get_f64le(const uint8_t* p);
void put_f32le(std::vector<uint8_t>& out, float v);
float get_f32le(const uint8_t* p);

}  // namespace canid

#endif  // CANID_IO_UTIL_HPP_
