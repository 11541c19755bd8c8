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

#include <cstdlib>
#include <cstring>

#include "canid/kern.hpp"

namespace canid::kern {

#ifdef CANID_HAVE_AVX2_BUILD
const Ops* avx2_ops_table();  // defined in kern_avx2.cpp
#endif

bool cpu_has_avx2() {
#if defined(CANID_HAVE_AVX2_BUILD) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

const Ops* avx2_ops_or_null() {
#ifdef CANID_HAVE_AVX2_BUILD
  if (cpu_has_avx2()) return avx2_ops_table();
#endif
  return nullptr;
}

namespace {

const Ops* select() {
  const char* want = std::getenv("CANID_SIMD");
  if (want != nullptr && std::strcmp(want, "scalar") == 0) return &scalar_ops();
  if (want != nullptr && std::strcmp(want, "avx2") == 0) {
    const Ops* v = avx2_ops_or_null();
    if (v != nullptr) return v;
    // Requested variant unavailable on this host; fall back to the reference.
    return &scalar_ops();
  }
  const Ops* v = avx2_ops_or_null();
  return v != nullptr ? v : &scalar_ops();
}

}  // namespace

const Ops& active() {
  static const Ops* selected = select();
  return *selected;
}

}  // namespace canid::kern
