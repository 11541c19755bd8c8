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

#ifndef CANID_KERN_HPP_
#define CANID_KERN_HPP_

#include <cstddef>

// Vector primitives behind the feature frontend and the network kernels.
// Scalar implementations are the reference; an AVX2 variant is selected at
// runtime when the CPU supports it. Elementwise kernels are bit-identical
// across variants; reductions may differ by accumulation order and are
// equivalence-tested against the scalar path within tight tolerances.
// CANID_SIMD=scalar|avx2|auto overrides the selection.
namespace canid::kern {

struct Ops {
  const char* name;

  double (*dot)(const double* a, const double* b, size_t n);
  double (*sum)(const double* x, size_t n);
  double (*sumsq)(const double* x, size_t n);
  double (*max)(const double* x, size_t n);  // n >= 1

  void (*axpy)(double a, const double* x, double* y, size_t n);  // y += a*x
  void (*add)(const double* a, const double* b, double* out, size_t n);
  void (*sub)(const double* a, const double* b, double* out, size_t n);
  void (*mul)(const double* a, const double* b, double* out, size_t n);
  void (*scale)(double a, double* x, size_t n);  // x *= a
  void (*relu)(const double* x, double* out, size_t n);

  // One bias-corrected Adam update over a parameter blob; zeroes the grad.
  // bc1 = 1 - beta1^t, bc2 = 1 - beta2^t.
  void (*adam)(double* p, double* g, double* m, double* v, size_t n, double lr,
               double beta1, double beta2, double eps, double bc1, double bc2);
};

const Ops& scalar_ops();
// Null when the binary was not built with AVX2 support or the CPU lacks it.
const Ops* avx2_ops_or_null();
bool cpu_has_avx2();

// The runtime-selected table. Resolved once on first call.
const Ops& active();

inline double dot(const double* a, const double* b, size_t n) { return active().dot(a, b, n); }
inline double sum(const double* x, size_t n) { return active().sum(x, n); }
inline double sumsq(const double* x, size_t n) { return active().sumsq(x, n); }
inline double max(const double* x, size_t n) { return active().max(x, n); }
inline void axpy(double a, const double* x, double* y, size_t n) { active().axpy(a, x, y, n); }
inline void add(const double* a, const double* b, double* out, size_t n) { active().add(a, b, out, n); }
inline void sub(const double* a, const double* b, double* out, size_t n) { active().sub(a, b, out, n); }
inline void mul(const double* a, const double* b, double* out, size_t n) { active().mul(a, b, out, n); }
inline void scale(double a, double* x, size_t n) { active().scale(a, x, n); }
inline void relu(const double* x, double* out, size_t n) { active().relu(x, out, n); }

}  // namespace canid::kern

#endif  // CANID_KERN_HPP_
