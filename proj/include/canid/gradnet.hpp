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

#ifndef CANID_GRADNET_HPP_
#define CANID_GRADNET_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "canid/rng.hpp"
#include "canid/tensor.hpp"

// Reverse-mode kernels for the acoustic models. There is no tape: each
// kernel's backward is hand-written, reads the output's grad buffer and
// accumulates into the input's and the parameters' grad buffers. Backward
// passes recompute cheap forward intermediates instead of caching them.
namespace canid::gradnet {

enum class Act { kRelu, kTanh, kSigmoid };

Tensor act_forward(const Tensor& x, Act kind);
// Accumulates into x.g; y is the act_forward output with y.g populated.
void act_backward(Tensor& x, const Tensor& y, Act kind);

// Zeroes value rows at t >= valid_len; its backward mirror zeroes grad rows.
void mask_rows(Tensor& x, int valid_len);
void mask_grad_rows(Tensor& x, int valid_len);

std::vector<double> softmax(const std::vector<double>& logits);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // wrt logits
};

// Log-sum-exp stabilized cross-entropy.
LossGrad softmax_xent(const std::vector<double>& logits, int label);

// Additive angular margin loss over an embedding and class weight rows.
// Accumulates grad_scale * dLoss into emb.g and weights.t.g.
double aam_softmax(Tensor& emb, Parameter& weights, int label, double margin,
                   double scale, double grad_scale);
// Probabilities only (inference): softmax over scale * cos(theta_j).
std::vector<double> aam_probs(const Tensor& emb, const Parameter& weights, double scale);

// Same-padded 1-D convolution over {T, C_in} rows. Weight layout is
// {C_out, K, C_in}; tap k reads row t + (k - K/2) * dilation.
struct Conv1d {
  Parameter w;
  Parameter b;
  int dilation = 1;

  static Conv1d make(int c_in, int c_out, int k, int dilation, const std::string& prefix);
  int c_in() const { return w.t.dim(2); }
  int c_out() const { return w.t.dim(0); }
  int k() const { return w.t.dim(1); }
  Tensor forward(const Tensor& x) const;
  void backward(Tensor& x, const Tensor& y);
};

// Dense layer over a vector {in} or row-wise over {T, in}.
struct Linear {
  Parameter w;  // {out, in}
  Parameter b;  // {out}

  static Linear make(int in, int out, const std::string& prefix);
  Tensor forward(const Tensor& x) const;
  void backward(Tensor& x, const Tensor& y);
};

// Per-channel batch normalization over a batch of masked sequences.
struct BatchNorm1d {
  Parameter gamma, beta;
  Parameter run_mean, run_var;  // trainable = false
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm1d make(int channels, const std::string& prefix);
  int channels() const { return gamma.t.dim(0); }
  // Train mode: normalize with batch statistics over valid rows, update
  // running stats (unless update_running is false, used by gradient checks).
  std::vector<Tensor> forward_train(const std::vector<Tensor>& xs,
                                    const std::vector<int>& lens, bool update_running);
  void backward(std::vector<Tensor>& xs, const std::vector<Tensor>& ys,
                const std::vector<int>& lens);
  Tensor forward_eval(const Tensor& x) const;
};

// Squeeze-excitation gate: s = sigmoid(w2 * relu(w1 * mean_t(x) + b1) + b2),
// y[t, c] = s[c] * x[t, c]. The mean runs over valid rows only.
struct SeGate {
  Parameter w1, b1;  // {C/r, C}, {C/r}
  Parameter w2, b2;  // {C, C/r}, {C}

  static SeGate make(int channels, int reduction, const std::string& prefix);
  Tensor forward(const Tensor& x, int valid_len) const;
  void backward(Tensor& x, const Tensor& y, int valid_len);
};

// 1x1 conv -> split into `scale` groups -> hierarchical dilated K=3 convs
// (group 0 passes through, group i convolves group i + previous output) ->
// concat -> 1x1 conv -> SE gate -> residual add.
struct Res2Block {
  Conv1d conv_in;
  std::vector<Conv1d> convs;  // scale - 1 group convs
  Conv1d conv_out;
  SeGate se;
  int scale = 2;

  static Res2Block make(int channels, int scale, int dilation, int se_reduction,
                        const std::string& prefix);
  Tensor forward(const Tensor& x, int valid_len) const;
  void backward(Tensor& x, Tensor& y, int valid_len);
};

// Attention-weighted mean and standard deviation over frames -> {2C}.
struct AttentiveStatsPool {
  Parameter w;  // {A, C}
  Parameter b;  // {A}
  Parameter v;  // {A}
  static constexpr double kVarEps = 1e-8;

  static AttentiveStatsPool make(int channels, int attn_hidden, const std::string& prefix);
  Tensor forward(const Tensor& h, int valid_len) const;
  void backward(Tensor& h, const Tensor& out, int valid_len);
  // Attention weights over valid rows (diagnostics and tests).
  std::vector<double> attention(const Tensor& h, int valid_len) const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam over a fixed parameter list; grads are zeroed
// by the update kernel after each step.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);
  void step();
  int64_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// Central-difference check of an analytic gradient. Returns the max over
// coordinates of |fd - analytic| / max(|fd|, |analytic|, 1e-6).
double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& point,
                  const std::vector<double>& analytic_grad, double step);

// Kaiming-uniform fan-in init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
void kaiming_uniform(Tensor& t, int fan_in, Rng& rng);
// Deterministic per-parameter init from (seed, parameter name).
void init_parameters(const std::vector<Parameter*>& params, uint64_t seed);

}  // namespace canid::gradnet

#endif  // CANID_GRADNET_HPP_
