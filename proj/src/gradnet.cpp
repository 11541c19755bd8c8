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

#include "canid/gradnet.hpp"

#include <cmath>
#include <cstring>

#include "canid/error.hpp"
#include "canid/kern.hpp"

namespace canid::gradnet {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Activations, masks, losses
// ---------------------------------------------------------------------------

Tensor act_forward(const Tensor& x, Act kind) {
  Tensor y(x.shape());
  const size_t n = x.size();
  switch (kind) {
    case Act::kRelu:
      kern::relu(x.v(), y.v(), n);
      break;
    case Act::kTanh:
      for (size_t i = 0; i < n; ++i) y.v()[i] = std::tanh(x.v()[i]);
      break;
    case Act::kSigmoid:
      for (size_t i = 0; i < n; ++i) y.v()[i] = 1.0 / (1.0 + std::exp(-x.v()[i]));
      break;
  }
  return y;
}

void act_backward(Tensor& x, const Tensor& y, Act kind) {
  const size_t n = x.size();
  switch (kind) {
    case Act::kRelu:
      for (size_t i = 0; i < n; ++i)
        if (x.v()[i] > 0.0) x.g()[i] += y.g()[i];
      break;
    case Act::kTanh:
      for (size_t i = 0; i < n; ++i) x.g()[i] += (1.0 - y.v()[i] * y.v()[i]) * y.g()[i];
      break;
    case Act::kSigmoid:
      for (size_t i = 0; i < n; ++i) x.g()[i] += y.v()[i] * (1.0 - y.v()[i]) * y.g()[i];
      break;
  }
}

void mask_rows(Tensor& x, int valid_len) {
  for (int t = valid_len; t < x.rows(); ++t)
    std::memset(x.row(t), 0, sizeof(double) * x.cols());
}

void mask_grad_rows(Tensor& x, int valid_len) {
  for (int t = valid_len; t < x.rows(); ++t)
    std::memset(x.grow(t), 0, sizeof(double) * x.cols());
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = kern::max(logits.data(), logits.size());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

LossGrad softmax_xent(const std::vector<double>& logits, int label) {
  if (label < 0 || static_cast<size_t>(label) >= logits.size())
    throw DataError("softmax_xent: label out of range");
  const double m = kern::max(logits.data(), logits.size());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double logz = std::log(z) + m;

  LossGrad out;
  out.loss = logz - logits[static_cast<size_t>(label)];
  out.grad.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i)
    out.grad[i] = std::exp(logits[i] - logz) - (static_cast<int>(i) == label ? 1.0 : 0.0);
  return out;
}

namespace {

// Normalized cosine between the embedding and each class weight row.
void cosine_logits(const Tensor& emb, const Parameter& weights,
                   std::vector<double>* cosines, double* emb_norm,
                   std::vector<double>* w_norms) {
  const int k = weights.t.dim(0);
  const int e = weights.t.dim(1);
  const double en = std::sqrt(kern::sumsq(emb.v(), e));
  if (en < 1e-12) throw NumericError("aam_softmax: zero-norm embedding");
  cosines->resize(k);
  w_norms->resize(k);
  for (int j = 0; j < k; ++j) {
    const double wn = std::sqrt(kern::sumsq(weights.t.row(j), e));
    if (wn < 1e-12) throw NumericError("aam_softmax: zero-norm class weight");
    (*w_norms)[j] = wn;
    (*cosines)[j] = kern::dot(emb.v(), weights.t.row(j), e) / (en * wn);
  }
  *emb_norm = en;
}

}  // namespace

double aam_softmax(Tensor& emb, Parameter& weights, int label, double margin,
                   double scale, double grad_scale) {
  if (!(margin >= 0.0 && margin < M_PI / 2.0)) throw DataError("aam_softmax: margin out of range");
  if (!(scale > 0.0)) throw DataError("aam_softmax: scale must be positive");
  const int k = weights.t.dim(0);
  const int e = weights.t.dim(1);

  std::vector<double> cosines, w_norms;
  double en = 0.0;
  cosine_logits(emb, weights, &cosines, &en, &w_norms);

  const double cy_raw = cosines[static_cast<size_t>(label)];
  const double cy = std::min(1.0 - 1e-9, std::max(-1.0 + 1e-9, cy_raw));
  const double sy = std::sqrt(1.0 - cy * cy);
  const double cm = std::cos(margin), sm = std::sin(margin);

  std::vector<double> logits(k);
  for (int j = 0; j < k; ++j) logits[j] = scale * cosines[j];
  logits[static_cast<size_t>(label)] = scale * (cy * cm - sy * sm);

  LossGrad lg = softmax_xent(logits, label);

  for (int j = 0; j < k; ++j) {
    double dc = scale * lg.grad[j];
    if (j == label) dc = lg.grad[j] * scale * (cm + sm * cy / std::max(sy, 1e-6));
    dc *= grad_scale;
    // d cos / d emb = (w_hat - cos * e_hat) / |e|;   symmetric for w rows.
    const double wn = w_norms[j];
    const double* wj = weights.t.row(j);
    double* dwj = weights.t.grow(j);
    const double c = cosines[j];
    for (int i = 0; i < e; ++i) {
      const double ehat = emb.v()[i] / en;
      const double what = wj[i] / wn;
      emb.g()[i] += dc * (what - c * ehat) / en;
      dwj[i] += dc * (ehat - c * what) / wn;
    }
  }
  return lg.loss;
}

std::vector<double> aam_probs(const Tensor& emb, const Parameter& weights, double scale) {
  const int k = weights.t.dim(0);
  const int e = weights.t.dim(1);
  const double en = std::sqrt(kern::sumsq(emb.v(), e));
  if (en < 1e-12) throw NumericError("aam_probs: zero-norm embedding");
  std::vector<double> logits(k);
  for (int j = 0; j < k; ++j) {
    const double wn = std::sqrt(kern::sumsq(weights.t.row(j), e));
    if (wn < 1e-12) throw NumericError("aam_probs: zero-norm class weight");
    logits[j] = scale * kern::dot(emb.v(), weights.t.row(j), e) / (en * wn);
  }
  return softmax(logits);
}

// ---------------------------------------------------------------------------
// Conv1d
// ---------------------------------------------------------------------------

Conv1d Conv1d::make(int c_in, int c_out, int k, int dilation, const std::string& prefix) {
  if (k % 2 == 0) throw DataError("conv1d: kernel width must be odd");
  if (dilation < 1) throw DataError("conv1d: dilation must be >= 1");
  Conv1d c;
  c.w = Parameter{prefix + ".w", Tensor({c_out, k, c_in}), true};
  c.b = Parameter{prefix + ".b", Tensor({c_out}), true};
  c.dilation = dilation;
  return c;
}

Tensor Conv1d::forward(const Tensor& x) const {
  const int t_len = x.rows();
  const int cin = c_in(), cout = c_out(), kk = k();
  if (x.cols() != cin) throw DataError("conv1d: input channel mismatch");
  Tensor y({t_len, cout});
  const int half = kk / 2;
  for (int t = 0; t < t_len; ++t) {
    double* yr = y.row(t);
    for (int o = 0; o < cout; ++o) {
      double acc = b.t.v()[o];
      const double* wo = w.t.v() + static_cast<size_t>(o) * kk * cin;
      for (int tap = 0; tap < kk; ++tap) {
        const int tt = t + (tap - half) * dilation;
        if (tt < 0 || tt >= t_len) continue;  // zero padding
        acc += kern::dot(wo + static_cast<size_t>(tap) * cin, x.row(tt), cin);
      }
      yr[o] = acc;
    }
  }
  return y;
}

void Conv1d::backward(Tensor& x, const Tensor& y) {
  const int t_len = x.rows();
  const int cin = c_in(), cout = c_out(), kk = k();
  const int half = kk / 2;
  for (int t = 0; t < t_len; ++t) {
    const double* gy = y.grow(t);
    for (int o = 0; o < cout; ++o) {
      const double g = gy[o];
      if (g == 0.0) continue;
      b.t.g()[o] += g;
      double* gwo = w.t.g() + static_cast<size_t>(o) * kk * cin;
      const double* wo = w.t.v() + static_cast<size_t>(o) * kk * cin;
      for (int tap = 0; tap < kk; ++tap) {
        const int tt = t + (tap - half) * dilation;
        if (tt < 0 || tt >= t_len) continue;
        kern::axpy(g, x.row(tt), gwo + static_cast<size_t>(tap) * cin, cin);
        kern::axpy(g, wo + static_cast<size_t>(tap) * cin, x.grow(tt), cin);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear Linear::make(int in, int out, const std::string& prefix) {
  Linear l;
  l.w = Parameter{prefix + ".w", Tensor({out, in}), true};
  l.b = Parameter{prefix + ".b", Tensor({out}), true};
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  const int in = w.t.dim(1), out = w.t.dim(0);
  if (x.cols() != in) throw DataError("linear: input dim mismatch");
  if (x.shape().size() == 1) {
    Tensor y({out});
    for (int o = 0; o < out; ++o)
      y.v()[o] = b.t.v()[o] + kern::dot(w.t.row(o), x.v(), in);
    return y;
  }
  Tensor y({x.rows(), out});
  for (int t = 0; t < x.rows(); ++t)
    for (int o = 0; o < out; ++o)
      y.row(t)[o] = b.t.v()[o] + kern::dot(w.t.row(o), x.row(t), in);
  return y;
}

void Linear::backward(Tensor& x, const Tensor& y) {
  const int in = w.t.dim(1), out = w.t.dim(0);
  const int rows = x.shape().size() == 1 ? 1 : x.rows();
  for (int t = 0; t < rows; ++t) {
    const double* gy = y.grow(t);
    const double* xv = x.row(t);
    double* gx = x.grow(t);
    for (int o = 0; o < out; ++o) {
      const double g = gy[o];
      if (g == 0.0) continue;
      b.t.g()[o] += g;
      kern::axpy(g, xv, w.t.grow(o), in);
      kern::axpy(g, w.t.row(o), gx, in);
    }
  }
}

// ---------------------------------------------------------------------------
// BatchNorm1d
// ---------------------------------------------------------------------------

BatchNorm1d BatchNorm1d::make(int channels, const std::string& prefix) {
  BatchNorm1d bn;
  bn.gamma = Parameter{prefix + ".gamma", Tensor({channels}), true};
  bn.beta = Parameter{prefix + ".beta", Tensor({channels}), true};
  bn.run_mean = Parameter{prefix + ".run_mean", Tensor({channels}), false};
  bn.run_var = Parameter{prefix + ".run_var", Tensor({channels}), false};
  return bn;
}

namespace {

// Per-channel mean and biased variance over the valid rows of a batch.
void batch_stats(const std::vector<Tensor>& xs, const std::vector<int>& lens, int c,
                 std::vector<double>* mean, std::vector<double>* var, double* count) {
  mean->assign(c, 0.0);
  var->assign(c, 0.0);
  double n = 0.0;
  std::vector<double> sq(c);
  for (size_t b = 0; b < xs.size(); ++b) {
    for (int t = 0; t < lens[b]; ++t) kern::add(mean->data(), xs[b].row(t), mean->data(), c);
    n += lens[b];
  }
  if (n < 1.0) throw DataError("batchnorm: empty batch");
  kern::scale(1.0 / n, mean->data(), c);
  std::vector<double> diff(c);
  for (size_t b = 0; b < xs.size(); ++b)
    for (int t = 0; t < lens[b]; ++t) {
      kern::sub(xs[b].row(t), mean->data(), diff.data(), c);
      kern::mul(diff.data(), diff.data(), sq.data(), c);
      kern::add(var->data(), sq.data(), var->data(), c);
    }
  kern::scale(1.0 / n, var->data(), c);
  *count = n;
}

}  // namespace

std::vector<Tensor> BatchNorm1d::forward_train(const std::vector<Tensor>& xs,
                                               const std::vector<int>& lens,
                                               bool update_running) {
  const int c = channels();
  std::vector<double> mean, var;
  double n = 0.0;
  batch_stats(xs, lens, c, &mean, &var, &n);

  std::vector<double> inv_std(c);
  for (int i = 0; i < c; ++i) inv_std[i] = 1.0 / std::sqrt(var[i] + eps);

  std::vector<Tensor> ys;
  ys.reserve(xs.size());
  for (const auto& x : xs) {
    Tensor y(x.shape());
    for (int t = 0; t < x.rows(); ++t) {
      const double* xr = x.row(t);
      double* yr = y.row(t);
      for (int i = 0; i < c; ++i)
        yr[i] = gamma.t.v()[i] * (xr[i] - mean[i]) * inv_std[i] + beta.t.v()[i];
    }
    ys.push_back(std::move(y));
  }
  if (update_running) {
    for (int i = 0; i < c; ++i) {
      run_mean.t.v()[i] = (1.0 - momentum) * run_mean.t.v()[i] + momentum * mean[i];
      run_var.t.v()[i] = (1.0 - momentum) * run_var.t.v()[i] + momentum * var[i];
    }
  }
  return ys;
}

void BatchNorm1d::backward(std::vector<Tensor>& xs, const std::vector<Tensor>& ys,
                           const std::vector<int>& lens) {
  const int c = channels();
  std::vector<double> mean, var;
  double n = 0.0;
  batch_stats(xs, lens, c, &mean, &var, &n);
  std::vector<double> inv_std(c);
  for (int i = 0; i < c; ++i) inv_std[i] = 1.0 / std::sqrt(var[i] + eps);

  // Reductions over valid rows; padded rows carry zero upstream grads.
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (size_t b = 0; b < xs.size(); ++b)
    for (int t = 0; t < lens[b]; ++t) {
      const double* dy = ys[b].grow(t);
      const double* xr = xs[b].row(t);
      for (int i = 0; i < c; ++i) {
        sum_dy[i] += dy[i];
        sum_dy_xhat[i] += dy[i] * (xr[i] - mean[i]) * inv_std[i];
      }
    }
  for (int i = 0; i < c; ++i) {
    gamma.t.g()[i] += sum_dy_xhat[i];
    beta.t.g()[i] += sum_dy[i];
  }
  for (size_t b = 0; b < xs.size(); ++b)
    for (int t = 0; t < lens[b]; ++t) {
      const double* dy = ys[b].grow(t);
      const double* xr = xs[b].row(t);
      double* dx = xs[b].grow(t);
      for (int i = 0; i < c; ++i) {
        const double xhat = (xr[i] - mean[i]) * inv_std[i];
        dx[i] += gamma.t.v()[i] * inv_std[i] *
                 (dy[i] - sum_dy[i] / n - xhat * sum_dy_xhat[i] / n);
      }
    }
}

Tensor BatchNorm1d::forward_eval(const Tensor& x) const {
  const int c = channels();
  if (x.cols() != c) throw DataError("batchnorm: channel mismatch");
  Tensor y(x.shape());
  std::vector<double> inv_std(c);
  for (int i = 0; i < c; ++i) inv_std[i] = 1.0 / std::sqrt(run_var.t.v()[i] + eps);
  for (int t = 0; t < x.rows(); ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (int i = 0; i < c; ++i)
      yr[i] = gamma.t.v()[i] * (xr[i] - run_mean.t.v()[i]) * inv_std[i] + beta.t.v()[i];
  }
  return y;
}

// ---------------------------------------------------------------------------
// SeGate
// ---------------------------------------------------------------------------

SeGate SeGate::make(int channels, int reduction, const std::string& prefix) {
  if (channels % reduction != 0) throw DataError("se_gate: reduction must divide channels");
  const int cr = channels / reduction;
  SeGate s;
  s.w1 = Parameter{prefix + ".w1", Tensor({cr, channels}), true};
  s.b1 = Parameter{prefix + ".b1", Tensor({cr}), true};
  s.w2 = Parameter{prefix + ".w2", Tensor({channels, cr}), true};
  s.b2 = Parameter{prefix + ".b2", Tensor({channels}), true};
  return s;
}

namespace {

struct SeTrace {
  std::vector<double> mean, z1, r, z2, s;
};

SeTrace se_run(const SeGate& se, const Tensor& x, int valid_len) {
  const int c = se.w1.t.dim(1);
  const int cr = se.w1.t.dim(0);
  SeTrace tr;
  tr.mean.assign(c, 0.0);
  const int l = std::max(valid_len, 1);
  for (int t = 0; t < std::min(valid_len, x.rows()); ++t)
    kern::add(tr.mean.data(), x.row(t), tr.mean.data(), c);
  kern::scale(1.0 / l, tr.mean.data(), c);

  tr.z1.resize(cr);
  tr.r.resize(cr);
  for (int a = 0; a < cr; ++a)
    tr.z1[a] = se.b1.t.v()[a] + kern::dot(se.w1.t.row(a), tr.mean.data(), c);
  kern::relu(tr.z1.data(), tr.r.data(), cr);

  tr.z2.resize(c);
  tr.s.resize(c);
  for (int i = 0; i < c; ++i)
    tr.z2[i] = se.b2.t.v()[i] + kern::dot(se.w2.t.row(i), tr.r.data(), cr);
  for (int i = 0; i < c; ++i) tr.s[i] = 1.0 / (1.0 + std::exp(-tr.z2[i]));
  return tr;
}

}  // namespace

Tensor SeGate::forward(const Tensor& x, int valid_len) const {
  if (x.cols() != w1.t.dim(1)) throw DataError("se_gate: channel mismatch");
  const SeTrace tr = se_run(*this, x, valid_len);
  Tensor y(x.shape());
  for (int t = 0; t < x.rows(); ++t) kern::mul(x.row(t), tr.s.data(), y.row(t), x.cols());
  return y;
}

void SeGate::backward(Tensor& x, const Tensor& y, int valid_len) {
  const int c = w1.t.dim(1);
  const int cr = w1.t.dim(0);
  const SeTrace tr = se_run(*this, x, valid_len);
  const int l = std::max(valid_len, 1);

  std::vector<double> ds(c, 0.0);
  for (int t = 0; t < x.rows(); ++t) {
    const double* dy = y.grow(t);
    const double* xr = x.row(t);
    double* dx = x.grow(t);
    for (int i = 0; i < c; ++i) {
      ds[i] += dy[i] * xr[i];
      dx[i] += dy[i] * tr.s[i];
    }
  }

  std::vector<double> dz2(c);
  for (int i = 0; i < c; ++i) dz2[i] = ds[i] * tr.s[i] * (1.0 - tr.s[i]);
  std::vector<double> dr(cr, 0.0);
  for (int i = 0; i < c; ++i) {
    if (dz2[i] == 0.0) continue;
    b2.t.g()[i] += dz2[i];
    kern::axpy(dz2[i], tr.r.data(), w2.t.grow(i), cr);
    kern::axpy(dz2[i], w2.t.row(i), dr.data(), cr);
  }
  std::vector<double> dz1(cr);
  for (int a = 0; a < cr; ++a) dz1[a] = tr.z1[a] > 0.0 ? dr[a] : 0.0;
  std::vector<double> dmean(c, 0.0);
  for (int a = 0; a < cr; ++a) {
    if (dz1[a] == 0.0) continue;
    b1.t.g()[a] += dz1[a];
    kern::axpy(dz1[a], tr.mean.data(), w1.t.grow(a), c);
    kern::axpy(dz1[a], w1.t.row(a), dmean.data(), c);
  }
  kern::scale(1.0 / l, dmean.data(), c);
  for (int t = 0; t < std::min(valid_len, x.rows()); ++t)
    kern::add(x.grow(t), dmean.data(), x.grow(t), c);
}

// ---------------------------------------------------------------------------
// Res2Block
// ---------------------------------------------------------------------------

Res2Block Res2Block::make(int channels, int scale, int dilation, int se_reduction,
                          const std::string& prefix) {
  if (channels % scale != 0) throw DataError("res2_block: scale must divide channels");
  Res2Block blk;
  blk.scale = scale;
  blk.conv_in = Conv1d::make(channels, channels, 1, 1, prefix + ".conv_in");
  const int cg = channels / scale;
  for (int i = 1; i < scale; ++i)
    blk.convs.push_back(Conv1d::make(cg, cg, 3, dilation, prefix + ".g" + std::to_string(i)));
  blk.conv_out = Conv1d::make(channels, channels, 1, 1, prefix + ".conv_out");
  blk.se = SeGate::make(channels, se_reduction, prefix + ".se");
  return blk;
}

namespace {

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  Tensor out({x.rows(), c1 - c0});
  for (int t = 0; t < x.rows(); ++t)
    std::memcpy(out.row(t), x.row(t) + c0, sizeof(double) * (c1 - c0));
  return out;
}

struct Res2Trace {
  Tensor pre1, h1;
  std::vector<Tensor> u;  // group conv inputs, indices 1..s-1
  std::vector<Tensor> p;  // pre-activation conv outputs
  std::vector<Tensor> y;  // group outputs, index 0 = passthrough slice
  Tensor z, o, gated;
};

Res2Trace res2_run(const Res2Block& blk, const Tensor& x, int valid_len) {
  const int c = x.cols();
  const int s = blk.scale;
  const int cg = c / s;
  Res2Trace tr;
  tr.pre1 = blk.conv_in.forward(x);
  tr.h1 = act_forward(tr.pre1, Act::kRelu);
  mask_rows(tr.h1, valid_len);

  tr.u.resize(s);
  tr.p.resize(s);
  tr.y.resize(s);
  tr.y[0] = slice_channels(tr.h1, 0, cg);
  for (int i = 1; i < s; ++i) {
    Tensor gi = slice_channels(tr.h1, i * cg, (i + 1) * cg);
    tr.u[i] = Tensor({x.rows(), cg});
    kern::add(gi.v(), tr.y[i - 1].v(), tr.u[i].v(), gi.size());
    tr.p[i] = blk.convs[static_cast<size_t>(i - 1)].forward(tr.u[i]);
    tr.y[i] = act_forward(tr.p[i], Act::kRelu);
    mask_rows(tr.y[i], valid_len);
  }

  tr.z = Tensor({x.rows(), c});
  for (int i = 0; i < s; ++i)
    for (int t = 0; t < x.rows(); ++t)
      std::memcpy(tr.z.row(t) + i * cg, tr.y[i].row(t), sizeof(double) * cg);

  tr.o = blk.conv_out.forward(tr.z);
  mask_rows(tr.o, valid_len);
  tr.gated = blk.se.forward(tr.o, valid_len);
  return tr;
}

}  // namespace

Tensor Res2Block::forward(const Tensor& x, int valid_len) const {
  Res2Trace tr = res2_run(*this, x, valid_len);
  Tensor out(x.shape());
  kern::add(tr.gated.v(), x.v(), out.v(), x.size());
  mask_rows(out, valid_len);
  return out;
}

void Res2Block::backward(Tensor& x, Tensor& y, int valid_len) {
  const int c = x.cols();
  const int s = scale;
  const int cg = c / s;
  mask_grad_rows(y, valid_len);  // the forward ends with a row mask
  Res2Trace tr = res2_run(*this, x, valid_len);

  // Residual add: grads split to the gated path and to x directly.
  kern::add(x.g(), y.g(), x.g(), x.size());
  std::memcpy(tr.gated.g(), y.g(), sizeof(double) * y.size());

  se.backward(tr.o, tr.gated, valid_len);
  mask_grad_rows(tr.o, valid_len);
  conv_out.backward(tr.z, tr.o);

  for (int i = 0; i < s; ++i)
    for (int t = 0; t < x.rows(); ++t)
      std::memcpy(tr.y[i].grow(t), tr.z.grow(t) + i * cg, sizeof(double) * cg);

  Tensor dh1(tr.h1.shape());  // grads wrt h1, assembled slice by slice
  for (int i = s - 1; i >= 1; --i) {
    mask_grad_rows(tr.y[i], valid_len);
    act_backward(tr.p[i], tr.y[i], Act::kRelu);
    convs[static_cast<size_t>(i - 1)].backward(tr.u[i], tr.p[i]);
    // u_i = slice_i(h1) + y_{i-1}
    for (int t = 0; t < x.rows(); ++t)
      kern::add(dh1.grow(t) + i * cg, tr.u[i].grow(t), dh1.grow(t) + i * cg, cg);
    kern::add(tr.y[i - 1].g(), tr.u[i].g(), tr.y[i - 1].g(), tr.u[i].size());
  }
  for (int t = 0; t < x.rows(); ++t)
    kern::add(dh1.grow(t), tr.y[0].grow(t), dh1.grow(t), cg);

  std::memcpy(tr.h1.g(), dh1.g(), sizeof(double) * dh1.size());
  mask_grad_rows(tr.h1, valid_len);
  act_backward(tr.pre1, tr.h1, Act::kRelu);
  conv_in.backward(x, tr.pre1);
}

// ---------------------------------------------------------------------------
// AttentiveStatsPool
// ---------------------------------------------------------------------------

AttentiveStatsPool AttentiveStatsPool::make(int channels, int attn_hidden,
                                            const std::string& prefix) {
  AttentiveStatsPool p;
  p.w = Parameter{prefix + ".w", Tensor({attn_hidden, channels}), true};
  p.b = Parameter{prefix + ".b", Tensor({attn_hidden}), true};
  p.v = Parameter{prefix + ".v", Tensor({attn_hidden}), true};
  return p;
}

namespace {

struct PoolTrace {
  std::vector<std::vector<double>> z;  // tanh(W h_t + b) per valid frame
  std::vector<double> alpha;           // attention weights over valid frames
  std::vector<double> mu, m2;
};

PoolTrace pool_run(const AttentiveStatsPool& pool, const Tensor& h, int valid_len) {
  const int c = pool.w.t.dim(1);
  const int a = pool.w.t.dim(0);
  const int l = valid_len;
  PoolTrace tr;
  tr.z.resize(l);
  std::vector<double> e(l);
  for (int t = 0; t < l; ++t) {
    tr.z[t].resize(a);
    for (int j = 0; j < a; ++j)
      tr.z[t][j] = std::tanh(pool.b.t.v()[j] + kern::dot(pool.w.t.row(j), h.row(t), c));
    e[t] = kern::dot(pool.v.t.v(), tr.z[t].data(), a);
  }
  tr.alpha = softmax(e);
  tr.mu.assign(c, 0.0);
  tr.m2.assign(c, 0.0);
  for (int t = 0; t < l; ++t) {
    const double* hr = h.row(t);
    for (int i = 0; i < c; ++i) {
      tr.mu[i] += tr.alpha[t] * hr[i];
      tr.m2[i] += tr.alpha[t] * hr[i] * hr[i];
    }
  }
  return tr;
}

}  // namespace

Tensor AttentiveStatsPool::forward(const Tensor& h, int valid_len) const {
  if (valid_len < 1) throw DataError("attentive_stats_pool: need at least one frame");
  const int c = w.t.dim(1);
  const PoolTrace tr = pool_run(*this, h, valid_len);
  Tensor out({2 * c});
  for (int i = 0; i < c; ++i) {
    out.v()[i] = tr.mu[i];
    out.v()[c + i] = std::sqrt(std::max(tr.m2[i] - tr.mu[i] * tr.mu[i], kVarEps));
  }
  return out;
}

std::vector<double> AttentiveStatsPool::attention(const Tensor& h, int valid_len) const {
  return pool_run(*this, h, valid_len).alpha;
}

void AttentiveStatsPool::backward(Tensor& h, const Tensor& out, int valid_len) {
  const int c = w.t.dim(1);
  const int a = w.t.dim(0);
  const int l = valid_len;
  const PoolTrace tr = pool_run(*this, h, valid_len);

  std::vector<double> dmu(c), dm2(c);
  for (int i = 0; i < c; ++i) {
    const double var = tr.m2[i] - tr.mu[i] * tr.mu[i];
    const double sd = std::sqrt(std::max(var, kVarEps));
    const double dvar = var > kVarEps ? out.g()[c + i] / (2.0 * sd) : 0.0;
    dm2[i] = dvar;
    dmu[i] = out.g()[i] - 2.0 * tr.mu[i] * dvar;
  }

  std::vector<double> dalpha(l, 0.0);
  for (int t = 0; t < l; ++t) {
    const double* hr = h.row(t);
    double* dh = h.grow(t);
    double acc = 0.0;
    for (int i = 0; i < c; ++i) {
      acc += dmu[i] * hr[i] + dm2[i] * hr[i] * hr[i];
      dh[i] += tr.alpha[t] * (dmu[i] + 2.0 * hr[i] * dm2[i]);
    }
    dalpha[t] = acc;
  }

  double mix = 0.0;
  for (int t = 0; t < l; ++t) mix += tr.alpha[t] * dalpha[t];
  for (int t = 0; t < l; ++t) {
    const double de = tr.alpha[t] * (dalpha[t] - mix);
    if (de == 0.0) continue;
    // e_t = v . tanh(W h_t + b)
    double* dh = h.grow(t);
    for (int j = 0; j < a; ++j) {
      const double dz = de * v.t.v()[j];
      v.t.g()[j] += de * tr.z[t][j];
      const double dq = dz * (1.0 - tr.z[t][j] * tr.z[t][j]);
      if (dq == 0.0) continue;
      b.t.g()[j] += dq;
      kern::axpy(dq, h.row(t), w.t.grow(j), c);
      kern::axpy(dq, w.t.row(j), dh, c);
    }
  }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->t.size(), 0.0);
    v_.emplace_back(p->t.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    if (!p->trainable) {
      p->t.zero_grad();
      continue;
    }
    kern::active().adam(p->t.v(), p->t.g(), m_[i].data(), v_[i].data(), p->t.size(),
                        cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, bc1, bc2);
  }
}

// ---------------------------------------------------------------------------
// grad_check and init
// ---------------------------------------------------------------------------

double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& point,
                  const std::vector<double>& analytic_grad, double step) {
  if (point.size() != analytic_grad.size())
    throw DataError("grad_check: gradient size mismatch");
  double worst = 0.0;
  std::vector<double> x = point;
  for (size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double fp = f(x);
    x[i] = keep - step;
    const double fm = f(x);
    x[i] = keep;
    const double fd = (fp - fm) / (2.0 * step);
    const double an = analytic_grad[i];
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

void kaiming_uniform(Tensor& t, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / std::max(fan_in, 1));
  for (size_t i = 0; i < t.size(); ++i) t.v()[i] = rng.uniform(-bound, bound);
}

void init_parameters(const std::vector<Parameter*>& params, uint64_t seed) {
  for (Parameter* p : params) {
    Rng rng(derive_seed(seed, "init/" + p->name));
    const auto& shape = p->t.shape();
    if (ends_with(p->name, ".gamma") || ends_with(p->name, ".run_var")) {
      p->t.fill(1.0);
    } else if (ends_with(p->name, ".beta") || ends_with(p->name, ".run_mean") ||
               ends_with(p->name, ".b") || ends_with(p->name, ".b1") ||
               ends_with(p->name, ".b2")) {
      p->t.fill(0.0);
    } else if (shape.size() == 3) {
      kaiming_uniform(p->t, shape[1] * shape[2], rng);  // conv: K * C_in
    } else if (shape.size() == 2) {
      kaiming_uniform(p->t, shape[1], rng);
    } else {
      kaiming_uniform(p->t, shape.empty() ? 1 : shape[0], rng);
    }
    p->t.zero_grad();
  }
}

}  // namespace canid::gradnet
