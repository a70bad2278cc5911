#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/gemm.hpp"
#include "drowsy/pool.hpp"
#include "drowsy/rng.hpp"
#include "drowsy/tape.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

// ---------------------------------------------------------------------------
// Pointwise activations
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.numel(); ++i)
    if (y[i] < 0) y[i] = 0;
  return y;
}

inline double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = sigmoid_scalar(y[i]);
  return y;
}

inline Value relu_op(Tape& tape, Value x) {
  Tensor y = relu(tape.val(x));
  Value v = tape.make_node(std::move(y), tape.needs(x));
  tape.set_pull(v, [x, v](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    const Tensor& xt = t.val(x);
    Tensor& dx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (xt[i] > 0) dx[i] += g[i];
  });
  return v;
}

inline Value sigmoid_op(Tape& tape, Value x) {
  Tensor y = sigmoid(tape.val(x));
  Value v = tape.make_node(std::move(y), tape.needs(x));
  tape.set_pull(v, [x, v](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    const Tensor& yt = t.val(v);
    Tensor& dx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * yt[i] * (1.0 - yt[i]);
  });
  return v;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy
// ---------------------------------------------------------------------------

/// Numerically stable softmax over a rank-1 tensor.
inline Tensor softmax(const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("softmax expects a vector, got " + x.shape_str());
  Tensor y = x;
  double mx = y[0];
  for (std::size_t i = 1; i < y.numel(); ++i) mx = std::max(mx, y[i]);
  double denom = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    y[i] = std::exp(y[i] - mx);
    denom += y[i];
  }
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] /= denom;
  return y;
}

inline Value softmax_op(Tape& tape, Value x) {
  Tensor y = softmax(tape.val(x));
  Value v = tape.make_node(std::move(y), tape.needs(x));
  tape.set_pull(v, [x, v](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    const Tensor& yt = t.val(v);
    Tensor& dx = t.grad_buf(x);
    double inner = 0;
    for (std::size_t i = 0; i < g.numel(); ++i) inner += g[i] * yt[i];
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += yt[i] * (g[i] - inner);
  });
  return v;
}

constexpr double kLogClamp = 1e-12;  // floor applied to probabilities before log

/// Loss = sum_i -(p_i * log q_i) for a target distribution p and a
/// probability vector q. q must be normalized; it is clamped below by
/// 1e-12 before the log.
inline double cross_entropy(const Tensor& p, const Tensor& q) {
  check_same_shape(p, q, "cross_entropy");
  if (p.rank() != 1) throw ShapeError("cross_entropy expects vectors, got " + p.shape_str());
  double qsum = 0;
  for (std::size_t i = 0; i < q.numel(); ++i) {
    if (q[i] < 0) throw ValidationError("cross_entropy probabilities must be non-negative");
    qsum += q[i];
  }
  if (std::abs(qsum - 1.0) > 1e-6)
    throw ValidationError("cross_entropy probabilities must sum to 1, got " +
                          std::to_string(qsum));
  double loss = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    if (p[i] == 0.0) continue;
    loss -= p[i] * std::log(std::max(q[i], kLogClamp));
  }
  return loss;
}

/// One-hot convenience: loss for class `label`.
inline double cross_entropy(std::size_t label, const Tensor& q) {
  if (q.rank() != 1) throw ShapeError("cross_entropy expects a vector, got " + q.shape_str());
  if (label >= q.numel())
    throw ValidationError("cross_entropy label " + std::to_string(label) + " out of range for " +
                          q.shape_str());
  Tensor p({q.numel()});
  p[label] = 1.0;
  return cross_entropy(p, q);
}

inline Value cross_entropy_op(Tape& tape, Value probs, std::size_t label) {
  const Tensor& q = tape.val(probs);
  Tensor loss = Tensor::scalar(cross_entropy(label, q));
  Value v = tape.make_node(std::move(loss), tape.needs(probs));
  tape.set_pull(v, [probs, label](Tape& t, const Tensor& g) {
    if (!t.needs(probs)) return;
    const double q_l = std::max(t.val(probs)[label], kLogClamp);
    t.grad_buf(probs)[label] += -g[0] / q_l;
  });
  return v;
}

// ---------------------------------------------------------------------------
// Dense (fully connected) layer on vectors
// ---------------------------------------------------------------------------

/// y = W x + b with W [out,in], x [in], optional b [out] (empty tensor skips
/// the bias term).
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw ShapeError("dense weights must be [out,in], got " + w.shape_str());
  if (x.rank() != 1 || x.extent(0) != w.extent(1))
    throw ShapeError("dense input/weight mismatch on axis channel: " + x.shape_str() + " vs " +
                     w.shape_str());
  const std::size_t out = w.extent(0), in = w.extent(1);
  const bool with_bias = !b.empty();
  if (with_bias && (b.rank() != 1 || b.extent(0) != out))
    throw ShapeError("dense bias must be [out], got " + b.shape_str());
  Tensor y({out});
  for (std::size_t o = 0; o < out; ++o) y[o] = with_bias ? b[o] : 0.0;
  gemv_acc(out, in, w.data(), in, x.data(), y.data());
  return y;
}

/// Bias-free variant: y = W x.
inline Tensor dense(const Tensor& x, const Tensor& w) { return dense(x, w, Tensor()); }

inline Value dense_op(Tape& tape, Value x, Value w, Value b) {
  Tensor y = dense(tape.val(x), tape.val(w), tape.val(b));
  const bool needs = tape.needs(x) || tape.needs(w) || tape.needs(b);
  Value v = tape.make_node(std::move(y), needs);
  tape.set_pull(v, [x, w, b](Tape& t, const Tensor& g) {
    const Tensor& wt = t.val(w);
    const std::size_t out = wt.extent(0), in = wt.extent(1);
    if (t.needs(b) && !t.val(b).empty()) {
      Tensor& db = t.grad_buf(b);
      for (std::size_t o = 0; o < out; ++o) db[o] += g[o];
    }
    if (t.needs(w)) {
      const Tensor& xt = t.val(x);
      Tensor& dw = t.grad_buf(w);
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        double* row = dw.data() + o * in;
        const double* xp = xt.data();
        for (std::size_t i = 0; i < in; ++i) row[i] += go * xp[i];
      }
    }
    if (t.needs(x)) {
      Tensor& dx = t.grad_buf(x);
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        const double* row = wt.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dx[i] += go * row[i];
      }
    }
  });
  return v;
}

/// Weight-only taped dense layer: y = W x.
inline Value dense_nb_op(Tape& tape, Value x, Value w) {
  Tensor y = dense(tape.val(x), tape.val(w));
  const bool needs = tape.needs(x) || tape.needs(w);
  Value v = tape.make_node(std::move(y), needs);
  tape.set_pull(v, [x, w](Tape& t, const Tensor& g) {
    const Tensor& wt = t.val(w);
    const std::size_t out = wt.extent(0), in = wt.extent(1);
    if (t.needs(w)) {
      const Tensor& xt = t.val(x);
      Tensor& dw = t.grad_buf(w);
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        double* row = dw.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += go * xt[i];
      }
    }
    if (t.needs(x)) {
      Tensor& dx = t.grad_buf(x);
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        const double* row = wt.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dx[i] += go * row[i];
      }
    }
  });
  return v;
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling, counter-based mask)
// ---------------------------------------------------------------------------

/// Element i survives when CounterRng{seed}.uniform(i) >= rate. The mask is
/// a pure function of (seed, i), so a given training step replays
/// identically.
inline bool dropout_keeps(std::uint64_t seed, std::size_t i, double rate) {
  return CounterRng{seed}.uniform(i) >= rate;
}

/// Training mode zeroes dropped elements and scales survivors by
/// 1/(1-rate); inference mode is the identity.
inline Tensor dropout(const Tensor& x, double rate, std::uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw ValidationError("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor y = x;
  for (std::size_t i = 0; i < y.numel(); ++i)
    y[i] = dropout_keeps(seed, i, rate) ? y[i] * keep_scale : 0.0;
  return y;
}

inline Value dropout_op(Tape& tape, Value x, double rate, std::uint64_t key) {
  if (rate < 0.0 || rate >= 1.0)
    throw ValidationError("dropout rate must be in [0,1), got " + std::to_string(rate));
  const Tensor& xt = tape.val(x);
  if (rate == 0.0) {
    Tensor y = xt;
    Value v = tape.make_node(std::move(y), tape.needs(x));
    tape.set_pull(v, [x](Tape& t, const Tensor& g) {
      if (!t.needs(x)) return;
      t.accumulate(x, g);
    });
    return v;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<bool>>(xt.numel());
  Tensor y = xt;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const bool keep = dropout_keeps(key, i, rate);
    (*mask)[i] = keep;
    y[i] = keep ? y[i] * keep_scale : 0.0;
  }
  Value v = tape.make_node(std::move(y), tape.needs(x));
  tape.set_pull(v, [x, mask, keep_scale](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    Tensor& dx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if ((*mask)[i]) dx[i] += g[i] * keep_scale;
  });
  return v;
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Value add_op(Tape& tape, Value a, Value b) {
  Tensor y = add(tape.val(a), tape.val(b));
  Value v = tape.make_node(std::move(y), tape.needs(a) || tape.needs(b));
  tape.set_pull(v, [a, b](Tape& t, const Tensor& g) {
    if (t.needs(a)) t.accumulate(a, g);
    if (t.needs(b)) t.accumulate(b, g);
  });
  return v;
}

inline Value sub_op(Tape& tape, Value a, Value b) {
  Tensor y = add(tape.val(a), scale(tape.val(b), -1.0));
  Value v = tape.make_node(std::move(y), tape.needs(a) || tape.needs(b));
  tape.set_pull(v, [a, b](Tape& t, const Tensor& g) {
    if (t.needs(a)) t.accumulate(a, g);
    if (t.needs(b)) {
      Tensor& db = t.grad_buf(b);
      for (std::size_t i = 0; i < g.numel(); ++i) db[i] -= g[i];
    }
  });
  return v;
}

inline Value scale_op(Tape& tape, Value x, double c) {
  Tensor y = scale(tape.val(x), c);
  Value v = tape.make_node(std::move(y), tape.needs(x));
  tape.set_pull(v, [x, c](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    Tensor& dx = t.grad_buf(x);
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += c * g[i];
  });
  return v;
}

/// Scalar sum of squared entries.
inline Value square_sum_op(Tape& tape, Value x) {
  Tensor y = Tensor::scalar(sum_squares(tape.val(x)));
  Value v = tape.make_node(std::move(y), tape.needs(x));
  tape.set_pull(v, [x](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    const Tensor& xt = t.val(x);
    Tensor& dx = t.grad_buf(x);
    for (std::size_t i = 0; i < xt.numel(); ++i) dx[i] += 2.0 * xt[i] * g[0];
  });
  return v;
}

// ---------------------------------------------------------------------------
// Shape plumbing: reshape, concatenation
// ---------------------------------------------------------------------------

inline Value reshape_op(Tape& tape, Value x, std::vector<std::size_t> shape) {
  Tensor y = tape.val(x).reshaped(shape);
  auto old_shape = std::make_shared<std::vector<std::size_t>>(tape.val(x).shape());
  Value v = tape.make_node(std::move(y), tape.needs(x));
  tape.set_pull(v, [x, old_shape](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    t.accumulate(x, g.reshaped(*old_shape));
  });
  return v;
}

/// Concatenate rank-1 tensors end to end.
inline Value concat_vec_op(Tape& tape, const std::vector<Value>& parts) {
  if (parts.empty()) throw ValidationError("concat of zero tensors");
  std::size_t total = 0;
  for (Value p : parts) {
    if (tape.val(p).rank() != 1)
      throw ShapeError("vector concat expects rank-1 parts, got " + tape.val(p).shape_str());
    total += tape.val(p).numel();
  }
  Tensor y({total});
  std::size_t off = 0;
  bool needs = false;
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  for (Value p : parts) {
    const Tensor& pt = tape.val(p);
    offsets->push_back(off);
    for (std::size_t i = 0; i < pt.numel(); ++i) y[off + i] = pt[i];
    off += pt.numel();
    needs = needs || tape.needs(p);
  }
  Value v = tape.make_node(std::move(y), needs);
  auto parts_copy = std::make_shared<std::vector<Value>>(parts);
  tape.set_pull(v, [parts_copy, offsets](Tape& t, const Tensor& g) {
    for (std::size_t k = 0; k < parts_copy->size(); ++k) {
      Value p = (*parts_copy)[k];
      if (!t.needs(p)) continue;
      Tensor& dp = t.grad_buf(p);
      const std::size_t off2 = (*offsets)[k];
      for (std::size_t i = 0; i < dp.numel(); ++i) dp[i] += g[off2 + i];
    }
  });
  return v;
}

/// Concatenate [C,T,H,W] tensors along the channel axis; trailing extents
/// must agree.
inline Value concat_channels_op(Tape& tape, const std::vector<Value>& parts) {
  if (parts.empty()) throw ValidationError("concat of zero tensors");
  const Tensor& first = tape.val(parts[0]);
  if (first.rank() != 4)
    throw ShapeError("channel concat expects [channel,time,height,width], got " +
                     first.shape_str());
  const std::size_t t_ext = first.extent(1), h = first.extent(2), w = first.extent(3);
  std::size_t channels = 0;
  bool needs = false;
  for (Value p : parts) {
    const Tensor& pt = tape.val(p);
    if (pt.rank() != 4 || pt.extent(1) != t_ext || pt.extent(2) != h || pt.extent(3) != w)
      throw ShapeError("channel concat extents disagree: " + first.shape_str() + " vs " +
                       pt.shape_str());
    channels += pt.extent(0);
    needs = needs || tape.needs(p);
  }
  const std::size_t vol = t_ext * h * w;
  Tensor y({channels, t_ext, h, w});
  std::size_t off = 0;
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  for (Value p : parts) {
    const Tensor& pt = tape.val(p);
    offsets->push_back(off);
    std::copy(pt.data(), pt.data() + pt.numel(), y.data() + off);
    off += pt.numel();
  }
  Value v = tape.make_node(std::move(y), needs);
  auto parts_copy = std::make_shared<std::vector<Value>>(parts);
  tape.set_pull(v, [parts_copy, offsets](Tape& t, const Tensor& g) {
    for (std::size_t k = 0; k < parts_copy->size(); ++k) {
      Value p = (*parts_copy)[k];
      if (!t.needs(p)) continue;
      Tensor& dp = t.grad_buf(p);
      const double* gp = g.data() + (*offsets)[k];
      for (std::size_t i = 0; i < dp.numel(); ++i) dp[i] += gp[i];
    }
  });
  return v;
}

// ---------------------------------------------------------------------------
// Channel gating (squeeze-and-excitation building blocks)
// ---------------------------------------------------------------------------

/// y[c,t,i,j] = x[c,t,i,j] * s[c] for x [C,T,H,W] and gate s [C].
inline Tensor channel_scale(const Tensor& x, const Tensor& s) {
  if (x.rank() != 4)
    throw ShapeError("channel_scale input must be [channel,time,height,width], got " +
                     x.shape_str());
  if (s.rank() != 1 || s.extent(0) != x.extent(0))
    throw ShapeError("channel_scale gate/input mismatch on axis channel: " + s.shape_str() +
                     " vs " + x.shape_str());
  const std::size_t c = x.extent(0);
  const std::size_t vol = x.extent(1) * x.extent(2) * x.extent(3);
  Tensor y = x;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double sv = s[ch];
    double* p = y.data() + ch * vol;
    for (std::size_t i = 0; i < vol; ++i) p[i] *= sv;
  }
  return y;
}

inline Value channel_scale_op(Tape& tape, Value x, Value s) {
  Tensor y = channel_scale(tape.val(x), tape.val(s));
  const bool needs = tape.needs(x) || tape.needs(s);
  Value v = tape.make_node(std::move(y), needs);
  tape.set_pull(v, [x, s](Tape& t, const Tensor& g) {
    const Tensor& xt = t.val(x);
    const Tensor& st = t.val(s);
    const std::size_t c = xt.extent(0);
    const std::size_t vol = xt.extent(1) * xt.extent(2) * xt.extent(3);
    if (t.needs(s)) {
      Tensor& ds = t.grad_buf(s);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* gp = g.data() + ch * vol;
        const double* xp = xt.data() + ch * vol;
        double acc = 0;
        for (std::size_t i = 0; i < vol; ++i) acc += gp[i] * xp[i];
        ds[ch] += acc;
      }
    }
    if (t.needs(x)) {
      Tensor& dx = t.grad_buf(x);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double sv = st[ch];
        const double* gp = g.data() + ch * vol;
        double* dp = dx.data() + ch * vol;
        for (std::size_t i = 0; i < vol; ++i) dp[i] += gp[i] * sv;
      }
    }
  });
  return v;
}

inline void se_check_shapes(const Tensor& x, const Tensor& w1, const Tensor& w2) {
  if (x.rank() != 4)
    throw ShapeError("se_block input must be [channel,time,height,width], got " + x.shape_str());
  const std::size_t c = x.extent(0);
  if (w1.rank() != 2 || w1.extent(1) != c)
    throw ShapeError("se_block squeeze weights must be [C/r,C] with C=" + std::to_string(c) +
                     ", got " + w1.shape_str());
  const std::size_t mid = w1.extent(0);
  if (mid == 0 || c % mid != 0)
    throw ShapeError("se_block reduction must divide channel count " + std::to_string(c) +
                     ", got bottleneck " + std::to_string(mid));
  if (w2.rank() != 2 || w2.extent(0) != c || w2.extent(1) != mid)
    throw ShapeError("se_block excite weights must be [C,C/r], got " + w2.shape_str());
}

/// Squeeze-and-excitation: squeeze by global average pooling, excite with a
/// bias-free bottleneck sigmoid(W2 relu(W1 s)), rescale channels.
/// w1 [C/r, C], w2 [C, C/r].
inline Tensor se_block(const Tensor& x, const Tensor& w1, const Tensor& w2) {
  se_check_shapes(x, w1, w2);
  const Tensor gate = sigmoid(dense(relu(dense(global_avg_pool(x), w1)), w2));
  return channel_scale(x, gate);
}

inline Value se_block_op(Tape& tape, Value x, Value w1, Value w2) {
  se_check_shapes(tape.val(x), tape.val(w1), tape.val(w2));
  Value squeezed = global_avg_pool_op(tape, x);
  Value z = relu_op(tape, dense_nb_op(tape, squeezed, w1));
  Value gate = sigmoid_op(tape, dense_nb_op(tape, z, w2));
  return channel_scale_op(tape, x, gate);
}

}  // namespace drowsy
