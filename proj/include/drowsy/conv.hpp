#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/gemm.hpp"
#include "drowsy/tape.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

/// Convolution weights plus per-output-channel bias.
/// weights layout: [out_channel, in_channel, (time,) height, width].
struct Kernel {
  Tensor weights;
  Tensor bias;

  std::size_t out_channels() const { return weights.extent(0); }
  std::size_t in_channels() const { return weights.extent(1); }

  void validate() const {
    if (weights.rank() != 4 && weights.rank() != 5)
      throw ShapeError("kernel weights must be rank 4 or 5, got " + weights.shape_str());
    if (bias.rank() != 1 || bias.extent(0) != weights.extent(0))
      throw ShapeError("kernel bias must be [out_channel], got " + bias.shape_str());
    if (!weights.all_finite() || !bias.all_finite())
      throw ValidationError("kernel contains non-finite values");
  }
};

namespace conv_detail {

struct Dims {
  long ci, t, h, w;        // input
  long co, kt, kh, kw;     // kernel
  long st, sh, sw;         // strides
  long pt, ph, pw;         // paddings
  long to, ho, wo;         // output
  std::size_t k_rows, positions;
};

inline long out_extent(long in, long k, long stride, long pad, const char* axis) {
  if (pad < 0) throw ValidationError(std::string("negative padding on axis ") + axis);
  if (stride < 1) throw ValidationError(std::string("stride < 1 on axis ") + axis);
  const long span = in + 2 * pad - k;
  if (span < 0)
    throw ShapeError(std::string("kernel does not fit padded input on axis ") + axis + ": " +
                     std::to_string(k) + " > " + std::to_string(in + 2 * pad));
  if (span % stride != 0)
    throw ShapeError(std::string("output extent is fractional on axis ") + axis + ": (" +
                     std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                     std::to_string(k) + ") not divisible by stride " + std::to_string(stride));
  return span / stride + 1;
}

inline Dims plan(const Tensor& x, const Tensor& w,
                 long st, long sh, long sw, long pt, long ph, long pw) {
  if (x.rank() != 4) throw ShapeError("conv input must be [channel,time,height,width], got " + x.shape_str());
  if (w.rank() != 5) throw ShapeError("conv kernel must be rank 5, got " + w.shape_str());
  Dims d;
  d.ci = static_cast<long>(x.extent(0));
  d.t = static_cast<long>(x.extent(1));
  d.h = static_cast<long>(x.extent(2));
  d.w = static_cast<long>(x.extent(3));
  d.co = static_cast<long>(w.extent(0));
  d.kt = static_cast<long>(w.extent(2));
  d.kh = static_cast<long>(w.extent(3));
  d.kw = static_cast<long>(w.extent(4));
  if (static_cast<long>(w.extent(1)) != d.ci)
    throw ShapeError("input/kernel mismatch on axis channel: " + std::to_string(d.ci) +
                     " vs " + std::to_string(w.extent(1)));
  d.st = st; d.sh = sh; d.sw = sw;
  d.pt = pt; d.ph = ph; d.pw = pw;
  d.to = out_extent(d.t, d.kt, st, pt, "time");
  d.ho = out_extent(d.h, d.kh, sh, ph, "height");
  d.wo = out_extent(d.w, d.kw, sw, pw, "width");
  d.k_rows = static_cast<std::size_t>(d.ci * d.kt * d.kh * d.kw);
  d.positions = static_cast<std::size_t>(d.to * d.ho * d.wo);
  return d;
}

/// Lowered input: col[k_rows x positions] with row index (ci, a, b, c)
/// and column index (to, ho, wo). Out-of-bounds taps are zero.
inline void im2col(const Tensor& x, const Dims& d, std::vector<double>& col) {
  col.assign(d.k_rows * d.positions, 0.0);
  const double* src = x.data();
  const long plane = d.h * d.w;
  double* row = col.data();
  for (long ci = 0; ci < d.ci; ++ci)
    for (long a = 0; a < d.kt; ++a)
      for (long b = 0; b < d.kh; ++b)
        for (long c = 0; c < d.kw; ++c, row += d.positions) {
          double* dst = row;
          for (long to = 0; to < d.to; ++to, dst += d.ho * d.wo) {
            const long ti = to * d.st + a - d.pt;
            if (ti < 0 || ti >= d.t) continue;  // stays zero
            const double* tslice = src + (ci * d.t + ti) * plane;
            for (long io = 0; io < d.ho; ++io) {
              const long ii = io * d.sh + b - d.ph;
              if (ii < 0 || ii >= d.h) continue;
              const double* xrow = tslice + ii * d.w;
              double* orow = dst + io * d.wo;
              if (d.sw == 1) {
                // j_in = jo + c - pw must land in [0, w)
                const long lo = std::max<long>(0, d.pw - c);
                const long hi = std::min<long>(d.wo - 1, d.w - 1 - c + d.pw);
                if (lo <= hi)
                  std::memcpy(orow + lo, xrow + lo + c - d.pw,
                              static_cast<std::size_t>(hi - lo + 1) * sizeof(double));
              } else {
                for (long jo = 0; jo < d.wo; ++jo) {
                  const long ji = jo * d.sw + c - d.pw;
                  if (ji >= 0 && ji < d.w) orow[jo] = xrow[ji];
                }
              }
            }
          }
        }
}

/// Transpose of im2col: scatter-add col rows back into an input-shaped
/// accumulator.
inline void col2im_acc(const std::vector<double>& col, const Dims& d, Tensor& x_acc) {
  double* dst_base = x_acc.data();
  const long plane = d.h * d.w;
  const double* row = col.data();
  for (long ci = 0; ci < d.ci; ++ci)
    for (long a = 0; a < d.kt; ++a)
      for (long b = 0; b < d.kh; ++b)
        for (long c = 0; c < d.kw; ++c, row += d.positions) {
          const double* src = row;
          for (long to = 0; to < d.to; ++to, src += d.ho * d.wo) {
            const long ti = to * d.st + a - d.pt;
            if (ti < 0 || ti >= d.t) continue;
            double* tslice = dst_base + (ci * d.t + ti) * plane;
            for (long io = 0; io < d.ho; ++io) {
              const long ii = io * d.sh + b - d.ph;
              if (ii < 0 || ii >= d.h) continue;
              double* xrow = tslice + ii * d.w;
              const double* orow = src + io * d.wo;
              if (d.sw == 1) {
                const long lo = std::max<long>(0, d.pw - c);
                const long hi = std::min<long>(d.wo - 1, d.w - 1 - c + d.pw);
                for (long jo = lo; jo <= hi; ++jo) xrow[jo + c - d.pw] += orow[jo];
              } else {
                for (long jo = 0; jo < d.wo; ++jo) {
                  const long ji = jo * d.sw + c - d.pw;
                  if (ji >= 0 && ji < d.w) xrow[ji] += orow[jo];
                }
              }
            }
          }
        }
}

inline Tensor forward(const Tensor& x, const Tensor& w, const Tensor& bias, const Dims& d) {
  std::vector<double> col;
  im2col(x, d, col);
  Tensor out({static_cast<std::size_t>(d.co), static_cast<std::size_t>(d.to),
              static_cast<std::size_t>(d.ho), static_cast<std::size_t>(d.wo)});
  gemm_nn_acc(static_cast<std::size_t>(d.co), d.positions, d.k_rows,
              w.data(), d.k_rows, col.data(), d.positions, out.data(), d.positions);
  for (long co = 0; co < d.co; ++co) {
    const double b = bias[static_cast<std::size_t>(co)];
    double* o = out.data() + co * static_cast<long>(d.positions);
    for (std::size_t p = 0; p < d.positions; ++p) o[p] += b;
  }
  return out;
}

}  // namespace conv_detail

/// 3D cross-correlation of x[Ci,T,H,W] with k.weights[Co,Ci,kt,kh,kw].
/// Output extents must divide exactly: To = (T + 2*pt - kt)/st + 1.
inline Tensor conv3d(const Tensor& x, const Kernel& k,
                     long st, long sh, long sw, long pt, long ph, long pw) {
  k.validate();
  const auto d = conv_detail::plan(x, k.weights, st, sh, sw, pt, ph, pw);
  return conv_detail::forward(x, k.weights, k.bias, d);
}

/// 2D cross-correlation of x[Ci,H,W] with k.weights[Co,Ci,kh,kw].
inline Tensor conv2d(const Tensor& x, const Kernel& k, long stride, long padding) {
  k.validate();
  if (x.rank() != 3)
    throw ShapeError("conv2d input must be [channel,height,width], got " + x.shape_str());
  const Tensor x4 = x.reshaped({x.extent(0), 1, x.extent(1), x.extent(2)});
  const Tensor w5 = k.weights.reshaped({k.weights.extent(0), k.weights.extent(1), 1,
                                        k.weights.extent(2), k.weights.extent(3)});
  const auto d = conv_detail::plan(x4, w5, 1, stride, stride, 0, padding, padding);
  Tensor out = conv_detail::forward(x4, w5, k.bias, d);
  return out.reshaped({out.extent(0), out.extent(2), out.extent(3)});
}

/// Reverse every spatial (and temporal) axis of the kernel per
/// (out_channel, in_channel) slice.
inline Kernel flip_kernel(const Kernel& k) {
  Kernel f;
  f.bias = k.bias;
  f.weights = Tensor(k.weights.shape());
  const auto& s = k.weights.shape();
  const std::size_t co = s[0], ci = s[1];
  const std::size_t kt = (s.size() == 5) ? s[2] : 1;
  const std::size_t kh = s[s.size() - 2], kw = s[s.size() - 1];
  const std::size_t vol = kt * kh * kw;
  for (std::size_t oc = 0; oc < co; ++oc)
    for (std::size_t ic = 0; ic < ci; ++ic) {
      const double* src = k.weights.data() + (oc * ci + ic) * vol;
      double* dst = f.weights.data() + (oc * ci + ic) * vol;
      for (std::size_t a = 0; a < kt; ++a)
        for (std::size_t b = 0; b < kh; ++b)
          for (std::size_t c = 0; c < kw; ++c)
            dst[((kt - 1 - a) * kh + (kh - 1 - b)) * kw + (kw - 1 - c)] =
                src[(a * kh + b) * kw + c];
    }
  return f;
}

/// Signal-processing convolution (kernel applied flipped):
/// out(i,j) = sum_{m,n} x(i-m, j-n) * w(m,n), evaluated on the same
/// padded/strided output grid as conv2d.
inline Tensor convolve2d(const Tensor& x, const Kernel& k, long stride, long padding) {
  return conv2d(x, flip_kernel(k), stride, padding);
}

inline Tensor convolve3d(const Tensor& x, const Kernel& k,
                         long st, long sh, long sw, long pt, long ph, long pw) {
  return conv3d(x, flip_kernel(k), st, sh, sw, pt, ph, pw);
}

/// Taped conv3d: records dW, db and (when required) dX pulls.
/// The lowered matrix is rebuilt during backward instead of being kept
/// alive with the activation.
inline Value conv3d_op(Tape& tape, Value x, Value w, Value b,
                       long st, long sh, long sw, long pt, long ph, long pw) {
  const Tensor& xt = tape.val(x);
  const Tensor& wt = tape.val(w);
  const Tensor& bt = tape.val(b);
  if (bt.rank() != 1 || bt.extent(0) != wt.extent(0))
    throw ShapeError("conv bias must be [out_channel], got " + bt.shape_str());
  const auto d = conv_detail::plan(xt, wt, st, sh, sw, pt, ph, pw);
  Tensor out = conv_detail::forward(xt, wt, bt, d);
  const bool needs = tape.needs(x) || tape.needs(w) || tape.needs(b);
  Value v = tape.make_node(std::move(out), needs);
  tape.set_pull(v, [x, w, b, d](Tape& t, const Tensor& g) {
    const std::size_t co = static_cast<std::size_t>(d.co);
    if (t.needs(b)) {
      Tensor& db = t.grad_buf(b);
      for (std::size_t c = 0; c < co; ++c) {
        const double* gr = g.data() + c * d.positions;
        double s0 = 0;
        for (std::size_t p = 0; p < d.positions; ++p) s0 += gr[p];
        db[c] += s0;
      }
    }
    if (t.needs(w)) {
      std::vector<double> col;
      conv_detail::im2col(t.val(x), d, col);
      gemm_nt_acc(co, d.k_rows, d.positions, g.data(), d.positions,
                  col.data(), d.positions, t.grad_buf(w).data(), d.k_rows);
    }
    if (t.needs(x)) {
      std::vector<double> wT(d.k_rows * co);
      transpose(co, d.k_rows, t.val(w).data(), wT.data());
      std::vector<double> dcol(d.k_rows * d.positions, 0.0);
      gemm_nn_acc(d.k_rows, d.positions, co, wT.data(), co,
                  g.data(), d.positions, dcol.data(), d.positions);
      conv_detail::col2im_acc(dcol, d, t.grad_buf(x));
    }
  });
  return v;
}

}  // namespace drowsy
