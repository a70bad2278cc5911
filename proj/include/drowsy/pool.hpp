#pragma once

#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/tape.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

namespace pool_detail {

struct Dims {
  long c, t, h, w;
  long wt, wh, ww;
  long st, sh, sw;
  long to, ho, wo;
};

inline long out_extent(long in, long win, long stride, const char* axis) {
  if (win < 1 || stride < 1)
    throw ValidationError(std::string("pool window/stride must be >= 1 on axis ") + axis);
  if (win > in)
    throw ShapeError(std::string("pool window exceeds input on axis ") + axis + ": " +
                     std::to_string(win) + " > " + std::to_string(in));
  return (in - win) / stride + 1;  // trailing remainder is dropped
}

inline Dims plan(const Tensor& x, long wt, long wh, long ww, long st, long sh, long sw) {
  if (x.rank() != 4)
    throw ShapeError("pool input must be [channel,time,height,width], got " + x.shape_str());
  Dims d;
  d.c = static_cast<long>(x.extent(0));
  d.t = static_cast<long>(x.extent(1));
  d.h = static_cast<long>(x.extent(2));
  d.w = static_cast<long>(x.extent(3));
  d.wt = wt; d.wh = wh; d.ww = ww;
  d.st = st; d.sh = sh; d.sw = sw;
  d.to = out_extent(d.t, wt, st, "time");
  d.ho = out_extent(d.h, wh, sh, "height");
  d.wo = out_extent(d.w, ww, sw, "width");
  return d;
}

/// Forward max pool; when `argmax` is non-null it receives the flat input
/// index of each window maximum (first occurrence wins ties).
inline Tensor forward(const Tensor& x, const Dims& d, std::vector<std::size_t>* argmax) {
  Tensor out({static_cast<std::size_t>(d.c), static_cast<std::size_t>(d.to),
              static_cast<std::size_t>(d.ho), static_cast<std::size_t>(d.wo)});
  if (argmax) argmax->resize(out.numel());
  const double* src = x.data();
  double* dst = out.data();
  const long plane = d.h * d.w;
  std::size_t o = 0;
  for (long c = 0; c < d.c; ++c) {
    const double* chan = src + c * d.t * plane;
    for (long to = 0; to < d.to; ++to)
      for (long io = 0; io < d.ho; ++io)
        for (long jo = 0; jo < d.wo; ++jo, ++o) {
          const long t0 = to * d.st, i0 = io * d.sh, j0 = jo * d.sw;
          double best = chan[(t0 * d.h + i0) * d.w + j0];
          long best_idx = (t0 * d.h + i0) * d.w + j0;
          for (long a = 0; a < d.wt; ++a)
            for (long b = 0; b < d.wh; ++b) {
              const double* row = chan + ((t0 + a) * d.h + (i0 + b)) * d.w + j0;
              for (long cc = 0; cc < d.ww; ++cc)
                if (row[cc] > best) {
                  best = row[cc];
                  best_idx = ((t0 + a) * d.h + (i0 + b)) * d.w + j0 + cc;
                }
            }
          dst[o] = best;
          if (argmax) (*argmax)[o] = static_cast<std::size_t>(c * d.t * plane + best_idx);
        }
  }
  return out;
}

}  // namespace pool_detail

/// Max pool over [time,height,width] windows with floor output extents.
/// Ties resolve to the earliest element in (time,height,width) scan order.
inline Tensor maxpool3d(const Tensor& x, long wt, long wh, long ww,
                        long st, long sh, long sw) {
  const auto d = pool_detail::plan(x, wt, wh, ww, st, sh, sw);
  return pool_detail::forward(x, d, nullptr);
}

/// Taped max pool: backward routes each output gradient to the recorded
/// argmax element only.
inline Value maxpool3d_op(Tape& tape, Value x, long wt, long wh, long ww,
                          long st, long sh, long sw) {
  const auto d = pool_detail::plan(tape.val(x), wt, wh, ww, st, sh, sw);
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  Tensor out = pool_detail::forward(tape.val(x), d, argmax.get());
  Value v = tape.make_node(std::move(out), tape.needs(x));
  tape.set_pull(v, [x, argmax](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    Tensor& dx = t.grad_buf(x);
    for (std::size_t o = 0; o < g.numel(); ++o) dx[(*argmax)[o]] += g[o];
  });
  return v;
}

/// Mean over all (time,height,width) positions per channel: [C,T,H,W] -> [C].
inline Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4)
    throw ShapeError("global_avg_pool input must be [channel,time,height,width], got " +
                     x.shape_str());
  const std::size_t c = x.extent(0);
  const std::size_t vol = x.extent(1) * x.extent(2) * x.extent(3);
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* p = x.data() + ch * vol;
    double s = 0;
    for (std::size_t i = 0; i < vol; ++i) s += p[i];
    out[ch] = s / static_cast<double>(vol);
  }
  return out;
}

inline Value global_avg_pool_op(Tape& tape, Value x) {
  const Tensor& xt = tape.val(x);
  Tensor out = global_avg_pool(xt);
  const std::size_t vol = xt.extent(1) * xt.extent(2) * xt.extent(3);
  Value v = tape.make_node(std::move(out), tape.needs(x));
  tape.set_pull(v, [x, vol](Tape& t, const Tensor& g) {
    if (!t.needs(x)) return;
    Tensor& dx = t.grad_buf(x);
    const double inv = 1.0 / static_cast<double>(vol);
    for (std::size_t ch = 0; ch < g.numel(); ++ch) {
      const double gv = g[ch] * inv;
      double* p = dx.data() + ch * vol;
      for (std::size_t i = 0; i < vol; ++i) p[i] += gv;
    }
  });
  return v;
}

}  // namespace drowsy
