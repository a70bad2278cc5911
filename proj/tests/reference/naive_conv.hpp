#pragma once

// Brute-force convolution references, written as plain nested loops with no
// shared code with the library implementation. Used as oracles.

#include <cstddef>

#include "drowsy/tensor.hpp"

namespace reference {

inline double pad_at(const drowsy::Tensor& x, long c, long t, long i, long j) {
  const long T = static_cast<long>(x.extent(1));
  const long H = static_cast<long>(x.extent(2));
  const long W = static_cast<long>(x.extent(3));
  if (t < 0 || t >= T || i < 0 || i >= H || j < 0 || j >= W) return 0.0;
  return x.at({static_cast<std::size_t>(c), static_cast<std::size_t>(t),
               static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
}

/// Sliding-window cross-correlation:
/// out(co,to,io,jo) = b(co) + sum x(ci, to*st+a-pt, io*sh+b-ph, jo*sw+c-pw) * w(co,ci,a,b,c)
inline drowsy::Tensor xcorr3d(const drowsy::Tensor& x, const drowsy::Tensor& w,
                              const drowsy::Tensor& bias, long st, long sh, long sw,
                              long pt, long ph, long pw) {
  const long Ci = static_cast<long>(x.extent(0));
  const long T = static_cast<long>(x.extent(1));
  const long H = static_cast<long>(x.extent(2));
  const long W = static_cast<long>(x.extent(3));
  const long Co = static_cast<long>(w.extent(0));
  const long Kt = static_cast<long>(w.extent(2));
  const long Kh = static_cast<long>(w.extent(3));
  const long Kw = static_cast<long>(w.extent(4));
  const long To = (T + 2 * pt - Kt) / st + 1;
  const long Ho = (H + 2 * ph - Kh) / sh + 1;
  const long Wo = (W + 2 * pw - Kw) / sw + 1;
  drowsy::Tensor out({static_cast<std::size_t>(Co), static_cast<std::size_t>(To),
                      static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
  for (long co = 0; co < Co; ++co)
    for (long to = 0; to < To; ++to)
      for (long io = 0; io < Ho; ++io)
        for (long jo = 0; jo < Wo; ++jo) {
          double acc = bias[static_cast<std::size_t>(co)];
          for (long ci = 0; ci < Ci; ++ci)
            for (long a = 0; a < Kt; ++a)
              for (long b = 0; b < Kh; ++b)
                for (long c = 0; c < Kw; ++c)
                  acc += pad_at(x, ci, to * st + a - pt, io * sh + b - ph, jo * sw + c - pw) *
                         w.at({static_cast<std::size_t>(co), static_cast<std::size_t>(ci),
                               static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                               static_cast<std::size_t>(c)});
          out.at({static_cast<std::size_t>(co), static_cast<std::size_t>(to),
                  static_cast<std::size_t>(io), static_cast<std::size_t>(jo)}) = acc;
        }
  return out;
}

/// Signal-processing convolution on the same output grid, written with the
/// x(base - m) * w(m) indexing (kernel applied reversed):
/// out(...) = b(co) + sum x(ci, to*st-pt+Kt-1-a, io*sh-ph+Kh-1-b, jo*sw-pw+Kw-1-c) * w(co,ci,a,b,c)
inline drowsy::Tensor trueconv3d(const drowsy::Tensor& x, const drowsy::Tensor& w,
                                 const drowsy::Tensor& bias, long st, long sh, long sw,
                                 long pt, long ph, long pw) {
  const long Ci = static_cast<long>(x.extent(0));
  const long T = static_cast<long>(x.extent(1));
  const long H = static_cast<long>(x.extent(2));
  const long W = static_cast<long>(x.extent(3));
  const long Co = static_cast<long>(w.extent(0));
  const long Kt = static_cast<long>(w.extent(2));
  const long Kh = static_cast<long>(w.extent(3));
  const long Kw = static_cast<long>(w.extent(4));
  const long To = (T + 2 * pt - Kt) / st + 1;
  const long Ho = (H + 2 * ph - Kh) / sh + 1;
  const long Wo = (W + 2 * pw - Kw) / sw + 1;
  drowsy::Tensor out({static_cast<std::size_t>(Co), static_cast<std::size_t>(To),
                      static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
  for (long co = 0; co < Co; ++co)
    for (long to = 0; to < To; ++to)
      for (long io = 0; io < Ho; ++io)
        for (long jo = 0; jo < Wo; ++jo) {
          const long bt = to * st - pt + Kt - 1;
          const long bi = io * sh - ph + Kh - 1;
          const long bj = jo * sw - pw + Kw - 1;
          double acc = bias[static_cast<std::size_t>(co)];
          for (long ci = 0; ci < Ci; ++ci)
            for (long a = 0; a < Kt; ++a)
              for (long b = 0; b < Kh; ++b)
                for (long c = 0; c < Kw; ++c)
                  acc += pad_at(x, ci, bt - a, bi - b, bj - c) *
                         w.at({static_cast<std::size_t>(co), static_cast<std::size_t>(ci),
                               static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                               static_cast<std::size_t>(c)});
          out.at({static_cast<std::size_t>(co), static_cast<std::size_t>(to),
                  static_cast<std::size_t>(io), static_cast<std::size_t>(jo)}) = acc;
        }
  return out;
}

/// 2D wrappers over the 3D oracles (time extent 1, temporal kernel 1).
inline drowsy::Tensor xcorr2d(const drowsy::Tensor& x, const drowsy::Tensor& w,
                              const drowsy::Tensor& bias, long stride, long pad) {
  const drowsy::Tensor x4 = x.reshaped({x.extent(0), 1, x.extent(1), x.extent(2)});
  const drowsy::Tensor w5 = w.reshaped({w.extent(0), w.extent(1), 1, w.extent(2), w.extent(3)});
  drowsy::Tensor out = xcorr3d(x4, w5, bias, 1, stride, stride, 0, pad, pad);
  return out.reshaped({out.extent(0), out.extent(2), out.extent(3)});
}

inline drowsy::Tensor trueconv2d(const drowsy::Tensor& x, const drowsy::Tensor& w,
                                 const drowsy::Tensor& bias, long stride, long pad) {
  const drowsy::Tensor x4 = x.reshaped({x.extent(0), 1, x.extent(1), x.extent(2)});
  const drowsy::Tensor w5 = w.reshaped({w.extent(0), w.extent(1), 1, w.extent(2), w.extent(3)});
  drowsy::Tensor out = trueconv3d(x4, w5, bias, 1, stride, stride, 0, pad, pad);
  return out.reshaped({out.extent(0), out.extent(2), out.extent(3)});
}

}  // namespace reference
