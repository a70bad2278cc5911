#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/image.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

/// Dense per-pixel motion field; u is the x component, v the y component,
/// in pixels per frame interval.
struct FlowField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> u;
  std::vector<double> v;

  FlowField() = default;
  FlowField(std::size_t w, std::size_t h) : width(w), height(h), u(w * h, 0.0), v(w * h, 0.0) {}

  double& u_at(std::size_t x, std::size_t y) { return u[y * width + x]; }
  double& v_at(std::size_t x, std::size_t y) { return v[y * width + x]; }
  double u_at(std::size_t x, std::size_t y) const { return u[y * width + x]; }
  double v_at(std::size_t x, std::size_t y) const { return v[y * width + x]; }

  bool all_finite() const {
    for (double x : u)
      if (!std::isfinite(x)) return false;
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

/// Spatial and temporal derivatives of a frame pair. Ix and Iy are central
/// differences averaged over both frames (one-sided at the borders);
/// It is the plain frame difference.
struct FrameGradients {
  std::vector<double> ix, iy, it;
  std::size_t width = 0, height = 0;
};

inline FrameGradients gradients(const ImageU8& prev, const ImageU8& next) {
  prev.validate();
  next.validate();
  if (!prev.same_size(next))
    throw ValidationError("gradient frames differ in size: " + std::to_string(prev.width) + "x" +
                          std::to_string(prev.height) + " vs " + std::to_string(next.width) +
                          "x" + std::to_string(next.height));
  const std::size_t w = prev.width, h = prev.height;
  FrameGradients g;
  g.width = w;
  g.height = h;
  g.ix.resize(w * h);
  g.iy.resize(w * h);
  g.it.resize(w * h);
  const auto dx = [w](const ImageU8& img, std::size_t x, std::size_t y) {
    if (w == 1) return 0.0;
    if (x == 0) return static_cast<double>(img.at(1, y)) - img.at(0, y);
    if (x == w - 1) return static_cast<double>(img.at(w - 1, y)) - img.at(w - 2, y);
    return (static_cast<double>(img.at(x + 1, y)) - img.at(x - 1, y)) / 2.0;
  };
  const auto dy = [h](const ImageU8& img, std::size_t x, std::size_t y) {
    if (h == 1) return 0.0;
    if (y == 0) return static_cast<double>(img.at(x, 1)) - img.at(x, 0);
    if (y == h - 1) return static_cast<double>(img.at(x, h - 1)) - img.at(x, h - 2);
    return (static_cast<double>(img.at(x, y + 1)) - img.at(x, y - 1)) / 2.0;
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      g.ix[i] = (dx(prev, x, y) + dx(next, x, y)) / 2.0;
      g.iy[i] = (dy(prev, x, y) + dy(next, x, y)) / 2.0;
      g.it[i] = static_cast<double>(next.at(x, y)) - prev.at(x, y);
    }
  return g;
}

struct FlowResult {
  FlowField field;
  double residual = 0.0;  // mean absolute update of the final iteration
};

/// Dense flow by global smoothness minimization (Horn-Schunck): Jacobi
/// sweeps of
///   u <- ubar - Ix (Ix ubar + Iy vbar + It) / (alpha^2 + Ix^2 + Iy^2)
/// with the classical 8-neighbor average (1/6 edges, 1/12 diagonals,
/// border-replicated). Double-buffered, so the result is deterministic.
inline FlowResult horn_schunck(const ImageU8& prev, const ImageU8& next, double alpha,
                               int iterations) {
  if (alpha <= 0.0)
    throw ValidationError("horn_schunck alpha must be positive, got " + std::to_string(alpha));
  if (iterations < 1)
    throw ValidationError("horn_schunck needs at least one iteration, got " +
                          std::to_string(iterations));
  const FrameGradients g = gradients(prev, next);
  const std::size_t w = g.width, h = g.height;
  const std::size_t n = w * h;
  std::vector<double> u(n, 0.0), v(n, 0.0), nu(n), nv(n);
  std::vector<double> denom(n);
  const double a2 = alpha * alpha;
  for (std::size_t i = 0; i < n; ++i) denom[i] = a2 + g.ix[i] * g.ix[i] + g.iy[i] * g.iy[i];

  const auto average = [&](const std::vector<double>& f, std::size_t x, std::size_t y) {
    const auto cx = [&](long xx) { return static_cast<std::size_t>(std::clamp(xx, 0L, static_cast<long>(w) - 1)); };
    const auto cy = [&](long yy) { return static_cast<std::size_t>(std::clamp(yy, 0L, static_cast<long>(h) - 1)); };
    const long xl = static_cast<long>(x), yl = static_cast<long>(y);
    const double edges = f[cy(yl - 1) * w + x] + f[cy(yl + 1) * w + x] + f[y * w + cx(xl - 1)] +
                         f[y * w + cx(xl + 1)];
    const double diags = f[cy(yl - 1) * w + cx(xl - 1)] + f[cy(yl - 1) * w + cx(xl + 1)] +
                         f[cy(yl + 1) * w + cx(xl - 1)] + f[cy(yl + 1) * w + cx(xl + 1)];
    return edges / 6.0 + diags / 12.0;
  };

  double residual = 0.0;
  for (int iter = 0; iter < iterations; ++iter) {
    residual = 0.0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const double ubar = average(u, x, y);
        const double vbar = average(v, x, y);
        const double drive = (g.ix[i] * ubar + g.iy[i] * vbar + g.it[i]) / denom[i];
        nu[i] = ubar - g.ix[i] * drive;
        nv[i] = vbar - g.iy[i] * drive;
        residual += std::abs(nu[i] - u[i]) + std::abs(nv[i] - v[i]);
      }
    u.swap(nu);
    v.swap(nv);
  }

  FlowResult out;
  out.field.width = w;
  out.field.height = h;
  out.field.u = std::move(u);
  out.field.v = std::move(v);
  out.residual = residual / static_cast<double>(2 * n);
  return out;
}

// ---------------------------------------------------------------------------
// Binary flow record: u32 LE width/height, then the u plane and the v plane
// as f32 LE. Used for caching and debugging dumps.
// ---------------------------------------------------------------------------

namespace flow_detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("flow record truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

inline float get_f32(std::istream& in) {
  const std::uint32_t v = get_u32(in);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace flow_detail

inline void write_flow_record(std::ostream& out, const FlowField& f) {
  if (f.u.size() != f.width * f.height || f.v.size() != f.width * f.height)
    throw ValidationError("flow field sizes do not match its dimensions");
  flow_detail::put_u32(out, static_cast<std::uint32_t>(f.width));
  flow_detail::put_u32(out, static_cast<std::uint32_t>(f.height));
  for (double x : f.u) flow_detail::put_f32(out, static_cast<float>(x));
  for (double x : f.v) flow_detail::put_f32(out, static_cast<float>(x));
  if (!out) throw IoError("flow record write failed");
}

inline FlowField read_flow_record(std::istream& in) {
  const std::uint32_t w = flow_detail::get_u32(in);
  const std::uint32_t h = flow_detail::get_u32(in);
  if (w == 0 || h == 0) throw IoError("flow record has zero area");
  FlowField f(w, h);
  for (double& x : f.u) x = flow_detail::get_f32(in);
  for (double& x : f.v) x = flow_detail::get_f32(in);
  return f;
}

/// Stack flow fields into a [2, T-1, H, W] tensor; channel 0 carries u,
/// channel 1 carries v, each divided by max_displacement and clipped to
/// [-1, 1].
inline Tensor flow_to_tensor(const std::vector<FlowField>& flows, double max_displacement) {
  if (flows.empty()) throw ValidationError("flow_to_tensor needs at least one field");
  if (max_displacement <= 0.0)
    throw ValidationError("max_displacement must be positive, got " +
                          std::to_string(max_displacement));
  const std::size_t w = flows.front().width, h = flows.front().height;
  for (const FlowField& f : flows) {
    if (f.width != w || f.height != h)
      throw ValidationError("flow fields disagree in size");
    if (!f.all_finite()) throw ValidationError("flow field contains non-finite values");
  }
  Tensor out({2, flows.size(), h, w});
  const auto squash = [max_displacement](double x) {
    const double s = x / max_displacement;
    return s > 1.0 ? 1.0 : (s < -1.0 ? -1.0 : s);
  };
  double* u_chan = out.data();
  double* v_chan = out.data() + flows.size() * h * w;
  for (std::size_t t = 0; t < flows.size(); ++t)
    for (std::size_t i = 0; i < h * w; ++i) {
      u_chan[t * h * w + i] = squash(flows[t].u[i]);
      v_chan[t * h * w + i] = squash(flows[t].v[i]);
    }
  return out;
}

}  // namespace drowsy
