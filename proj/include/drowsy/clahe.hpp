#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/image.hpp"

namespace drowsy {

/// Tiling and clipping parameters for contrast-limited equalization.
/// clip_limit is a multiple of the uniform bin height (tile_pixels / bins);
/// it is converted to an absolute count per tile.
struct TileGrid {
  std::size_t tiles_x = 8;
  std::size_t tiles_y = 8;
  double clip_limit = 2.0;
  std::size_t bins = 256;

  void validate() const {
    if (tiles_x < 1 || tiles_y < 1)
      throw ValidationError("tile grid needs at least one tile per axis");
    if (clip_limit < 1.0)
      throw ValidationError("clip limit must be >= 1.0 (multiple of uniform bin height), got " +
                            std::to_string(clip_limit));
    if (bins != 256) throw ValidationError("only 256-bin histograms are supported");
  }
};

/// Per-tile equalization tables plus the tile-center lattice they sit on.
struct TileMapping {
  std::size_t tiles_x = 0;
  std::size_t tiles_y = 0;
  std::vector<std::vector<double>> luts;  // tiles_y * tiles_x tables of 256 entries
  std::vector<double> centers_x;          // tile center abscissae, pixels
  std::vector<double> centers_y;

  const std::vector<double>& lut(std::size_t tx, std::size_t ty) const {
    return luts[ty * tiles_x + tx];
  }
};

/// Clip each bin at the absolute limit and spread the total excess evenly
/// over all bins in a single pass. Mass is conserved; each bin ends at most
/// limit + excess/bins.
inline std::vector<double> clip_redistribute(const std::vector<double>& hist,
                                             double clip_limit_abs) {
  if (hist.empty()) throw ValidationError("clip_redistribute on empty histogram");
  if (clip_limit_abs <= 0.0)
    throw ValidationError("absolute clip limit must be positive, got " +
                          std::to_string(clip_limit_abs));
  double excess = 0.0;
  std::vector<double> out(hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) {
    if (hist[i] > clip_limit_abs) {
      excess += hist[i] - clip_limit_abs;
      out[i] = clip_limit_abs;
    } else {
      out[i] = hist[i];
    }
  }
  const double share = excess / static_cast<double>(hist.size());
  for (double& b : out) b += share;
  return out;
}

/// Equalization table from a (clipped) histogram:
/// LUT(v) = round(255 * (CDF(v) - CDF_min) / (N - CDF_min)),
/// where N is the total mass and CDF_min the CDF at the lowest occupied bin.
/// A degenerate denominator (all mass below one bin) falls back to the
/// identity ramp.
inline std::vector<double> tile_lut(const std::vector<double>& hist) {
  if (hist.size() != 256) throw ValidationError("tile_lut expects a 256-bin histogram");
  double total = 0.0;
  for (double b : hist) total += b;
  if (total <= 0.0) throw ValidationError("tile_lut on zero-mass histogram");
  double cdf_min = 0.0;
  for (double b : hist) {
    if (b > 0.0) {
      cdf_min = b;
      break;
    }
  }
  std::vector<double> lut(256);
  const double denom = total - cdf_min;
  if (denom <= 0.0) {
    for (std::size_t v = 0; v < 256; ++v) lut[v] = static_cast<double>(v);
    return lut;
  }
  double cdf = 0.0;
  for (std::size_t v = 0; v < 256; ++v) {
    cdf += hist[v];
    const double scaled = 255.0 * (cdf - cdf_min) / denom;
    lut[v] = std::floor((scaled < 0.0 ? 0.0 : scaled) + 0.5);
  }
  return lut;
}

namespace clahe_detail {

/// Tile x-bounds: [lo, hi) with lo = tx*W/tiles (integer floor).
inline std::size_t tile_edge(std::size_t index, std::size_t extent, std::size_t tiles) {
  return index * extent / tiles;
}

inline double tile_center(std::size_t index, std::size_t extent, std::size_t tiles) {
  const std::size_t lo = tile_edge(index, extent, tiles);
  const std::size_t hi = tile_edge(index + 1, extent, tiles);
  return (static_cast<double>(lo) + static_cast<double>(hi) - 1.0) / 2.0;
}

/// Locate the governing center interval for a coordinate and the blend
/// fraction within it; coordinates outside the lattice clamp to the edge
/// centers.
inline void locate(double coord, const std::vector<double>& centers, std::size_t& i0,
                   std::size_t& i1, double& frac) {
  const std::size_t n = centers.size();
  if (n == 1 || coord <= centers.front()) {
    i0 = i1 = 0;
    frac = 0.0;
    return;
  }
  if (coord >= centers.back()) {
    i0 = i1 = n - 1;
    frac = 0.0;
    return;
  }
  std::size_t lo = 0;
  while (lo + 1 < n && centers[lo + 1] <= coord) ++lo;
  i0 = lo;
  i1 = lo + 1;
  frac = (coord - centers[i0]) / (centers[i1] - centers[i0]);
}

}  // namespace clahe_detail

/// Build per-tile LUTs for an image under the given grid.
inline TileMapping build_tile_mapping(const ImageU8& img, const TileGrid& grid) {
  img.validate();
  grid.validate();
  if (img.width < grid.tiles_x || img.height < grid.tiles_y)
    throw ValidationError("image " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " is smaller than the " +
                          std::to_string(grid.tiles_x) + "x" + std::to_string(grid.tiles_y) +
                          " tile grid");
  TileMapping map;
  map.tiles_x = grid.tiles_x;
  map.tiles_y = grid.tiles_y;
  map.luts.reserve(grid.tiles_x * grid.tiles_y);
  for (std::size_t ty = 0; ty < grid.tiles_y; ++ty) {
    const std::size_t y0 = clahe_detail::tile_edge(ty, img.height, grid.tiles_y);
    const std::size_t y1 = clahe_detail::tile_edge(ty + 1, img.height, grid.tiles_y);
    for (std::size_t tx = 0; tx < grid.tiles_x; ++tx) {
      const std::size_t x0 = clahe_detail::tile_edge(tx, img.width, grid.tiles_x);
      const std::size_t x1 = clahe_detail::tile_edge(tx + 1, img.width, grid.tiles_x);
      std::vector<double> hist = histogram(img, x0, y0, x1, y1);
      const double tile_pixels = static_cast<double>((x1 - x0) * (y1 - y0));
      const double limit_abs = grid.clip_limit * tile_pixels / static_cast<double>(grid.bins);
      map.luts.push_back(tile_lut(clip_redistribute(hist, limit_abs)));
    }
  }
  map.centers_x.resize(grid.tiles_x);
  for (std::size_t tx = 0; tx < grid.tiles_x; ++tx)
    map.centers_x[tx] = clahe_detail::tile_center(tx, img.width, grid.tiles_x);
  map.centers_y.resize(grid.tiles_y);
  for (std::size_t ty = 0; ty < grid.tiles_y; ++ty)
    map.centers_y[ty] = clahe_detail::tile_center(ty, img.height, grid.tiles_y);
  return map;
}

/// Contrast-limited adaptive histogram equalization. Each pixel blends the
/// four surrounding tile tables bilinearly:
///   f(D) = (1-dy) * ((1-dx) f_a(D) + dx f_b(D)) + dy * ((1-dx) f_c(D) + dx f_d(D))
/// where a/b are the left/right tiles on the upper center row, c/d on the
/// lower, and dx, dy are distances normalized by the center spacing. Pixels
/// outside the center lattice clamp to the nearest centers.
inline ImageU8 clahe(const ImageU8& img, const TileGrid& grid) {
  const TileMapping map = build_tile_mapping(img, grid);
  ImageU8 out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    std::size_t ty0, ty1;
    double dy;
    clahe_detail::locate(static_cast<double>(y), map.centers_y, ty0, ty1, dy);
    for (std::size_t x = 0; x < img.width; ++x) {
      std::size_t tx0, tx1;
      double dx;
      clahe_detail::locate(static_cast<double>(x), map.centers_x, tx0, tx1, dx);
      const std::uint8_t v = img.at(x, y);
      const double f =
          (1.0 - dy) * ((1.0 - dx) * map.lut(tx0, ty0)[v] + dx * map.lut(tx1, ty0)[v]) +
          dy * ((1.0 - dx) * map.lut(tx0, ty1)[v] + dx * map.lut(tx1, ty1)[v]);
      out.at(x, y) = quantize_u8(f);
    }
  }
  return out;
}

/// Plain global histogram equalization (single tile, no clipping); the
/// 1x1-grid/unbounded-clip limit case of clahe.
inline ImageU8 equalize_global(const ImageU8& img) {
  img.validate();
  const std::vector<double> lut = tile_lut(histogram(img));
  ImageU8 out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = quantize_u8(lut[img.pixels[i]]);
  return out;
}

}  // namespace drowsy
