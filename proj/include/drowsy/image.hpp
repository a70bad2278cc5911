#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "drowsy/common.hpp"

namespace drowsy {

/// Grayscale 8-bit image, row-major.
struct ImageU8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t w, std::size_t h, std::uint8_t fill_value = 0)
      : width(w), height(h), pixels(w * h, fill_value) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  bool same_size(const ImageU8& o) const { return width == o.width && height == o.height; }

  void validate() const {
    if (width == 0 || height == 0)
      throw ValidationError("image has zero area: " + std::to_string(width) + "x" +
                            std::to_string(height));
    if (pixels.size() != width * height)
      throw ValidationError("image pixel count " + std::to_string(pixels.size()) +
                            " does not match " + std::to_string(width) + "x" +
                            std::to_string(height));
  }
};

/// Interleaved 8-bit RGB image, row-major.
struct ImageRGB8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // r,g,b per pixel

  ImageRGB8() = default;
  ImageRGB8(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

  std::uint8_t* px(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
  const std::uint8_t* px(std::size_t x, std::size_t y) const {
    return &pixels[(y * width + x) * 3];
  }
};

/// Round-half-up to an 8-bit value.
inline std::uint8_t quantize_u8(double v) {
  const double r = std::floor(v + 0.5);
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

/// Rec.601 luma for one RGB triplet, round-half-up.
inline std::uint8_t to_luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return quantize_u8(0.299 * r + 0.587 * g + 0.114 * b);
}

inline ImageU8 to_luminance(const ImageRGB8& rgb) {
  ImageU8 out(rgb.width, rgb.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const std::uint8_t* p = &rgb.pixels[i * 3];
    out.pixels[i] = to_luminance(p[0], p[1], p[2]);
  }
  return out;
}

/// 256-bin intensity histogram of a rectangular region [x0,x1) x [y0,y1).
inline std::vector<double> histogram(const ImageU8& img, std::size_t x0, std::size_t y0,
                                     std::size_t x1, std::size_t y1) {
  if (x1 > img.width || y1 > img.height || x0 >= x1 || y0 >= y1)
    throw ValidationError("histogram region [" + std::to_string(x0) + "," +
                          std::to_string(x1) + ")x[" + std::to_string(y0) + "," +
                          std::to_string(y1) + ") is empty or out of bounds");
  std::vector<double> bins(256, 0.0);
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) bins[img.at(x, y)] += 1.0;
  return bins;
}

inline std::vector<double> histogram(const ImageU8& img) {
  img.validate();
  return histogram(img, 0, 0, img.width, img.height);
}

/// Bilinear resample with half-pixel centers; identity when sizes match.
inline ImageU8 resize_bilinear(const ImageU8& img, std::size_t out_w, std::size_t out_h) {
  img.validate();
  if (out_w == 0 || out_h == 0)
    throw ValidationError("resize target has zero area: " + std::to_string(out_w) + "x" +
                          std::to_string(out_h));
  if (out_w == img.width && out_h == img.height) return img;
  ImageU8 out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  for (std::size_t y = 0; y < out_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    if (fy < 0) fy = 0;
    if (fy > static_cast<double>(img.height - 1)) fy = static_cast<double>(img.height - 1);
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double dy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      if (fx < 0) fx = 0;
      if (fx > static_cast<double>(img.width - 1)) fx = static_cast<double>(img.width - 1);
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double dx = fx - static_cast<double>(x0);
      const double top = (1.0 - dx) * img.at(x0, y0) + dx * img.at(x1, y0);
      const double bot = (1.0 - dx) * img.at(x0, y1) + dx * img.at(x1, y1);
      out.at(x, y) = quantize_u8((1.0 - dy) * top + dy * bot);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255)
// ---------------------------------------------------------------------------

namespace pgm_detail {

inline int next_header_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c = in.get();
  // Skip whitespace and '#' comments.
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok.empty() ? EOF : 0;
}

inline std::size_t parse_dim(const std::string& tok, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    throw IoError(std::string("pgm: bad ") + what + " '" + tok + "'");
  }
  if (pos != tok.size() || v == 0)
    throw IoError(std::string("pgm: bad ") + what + " '" + tok + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace pgm_detail

inline ImageU8 read_pgm(std::istream& in) {
  std::string tok;
  if (pgm_detail::next_header_token(in, tok) == EOF || tok != "P5")
    throw IoError("pgm: expected magic P5, got '" + tok + "'");
  if (pgm_detail::next_header_token(in, tok) == EOF) throw IoError("pgm: truncated header");
  const std::size_t w = pgm_detail::parse_dim(tok, "width");
  if (pgm_detail::next_header_token(in, tok) == EOF) throw IoError("pgm: truncated header");
  const std::size_t h = pgm_detail::parse_dim(tok, "height");
  if (pgm_detail::next_header_token(in, tok) == EOF) throw IoError("pgm: truncated header");
  if (tok != "255") throw IoError("pgm: only maxval 255 is supported, got '" + tok + "'");
  // The header token reader consumed exactly one whitespace byte after the
  // maxval; raster follows.
  ImageU8 img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
    throw IoError("pgm: raster truncated, wanted " + std::to_string(img.pixels.size()) +
                  " bytes, got " + std::to_string(in.gcount()));
  return img;
}

inline ImageU8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pgm: cannot open " + path.string());
  try {
    return read_pgm(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_pgm(std::ostream& out, const ImageU8& img) {
  img.validate();
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("pgm: write failed");
}

inline void write_pgm(const std::filesystem::path& path, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pgm: cannot open " + path.string() + " for writing");
  write_pgm(out, img);
}

}  // namespace drowsy
