#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/image.hpp"

namespace drowsy {

/// Axis-aligned box with inclusive-exclusive corners and a detector score.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double score = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  void validate() const {
    if (!(x2 > x1) || !(y2 > y1))
      throw ValidationError("degenerate box [" + std::to_string(x1) + "," + std::to_string(y1) +
                            "," + std::to_string(x2) + "," + std::to_string(y2) + "]");
  }
};

/// Five facial alignment points.
struct Landmarks {
  double left_eye_x = 0, left_eye_y = 0;
  double right_eye_x = 0, right_eye_y = 0;
  double nose_x = 0, nose_y = 0;
  double mouth_left_x = 0, mouth_left_y = 0;
  double mouth_right_x = 0, mouth_right_y = 0;

  void validate() const {
    for (double v : {left_eye_x, left_eye_y, right_eye_x, right_eye_y, nose_x, nose_y,
                     mouth_left_x, mouth_left_y, mouth_right_x, mouth_right_y})
      if (!std::isfinite(v)) throw ValidationError("landmark coordinates must be finite");
    if (left_eye_x == right_eye_x && left_eye_y == right_eye_y)
      throw ValidationError("eye landmarks coincide");
  }
};

/// Intersection over union; symmetric, 0 for disjoint boxes, 1 for identical.
inline double iou(const BBox& a, const BBox& b) {
  a.validate();
  b.validate();
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  // Summing the areas largest-first keeps the expression symmetric in a and
  // b at the instruction level, so iou(a,b) == iou(b,a) holds exactly.
  const double areas = std::max(a.area(), b.area()) + std::min(a.area(), b.area());
  return inter / (areas - inter);
}

/// Greedy non-maximum suppression: repeatedly keep the highest-score box
/// (ties -> lowest original index) and discard every remaining box whose
/// IoU with it reaches the threshold. Survivors come back in selection
/// order, so scores are non-increasing.
inline std::vector<BBox> nms(const std::vector<BBox>& boxes, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ValidationError("nms threshold must lie in (0,1), got " + std::to_string(threshold));
  std::vector<bool> alive(boxes.size(), true);
  std::vector<BBox> kept;
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (alive[i] && (best == boxes.size() || boxes[i].score > boxes[best].score)) best = i;
    if (best == boxes.size()) break;
    alive[best] = false;
    kept.push_back(boxes[best]);
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (alive[i] && iou(boxes[best], boxes[i]) >= threshold) alive[i] = false;
  }
  return kept;
}

/// Eye, mouth and head crop regions derived from the landmarks.
struct PatchBoxes {
  BBox eyes;
  BBox mouth;
  BBox head;
};

namespace geometry_detail {

inline BBox clamp_box(BBox b, double img_w, double img_h, const char* what) {
  b.x1 = std::clamp(b.x1, 0.0, img_w);
  b.x2 = std::clamp(b.x2, 0.0, img_w);
  b.y1 = std::clamp(b.y1, 0.0, img_h);
  b.y2 = std::clamp(b.y2, 0.0, img_h);
  if (!(b.x2 > b.x1) || !(b.y2 > b.y1))
    throw ValidationError(std::string(what) + " patch box falls outside the image");
  return b;
}

inline BBox centered_box(double cx, double cy, double w, double h, double score) {
  return BBox{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0, score};
}

}  // namespace geometry_detail

/// Derive the three crop regions: head is the face box itself; the eye box
/// is centered between the eyes with width 2.0x and height 0.8x the
/// interocular distance; the mouth box is centered between the mouth
/// corners with width 1.6x and height 1.2x the corner distance. All boxes
/// are clamped to the image.
inline PatchBoxes patch_boxes(const Landmarks& lm, const BBox& face, double img_w, double img_h,
                              double eye_width_factor = 2.0, double eye_height_factor = 0.8,
                              double mouth_width_factor = 1.6, double mouth_height_factor = 1.2) {
  lm.validate();
  face.validate();
  const double dxe = lm.right_eye_x - lm.left_eye_x;
  const double dye = lm.right_eye_y - lm.left_eye_y;
  const double interocular = std::sqrt(dxe * dxe + dye * dye);
  if (interocular <= 0.0) throw ValidationError("interocular distance is zero");
  const double dxm = lm.mouth_right_x - lm.mouth_left_x;
  const double dym = lm.mouth_right_y - lm.mouth_left_y;
  const double mouth_w = std::sqrt(dxm * dxm + dym * dym);
  if (mouth_w <= 0.0) throw ValidationError("mouth corner distance is zero");

  PatchBoxes out;
  out.eyes = geometry_detail::clamp_box(
      geometry_detail::centered_box((lm.left_eye_x + lm.right_eye_x) / 2.0,
                                    (lm.left_eye_y + lm.right_eye_y) / 2.0,
                                    eye_width_factor * interocular,
                                    eye_height_factor * interocular, face.score),
      img_w, img_h, "eye");
  out.mouth = geometry_detail::clamp_box(
      geometry_detail::centered_box((lm.mouth_left_x + lm.mouth_right_x) / 2.0,
                                    (lm.mouth_left_y + lm.mouth_right_y) / 2.0,
                                    mouth_width_factor * mouth_w, mouth_height_factor * mouth_w,
                                    face.score),
      img_w, img_h, "mouth");
  out.head = geometry_detail::clamp_box(face, img_w, img_h, "head");
  return out;
}

/// Integer-rounded crop of a box region; downstream code resizes the result
/// to the network input sizes.
inline ImageU8 crop(const ImageU8& img, const BBox& box) {
  img.validate();
  box.validate();
  const auto li = [](double v) { return static_cast<long>(std::floor(v + 0.5)); };
  const long x1 = std::clamp(li(box.x1), 0L, static_cast<long>(img.width) - 1);
  const long y1 = std::clamp(li(box.y1), 0L, static_cast<long>(img.height) - 1);
  const long x2 = std::clamp(li(box.x2), x1 + 1, static_cast<long>(img.width));
  const long y2 = std::clamp(li(box.y2), y1 + 1, static_cast<long>(img.height));
  ImageU8 out(static_cast<std::size_t>(x2 - x1), static_cast<std::size_t>(y2 - y1));
  for (long y = y1; y < y2; ++y)
    for (long x = x1; x < x2; ++x)
      out.at(static_cast<std::size_t>(x - x1), static_cast<std::size_t>(y - y1)) =
          img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  return out;
}

// ---------------------------------------------------------------------------
// Face observations: annotation files and pluggable providers
// ---------------------------------------------------------------------------

/// One frame's face box plus alignment points.
struct FaceObservation {
  BBox face;
  Landmarks lm;
};

/// Maps a frame index to its face observation. Implementations: annotation
/// files, synthetic ground truth.
using FaceProvider = std::function<FaceObservation(std::size_t frame_index)>;

/// Parse an annotation stream: one line per frame,
///   frame_index x1 y1 x2 y2 lx ly rx ry nx ny mlx mly mrx mry
/// '#' starts a comment; blank lines are skipped.
inline std::map<std::size_t, FaceObservation> read_annotations(std::istream& in) {
  std::map<std::size_t, FaceObservation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::size_t frame;
    if (!(ls >> frame)) continue;  // blank or comment-only line
    FaceObservation obs;
    double* fields[] = {&obs.face.x1,       &obs.face.y1,       &obs.face.x2,
                        &obs.face.y2,       &obs.lm.left_eye_x, &obs.lm.left_eye_y,
                        &obs.lm.right_eye_x, &obs.lm.right_eye_y, &obs.lm.nose_x,
                        &obs.lm.nose_y,     &obs.lm.mouth_left_x, &obs.lm.mouth_left_y,
                        &obs.lm.mouth_right_x, &obs.lm.mouth_right_y};
    for (double* f : fields)
      if (!(ls >> *f))
        throw IoError("annotation line " + std::to_string(line_no) +
                      ": expected 14 numbers after the frame index");
    obs.face.score = 1.0;
    obs.face.validate();
    obs.lm.validate();
    if (!out.emplace(frame, obs).second)
      throw IoError("annotation line " + std::to_string(line_no) + ": duplicate frame " +
                    std::to_string(frame));
  }
  return out;
}

inline std::map<std::size_t, FaceObservation> read_annotations(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations " + path.string());
  try {
    return read_annotations(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_annotation_line(std::ostream& out, std::size_t frame,
                                  const FaceObservation& obs) {
  std::ostringstream line;
  line.precision(17);  // round-trips every double exactly
  line << frame << ' ' << obs.face.x1 << ' ' << obs.face.y1 << ' ' << obs.face.x2 << ' '
       << obs.face.y2 << ' ' << obs.lm.left_eye_x << ' ' << obs.lm.left_eye_y << ' '
       << obs.lm.right_eye_x << ' ' << obs.lm.right_eye_y << ' ' << obs.lm.nose_x << ' '
       << obs.lm.nose_y << ' ' << obs.lm.mouth_left_x << ' ' << obs.lm.mouth_left_y << ' '
       << obs.lm.mouth_right_x << ' ' << obs.lm.mouth_right_y << '\n';
  out << line.str();
}

/// Provider backed by an annotation map; throws on frames with no entry.
inline FaceProvider annotation_provider(std::map<std::size_t, FaceObservation> table) {
  return [table = std::move(table)](std::size_t frame) {
    const auto it = table.find(frame);
    if (it == table.end())
      throw ValidationError("no face annotation for frame " + std::to_string(frame));
    return it->second;
  };
}

}  // namespace drowsy
