#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

/// Temporal sampling scheme: take `count` frames, one every `stride` frames.
struct ClipSpec {
  std::size_t stride = 10;
  std::size_t count = 10;
  std::size_t fps = 30;

  void validate() const {
    if (stride < 1) throw ValidationError("clip stride must be >= 1");
    if (count < 2) throw ValidationError("clip count must be >= 2");
  }

  /// Number of source frames one clip covers.
  std::size_t span() const { return stride * (count - 1) + 1; }
};

/// Frame indices of one clip: start, start+stride, ..., start+stride*(count-1).
inline std::vector<std::size_t> sample_indices(std::size_t start, const ClipSpec& spec,
                                               std::size_t total_frames) {
  spec.validate();
  const std::size_t last = start + spec.stride * (spec.count - 1);
  if (last >= total_frames)
    throw RangeError("clip window [" + std::to_string(start) + ".." + std::to_string(last) +
                     "] exceeds sequence of " + std::to_string(total_frames) + " frames");
  std::vector<std::size_t> idx(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) idx[i] = start + i * spec.stride;
  return idx;
}

/// Start offsets of all full windows, spaced `hop` frames apart
/// (hop 0 -> window length, i.e. non-overlapping). Partial trailing windows
/// are dropped.
inline std::vector<std::size_t> windows(std::size_t total_frames, const ClipSpec& spec,
                                        std::size_t hop = 0) {
  spec.validate();
  if (hop == 0) hop = spec.span();
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + spec.span() <= total_frames; s += hop) starts.push_back(s);
  return starts;
}

// ---------------------------------------------------------------------------
// Per-frame labels
// ---------------------------------------------------------------------------

/// Integer class codes for one frame, one per feature column. Code 0 is
/// always "stillness"/neutral.
struct FrameLabels {
  std::uint8_t drowsy = 0;  // {0 stillness, 1 drowsy}
  std::uint8_t eye = 0;     // {0 stillness, 1 sleepy-eyes}
  std::uint8_t mouth = 0;   // {0 stillness, 1 yawning, 2 talking-laughing}
  std::uint8_t head = 0;    // {0 stillness, 1 nodding, 2 looking-aside}
};

inline constexpr char kLabelsCsvHeader[] = "frame_index,drowsy,eye,mouth,head";

/// Parse a per-video label file: header then `frame_index,drowsy,eye,mouth,head`.
inline std::map<std::size_t, FrameLabels> read_labels_csv(std::istream& in) {
  std::map<std::size_t, FrameLabels> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == kLabelsCsvHeader) continue;
    std::istringstream ls(line);
    unsigned long frame = 0, d = 0, e = 0, m = 0, h = 0;
    char c1, c2, c3, c4;
    if (!(ls >> frame >> c1 >> d >> c2 >> e >> c3 >> m >> c4 >> h) || c1 != ',' || c2 != ',' ||
        c3 != ',' || c4 != ',')
      throw IoError("labels line " + std::to_string(line_no) + ": expected '" +
                    kLabelsCsvHeader + "', got '" + line + "'");
    if (d > 1 || e > 1 || m > 2 || h > 2)
      throw IoError("labels line " + std::to_string(line_no) + ": class code out of range");
    FrameLabels fl;
    fl.drowsy = static_cast<std::uint8_t>(d);
    fl.eye = static_cast<std::uint8_t>(e);
    fl.mouth = static_cast<std::uint8_t>(m);
    fl.head = static_cast<std::uint8_t>(h);
    if (!out.emplace(frame, fl).second)
      throw IoError("labels line " + std::to_string(line_no) + ": duplicate frame " +
                    std::to_string(frame));
  }
  return out;
}

inline std::map<std::size_t, FrameLabels> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels " + path.string());
  try {
    return read_labels_csv(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_labels_csv(std::ostream& out, const std::vector<FrameLabels>& labels) {
  out << kLabelsCsvHeader << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << i << ',' << static_cast<unsigned>(labels[i].drowsy) << ','
        << static_cast<unsigned>(labels[i].eye) << ',' << static_cast<unsigned>(labels[i].mouth)
        << ',' << static_cast<unsigned>(labels[i].head) << '\n';
}

/// Majority drowsiness vote over every frame a window covers; ties resolve
/// to drowsy.
inline std::uint8_t window_drowsy_label(const std::map<std::size_t, FrameLabels>& labels,
                                        std::size_t start, const ClipSpec& spec) {
  std::size_t drowsy = 0, still = 0;
  for (std::size_t f = start; f < start + spec.span(); ++f) {
    const auto it = labels.find(f);
    if (it == labels.end())
      throw ValidationError("no label for frame " + std::to_string(f) + " in window at " +
                            std::to_string(start));
    if (it->second.drowsy) ++drowsy;
    else ++still;
  }
  return drowsy >= still ? 1 : 0;
}

/// Majority vote for one Table-style feature column over the sampled frames'
/// span; ties resolve to the higher class code.
inline std::uint8_t window_feature_label(const std::map<std::size_t, FrameLabels>& labels,
                                         std::size_t start, const ClipSpec& spec,
                                         std::uint8_t FrameLabels::*column,
                                         std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t f = start; f < start + spec.span(); ++f) {
    const auto it = labels.find(f);
    if (it == labels.end())
      throw ValidationError("no label for frame " + std::to_string(f) + " in window at " +
                            std::to_string(start));
    const std::uint8_t code = it->second.*column;
    if (code >= num_classes)
      throw ValidationError("label code " + std::to_string(code) + " out of range");
    ++counts[code];
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < num_classes; ++c)
    if (counts[c] >= counts[best]) best = c;
  return static_cast<std::uint8_t>(best);
}

// ---------------------------------------------------------------------------
// Materialized clip
// ---------------------------------------------------------------------------

/// One model-ready clip per patch: luminance stack, flow stack, labels and
/// provenance.
struct ClipTensor {
  Tensor rgb;   // [1, count, S, S], values in [0,1]
  Tensor flow;  // [2, count-1, S, S], values in [-1,1]
  std::uint8_t label = 0;
  std::string video_id;
  std::size_t start = 0;

  void validate() const {
    if (rgb.rank() != 4 || rgb.extent(0) != 1)
      throw ShapeError("clip image stack must be [1,count,S,S], got " + rgb.shape_str());
    if (flow.rank() != 4 || flow.extent(0) != 2)
      throw ShapeError("clip flow stack must be [2,count-1,S,S], got " + flow.shape_str());
    if (flow.extent(1) + 1 != rgb.extent(1))
      throw ShapeError("clip temporal extents disagree: images " + rgb.shape_str() +
                       " vs flow " + flow.shape_str());
  }
};

}  // namespace drowsy
