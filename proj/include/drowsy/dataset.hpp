#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "drowsy/checkpoint.hpp"
#include "drowsy/clahe.hpp"
#include "drowsy/common.hpp"
#include "drowsy/flow.hpp"
#include "drowsy/geometry.hpp"
#include "drowsy/image.hpp"
#include "drowsy/rng.hpp"
#include "drowsy/sampler.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

/// One manifest row: a video directory and its split assignment.
struct ManifestEntry {
  std::string video_id;
  std::string split;  // "train", "val" or "test"
};

/// Parse a manifest.csv (header `video_id,split` then one row per video).
inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  std::vector<ManifestEntry> out;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "video_id,split")
        throw IoError("manifest header must be 'video_id,split', got '" + line + "'");
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 >= line.size())
      throw IoError("manifest line " + std::to_string(line_no) + " is not 'video_id,split'");
    ManifestEntry e;
    e.video_id = line.substr(0, comma);
    e.split = line.substr(comma + 1);
    if (e.split != "train" && e.split != "val" && e.split != "test")
      throw IoError("manifest line " + std::to_string(line_no) + " has unknown split '" +
                    e.split + "'");
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Video loading
// ---------------------------------------------------------------------------

/// Everything known about one video directory except the pixels: frame
/// paths indexed by frame number, per-frame labels and face annotations.
struct VideoData {
  std::string id;
  std::filesystem::path dir;
  std::map<std::size_t, std::filesystem::path> frame_paths;
  std::map<std::size_t, FrameLabels> labels;
  std::map<std::size_t, FaceObservation> annotations;

  std::size_t frame_count() const { return frame_paths.size(); }

  const std::filesystem::path& frame_path(std::size_t index) const {
    const auto it = frame_paths.find(index);
    if (it == frame_paths.end())
      throw IoError("video '" + id + "' has no frame " + std::to_string(index));
    return it->second;
  }

  const FaceObservation& annotation(std::size_t index) const {
    const auto it = annotations.find(index);
    if (it == annotations.end())
      throw ValidationError("video '" + id + "' has no face annotation for frame " +
                            std::to_string(index));
    return it->second;
  }
};

/// Read a video directory's metadata: frames/ listing, labels.csv and
/// annotations.txt. Frame numbers come from the file stems; the set must be
/// contiguous from zero.
inline VideoData load_video(const std::filesystem::path& root, const std::string& video_id) {
  VideoData v;
  v.id = video_id;
  v.dir = root / video_id;
  const std::filesystem::path frames_dir = v.dir / "frames";
  if (!std::filesystem::is_directory(frames_dir))
    throw IoError("video '" + video_id + "' has no frames directory at " + frames_dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(frames_dir)) {
    if (entry.path().extension() != ".pgm") continue;
    const std::string stem = entry.path().stem().string();
    std::size_t pos = 0;
    unsigned long index = 0;
    try {
      index = std::stoul(stem, &pos);
    } catch (const std::exception&) {
      throw IoError("frame file " + entry.path().string() + " is not numbered");
    }
    if (pos != stem.size())
      throw IoError("frame file " + entry.path().string() + " is not numbered");
    v.frame_paths[static_cast<std::size_t>(index)] = entry.path();
  }
  if (v.frame_paths.empty())
    throw IoError("video '" + video_id + "' has no frames in " + frames_dir.string());
  if (v.frame_paths.rbegin()->first + 1 != v.frame_paths.size())
    throw IoError("video '" + video_id + "' frame numbering has gaps");

  std::ifstream labels(v.dir / "labels.csv");
  if (!labels) throw IoError("cannot open " + (v.dir / "labels.csv").string());
  v.labels = read_labels_csv(labels);
  v.annotations = read_annotations(v.dir / "annotations.txt");
  return v;
}

// ---------------------------------------------------------------------------
// Preprocessing configuration
// ---------------------------------------------------------------------------

/// Everything that influences the pixels and labels of a preprocessed
/// sample. Hashed into the cache key so stale entries are never reused.
struct PreprocessConfig {
  ClipSpec clip;         // temporal sampling scheme
  std::size_t hop = 0;   // window spacing; 0 = non-overlapping
  bool use_clahe = true;
  TileGrid clahe_grid;   // 8x8 tiles, clip 2.0
  bool use_flow = true;  // off: flow channels stay all-zero
  double flow_alpha = 12.0;
  int flow_iterations = 60;
  double flow_max_displacement = 8.0;
  std::size_t eye_size = 112;
  std::size_t mouth_size = 112;
  std::size_t head_size = 224;
  double eye_width_factor = 2.0;
  double eye_height_factor = 0.8;
  double mouth_width_factor = 1.6;
  double mouth_height_factor = 1.2;

  void validate() const {
    clip.validate();
    clahe_grid.validate();
    if (flow_alpha <= 0.0 || flow_iterations < 1)
      throw ValidationError("flow smoothing needs alpha > 0 and at least one iteration");
    if (flow_max_displacement <= 0.0)
      throw ValidationError("flow normalization range must be positive");
    if (eye_size == 0 || mouth_size == 0 || head_size == 0)
      throw ValidationError("patch sizes must be positive");
    if (eye_width_factor <= 0.0 || eye_height_factor <= 0.0 || mouth_width_factor <= 0.0 ||
        mouth_height_factor <= 0.0)
      throw ValidationError("patch box factors must be positive");
  }

  /// Order-sensitive digest of every field above.
  std::uint64_t content_hash() const {
    std::uint64_t h = 0x5ec5e7;
    const auto mix_f = [&h](double d) { h = hash_combine(h, std::bit_cast<std::uint64_t>(d)); };
    h = hash_combine(h, clip.stride);
    h = hash_combine(h, clip.count);
    h = hash_combine(h, hop);
    h = hash_combine(h, use_clahe ? 1 : 0);
    h = hash_combine(h, clahe_grid.tiles_x);
    h = hash_combine(h, clahe_grid.tiles_y);
    mix_f(clahe_grid.clip_limit);
    h = hash_combine(h, use_flow ? 1 : 0);
    mix_f(flow_alpha);
    h = hash_combine(h, static_cast<std::uint64_t>(flow_iterations));
    mix_f(flow_max_displacement);
    h = hash_combine(h, eye_size);
    h = hash_combine(h, mouth_size);
    h = hash_combine(h, head_size);
    mix_f(eye_width_factor);
    mix_f(eye_height_factor);
    mix_f(mouth_width_factor);
    mix_f(mouth_height_factor);
    return h;
  }
};

// ---------------------------------------------------------------------------
// Compact samples
// ---------------------------------------------------------------------------

/// One preprocessed patch sequence in storage form: 8-bit pixels and 32-bit
/// flow, an order of magnitude smaller than the double tensors the model
/// consumes. Converted per batch via rgb_tensor()/flow_tensor().
struct CompactClip {
  std::size_t size = 0;   // square patch edge
  std::size_t count = 0;  // sampled frames
  std::uint8_t label = 0;
  std::vector<std::uint8_t> rgb;  // count * size * size
  std::vector<float> flow;        // 2 * (count-1) * size * size

  void validate() const {
    if (size == 0 || count < 2) throw ValidationError("compact clip is empty");
    if (rgb.size() != count * size * size)
      throw ValidationError("compact clip pixel payload has wrong length");
    if (flow.size() != 2 * (count - 1) * size * size)
      throw ValidationError("compact clip flow payload has wrong length");
  }

  /// [1, count, S, S] luminance in [0,1].
  Tensor rgb_tensor() const {
    validate();
    Tensor t(std::vector<std::size_t>{1, count, size, size});
    for (std::size_t i = 0; i < rgb.size(); ++i)
      t.vec()[i] = static_cast<double>(rgb[i]) / 255.0;
    return t;
  }

  /// [2, count-1, S, S] normalized motion in [-1,1].
  Tensor flow_tensor() const {
    validate();
    Tensor t(std::vector<std::size_t>{2, count - 1, size, size});
    for (std::size_t i = 0; i < flow.size(); ++i) t.vec()[i] = static_cast<double>(flow[i]);
    return t;
  }
};

/// One fully preprocessed sampling window: the three facial patches plus
/// window-level labels (majority vote over covered frames).
struct CompactSample {
  std::string video_id;
  std::size_t start = 0;
  std::uint8_t drowsy = 0;
  CompactClip eyes;   // label = eye state {0 stillness, 1 sleepy-eyes}
  CompactClip mouth;  // label = mouth state {0, 1 yawning, 2 talking}
  CompactClip head;   // label = head state {0, 1 nodding, 2 looking-aside}
};

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

namespace dataset_detail {

/// Integer crop of a clamped box; boxes come from patch_boxes so they are
/// already inside the image.
inline ImageU8 crop_box(const ImageU8& img, const BBox& box) {
  const auto lo = [](double v) { return static_cast<std::size_t>(std::max(0.0, std::floor(v))); };
  const std::size_t x0 = lo(box.x1), y0 = lo(box.y1);
  const std::size_t x1 = std::min(img.width, static_cast<std::size_t>(std::ceil(box.x2)));
  const std::size_t y1 = std::min(img.height, static_cast<std::size_t>(std::ceil(box.y2)));
  if (x1 <= x0 || y1 <= y0)
    throw ValidationError("crop box is empty after clamping: " + std::to_string(box.x1) + "," +
                          std::to_string(box.y1) + " .. " + std::to_string(box.x2) + "," +
                          std::to_string(box.y2));
  ImageU8 out(x1 - x0, y1 - y0);
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) out.at(x - x0, y - y0) = img.at(x, y);
  return out;
}

/// Crop, resize and optionally equalize one patch of one frame.
inline ImageU8 make_patch(const ImageU8& frame, const BBox& box, std::size_t target,
                          const PreprocessConfig& cfg) {
  ImageU8 patch = resize_bilinear(crop_box(frame, box), target, target);
  if (cfg.use_clahe) patch = clahe(patch, cfg.clahe_grid);
  return patch;
}

/// Pack a processed patch sequence into compact storage, computing flow on
/// the processed frames (or leaving it zero when disabled).
inline CompactClip pack_patch_clip(const std::vector<ImageU8>& patches,
                                   const PreprocessConfig& cfg, std::uint8_t label) {
  CompactClip clip;
  clip.size = patches.front().width;
  clip.count = patches.size();
  clip.label = label;
  clip.rgb.reserve(clip.count * clip.size * clip.size);
  for (const ImageU8& p : patches) clip.rgb.insert(clip.rgb.end(), p.pixels.begin(), p.pixels.end());
  const std::size_t plane = clip.size * clip.size;
  clip.flow.assign(2 * (clip.count - 1) * plane, 0.0f);
  if (cfg.use_flow) {
    for (std::size_t i = 0; i + 1 < patches.size(); ++i) {
      const FlowResult res =
          horn_schunck(patches[i], patches[i + 1], cfg.flow_alpha, cfg.flow_iterations);
      for (std::size_t k = 0; k < plane; ++k) {
        const double u = std::clamp(res.field.u[k] / cfg.flow_max_displacement, -1.0, 1.0);
        const double v = std::clamp(res.field.v[k] / cfg.flow_max_displacement, -1.0, 1.0);
        clip.flow[i * plane + k] = static_cast<float>(u);
        clip.flow[((clip.count - 1) + i) * plane + k] = static_cast<float>(v);
      }
    }
  }
  return clip;
}

}  // namespace dataset_detail

/// Preprocess one sampling window of one video: for every sampled frame,
/// locate the facial patches from its annotation, crop, resize, optionally
/// equalize; then compute patch-level motion between consecutive sampled
/// frames. Labels are majority votes over every frame the window covers.
inline CompactSample preprocess_window(const VideoData& video, std::size_t start,
                                       const PreprocessConfig& cfg) {
  cfg.validate();
  const std::vector<std::size_t> indices = sample_indices(start, cfg.clip, video.frame_count());

  std::vector<ImageU8> eye_patches, mouth_patches, head_patches;
  eye_patches.reserve(indices.size());
  mouth_patches.reserve(indices.size());
  head_patches.reserve(indices.size());
  for (const std::size_t f : indices) {
    const ImageU8 frame = read_pgm(video.frame_path(f));
    const FaceObservation& obs = video.annotation(f);
    const PatchBoxes boxes =
        patch_boxes(obs.lm, obs.face, frame.width, frame.height, cfg.eye_width_factor,
                    cfg.eye_height_factor, cfg.mouth_width_factor, cfg.mouth_height_factor);
    eye_patches.push_back(dataset_detail::make_patch(frame, boxes.eyes, cfg.eye_size, cfg));
    mouth_patches.push_back(dataset_detail::make_patch(frame, boxes.mouth, cfg.mouth_size, cfg));
    head_patches.push_back(dataset_detail::make_patch(frame, boxes.head, cfg.head_size, cfg));
  }

  CompactSample s;
  s.video_id = video.id;
  s.start = start;
  s.drowsy = window_drowsy_label(video.labels, start, cfg.clip);
  const std::uint8_t eye_label =
      window_feature_label(video.labels, start, cfg.clip, &FrameLabels::eye, 2);
  const std::uint8_t mouth_label =
      window_feature_label(video.labels, start, cfg.clip, &FrameLabels::mouth, 3);
  const std::uint8_t head_label =
      window_feature_label(video.labels, start, cfg.clip, &FrameLabels::head, 3);
  s.eyes = dataset_detail::pack_patch_clip(eye_patches, cfg, eye_label);
  s.mouth = dataset_detail::pack_patch_clip(mouth_patches, cfg, mouth_label);
  s.head = dataset_detail::pack_patch_clip(head_patches, cfg, head_label);
  return s;
}

// ---------------------------------------------------------------------------
// Cache keys
// ---------------------------------------------------------------------------

/// FNV-1a over a file's bytes.
inline std::uint64_t file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof buf), in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i)
      h = (h ^ static_cast<unsigned char>(buf[i])) * 1099511628211ull;
  }
  return h;
}

/// Digest of everything one window's preprocessing reads: the sampled
/// frames' bytes, their annotations, and the labels of every covered
/// frame. Regenerated source data therefore invalidates cache entries even
/// under an unchanged configuration.
inline std::uint64_t window_content_digest(const VideoData& video, std::size_t start,
                                           const ClipSpec& clip) {
  std::uint64_t h = 0xc0117e47;
  const auto mix_f = [&h](double d) { h = hash_combine(h, std::bit_cast<std::uint64_t>(d)); };
  for (const std::size_t f : sample_indices(start, clip, video.frame_count())) {
    h = hash_combine(h, file_digest(video.frame_path(f)));
    const auto it = video.annotations.find(f);
    if (it == video.annotations.end()) {
      h = hash_combine(h, 0xab5e17);
      continue;
    }
    const FaceObservation& obs = it->second;
    mix_f(obs.face.x1);
    mix_f(obs.face.y1);
    mix_f(obs.face.x2);
    mix_f(obs.face.y2);
    for (const double v : {obs.lm.left_eye_x, obs.lm.left_eye_y, obs.lm.right_eye_x,
                           obs.lm.right_eye_y, obs.lm.nose_x, obs.lm.nose_y, obs.lm.mouth_left_x,
                           obs.lm.mouth_left_y, obs.lm.mouth_right_x, obs.lm.mouth_right_y})
      mix_f(v);
  }
  for (std::size_t f = start; f < start + clip.span(); ++f) {
    const auto it = video.labels.find(f);
    if (it == video.labels.end()) {
      h = hash_combine(h, 0xab5e17);
      continue;
    }
    h = hash_combine(h, (static_cast<std::uint64_t>(it->second.drowsy) << 24) |
                            (static_cast<std::uint64_t>(it->second.eye) << 16) |
                            (static_cast<std::uint64_t>(it->second.mouth) << 8) |
                            static_cast<std::uint64_t>(it->second.head));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Sample cache
// ---------------------------------------------------------------------------

inline constexpr char kClipCacheMagic[8] = {'D', 'R', 'S', 'Y', 'C', 'L', 'I', 'P'};
inline constexpr std::uint32_t kClipCacheVersion = 1;

namespace dataset_detail {

inline void put_string(std::ostream& out, const std::string& s) {
  ckpt_detail::put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const std::uint64_t n = ckpt_detail::get_u64(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw IoError("clip cache truncated");
  return s;
}

inline void put_clip(std::ostream& out, const CompactClip& clip) {
  clip.validate();
  ckpt_detail::put_u64(out, clip.size);
  ckpt_detail::put_u64(out, clip.count);
  out.put(static_cast<char>(clip.label));
  out.write(reinterpret_cast<const char*>(clip.rgb.data()),
            static_cast<std::streamsize>(clip.rgb.size()));
  for (const float f : clip.flow) ckpt_detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
}

inline CompactClip get_clip(std::istream& in) {
  CompactClip clip;
  clip.size = ckpt_detail::get_u64(in);
  clip.count = ckpt_detail::get_u64(in);
  const int label = in.get();
  if (label < 0) throw IoError("clip cache truncated");
  clip.label = static_cast<std::uint8_t>(label);
  if (clip.size == 0 || clip.count < 2 || clip.size > 4096 || clip.count > 4096)
    throw IoError("clip cache has implausible dimensions");
  clip.rgb.resize(clip.count * clip.size * clip.size);
  if (!in.read(reinterpret_cast<char*>(clip.rgb.data()),
               static_cast<std::streamsize>(clip.rgb.size())))
    throw IoError("clip cache truncated");
  clip.flow.resize(2 * (clip.count - 1) * clip.size * clip.size);
  for (float& f : clip.flow) f = std::bit_cast<float>(ckpt_detail::get_u32(in));
  clip.validate();
  return clip;
}

}  // namespace dataset_detail

/// Cache file for one (video, window) pair.
inline std::filesystem::path sample_cache_path(const std::filesystem::path& cache_dir,
                                               const std::string& video_id, std::size_t start) {
  return cache_dir / (video_id + "_w" + std::to_string(start) + ".clip");
}

/// Serialize one preprocessed sample together with the preprocessing-config
/// digest that produced it.
inline void write_sample_cache(const std::filesystem::path& path, const CompactSample& sample,
                               std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write clip cache " + path.string());
  out.write(kClipCacheMagic, 8);
  ckpt_detail::put_u32(out, kClipCacheVersion);
  ckpt_detail::put_u64(out, config_hash);
  dataset_detail::put_string(out, sample.video_id);
  ckpt_detail::put_u64(out, sample.start);
  out.put(static_cast<char>(sample.drowsy));
  dataset_detail::put_clip(out, sample.eyes);
  dataset_detail::put_clip(out, sample.mouth);
  dataset_detail::put_clip(out, sample.head);
  if (!out) throw IoError("failed writing clip cache " + path.string());
}

/// True when the file exists, is well-formed, and was produced by the same
/// preprocessing configuration.
inline bool sample_cache_matches(const std::filesystem::path& path, std::uint64_t config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kClipCacheMagic)) return false;
  try {
    if (ckpt_detail::get_u32(in) != kClipCacheVersion) return false;
    return ckpt_detail::get_u64(in) == config_hash;
  } catch (const IoError&) {
    return false;
  }
}

inline CompactSample read_sample_cache(const std::filesystem::path& path,
                                       std::uint64_t config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open clip cache " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kClipCacheMagic))
    throw IoError("clip cache " + path.string() + " has wrong magic");
  if (ckpt_detail::get_u32(in) != kClipCacheVersion)
    throw IoError("clip cache " + path.string() + " has unsupported version");
  if (ckpt_detail::get_u64(in) != config_hash)
    throw IoError("clip cache " + path.string() + " was built with a different configuration");
  CompactSample s;
  s.video_id = dataset_detail::get_string(in);
  s.start = ckpt_detail::get_u64(in);
  const int drowsy = in.get();
  if (drowsy < 0) throw IoError("clip cache truncated");
  s.drowsy = static_cast<std::uint8_t>(drowsy);
  s.eyes = dataset_detail::get_clip(in);
  s.mouth = dataset_detail::get_clip(in);
  s.head = dataset_detail::get_clip(in);
  return s;
}

// ---------------------------------------------------------------------------
// Whole-dataset preprocessing
// ---------------------------------------------------------------------------

struct CacheStats {
  std::size_t windows = 0;
  std::size_t hits = 0;
  std::size_t computed = 0;
};

/// Make sure every sampling window of every manifest video has an
/// up-to-date cache entry. Stale or missing entries are recomputed; entries
/// from the same configuration are skipped untouched.
inline CacheStats ensure_cached(const std::filesystem::path& root,
                                const std::filesystem::path& cache_dir,
                                const std::vector<ManifestEntry>& manifest,
                                const PreprocessConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cache_dir);
  const std::uint64_t cfg_hash = cfg.content_hash();
  CacheStats stats;
  for (const ManifestEntry& entry : manifest) {
    const VideoData video = load_video(root, entry.video_id);
    for (const std::size_t start : windows(video.frame_count(), cfg.clip, cfg.hop)) {
      ++stats.windows;
      const std::uint64_t key =
          hash_combine(cfg_hash, window_content_digest(video, start, cfg.clip));
      const std::filesystem::path path = sample_cache_path(cache_dir, entry.video_id, start);
      if (sample_cache_matches(path, key)) {
        ++stats.hits;
        continue;
      }
      write_sample_cache(path, preprocess_window(video, start, cfg), key);
      ++stats.computed;
    }
  }
  return stats;
}

/// Load every sample of one split, preprocessing on cache misses. Order is
/// the manifest's video order, windows ascending — deterministic.
inline std::vector<CompactSample> load_split(const std::filesystem::path& root,
                                             const std::filesystem::path& cache_dir,
                                             const std::vector<ManifestEntry>& manifest,
                                             const PreprocessConfig& cfg,
                                             const std::string& split) {
  cfg.validate();
  std::filesystem::create_directories(cache_dir);
  const std::uint64_t cfg_hash = cfg.content_hash();
  std::vector<CompactSample> out;
  for (const ManifestEntry& entry : manifest) {
    if (entry.split != split) continue;
    const VideoData video = load_video(root, entry.video_id);
    for (const std::size_t start : windows(video.frame_count(), cfg.clip, cfg.hop)) {
      const std::uint64_t key =
          hash_combine(cfg_hash, window_content_digest(video, start, cfg.clip));
      const std::filesystem::path path = sample_cache_path(cache_dir, entry.video_id, start);
      if (sample_cache_matches(path, key)) {
        out.push_back(read_sample_cache(path, key));
      } else {
        CompactSample s = preprocess_window(video, start, cfg);
        write_sample_cache(path, s, key);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

}  // namespace drowsy
