#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/dataset.hpp"
#include "drowsy/geometry.hpp"
#include "drowsy/image.hpp"
#include "drowsy/rng.hpp"
#include "drowsy/sampler.hpp"

namespace drowsy {

// ---------------------------------------------------------------------------
// Scene description
// ---------------------------------------------------------------------------

/// One behavioural event: frames [start, start+duration).
struct EventSpec {
  std::size_t start = 0;
  std::size_t duration = 1;

  std::size_t end() const { return start + duration; }
  bool covers(std::size_t frame) const { return frame >= start && frame < end(); }
};

/// Linear per-clip brightness ramp: pixel' = gain(t) * pixel + offset(t),
/// with both knobs interpolated from their start to their end value across
/// the clip. Simulates gradual day/night illumination drift.
struct LightingProfile {
  double gain_start = 1.0, gain_end = 1.0;
  double offset_start = 0.0, offset_end = 0.0;
};

/// Deterministic synthetic driving scene: a textured face disc with eye and
/// mouth regions, a gentle positional sway, and scripted behaviour events.
/// Blinks darken the eye band; yawns grow the mouth vertically; talking
/// makes the mouth flutter; nods oscillate the face vertically; glances
/// shift it sideways.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t frames = 91;
  std::size_t fps = 30;
  std::size_t size = 128;  // square frame edge, >= 64
  // Baseline drift of the whole face, in pixels. Zero by default so an
  // event-free scene renders bit-identical frames (and thus zero flow).
  double sway_amp = 0.0;
  double sway_period = 47.0;
  std::vector<EventSpec> blinks;
  std::vector<EventSpec> yawns;
  std::vector<EventSpec> nods;
  std::vector<EventSpec> talks;    // mouth family, label talking-laughing
  std::vector<EventSpec> glances;  // head family, label looking-aside
  LightingProfile lighting;

  /// Blinks at least this long mark the eye as sleepy and the frame as
  /// drowsy; shorter blinks are ordinary stillness.
  static constexpr std::size_t kSleepyBlinkFrames = 16;

  void validate() const {
    if (frames == 0) throw ValidationError("scene needs at least one frame");
    if (fps == 0) throw ValidationError("scene fps must be positive");
    if (size < 64)
      throw ValidationError("scene size must be >= 64, got " + std::to_string(size));
    if (sway_period <= 0.0) throw ValidationError("sway period must be positive");
    check_events(blinks, "blink");
    check_events(yawns, "yawn");
    check_events(nods, "nod");
    check_events(talks, "talk");
    check_events(glances, "glance");
    // Events that drive the same facial region must not overlap: a mouth
    // cannot yawn and talk at once, nor a head nod while glancing aside.
    check_family(merged(yawns, talks), "mouth");
    check_family(merged(nods, glances), "head");
    check_family(blinks, "eye");
  }

 private:
  void check_events(const std::vector<EventSpec>& events, const char* what) const {
    for (const EventSpec& e : events) {
      if (e.duration == 0)
        throw ValidationError(std::string(what) + " event duration must be >= 1");
      if (e.start >= frames || e.end() > frames)
        throw ValidationError(std::string(what) + " event [" + std::to_string(e.start) + "," +
                              std::to_string(e.end()) + ") exceeds the " +
                              std::to_string(frames) + "-frame scene");
    }
  }

  static std::vector<EventSpec> merged(const std::vector<EventSpec>& a,
                                       const std::vector<EventSpec>& b) {
    std::vector<EventSpec> all = a;
    all.insert(all.end(), b.begin(), b.end());
    return all;
  }

  static void check_family(std::vector<EventSpec> events, const char* family) {
    std::sort(events.begin(), events.end(),
              [](const EventSpec& x, const EventSpec& y) { return x.start < y.start; });
    for (std::size_t i = 1; i < events.size(); ++i)
      if (events[i].start < events[i - 1].end())
        throw ValidationError(std::string(family) + " events overlap at frame " +
                              std::to_string(events[i].start));
  }
};

/// Everything render_clip produces for one scene.
struct RenderedClip {
  std::vector<ImageU8> frames;
  std::vector<FrameLabels> labels;
  std::vector<FaceObservation> annotations;
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace synth_detail {

/// Smooth deterministic value noise in [-1,1]: bilinear blend of hashed
/// lattice corners, cell size 4 px. Sampling in face-local coordinates makes
/// the texture ride along with the face, giving the flow stage something to
/// track.
inline double value_noise(std::uint64_t key, double x, double y) {
  const double cell = 4.0;
  const double u = x / cell, v = y / cell;
  const double fu = std::floor(u), fv = std::floor(v);
  const long iu = static_cast<long>(fu), iv = static_cast<long>(fv);
  const double du = u - fu, dv = v - fv;
  auto corner = [key](long cx, long cy) {
    const std::uint64_t h = mix64(hash_combine(key, (static_cast<std::uint64_t>(cx) << 32) ^
                                                        static_cast<std::uint32_t>(cy)));
    return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;  // [-1,1)
  };
  const double a = corner(iu, iv), b = corner(iu + 1, iv);
  const double c = corner(iu, iv + 1), d = corner(iu + 1, iv + 1);
  return (1.0 - dv) * ((1.0 - du) * a + du * b) + dv * ((1.0 - du) * c + du * d);
}

/// Antialiased coverage from a signed distance (positive inside).
inline double coverage(double sd) { return std::clamp(sd + 0.5, 0.0, 1.0); }

inline double disc_sd(double x, double y, double cx, double cy, double r) {
  return r - std::hypot(x - cx, y - cy);
}

inline double rect_sd(double x, double y, double cx, double cy, double hx, double hy) {
  return std::min(std::min(x - (cx - hx), (cx + hx) - x),
                  std::min(y - (cy - hy), (cy + hy) - y));
}

/// Approximate signed distance to an axis-aligned ellipse (exact enough for
/// one-pixel antialiasing).
inline double ellipse_sd(double x, double y, double cx, double cy, double a, double b) {
  const double dx = (x - cx) / a, dy = (y - cy) / b;
  return (1.0 - std::hypot(dx, dy)) * std::min(a, b);
}

inline void blend(double& v, double value, double cov) { v = v + (value - v) * cov; }

}  // namespace synth_detail

/// Render a scene into frames, per-frame labels and ground-truth face
/// annotations. Same spec, same bytes. Throws when the lighting profile
/// clips more than 5% of all pixels.
inline RenderedClip render_clip(const SceneSpec& spec) {
  spec.validate();
  const double unit = static_cast<double>(spec.size) / 128.0;
  const double s = static_cast<double>(spec.size);

  Rng rng(spec.seed);
  const double sway_phase = rng.uniform(0.0, 6.283185307179586);
  const double sway_phase2 = rng.uniform(0.0, 6.283185307179586);
  const double face_r = (36.0 + 4.0 * (rng.uniform() - 0.5)) * unit;
  const std::uint64_t face_key = hash_combine(spec.seed, 0xfacefeed);
  const std::uint64_t bg_key = hash_combine(spec.seed, 0xba5eba11);

  RenderedClip out;
  out.frames.reserve(spec.frames);
  out.labels.reserve(spec.frames);
  out.annotations.reserve(spec.frames);

  std::size_t clipped = 0;
  const auto active = [](const std::vector<EventSpec>& events, std::size_t t,
                         const EventSpec** hit) {
    for (const EventSpec& e : events)
      if (e.covers(t)) {
        if (hit) *hit = &e;
        return true;
      }
    return false;
  };

  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double tt = static_cast<double>(t);
    const double ramp = spec.frames > 1 ? tt / static_cast<double>(spec.frames - 1) : 0.0;
    const double gain = spec.lighting.gain_start +
                        (spec.lighting.gain_end - spec.lighting.gain_start) * ramp;
    const double offset = spec.lighting.offset_start +
                          (spec.lighting.offset_end - spec.lighting.offset_start) * ramp;

    // Face placement: baseline sway plus scripted head motion. Head events
    // both translate the face and shift its features relative to the
    // outline (a pitch/yaw rotation seen head-on), so a face-tracked crop
    // still shows the motion.
    double fx = s / 2.0 +
                spec.sway_amp * unit * std::sin(6.283185307179586 * tt / spec.sway_period +
                                                sway_phase);
    double fy = s / 2.0 + 0.6 * spec.sway_amp * unit *
                              std::cos(5.026548245743669 * tt / spec.sway_period + sway_phase2);
    double pose_dx = 0.0, pose_dy = 0.0;
    const EventSpec* nod = nullptr;
    if (active(spec.nods, t, &nod)) {
      const double progress = static_cast<double>(t - nod->start);
      const double swing = std::sin(6.283185307179586 * progress / 12.0);
      fy += 6.0 * unit * swing;
      pose_dy = 3.0 * unit * swing;
    }
    const EventSpec* glance = nullptr;
    if (active(spec.glances, t, &glance)) {
      const double p = static_cast<double>(t - glance->start) /
                       static_cast<double>(glance->duration);
      const double sp = std::sin(3.141592653589793 * p);
      fx += 10.0 * unit * sp * sp;
      pose_dx = 5.0 * unit * sp * sp;
    }

    // Behaviour state for this frame.
    const EventSpec* blink = nullptr;
    const bool eyes_closed = active(spec.blinks, t, &blink);
    const bool sleepy = eyes_closed && blink->duration >= SceneSpec::kSleepyBlinkFrames;
    const EventSpec* yawn = nullptr;
    const bool yawning = active(spec.yawns, t, &yawn);
    const EventSpec* talk = nullptr;
    const bool talking = active(spec.talks, t, &talk);
    const bool nodding = nod != nullptr;
    const bool glancing = glance != nullptr;

    // Region geometry (face-local offsets scale with the frame).
    const double feat_x = fx + pose_dx;
    const double eye_y = fy - 10.0 * unit + pose_dy;
    const double eye_dx = 12.0 * unit;
    const double band_hx = 20.0 * unit, band_hy = 6.0 * unit;
    const double mouth_y = fy + 14.0 * unit + pose_dy;
    const double mouth_a = 8.0 * unit;
    double mouth_b = 3.0 * unit;
    if (yawning) {
      const double p = static_cast<double>(t - yawn->start) /
                       static_cast<double>(yawn->duration);
      mouth_b = (3.0 + 6.0 * std::sin(3.141592653589793 * p)) * unit;
    } else if (talking) {
      const double p = static_cast<double>(t - talk->start);
      mouth_b = (3.0 + 2.5 * std::abs(std::sin(6.283185307179586 * p / 4.0))) * unit;
    }

    ImageU8 frame(spec.size, spec.size);
    for (std::size_t y = 0; y < spec.size; ++y) {
      for (std::size_t x = 0; x < spec.size; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        double v = 60.0 + 5.0 * synth_detail::value_noise(bg_key, px, py);

        const double face_cov =
            synth_detail::coverage(synth_detail::disc_sd(px, py, fx, fy, face_r));
        if (face_cov > 0.0) {
          const double lx = px - fx, ly = py - fy;  // face-local coordinates
          const double face_v = 170.0 + 8.0 * synth_detail::value_noise(face_key, lx, ly);
          synth_detail::blend(v, face_v, face_cov);

          const double band_cov = synth_detail::coverage(
              synth_detail::rect_sd(px, py, feat_x, eye_y, band_hx, band_hy));
          if (band_cov > 0.0) {
            synth_detail::blend(v, eyes_closed ? 30.0 : 125.0, band_cov);
            if (!eyes_closed) {
              for (double sign : {-1.0, 1.0}) {
                const double pupil_cov = synth_detail::coverage(
                    synth_detail::disc_sd(px, py, feat_x + sign * eye_dx, eye_y, 3.0 * unit));
                if (pupil_cov > 0.0) synth_detail::blend(v, 60.0, pupil_cov);
              }
            }
          }
          const double mouth_cov = synth_detail::coverage(
              synth_detail::ellipse_sd(px, py, feat_x, mouth_y, mouth_a, mouth_b));
          if (mouth_cov > 0.0) synth_detail::blend(v, 70.0, mouth_cov);
        }

        const double lit = gain * v + offset;
        if (lit < 0.0 || lit > 255.0) ++clipped;
        frame.at(x, y) =
            static_cast<std::uint8_t>(std::lround(std::clamp(lit, 0.0, 255.0)));
      }
    }
    out.frames.push_back(std::move(frame));

    FrameLabels fl;
    fl.eye = sleepy ? 1 : 0;
    fl.mouth = yawning ? 1 : (talking ? 2 : 0);
    fl.head = nodding ? 1 : (glancing ? 2 : 0);
    fl.drowsy = (fl.eye == 1 || fl.mouth == 1 || fl.head == 1) ? 1 : 0;
    out.labels.push_back(fl);

    FaceObservation obs;
    const double margin = 2.0 * unit;
    obs.face = BBox{fx - face_r - margin, fy - face_r - margin, fx + face_r + margin,
                    fy + face_r + margin, 1.0};
    obs.lm.left_eye_x = feat_x - eye_dx;
    obs.lm.left_eye_y = eye_y;
    obs.lm.right_eye_x = feat_x + eye_dx;
    obs.lm.right_eye_y = eye_y;
    obs.lm.nose_x = feat_x;
    obs.lm.nose_y = fy + 4.0 * unit + pose_dy;
    obs.lm.mouth_left_x = feat_x - mouth_a;
    obs.lm.mouth_left_y = mouth_y;
    obs.lm.mouth_right_x = feat_x + mouth_a;
    obs.lm.mouth_right_y = mouth_y;
    out.annotations.push_back(obs);
  }

  const double total = static_cast<double>(spec.frames) * s * s;
  if (static_cast<double>(clipped) > 0.05 * total)
    throw ValidationError("lighting profile clips " + std::to_string(clipped) + " of " +
                          std::to_string(static_cast<std::size_t>(total)) +
                          " pixels (more than 5%)");
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark dataset generation
// ---------------------------------------------------------------------------

/// Parameters of a generated benchmark: n clips (one sampling window per
/// video), a drowsy/stillness balance, and stratified disjoint splits.
struct BenchmarkSpec {
  std::size_t clips = 200;
  double balance = 0.5;  // fraction of drowsy clips
  std::uint64_t seed = 1;
  std::size_t frames_per_video = 91;  // >= the sampling window span
  std::size_t size = 128;
  double train_frac = 0.7;
  double val_frac = 0.15;  // test gets the rest

  void validate() const {
    if (clips == 0) throw ValidationError("benchmark needs at least one clip");
    if (balance < 0.0 || balance > 1.0)
      throw ValidationError("class balance must be in [0,1], got " + std::to_string(balance));
    // The scripted behaviour recipes place events across a 91-frame span
    // (one 10-frame/stride-10 sampling window).
    if (frames_per_video < 91)
      throw ValidationError("benchmark videos need at least 91 frames, got " +
                            std::to_string(frames_per_video));
    if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0)
      throw ValidationError("split fractions must satisfy 0 < train, 0 <= val, train+val < 1");
  }
};

namespace synth_detail {

/// A sustained event long enough to dominate the window: strictly more
/// than half of the video's frames.
inline EventSpec dominant_event(const SceneSpec& scene, Rng& rng) {
  const std::size_t dur = scene.frames / 2 + 3 + rng.below(8);
  const std::size_t slack = scene.frames - dur - 2;
  return {2 + rng.below(slack), dur};
}

/// Scripted drowsy scene: one dominant sleepy pattern (microsleep, yawn or
/// nodding spell) so both the drowsiness label and the matching region
/// label hold a window majority; one variant stacks two patterns.
inline void script_drowsy(SceneSpec& scene, Rng& rng) {
  switch (rng.below(4)) {
    case 0:
      scene.blinks.push_back(dominant_event(scene, rng));
      break;
    case 1:
      scene.yawns.push_back(dominant_event(scene, rng));
      break;
    case 2:
      scene.nods.push_back(dominant_event(scene, rng));
      break;
    default:  // eyes falling shut while the head bobs (may overlap freely)
      scene.blinks.push_back(dominant_event(scene, rng));
      scene.nods.push_back(dominant_event(scene, rng));
      break;
  }
}

/// Scripted non-drowsy scene: nothing, sustained talking, a sustained
/// glance, or ordinary short blinks. Every frame stays Stillness on the
/// drowsiness axis; talking and glancing give the mouth/head labels their
/// non-drowsy classes.
inline void script_still(SceneSpec& scene, Rng& rng) {
  switch (rng.below(4)) {
    case 0:
      break;  // plain stillness
    case 1:
      scene.talks.push_back(dominant_event(scene, rng));
      break;
    case 2:
      scene.glances.push_back(dominant_event(scene, rng));
      break;
    default: {
      scene.blinks.push_back({5 + rng.below(10), 5 + rng.below(6)});
      scene.blinks.push_back({55 + rng.below(10), 5 + rng.below(6)});
      break;
    }
  }
}

inline std::string zero_pad(std::size_t v, int width) {
  std::ostringstream os;
  os << v;
  std::string s = os.str();
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace synth_detail

/// Build the scene for one benchmark clip. Exposed so tests can inspect the
/// scripts that make_benchmark writes to disk.
inline SceneSpec benchmark_scene(const BenchmarkSpec& spec, std::size_t index, bool drowsy) {
  SceneSpec scene;
  scene.seed = hash_combine(spec.seed, index + 1);
  scene.frames = spec.frames_per_video;
  scene.size = spec.size;
  Rng rng(hash_combine(scene.seed, drowsy ? 2 : 1));
  scene.sway_amp = 0.6 + rng.uniform();
  scene.sway_period = 37.0 + 20.0 * rng.uniform();
  // Mild day/night drift; far away from the 5% clipping guard.
  scene.lighting.gain_start = 0.9 + 0.2 * rng.uniform();
  scene.lighting.gain_end = 0.9 + 0.2 * rng.uniform();
  scene.lighting.offset_start = -12.0 + 24.0 * rng.uniform();
  scene.lighting.offset_end = -12.0 + 24.0 * rng.uniform();
  if (drowsy)
    synth_detail::script_drowsy(scene, rng);
  else
    synth_detail::script_still(scene, rng);
  scene.validate();
  return scene;
}

/// Generate the full benchmark under root: per video a frames/ directory of
/// PGMs plus labels.csv and annotations.txt, and a manifest.csv assigning
/// every video to a split. Deterministic in the spec; existing files are
/// overwritten.
inline std::vector<ManifestEntry> make_benchmark(const std::filesystem::path& root,
                                                 const BenchmarkSpec& spec) {
  spec.validate();
  const std::size_t n_drowsy =
      static_cast<std::size_t>(std::llround(spec.balance * static_cast<double>(spec.clips)));

  // Stratified split assignment: shuffle each class separately, then slice,
  // so every split stays balanced to within one clip.
  std::vector<std::size_t> drowsy_ids, still_ids;
  for (std::size_t i = 0; i < spec.clips; ++i)
    (i < n_drowsy ? drowsy_ids : still_ids).push_back(i);

  std::vector<std::string> split_of(spec.clips, "train");
  const auto assign = [&](std::vector<std::size_t>& ids, std::uint64_t salt) {
    Rng rng(hash_combine(spec.seed, salt));
    for (std::size_t i = ids.size(); i > 1; --i)
      std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.below(i))]);
    const std::size_t n = ids.size();
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(n)));
    const std::size_t n_val =
        static_cast<std::size_t>(std::llround(spec.val_frac * static_cast<double>(n)));
    for (std::size_t k = 0; k < n; ++k) {
      if (k < n_train)
        split_of[ids[k]] = "train";
      else if (k < n_train + n_val)
        split_of[ids[k]] = "val";
      else
        split_of[ids[k]] = "test";
    }
  };
  assign(drowsy_ids, 101);
  assign(still_ids, 202);

  std::vector<ManifestEntry> manifest;
  for (std::size_t i = 0; i < spec.clips; ++i) {
    const bool drowsy = i < n_drowsy;
    const SceneSpec scene = benchmark_scene(spec, i, drowsy);
    const RenderedClip clip = render_clip(scene);

    const std::string video_id = "clip_" + synth_detail::zero_pad(i, 4);
    const std::filesystem::path vdir = root / video_id;
    std::filesystem::create_directories(vdir / "frames");
    for (std::size_t f = 0; f < clip.frames.size(); ++f)
      write_pgm(vdir / "frames" / (synth_detail::zero_pad(f, 6) + ".pgm"), clip.frames[f]);

    std::ofstream labels(vdir / "labels.csv");
    if (!labels) throw IoError("cannot write " + (vdir / "labels.csv").string());
    write_labels_csv(labels, clip.labels);

    std::ofstream ann(vdir / "annotations.txt");
    if (!ann) throw IoError("cannot write " + (vdir / "annotations.txt").string());
    for (std::size_t f = 0; f < clip.annotations.size(); ++f)
      write_annotation_line(ann, f, clip.annotations[f]);

    manifest.push_back({video_id, split_of[i]});
  }

  std::ofstream mf(root / "manifest.csv");
  if (!mf) throw IoError("cannot write " + (root / "manifest.csv").string());
  mf << "video_id,split\n";
  for (const ManifestEntry& e : manifest) mf << e.video_id << ',' << e.split << '\n';
  return manifest;
}

}  // namespace drowsy
