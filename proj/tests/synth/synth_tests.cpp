#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "drowsy/flow.hpp"
#include "drowsy/geometry.hpp"
#include "drowsy/synth.hpp"

using Catch::Matchers::ContainsSubstring;
using namespace drowsy;

namespace {

bool same_pixels(const ImageU8& a, const ImageU8& b) {
  return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
}

/// Mean intensity over an axis-aligned box, sampling pixel centers.
double box_mean(const ImageU8& img, const BBox& box) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      const double cy = static_cast<double>(y) + 0.5;
      if (cx < box.x1 || cx > box.x2 || cy < box.y1 || cy > box.y2) continue;
      sum += static_cast<double>(img.at(x, y));
      ++n;
    }
  }
  REQUIRE(n > 0);
  return sum / static_cast<double>(n);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("drowsy_synth_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("scene validation rejects malformed specs") {
  SceneSpec s;
  s.frames = 40;

  SECTION("empty scene") {
    s.frames = 0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SECTION("tiny canvas") {
    s.size = 32;
    CHECK_THROWS_WITH(s.validate(), ContainsSubstring(">= 64"));
  }
  SECTION("zero-length event") {
    s.blinks.push_back({5, 0});
    CHECK_THROWS_WITH(s.validate(), ContainsSubstring("duration"));
  }
  SECTION("event past the end") {
    s.yawns.push_back({30, 20});
    CHECK_THROWS_WITH(s.validate(), ContainsSubstring("exceeds"));
  }
  SECTION("event starting past the end") {
    s.nods.push_back({40, 3});
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
}

TEST_CASE("contradictory events in one facial region are rejected") {
  SceneSpec s;
  s.frames = 60;

  SECTION("yawning while talking") {
    s.yawns.push_back({10, 20});
    s.talks.push_back({25, 10});
    CHECK_THROWS_WITH(s.validate(), ContainsSubstring("mouth events overlap"));
  }
  SECTION("nodding while glancing") {
    s.nods.push_back({5, 30});
    s.glances.push_back({20, 5});
    CHECK_THROWS_WITH(s.validate(), ContainsSubstring("head events overlap"));
  }
  SECTION("blink on blink") {
    s.blinks.push_back({10, 10});
    s.blinks.push_back({15, 10});
    CHECK_THROWS_WITH(s.validate(), ContainsSubstring("eye events overlap"));
  }
  SECTION("different regions may act at once") {
    s.blinks.push_back({10, 20});
    s.yawns.push_back({12, 15});
    s.nods.push_back({11, 18});
    CHECK_NOTHROW(s.validate());
  }
  SECTION("back-to-back events in one region are fine") {
    s.talks.push_back({10, 10});
    s.yawns.push_back({20, 10});
    CHECK_NOTHROW(s.validate());
  }
}

TEST_CASE("event-free scene is pure stillness") {
  SceneSpec s;
  s.seed = 7;
  s.frames = 12;
  const RenderedClip clip = render_clip(s);

  REQUIRE(clip.frames.size() == 12);
  REQUIRE(clip.labels.size() == 12);
  REQUIRE(clip.annotations.size() == 12);

  for (const FrameLabels& l : clip.labels) {
    CHECK(l.drowsy == 0);
    CHECK(l.eye == 0);
    CHECK(l.mouth == 0);
    CHECK(l.head == 0);
  }

  SECTION("frames are bit-identical, so inter-frame motion is zero") {
    for (std::size_t t = 1; t < clip.frames.size(); ++t)
      CHECK(same_pixels(clip.frames[0], clip.frames[t]));
    const FlowResult flow = horn_schunck(clip.frames[0], clip.frames[1], 10.0, 30);
    for (double u : flow.field.u) CHECK(u == 0.0);
    for (double v : flow.field.v) CHECK(v == 0.0);
  }
}

TEST_CASE("a sustained blink labels exactly its own frames sleepy") {
  SceneSpec s;
  s.seed = 3;
  s.frames = 70;
  s.blinks.push_back({20, 30});
  const RenderedClip clip = render_clip(s);

  std::size_t sleepy = 0;
  for (std::size_t t = 0; t < clip.labels.size(); ++t) {
    const bool in_event = t >= 20 && t < 50;
    INFO("frame " << t);
    CHECK(clip.labels[t].eye == (in_event ? 1 : 0));
    CHECK(clip.labels[t].drowsy == (in_event ? 1 : 0));
    if (clip.labels[t].eye == 1) ++sleepy;
  }
  CHECK(sleepy == 30);
}

TEST_CASE("blink duration threshold separates glances from microsleeps") {
  SceneSpec s;
  s.frames = 60;

  SECTION("15 frames is still ordinary blinking") {
    s.blinks.push_back({10, 15});
    const RenderedClip clip = render_clip(s);
    for (const FrameLabels& l : clip.labels) {
      CHECK(l.eye == 0);
      CHECK(l.drowsy == 0);
    }
  }
  SECTION("16 frames crosses into sleepy-eyes") {
    s.blinks.push_back({10, 16});
    const RenderedClip clip = render_clip(s);
    std::size_t sleepy = 0;
    for (const FrameLabels& l : clip.labels) sleepy += l.eye;
    CHECK(sleepy == 16);
  }
}

TEST_CASE("behaviour events map onto the label taxonomy") {
  SceneSpec s;
  s.frames = 80;
  s.yawns.push_back({5, 12});
  s.talks.push_back({25, 10});
  s.nods.push_back({40, 10});
  s.glances.push_back({60, 8});
  const RenderedClip clip = render_clip(s);

  CHECK(clip.labels[8].mouth == 1);
  CHECK(clip.labels[8].drowsy == 1);  // yawning is a drowsiness sign
  CHECK(clip.labels[28].mouth == 2);
  CHECK(clip.labels[28].drowsy == 0);  // talking is not
  CHECK(clip.labels[44].head == 1);
  CHECK(clip.labels[44].drowsy == 1);  // nodding is
  CHECK(clip.labels[63].head == 2);
  CHECK(clip.labels[63].drowsy == 0);  // looking aside is not
  CHECK(clip.labels[20].drowsy == 0);  // gap between events
}

TEST_CASE("rendering is deterministic in the spec") {
  SceneSpec s;
  s.seed = 99;
  s.frames = 25;
  s.sway_amp = 1.3;
  s.blinks.push_back({4, 18});
  s.nods.push_back({2, 12});
  s.lighting.gain_start = 0.95;
  s.lighting.gain_end = 1.05;

  const RenderedClip a = render_clip(s);
  const RenderedClip b = render_clip(s);
  REQUIRE(a.frames.size() == b.frames.size());
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    CHECK(same_pixels(a.frames[t], b.frames[t]));
    CHECK(a.annotations[t].face.x1 == b.annotations[t].face.x1);
    CHECK(a.annotations[t].lm.left_eye_x == b.annotations[t].lm.left_eye_x);
  }

  SceneSpec other = s;
  other.seed = 100;
  const RenderedClip c = render_clip(other);
  std::size_t differing = 0;
  for (std::size_t t = 0; t < a.frames.size(); ++t)
    if (!same_pixels(a.frames[t], c.frames[t])) ++differing;
  CHECK(differing > 0);
}

TEST_CASE("blinking collapses the measured eye-region intensity") {
  SceneSpec s;
  s.seed = 11;
  s.frames = 60;
  s.blinks.push_back({20, 20});
  const RenderedClip clip = render_clip(s);

  const auto eye_mean = [&](std::size_t t) {
    const FaceObservation& obs = clip.annotations[t];
    const PatchBoxes boxes =
        patch_boxes(obs.lm, obs.face, clip.frames[t].width, clip.frames[t].height);
    return box_mean(clip.frames[t], boxes.eyes);
  };

  const double open_mean = eye_mean(5);
  const double closed_mean = eye_mean(30);
  INFO("open " << open_mean << " closed " << closed_mean);
  CHECK(open_mean - closed_mean >= 40.0);
}

TEST_CASE("nodding moves the face vertically, not sideways") {
  SceneSpec s;
  s.seed = 4;
  s.frames = 30;
  s.sway_amp = 0.8;  // benchmark-like baseline jitter
  s.nods.push_back({5, 20});
  const RenderedClip clip = render_clip(s);

  double vert = 0.0, horiz = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 8; t < 16; ++t) {
    const FlowResult flow = horn_schunck(clip.frames[t], clip.frames[t + 1], 12.0, 80);
    const BBox& face = clip.annotations[t].face;
    for (std::size_t y = 0; y < clip.frames[t].height; ++y) {
      for (std::size_t x = 0; x < clip.frames[t].width; ++x) {
        const double cx = static_cast<double>(x) + 0.5;
        const double cy = static_cast<double>(y) + 0.5;
        if (cx < face.x1 || cx > face.x2 || cy < face.y1 || cy > face.y2) continue;
        vert += std::abs(flow.field.v_at(x, y));
        horiz += std::abs(flow.field.u_at(x, y));
        ++n;
      }
    }
  }
  REQUIRE(n > 0);
  INFO("mean |v| " << vert / n << " mean |u| " << horiz / n);
  CHECK(vert >= 2.0 * horiz);
}

TEST_CASE("lighting ramps are bounded by the clipping guard") {
  SceneSpec s;
  s.seed = 5;
  s.frames = 20;

  SECTION("mild day-night drift is accepted") {
    s.lighting = {0.9, 1.1, -10.0, 10.0};
    const RenderedClip clip = render_clip(s);
    CHECK(clip.frames.size() == 20);
  }
  SECTION("blowing out the image is rejected") {
    s.lighting = {1.0, 3.5, 0.0, 120.0};
    CHECK_THROWS_WITH(render_clip(s), ContainsSubstring("5%"));
  }
  SECTION("crushing the image is rejected") {
    s.lighting = {1.0, 0.05, 0.0, -80.0};
    CHECK_THROWS_AS(render_clip(s), ValidationError);
  }
}

TEST_CASE("annotations track the rendered face") {
  SceneSpec s;
  s.seed = 21;
  s.frames = 40;
  s.sway_amp = 1.5;
  s.nods.push_back({10, 20});
  const RenderedClip clip = render_clip(s);

  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const FaceObservation& obs = clip.annotations[t];
    CHECK_NOTHROW(obs.face.validate());
    CHECK_NOTHROW(obs.lm.validate());
    // Landmarks sit inside the face box.
    for (double x : {obs.lm.left_eye_x, obs.lm.right_eye_x, obs.lm.nose_x, obs.lm.mouth_left_x,
                     obs.lm.mouth_right_x}) {
      CHECK(x > obs.face.x1);
      CHECK(x < obs.face.x2);
    }
    for (double y : {obs.lm.left_eye_y, obs.lm.right_eye_y, obs.lm.nose_y, obs.lm.mouth_left_y,
                     obs.lm.mouth_right_y}) {
      CHECK(y > obs.face.y1);
      CHECK(y < obs.face.y2);
    }
    // The derived crop regions exist for every frame.
    CHECK_NOTHROW(patch_boxes(obs.lm, obs.face, clip.frames[t].width, clip.frames[t].height));
  }

  SECTION("nodding shows up as vertical landmark motion") {
    double max_dy = 0.0, max_dx = 0.0;
    for (std::size_t t = 11; t < 30; ++t) {
      max_dy = std::max(max_dy, std::abs(clip.annotations[t].lm.nose_y -
                                         clip.annotations[t - 1].lm.nose_y));
      max_dx = std::max(max_dx, std::abs(clip.annotations[t].lm.nose_x -
                                         clip.annotations[t - 1].lm.nose_x));
    }
    CHECK(max_dy > 2.0);
    CHECK(max_dy > 2.0 * max_dx);
  }
}

TEST_CASE("benchmark scenes produce the intended window label") {
  BenchmarkSpec spec;
  spec.clips = 40;
  spec.seed = 17;

  for (std::size_t i = 0; i < spec.clips; ++i) {
    const bool want_drowsy = i < 20;
    const SceneSpec scene = benchmark_scene(spec, i, want_drowsy);
    const RenderedClip clip = render_clip(scene);
    std::size_t drowsy_frames = 0;
    for (const FrameLabels& l : clip.labels) drowsy_frames += l.drowsy;
    INFO("clip " << i << " drowsy frames " << drowsy_frames << "/" << clip.labels.size());
    if (want_drowsy)
      CHECK(2 * drowsy_frames > clip.labels.size());  // strict majority
    else
      CHECK(drowsy_frames == 0);
  }
}

TEST_CASE("benchmark generation writes a coherent dataset") {
  TempDir dir("bench");
  BenchmarkSpec spec;
  spec.clips = 10;
  spec.balance = 0.5;
  spec.seed = 9;

  const std::vector<ManifestEntry> manifest = make_benchmark(dir.path, spec);
  REQUIRE(manifest.size() == 10);

  SECTION("manifest covers every clip exactly once with valid splits") {
    std::set<std::string> ids;
    std::size_t train = 0, val = 0, test = 0;
    for (const ManifestEntry& e : manifest) {
      ids.insert(e.video_id);
      if (e.split == "train") ++train;
      if (e.split == "val") ++val;
      if (e.split == "test") ++test;
    }
    CHECK(ids.size() == 10);
    CHECK(train + val + test == 10);
    CHECK(train >= val);
    CHECK(train >= test);
    const std::vector<ManifestEntry> reread = read_manifest(dir.path / "manifest.csv");
    REQUIRE(reread.size() == manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      CHECK(reread[i].video_id == manifest[i].video_id);
      CHECK(reread[i].split == manifest[i].split);
    }
  }

  SECTION("class balance lands within one clip of the target") {
    std::size_t drowsy_clips = 0;
    for (const ManifestEntry& e : manifest) {
      std::ifstream labels(dir.path / e.video_id / "labels.csv");
      REQUIRE(labels.good());
      const auto per_frame = read_labels_csv(labels);
      REQUIRE(per_frame.size() == 91);
      std::size_t drowsy_frames = 0;
      for (const auto& [frame, l] : per_frame) drowsy_frames += l.drowsy;
      if (2 * drowsy_frames > per_frame.size()) ++drowsy_clips;
    }
    CHECK(drowsy_clips == 5);
  }

  SECTION("per-video files are complete and self-consistent") {
    for (const ManifestEntry& e : manifest) {
      const std::filesystem::path vdir = dir.path / e.video_id;
      REQUIRE(std::filesystem::exists(vdir / "labels.csv"));
      REQUIRE(std::filesystem::exists(vdir / "annotations.txt"));
      std::size_t frame_count = 0;
      for (const auto& entry : std::filesystem::directory_iterator(vdir / "frames"))
        if (entry.path().extension() == ".pgm") ++frame_count;
      CHECK(frame_count == 91);
      const ImageU8 first = read_pgm(vdir / "frames" / "000000.pgm");
      CHECK(first.width == 128);
      CHECK(first.height == 128);
      const auto ann = read_annotations(vdir / "annotations.txt");
      CHECK(ann.size() == 91);
      CHECK(ann.count(0) == 1);
      CHECK(ann.count(90) == 1);
    }
  }

  SECTION("regenerating with the same seed reproduces identical bytes") {
    const std::string manifest_a = slurp(dir.path / "manifest.csv");
    const std::string labels_a = slurp(dir.path / manifest[2].video_id / "labels.csv");
    const std::string frame_a =
        slurp(dir.path / manifest[2].video_id / "frames" / "000010.pgm");
    const std::string ann_a = slurp(dir.path / manifest[2].video_id / "annotations.txt");

    make_benchmark(dir.path, spec);
    CHECK(slurp(dir.path / "manifest.csv") == manifest_a);
    CHECK(slurp(dir.path / manifest[2].video_id / "labels.csv") == labels_a);
    CHECK(slurp(dir.path / manifest[2].video_id / "frames" / "000010.pgm") == frame_a);
    CHECK(slurp(dir.path / manifest[2].video_id / "annotations.txt") == ann_a);
  }
}

TEST_CASE("benchmark spec validation") {
  BenchmarkSpec spec;
  SECTION("zero clips") {
    spec.clips = 0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
  }
  SECTION("balance out of range") {
    spec.balance = 1.5;
    CHECK_THROWS_WITH(spec.validate(), ContainsSubstring("balance"));
  }
  SECTION("degenerate splits") {
    spec.train_frac = 0.8;
    spec.val_frac = 0.3;
    CHECK_THROWS_WITH(spec.validate(), ContainsSubstring("split fractions"));
  }
}

TEST_CASE("manifest parsing rejects damaged files") {
  TempDir dir("manifest");
  SECTION("missing file") {
    CHECK_THROWS_AS(read_manifest(dir.path / "absent.csv"), IoError);
  }
  SECTION("bad header") {
    std::ofstream(dir.path / "m.csv") << "id;split\n";
    CHECK_THROWS_WITH(read_manifest(dir.path / "m.csv"), ContainsSubstring("header"));
  }
  SECTION("unknown split") {
    std::ofstream(dir.path / "m.csv") << "video_id,split\nclip_0000,holdout\n";
    CHECK_THROWS_WITH(read_manifest(dir.path / "m.csv"), ContainsSubstring("unknown split"));
  }
  SECTION("missing comma") {
    std::ofstream(dir.path / "m.csv") << "video_id,split\nclip_0000\n";
    CHECK_THROWS_AS(read_manifest(dir.path / "m.csv"), IoError);
  }
}
