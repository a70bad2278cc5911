#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "drowsy/checkpoint.hpp"
#include "drowsy/common.hpp"
#include "drowsy/config.hpp"
#include "drowsy/dataset.hpp"
#include "drowsy/model.hpp"
#include "drowsy/synth.hpp"
#include "drowsy/train.hpp"

namespace drowsy {

// ---------------------------------------------------------------------------
// Artifact layout
// ---------------------------------------------------------------------------

/// Where one configuration's artifacts live. Metrics CSVs hold only
/// deterministic columns so same-seed reruns are byte-identical; wall-clock
/// measurements go to companion .timing.txt files.
struct RunPaths {
  std::filesystem::path output_dir;

  explicit RunPaths(const PipelineConfig& cfg) : output_dir(cfg.output_dir) {}

  std::filesystem::path pretrain_ckpt(const std::string& prefix) const {
    return output_dir / ("pretrain_" + prefix + ".ckpt");
  }
  std::filesystem::path pretrain_csv(const std::string& prefix) const {
    return output_dir / ("pretrain_" + prefix + ".csv");
  }
  std::filesystem::path model_ckpt() const { return output_dir / "model.ckpt"; }
  std::filesystem::path train_csv() const { return output_dir / "train.csv"; }
  std::filesystem::path eval_json(const std::string& split) const {
    return output_dir / ("eval_" + split + ".json");
  }
  std::filesystem::path timing(const std::string& name) const {
    return output_dir / (name + ".timing.txt");
  }
};

namespace pipeline_detail {

inline constexpr std::uint64_t kFusionSeedSalt = 1000003;

/// Per-component seeds so sibling sub-networks never share initial weights.
inline std::uint64_t component_seed(std::uint64_t base, const std::string& prefix) {
  std::uint64_t h = base;
  for (const char c : prefix) h = hash_combine(h, static_cast<std::uint64_t>(c));
  return h;
}

inline void write_timing(const std::filesystem::path& path, double seconds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write timing file " + path.string());
  out.precision(3);
  out << std::fixed << seconds << '\n';
}

inline void write_csv(const std::filesystem::path& path, const std::vector<EpochStats>& stats,
                      std::size_t classes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file " + path.string());
  write_metrics_csv(out, stats, classes);
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace pipeline_detail

// ---------------------------------------------------------------------------
// Sample -> training example adapters
// ---------------------------------------------------------------------------

inline const CompactClip& sample_region(const CompactSample& sample, const std::string& prefix) {
  if (prefix == "eye") return sample.eyes;
  if (prefix == "mouth") return sample.mouth;
  if (prefix == "head") return sample.head;
  throw ConfigError("unknown sub-network '" + prefix + "'");
}

/// Loader feeding one facial region's patches into sub-network pretraining.
inline ClipLoader region_loader(const std::vector<CompactSample>& samples,
                                const std::string& prefix) {
  return [&samples, prefix](std::size_t i) {
    const CompactClip& clip = sample_region(samples.at(i), prefix);
    return LabeledClip{clip.rgb_tensor(), clip.flow_tensor(), clip.label};
  };
}

/// Loader feeding every participating region into fusion training, labeled
/// with the window's drowsiness.
inline FusedLoader fused_loader(const std::vector<CompactSample>& samples,
                                const std::vector<SubNetPlan>& plans) {
  return [&samples, &plans](std::size_t i) {
    const CompactSample& s = samples.at(i);
    FusedClip clip;
    clip.label = s.drowsy;
    for (const SubNetPlan& plan : plans) {
      const CompactClip& region = sample_region(s, plan.prefix);
      clip.rgb.push_back(region.rgb_tensor());
      clip.flow.push_back(region.flow_tensor());
    }
    return clip;
  };
}

// ---------------------------------------------------------------------------
// Dataset plumbing
// ---------------------------------------------------------------------------

/// Manifest of the configured dataset; error if it has not been generated.
inline std::vector<ManifestEntry> pipeline_manifest(const PipelineConfig& cfg) {
  const std::filesystem::path path = std::filesystem::path(cfg.dataset_root) / "manifest.csv";
  if (!std::filesystem::exists(path))
    throw ConfigError("dataset root '" + cfg.dataset_root +
                      "' has no manifest.csv (run generate first)");
  return read_manifest(path);
}

inline std::vector<CompactSample> pipeline_split(const PipelineConfig& cfg,
                                                 const std::string& split) {
  return load_split(cfg.dataset_root, cfg.cache_dir, pipeline_manifest(cfg), cfg.preprocess(),
                    split);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Generate the synthetic benchmark at dataset_root. Refuses to overwrite
/// an existing dataset unless forced.
inline std::vector<ManifestEntry> cmd_generate(const PipelineConfig& cfg, bool force) {
  const std::filesystem::path root(cfg.dataset_root);
  if (std::filesystem::exists(root / "manifest.csv") && !force)
    throw ConfigError("dataset root '" + cfg.dataset_root +
                      "' already holds a dataset; pass --force to regenerate");
  BenchmarkSpec spec;
  spec.clips = cfg.generate_clips;
  spec.balance = cfg.generate_balance;
  spec.seed = cfg.seed;
  spec.frames_per_video = cfg.video_frames;
  spec.size = cfg.video_size;
  return make_benchmark(root, spec);
}

/// Fill the preprocessing cache for every manifest video.
inline CacheStats cmd_preprocess(const PipelineConfig& cfg) {
  return ensure_cached(cfg.dataset_root, cfg.cache_dir, pipeline_manifest(cfg),
                       cfg.preprocess());
}

/// Pretrain one sub-network on its region labels over already-loaded train
/// samples; writes checkpoint, metrics CSV and timing file. Returns the
/// trained parameters (probe included) and the per-epoch curve.
inline TrainResult run_pretrain(const PipelineConfig& cfg, const std::string& feature,
                                const std::vector<CompactSample>& train) {
  const pipeline_detail::Stopwatch watch;
  const std::vector<SubNetPlan> plans = cfg.subnet_plans();
  const SubNetPlan* plan = nullptr;
  for (const SubNetPlan& p : plans)
    if (p.prefix == feature) plan = &p;
  if (plan == nullptr)
    throw ConfigError("unknown sub-network '" + feature +
                      "' for this configuration (face-only runs use 'head' alone)");

  TrainConfig tc = cfg.optimizer(cfg.pretrain_epochs);
  tc.seed = pipeline_detail::component_seed(cfg.seed, feature);
  TrainResult result =
      pretrain_subnet(region_loader(train, feature), train.size(), plan->cfg, feature,
                      PipelineConfig::probe_classes(feature), tc);

  const RunPaths paths(cfg);
  std::filesystem::create_directories(paths.output_dir);
  save_checkpoint(paths.pretrain_ckpt(feature), result.params.tensors);
  pipeline_detail::write_csv(paths.pretrain_csv(feature), result.epochs,
                             PipelineConfig::probe_classes(feature));
  pipeline_detail::write_timing(paths.timing("pretrain_" + feature), watch.seconds());
  return result;
}

inline TrainResult cmd_pretrain(const PipelineConfig& cfg, const std::string& feature) {
  cfg.validate();
  return run_pretrain(cfg, feature, pipeline_split(cfg, "train"));
}

struct TrainOutput {
  ModelParams params;
  std::vector<EpochStats> epochs;
};

/// Train the fused model: reuse (or produce) pretrained trunks when
/// pretraining is enabled, then train the fusion head — frozen trunks by
/// default. Writes model checkpoint, metrics CSV and timing file.
inline TrainOutput cmd_train(const PipelineConfig& cfg) {
  cfg.validate();
  const pipeline_detail::Stopwatch watch;
  const std::vector<SubNetPlan> plans = cfg.subnet_plans();
  const FusionConfig fusion = cfg.fusion();
  const RunPaths paths(cfg);
  std::filesystem::create_directories(paths.output_dir);

  const std::vector<CompactSample> train = pipeline_split(cfg, "train");

  ModelParams params;
  bool freeze = false;
  if (cfg.pretrain) {
    for (const SubNetPlan& plan : plans) {
      const std::filesystem::path ckpt = paths.pretrain_ckpt(plan.prefix);
      ModelParams trunk;
      if (std::filesystem::exists(ckpt)) {
        trunk.tensors = load_checkpoint(ckpt);
      } else {
        trunk = run_pretrain(cfg, plan.prefix, train).params;
      }
      params.merge(strip_probes(trunk));
    }
    freeze = cfg.freeze_trunks;
  } else {
    for (const SubNetPlan& plan : plans) add_subnet_params(params, plan.cfg, plan.prefix);
  }

  ModelParams fusion_params;
  add_fusion_params(fusion_params, fusion);
  fusion_params.he_init(hash_combine(cfg.seed, pipeline_detail::kFusionSeedSalt));
  params.merge(fusion_params);
  if (!cfg.pretrain) {
    // Joint training from scratch: one draw over the full parameter set.
    params.he_init(cfg.seed);
  }

  TrainConfig tc = cfg.optimizer(cfg.train_epochs);
  tc.seed = hash_combine(cfg.seed, pipeline_detail::kFusionSeedSalt);
  TrainOutput out;
  out.epochs = train_fusion(fused_loader(train, plans), train.size(), plans, fusion, params, tc,
                            freeze);
  out.params = std::move(params);

  save_checkpoint(paths.model_ckpt(), out.params.tensors);
  pipeline_detail::write_csv(paths.train_csv(), out.epochs, fusion.classes);
  pipeline_detail::write_timing(paths.timing("train"), watch.seconds());
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation and prediction
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string split;
  EvalResult result;
};

namespace pipeline_detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace pipeline_detail

/// Render an evaluation report as JSON (deterministic field order and
/// number formatting).
inline std::string eval_report_json(const EvalReport& report) {
  const EvalResult& r = report.result;
  const std::size_t classes = r.recall.size();
  std::ostringstream os;
  os << "{\n";
  os << "  \"split\": \"" << report.split << "\",\n";
  os << "  \"count\": " << r.count << ",\n";
  os << "  \"accuracy\": " << pipeline_detail::fmt_double(r.accuracy) << ",\n";
  os << "  \"recall\": [";
  for (std::size_t c = 0; c < classes; ++c)
    os << (c ? ", " : "") << pipeline_detail::fmt_double(r.recall[c]);
  os << "],\n";
  os << "  \"confusion\": [";
  for (std::size_t i = 0; i < classes; ++i) {
    os << (i ? ", [" : "[");
    for (std::size_t j = 0; j < classes; ++j)
      os << (j ? ", " : "") << r.confusion[i * classes + j];
    os << "]";
  }
  os << "]\n}\n";
  return os.str();
}

inline ModelParams load_model(const PipelineConfig& cfg) {
  const RunPaths paths(cfg);
  if (!std::filesystem::exists(paths.model_ckpt()))
    throw ConfigError("model checkpoint '" + paths.model_ckpt().string() +
                      "' not found (run train first)");
  ModelParams params;
  params.tensors = load_checkpoint(paths.model_ckpt());
  return params;
}

/// Evaluate the trained model on one split; writes eval_<split>.json.
inline EvalReport cmd_eval(const PipelineConfig& cfg, const std::string& split) {
  cfg.validate();
  if (split != "train" && split != "val" && split != "test")
    throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
  const ModelParams params = load_model(cfg);
  const std::vector<SubNetPlan> plans = cfg.subnet_plans();
  const std::vector<CompactSample> samples = pipeline_split(cfg, split);
  if (samples.empty()) throw ConfigError("split '" + split + "' holds no samples");

  EvalReport report;
  report.split = split;
  report.result =
      evaluate_fused(fused_loader(samples, plans), samples.size(), plans, cfg.fusion(), params);

  const RunPaths paths(cfg);
  std::filesystem::create_directories(paths.output_dir);
  std::ofstream out(paths.eval_json(split));
  if (!out) throw IoError("cannot write " + paths.eval_json(split).string());
  out << eval_report_json(report);
  return report;
}

struct WindowPrediction {
  std::size_t start = 0;
  double p_drowsy = 0.0;
  std::string label;  // drowsiness class name
};

inline std::string predictions_json(const std::vector<WindowPrediction>& preds) {
  std::ostringstream os;
  os << "[\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    os << "  {\"window_start\": " << preds[i].start
       << ", \"p_drowsy\": " << pipeline_detail::fmt_double(preds[i].p_drowsy)
       << ", \"label\": \"" << preds[i].label << "\"}" << (i + 1 < preds.size() ? "," : "")
       << "\n";
  }
  os << "]\n";
  return os.str();
}

/// Run the trained model over every sampling window of one video directory.
inline std::vector<WindowPrediction> cmd_predict(const PipelineConfig& cfg,
                                                 const std::filesystem::path& video_dir) {
  cfg.validate();
  const ModelParams params = load_model(cfg);
  const std::vector<SubNetPlan> plans = cfg.subnet_plans();
  const FusionConfig fusion = cfg.fusion();
  const PreprocessConfig pre = cfg.preprocess();

  const std::filesystem::path dir = video_dir.lexically_normal();
  const VideoData video = load_video(dir.parent_path(), dir.filename().string());

  std::vector<WindowPrediction> out;
  for (const std::size_t start : windows(video.frame_count(), pre.clip, pre.hop)) {
    const CompactSample sample = preprocess_window(video, start, pre);
    std::vector<Tensor> features;
    for (const SubNetPlan& plan : plans) {
      const CompactClip& region = sample_region(sample, plan.prefix);
      features.push_back(subnet_forward(region.rgb_tensor(), region.flow_tensor(), plan.cfg,
                                        params, plan.prefix));
    }
    const Tensor probs = fusion_forward(features, fusion, params);
    WindowPrediction p;
    p.start = start;
    p.p_drowsy = probs.vec()[1];
    p.label = LabelTaxonomy::drowsiness_name(p.p_drowsy >= 0.5 ? 1 : 0);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace drowsy
