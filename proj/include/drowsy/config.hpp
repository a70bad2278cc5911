#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/dataset.hpp"
#include "drowsy/model.hpp"
#include "drowsy/train.hpp"

namespace drowsy {

/// Every tunable of the pipeline in one flat structure, loadable from a
/// `key = value` file. Field defaults are the shipped configuration.
struct PipelineConfig {
  // Paths (relative paths resolve against the working directory).
  std::string dataset_root = "data/benchmark";
  std::string cache_dir = "cache";
  std::string output_dir = "runs";

  // Dataset generation.
  std::size_t generate_clips = 200;
  double generate_balance = 0.5;
  std::size_t video_frames = 91;
  std::size_t video_size = 128;

  // Temporal sampling: one clip takes `clip_count` frames, one every
  // `clip_stride`; windows advance by `window_hop` (0 = non-overlapping).
  std::size_t clip_stride = 10;
  std::size_t clip_count = 10;
  std::size_t window_hop = 0;

  // Patch extraction and normalization.
  std::size_t eye_size = 112;
  std::size_t mouth_size = 112;
  std::size_t head_size = 224;
  double eye_width_factor = 2.0;
  double eye_height_factor = 0.8;
  double mouth_width_factor = 1.6;
  double mouth_height_factor = 1.2;
  bool use_clahe = true;
  std::size_t clahe_tiles = 8;
  double clahe_clip_limit = 2.0;
  bool use_flow = true;
  double flow_alpha = 12.0;
  std::size_t flow_iterations = 60;
  double flow_max_displacement = 8.0;

  // Model.
  bool eye_use_se = true;
  std::size_t se_reduction = 4;
  std::size_t feature_dim = 128;
  std::size_t fusion_hidden = 128;
  double fusion_dropout = 0.5;

  // Training.
  bool pretrain = true;
  bool freeze_trunks = true;
  std::size_t pretrain_epochs = 10;
  std::size_t train_epochs = 10;
  std::size_t batch_size = 8;
  double lr0 = 1e-4;
  double decay_power = 0.9;
  double l2 = 1e-4;
  std::uint64_t seed = 1;

  // Ablations.
  bool face_only = false;

  void validate() const {
    preprocess().validate();
    if (generate_clips == 0) throw ConfigError("generate_clips must be positive");
    if (generate_balance < 0.0 || generate_balance > 1.0)
      throw ConfigError("generate_balance must be in [0,1]");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (lr0 < 0.0 || decay_power < 0.0 || l2 < 0.0)
      throw ConfigError("lr0, decay_power and l2 must be non-negative");
    for (const SubNetPlan& plan : subnet_plans()) plan.cfg.validate();
    fusion().validate();
  }

  /// The preprocessing slice of the configuration (defines the cache key).
  PreprocessConfig preprocess() const {
    PreprocessConfig p;
    p.clip.stride = clip_stride;
    p.clip.count = clip_count;
    p.hop = window_hop;
    p.use_clahe = use_clahe;
    p.clahe_grid.tiles_x = clahe_tiles;
    p.clahe_grid.tiles_y = clahe_tiles;
    p.clahe_grid.clip_limit = clahe_clip_limit;
    p.use_flow = use_flow;
    p.flow_alpha = flow_alpha;
    p.flow_iterations = static_cast<int>(flow_iterations);
    p.flow_max_displacement = flow_max_displacement;
    p.eye_size = eye_size;
    p.mouth_size = mouth_size;
    p.head_size = head_size;
    p.eye_width_factor = eye_width_factor;
    p.eye_height_factor = eye_height_factor;
    p.mouth_width_factor = mouth_width_factor;
    p.mouth_height_factor = mouth_height_factor;
    return p;
  }

  /// The sub-networks taking part in the fused model, in fusion order.
  std::vector<SubNetPlan> subnet_plans() const {
    const auto shape = [this](SubNetConfig cfg) {
      cfg.se_reduction = se_reduction;
      cfg.feature_dim = feature_dim;
      return cfg;
    };
    SubNetConfig head = shape(model_detail::stock_config(head_size, false));
    if (face_only) return {{"head", head}};
    SubNetConfig eye = shape(model_detail::stock_config(eye_size, eye_use_se));
    SubNetConfig mouth = shape(model_detail::stock_config(mouth_size, false));
    return {{"eye", eye}, {"mouth", mouth}, {"head", head}};
  }

  FusionConfig fusion() const {
    FusionConfig f;
    f.feature_dim = feature_dim;
    f.parts = face_only ? 1 : 3;
    f.hidden = fusion_hidden;
    f.classes = LabelTaxonomy::kDrowsinessClasses;
    f.dropout = fusion_dropout;
    return f;
  }

  TrainConfig optimizer(std::size_t epochs) const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.lr0 = lr0;
    tc.decay_power = decay_power;
    tc.l2 = l2;
    tc.seed = seed;
    return tc;
  }

  /// Classes of each sub-network's pretraining probe.
  static std::size_t probe_classes(const std::string& prefix) {
    if (prefix == "eye") return LabelTaxonomy::kEyeClasses;
    if (prefix == "mouth") return LabelTaxonomy::kMouthClasses;
    if (prefix == "head") return LabelTaxonomy::kHeadClasses;
    throw ConfigError("unknown sub-network '" + prefix + "'");
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean (0/1/true/false), got '" +
                    value + "'");
}

inline double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
  }
  if (pos != value.size())
    throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
  return d;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + value +
                      "'");
  }
  if (pos != value.size() || value.front() == '-')
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + value +
                      "'");
  return v;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

/// One setter per recognized key. Single source of truth for parsing and
/// for the "unknown key" diagnostics.
inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    const auto str = [&t](const std::string& key, std::string PipelineConfig::* field) {
      t[key] = [field](PipelineConfig& c, const std::string&, const std::string& v) {
        c.*field = v;
      };
    };
    const auto num = [&t](const std::string& key, double PipelineConfig::* field) {
      t[key] = [field](PipelineConfig& c, const std::string& k, const std::string& v) {
        c.*field = parse_double(k, v);
      };
    };
    const auto count = [&t](const std::string& key, std::size_t PipelineConfig::* field) {
      t[key] = [field](PipelineConfig& c, const std::string& k, const std::string& v) {
        c.*field = static_cast<std::size_t>(parse_uint(k, v));
      };
    };
    const auto flag = [&t](const std::string& key, bool PipelineConfig::* field) {
      t[key] = [field](PipelineConfig& c, const std::string& k, const std::string& v) {
        c.*field = parse_bool(k, v);
      };
    };
    str("dataset_root", &PipelineConfig::dataset_root);
    str("cache_dir", &PipelineConfig::cache_dir);
    str("output_dir", &PipelineConfig::output_dir);
    count("generate_clips", &PipelineConfig::generate_clips);
    num("generate_balance", &PipelineConfig::generate_balance);
    count("video_frames", &PipelineConfig::video_frames);
    count("video_size", &PipelineConfig::video_size);
    count("clip_stride", &PipelineConfig::clip_stride);
    count("clip_count", &PipelineConfig::clip_count);
    count("window_hop", &PipelineConfig::window_hop);
    count("eye_size", &PipelineConfig::eye_size);
    count("mouth_size", &PipelineConfig::mouth_size);
    count("head_size", &PipelineConfig::head_size);
    num("eye_width_factor", &PipelineConfig::eye_width_factor);
    num("eye_height_factor", &PipelineConfig::eye_height_factor);
    num("mouth_width_factor", &PipelineConfig::mouth_width_factor);
    num("mouth_height_factor", &PipelineConfig::mouth_height_factor);
    flag("use_clahe", &PipelineConfig::use_clahe);
    count("clahe_tiles", &PipelineConfig::clahe_tiles);
    num("clahe_clip_limit", &PipelineConfig::clahe_clip_limit);
    flag("use_flow", &PipelineConfig::use_flow);
    num("flow_alpha", &PipelineConfig::flow_alpha);
    count("flow_iterations", &PipelineConfig::flow_iterations);
    num("flow_max_displacement", &PipelineConfig::flow_max_displacement);
    flag("eye_use_se", &PipelineConfig::eye_use_se);
    count("se_reduction", &PipelineConfig::se_reduction);
    count("feature_dim", &PipelineConfig::feature_dim);
    count("fusion_hidden", &PipelineConfig::fusion_hidden);
    num("fusion_dropout", &PipelineConfig::fusion_dropout);
    flag("pretrain", &PipelineConfig::pretrain);
    flag("freeze_trunks", &PipelineConfig::freeze_trunks);
    count("pretrain_epochs", &PipelineConfig::pretrain_epochs);
    count("train_epochs", &PipelineConfig::train_epochs);
    count("batch_size", &PipelineConfig::batch_size);
    num("lr0", &PipelineConfig::lr0);
    num("decay_power", &PipelineConfig::decay_power);
    num("l2", &PipelineConfig::l2);
    t["seed"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.seed = parse_uint(k, v);
    };
    flag("face_only", &PipelineConfig::face_only);
    return t;
  }();
  return table;
}

}  // namespace config_detail

/// Apply one `key = value` assignment; unknown keys are an error naming the
/// key.
inline void set_config_value(PipelineConfig& config, const std::string& key,
                             const std::string& value) {
  const auto& table = config_detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

/// Parse a flat config stream: `key = value` lines, '#' comments, blank
/// lines ignored. Later assignments win.
inline PipelineConfig parse_config(std::istream& in) {
  PipelineConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = config_detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not a 'key = value' assignment: '" + text + "'");
    const std::string key = config_detail::trim(text.substr(0, eq));
    const std::string value = config_detail::trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + " has no key");
    set_config_value(config, key, value);
  }
  return config;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

}  // namespace drowsy
