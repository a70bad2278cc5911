// Command-line front end for the drowsiness-detection pipeline:
//   generate | preprocess | pretrain | train | eval | predict
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "drowsy/config.hpp"
#include "drowsy/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string scheme;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool force = false;
  bool no_clahe = false;
  bool no_flow = false;
  bool face_only = false;
  bool no_pretrain = false;

  std::string feature;    // pretrain
  std::string split;      // eval
  std::string video_dir;  // predict
};

drowsy::PipelineConfig resolve_config(const CliOptions& opts) {
  drowsy::PipelineConfig cfg;
  if (!opts.config_path.empty()) cfg = drowsy::load_config(opts.config_path);
  if (!opts.scheme.empty()) {
    const auto x = opts.scheme.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= opts.scheme.size())
      throw drowsy::ConfigError("scheme must look like <stride>x<count>, e.g. 10x10 or 3x30");
    drowsy::set_config_value(cfg, "clip_stride", opts.scheme.substr(0, x));
    drowsy::set_config_value(cfg, "clip_count", opts.scheme.substr(x + 1));
  }
  if (opts.no_clahe) cfg.use_clahe = false;
  if (opts.no_flow) cfg.use_flow = false;
  if (opts.face_only) cfg.face_only = true;
  if (opts.no_pretrain) cfg.pretrain = false;
  if (opts.seed_set) cfg.seed = opts.seed;
  return cfg;
}

int run(const std::string& command, const CliOptions& opts) {
  const drowsy::PipelineConfig cfg = resolve_config(opts);

  if (command == "generate") {
    const auto manifest = drowsy::cmd_generate(cfg, opts.force);
    std::size_t train = 0, val = 0, test = 0;
    for (const auto& e : manifest) {
      if (e.split == "train") ++train;
      if (e.split == "val") ++val;
      if (e.split == "test") ++test;
    }
    std::cout << "generated " << manifest.size() << " clips at " << cfg.dataset_root
              << " (train " << train << ", val " << val << ", test " << test << ")\n";
    return 0;
  }
  if (command == "preprocess") {
    const drowsy::CacheStats stats = drowsy::cmd_preprocess(cfg);
    std::cout << "preprocessed " << stats.windows << " windows: " << stats.computed
              << " computed, " << stats.hits << " already cached\n";
    return 0;
  }
  if (command == "pretrain") {
    const drowsy::TrainResult result = drowsy::cmd_pretrain(cfg, opts.feature);
    std::cout << "pretrained " << opts.feature << " over " << result.epochs.size()
              << " epochs";
    if (!result.epochs.empty()) {
      const drowsy::EpochStats& last = result.epochs.back();
      std::cout << "; final loss " << last.loss << ", accuracy " << last.accuracy;
    }
    std::cout << "; wrote " << drowsy::RunPaths(cfg).pretrain_ckpt(opts.feature).string()
              << "\n";
    return 0;
  }
  if (command == "train") {
    const drowsy::TrainOutput out = drowsy::cmd_train(cfg);
    std::cout << "trained fused model over " << out.epochs.size() << " epochs";
    if (!out.epochs.empty()) {
      const drowsy::EpochStats& last = out.epochs.back();
      std::cout << "; final loss " << last.loss << ", accuracy " << last.accuracy;
    }
    std::cout << "; wrote " << drowsy::RunPaths(cfg).model_ckpt().string() << "\n";
    return 0;
  }
  if (command == "eval") {
    const drowsy::EvalReport report = drowsy::cmd_eval(cfg, opts.split);
    std::cout << drowsy::eval_report_json(report);
    return 0;
  }
  if (command == "predict") {
    const auto preds = drowsy::cmd_predict(cfg, opts.video_dir);
    std::cout << drowsy::predictions_json(preds);
    return 0;
  }
  throw drowsy::ConfigError("unknown command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drowsiness detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  CliOptions opts;
  app.add_option("--config", opts.config_path, "pipeline config file (key = value lines)");
  app.add_option("--seed", opts.seed, "override the configured seed")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  app.add_flag("--force", opts.force, "allow overwriting an existing dataset");
  app.add_flag("--no-clahe", opts.no_clahe, "disable contrast equalization");
  app.add_flag("--no-flow", opts.no_flow, "feed zero motion channels");
  app.add_flag("--face-only", opts.face_only, "use only the face sub-network");
  app.add_flag("--no-pretrain", opts.no_pretrain, "train end-to-end without pretrained trunks");
  app.add_option("--scheme", opts.scheme, "temporal sampling scheme, e.g. 10x10 or 3x30");

  app.add_subcommand("generate", "render the synthetic benchmark dataset");
  app.add_subcommand("preprocess", "fill the patch/flow cache for every video");
  CLI::App* pretrain = app.add_subcommand("pretrain", "pretrain one sub-network");
  pretrain->add_option("--feature", opts.feature, "eye, mouth or head")->required();
  app.add_subcommand("train", "train the fused model");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate the trained model on one split");
  eval_cmd->add_option("--split", opts.split, "train, val or test")->required();
  CLI::App* predict = app.add_subcommand("predict", "score every window of one video");
  predict->add_option("dir", opts.video_dir, "video directory (frames/ + annotations.txt)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), opts);
  } catch (const drowsy::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
