// Black-box tests of the command-line binary: exit codes, stderr
// diagnostics and the JSON/CSV artifacts a shell user sees.  The binary
// path is injected by the build as DROWSY_CLI_PATH.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <catch2/catch_amalgamated.hpp>

#include "support/toy_dataset.hpp"

using Catch::Matchers::ContainsSubstring;
using testsupport::TempDir;
using testsupport::slurp;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CmdResult run_cli(const TempDir& dir, const std::string& args) {
  const std::filesystem::path out = dir.path / "stdout.txt";
  const std::filesystem::path err = dir.path / "stderr.txt";
  const std::string cmd = std::string(DROWSY_CLI_PATH) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_config(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

// Config matching testsupport::toy_config for the written toy dataset.
std::string toy_config_text(const std::filesystem::path& base) {
  return "dataset_root = " + (base / "data").string() + "\n" +
         "cache_dir = " + (base / "cache").string() + "\n" +
         "output_dir = " + (base / "runs").string() + "\n" +
         "clip_stride = 1\n"
         "clip_count = 10\n"
         "flow_iterations = 12\n"
         "feature_dim = 16\n"
         "fusion_hidden = 16\n"
         "pretrain_epochs = 1\n"
         "train_epochs = 600\n"
         "batch_size = 4\n"
         "lr0 = 1e-3\n";
}

}  // namespace

TEST_CASE("help and usage errors") {
  TempDir dir("cli_usage");

  CHECK(run_cli(dir, "--help").exit_code == 0);
  CHECK_THAT(run_cli(dir, "--help").out, ContainsSubstring("train"));

  INFO("a missing subcommand is a usage error");
  CHECK(run_cli(dir, "").exit_code == 2);

  INFO("an unknown subcommand is a usage error");
  CHECK(run_cli(dir, "detect").exit_code == 2);

  INFO("a malformed sampling scheme is rejected by name");
  const CmdResult scheme = run_cli(dir, "--scheme 10by10 preprocess");
  CHECK(scheme.exit_code == 2);
  CHECK_THAT(scheme.err, ContainsSubstring("scheme"));
}

TEST_CASE("malformed config keys exit with code 2 and the key name") {
  TempDir dir("cli_cfg");
  const std::filesystem::path cfg = dir.path / "bad.cfg";
  write_config(cfg, "learning_rate = 0.1\n");

  const CmdResult r = run_cli(dir, "--config " + cfg.string() + " preprocess");
  CHECK(r.exit_code == 2);
  CHECK_THAT(r.err, ContainsSubstring("learning_rate"));

  INFO("a malformed value names the offending key too");
  write_config(cfg, "clip_count = soon\n");
  const CmdResult v = run_cli(dir, "--config " + cfg.string() + " preprocess");
  CHECK(v.exit_code == 2);
  CHECK_THAT(v.err, ContainsSubstring("clip_count"));
}

TEST_CASE("generate succeeds once and refuses to overwrite") {
  TempDir dir("cli_gen");
  const std::filesystem::path cfg = dir.path / "gen.cfg";
  write_config(cfg, "dataset_root = " + (dir.path / "data").string() +
                        "\n"
                        "generate_clips = 4\n"
                        "video_size = 64\n");

  const CmdResult first = run_cli(dir, "--config " + cfg.string() + " generate");
  CHECK(first.exit_code == 0);
  CHECK_THAT(first.out, ContainsSubstring("generated 4 clips"));

  const CmdResult second = run_cli(dir, "--config " + cfg.string() + " generate");
  CHECK(second.exit_code == 2);
  CHECK_THAT(second.err, ContainsSubstring("--force"));

  const CmdResult forced = run_cli(dir, "--config " + cfg.string() + " generate --force");
  CHECK(forced.exit_code == 0);
}

TEST_CASE("a full command-line session: preprocess, train, eval, predict") {
  TempDir dir("cli_flow");
  testsupport::write_toy_dataset(dir.path / "data");
  const std::filesystem::path cfg = dir.path / "toy.cfg";
  write_config(cfg, toy_config_text(dir.path));
  const std::string base = "--config " + cfg.string() + " ";

  const CmdResult pre = run_cli(dir, base + "preprocess");
  CHECK(pre.exit_code == 0);
  CHECK_THAT(pre.out, ContainsSubstring("10 windows"));

  const CmdResult train = run_cli(dir, base + "train");
  CHECK(train.exit_code == 0);
  CHECK_THAT(train.out, ContainsSubstring("600 epochs"));

  INFO("a converged toy run memorizes its training split");
  const CmdResult eval = run_cli(dir, base + "eval --split train");
  CHECK(eval.exit_code == 0);
  CHECK_THAT(eval.out, ContainsSubstring("\"split\": \"train\""));
  const std::string key = "\"accuracy\": ";
  const std::size_t at = eval.out.find(key);
  REQUIRE(at != std::string::npos);
  const double accuracy = std::stod(eval.out.substr(at + key.size()));
  CHECK(accuracy >= 0.95);

  INFO("an event-free clip is labeled stillness with p_drowsy < 0.5");
  testsupport::write_video(dir.path / "data", "vid_quiet", testsupport::tiny_scene(77));
  const CmdResult predict =
      run_cli(dir, base + "predict " + (dir.path / "data" / "vid_quiet").string());
  CHECK(predict.exit_code == 0);
  CHECK_THAT(predict.out, ContainsSubstring("\"label\": \"stillness\""));
  const std::string pkey = "\"p_drowsy\": ";
  const std::size_t pat = predict.out.find(pkey);
  REQUIRE(pat != std::string::npos);
  CHECK(std::stod(predict.out.substr(pat + pkey.size())) < 0.5);

  INFO("eval before train in a fresh output directory exits with code 2");
  const std::filesystem::path cfg2 = dir.path / "fresh.cfg";
  write_config(cfg2, toy_config_text(dir.path) + "output_dir = " +
                         (dir.path / "runs_fresh").string() + "\n");
  const CmdResult nockpt = run_cli(dir, "--config " + cfg2.string() + " eval --split val");
  CHECK(nockpt.exit_code == 2);
  CHECK_THAT(nockpt.err, ContainsSubstring("train"));

  INFO("runtime IO failures exit with code 1");
  const CmdResult badvideo =
      run_cli(dir, base + "predict " + (dir.path / "data" / "vid_missing").string());
  CHECK(badvideo.exit_code == 1);
}
