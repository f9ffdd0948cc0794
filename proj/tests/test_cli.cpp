#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "checks.hpp"
#include "rsovseg/checkpoint.hpp"
#include "rsovseg/errors.hpp"
#include "rsovseg/image_io.hpp"
#include "rsovseg/pipeline.hpp"
#include "test_util.hpp"

namespace rsovseg {
namespace {

using testing::ScratchDir;

int count_lines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& manifest,
                                   int iters) {
  RunConfig c;
  c.manifest = manifest;
  c.output_dir = (dir / "run").string();
  c.seed = 4;
  c.model = checks::small_model_config();
  c.train.max_iters = iters;
  c.train.batch_size = 2;
  c.train.lr_other = 1e-3;
  const auto path = dir / "config.json";
  write_file_atomic(path, emit_run_config(c));
  return path;
}

// One 50-iteration run shared by the tests that need a trained checkpoint.
class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new ScratchDir("cli_run");
    SyntheticSpec spec;
    spec.seed = 2;
    spec.image_px = 32;
    spec.n_images = 4;
    spec.n_classes = 4;
    spec.shapes_per_image = 2;
    generate_synthetic(spec, dir_->path() / "data");
    const auto cfg = write_config(dir_->path(), (dir_->path() / "data/manifest.json").string(), 50);
    std::ostringstream out, err;
    exit_code_ = cmd_train(cfg, {}, out, err);
    train_err_ = err.str();
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static const std::filesystem::path& root() { return dir_->path(); }
  static std::filesystem::path checkpoint() { return root() / "run/checkpoint.bin"; }
  static std::filesystem::path manifest() { return root() / "data/manifest.json"; }

  static ScratchDir* dir_;
  static int exit_code_;
  static std::string train_err_;
};

ScratchDir* TrainedRun::dir_ = nullptr;
int TrainedRun::exit_code_ = -1;
std::string TrainedRun::train_err_;

TEST(RunConfig, ManifestOnlyIsValidAndRoundTrips) {
  const RunConfig c = parse_run_config(R"({"manifest":"m.json"})");
  EXPECT_EQ(c.manifest, "m.json");
  EXPECT_EQ(c.train.lr_vl, 2e-6);
  EXPECT_EQ(c.model.d_phi, ModelConfig{}.d_phi);
  EXPECT_EQ(parse_run_config(emit_run_config(c)), c);
  RunConfig small = c;
  small.model = checks::small_model_config();
  EXPECT_EQ(parse_run_config(emit_run_config(small)), small);
}

TEST(RunConfig, UnknownKeysAndMissingManifestRejected) {
  EXPECT_THROW(parse_run_config(R"({"manifest":"m","lr":1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"manifest":"m","train":{"lr":1}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"manifest":"m","model":{"vision":{"size":3}}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"manifest":"m","seed":"x"})"), ConfigError);
  try {
    parse_run_config("{}");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("manifest"), std::string::npos);
  }
  EXPECT_NO_THROW(parse_run_config("{}", false));
}

TEST(RunConfig, OutputRootOverride) {
  ::setenv("RSOVSEG_OUTPUT_ROOT", "/tmp/elsewhere", 1);
  EXPECT_EQ(resolve_output_dir("runs/a"), std::filesystem::path("/tmp/elsewhere/runs/a"));
  EXPECT_EQ(resolve_output_dir("/abs/dir"), std::filesystem::path("/abs/dir"));
  ::unsetenv("RSOVSEG_OUTPUT_ROOT");
  EXPECT_EQ(resolve_output_dir("runs/a"), std::filesystem::path("runs/a"));
}

TEST(Train, MissingManifestFieldIsInvalid) {
  ScratchDir dir("cli_missing");
  write_file_atomic(dir.path() / "c.json", R"({"output_dir":"x"})");
  std::ostringstream out, err;
  EXPECT_EQ(cmd_train(dir.path() / "c.json", {}, out, err), kExitInvalid);
  EXPECT_NE(err.str().find("manifest"), std::string::npos) << err.str();
  EXPECT_EQ(cmd_train(dir.path() / "absent.json", {}, out, err), kExitInvalid);
}

TEST_F(TrainedRun, WritesLogCheckpointAndConfig) {
  ASSERT_EQ(exit_code_, kExitOk) << train_err_;
  const std::string log = read_file(root() / "run/loss_log.txt");
  EXPECT_EQ(count_lines(log), 50);
  std::istringstream first(log);
  int it;
  double bce, sem, total;
  first >> it >> bce >> sem >> total;
  EXPECT_EQ(it, 1);
  EXPECT_NEAR(total, bce + sem, 1e-12);
  const Checkpoint ck = load_checkpoint(checkpoint());
  EXPECT_EQ(ck.iteration, 50);
  EXPECT_EQ(ck.model->train_classes(), (std::vector<std::string>{"bare land", "building", "road"}));
  EXPECT_TRUE(std::filesystem::exists(root() / "run/config.json"));
}

TEST_F(TrainedRun, CheckpointReserializesByteIdentically) {
  const std::string bytes = read_file(checkpoint());
  const Checkpoint ck = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(*ck.model, ck.config, ck.iteration), bytes);
}

TEST_F(TrainedRun, CorruptCheckpointIsInvalidAndWritesNoReport) {
  std::string bytes = read_file(checkpoint());
  bytes[bytes.size() / 2] ^= 0x5a;
  write_file_atomic(root() / "corrupt.bin", bytes);
  write_file_atomic(root() / "short.bin", bytes.substr(0, 10));
  for (const char* name : {"corrupt.bin", "short.bin", "absent.bin"}) {
    EvalOptions o;
    o.checkpoint = root() / name;
    o.manifest = manifest();
    o.split = "train";
    o.output_dir = (root() / "bad_eval").string();
    std::ostringstream out, err;
    EXPECT_EQ(cmd_eval(o, out, err), kExitInvalid) << name;
    EXPECT_FALSE(std::filesystem::exists(root() / "bad_eval/report.txt")) << name;
  }
}

TEST_F(TrainedRun, EvalWritesReports) {
  EvalOptions o;
  o.checkpoint = checkpoint();
  o.manifest = manifest();
  o.split = "train";
  o.output_dir = (root() / "eval").string();
  std::ostringstream out, err;
  ASSERT_EQ(cmd_eval(o, out, err), kExitOk) << err.str();
  const std::string text = read_file(root() / "eval/report.txt");
  EXPECT_NE(text.find("num_classes: 4\n"), std::string::npos);
  const auto report = parse_report_text(text);
  EXPECT_TRUE(report.s_miou.has_value());
  EXPECT_TRUE(report.u_miou.has_value());
  EXPECT_EQ(read_file(root() / "eval/report.csv").rfind("class,iou,seen_flag\n", 0), 0u);
  o.split = "nope";
  EXPECT_EQ(cmd_eval(o, out, err), kExitInvalid);
}

TEST_F(TrainedRun, VizHeatmapsMatchImageAndDifferByClass) {
  const auto image = root() / "data/images/0000.png";
  auto viz = [&](const std::string& cls, const std::string& out_name) {
    VizOptions o;
    o.checkpoint = checkpoint();
    o.image = image;
    o.class_name = cls;
    o.out_path = root() / out_name;
    o.manifest = manifest();
    std::ostringstream out, err;
    return cmd_viz_corr(o, out, err);
  };
  ASSERT_EQ(viz("bare land", "a.png"), kExitOk);
  ASSERT_EQ(viz("road", "b.png"), kExitOk);
  const Raster a = read_png(root() / "a.png", 3), b = read_png(root() / "b.png", 3);
  EXPECT_EQ(a.height, 32);
  EXPECT_EQ(a.width, 32);
  EXPECT_NE(a.pixels, b.pixels);
  EXPECT_EQ(viz("lava", "c.png"), kExitInvalid);
  EXPECT_FALSE(std::filesystem::exists(root() / "c.png"));
}

TEST(Report, AveragesAndRejectsBadInput) {
  ScratchDir dir("cli_report");
  write_file_atomic(dir.path() / "a.txt", "s_miou: 61.20\nu_miou: 40.00\nh_miou: 48.38\n");
  write_file_atomic(dir.path() / "b.txt", "s_miou: 47.48\nu_miou: 30.00\nh_miou: 36.77\n");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_report({dir.path() / "a.txt", dir.path() / "b.txt"}, dir.path() / "avg.txt", out,
                       err),
            kExitOk)
      << err.str();
  EXPECT_NE(read_file(dir.path() / "avg.txt").find("s_miou: 54.34\n"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "avg.csv"));
  write_file_atomic(dir.path() / "bad.txt", "garbage\n");
  EXPECT_EQ(cmd_report({dir.path() / "bad.txt"}, dir.path() / "x.txt", out, err), kExitInvalid);
  EXPECT_EQ(cmd_report({}, dir.path() / "x.txt", out, err), kExitInvalid);
}

TEST(Binary, SynthAndExitCodes) {
  ScratchDir dir("cli_binary");
  auto run = [](const std::string& args) {
    const int status = std::system((std::string(RSOVSEG_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  EXPECT_EQ(run("synth --out " + (dir.path() / "s").string() + " --images 2"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "s/manifest.json"));
  EXPECT_EQ(run("eval --checkpoint " + (dir.path() / "none.bin").string() + " --manifest " +
                (dir.path() / "s/manifest.json").string()),
            2);
}

}  // namespace
}  // namespace rsovseg
