#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "divelab/data.hpp"

using namespace divelab;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("divelab_cli_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string out_dir() const { return (root_ / "out").string(); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  // Small and fast experiment settings.
  std::vector<std::string> small(std::vector<std::string> args, std::string out = "") const {
    args.push_back("--out");
    args.push_back(out.empty() ? out_dir() : out);
    for (const char* a : {"--classes", "6", "--dim", "4", "--n-max", "60", "--beta", "10",
                          "--test-per-class", "20", "--epochs", "3", "--milestones", "2", "--seeds",
                          "1,2", "--hidden", "8"}) {
      args.emplace_back(a);
    }
    return args;
  }

  fs::path root_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, SynthWritesFilesAndIsRepeatable) {
  ASSERT_EQ(run(small({"synth"})), 0) << err_.str();
  const fs::path data = fs::path(out_dir()) / "data";
  const std::string first = slurp(data / "train.dlds");
  const Dataset train = load_dataset(data / "train.dlds");
  EXPECT_EQ(train.profile, exp_profile(6, 60, 10));
  const std::string profile = slurp(data / "profile.csv");
  EXPECT_NE(profile.find("5,6,few"), std::string::npos) << profile;
  ASSERT_EQ(run(small({"synth"})), 0);
  EXPECT_EQ(slurp(data / "train.dlds"), first);
  EXPECT_TRUE(fs::exists(data / "manifest.json"));
}

TEST_F(CliTest, SynthFlatProfile) {
  auto args = small({"synth"});
  args[std::find(args.begin(), args.end(), "--beta") - args.begin() + 1] = "1";
  ASSERT_EQ(run(args), 0) << err_.str();
  const Dataset train = load_dataset(fs::path(out_dir()) / "data" / "train.dlds");
  for (auto c : train.profile.counts) EXPECT_EQ(c, 60);
}

TEST_F(CliTest, UnwritableOutputIsIoError) {
  std::ofstream(root_ / "blocker") << "x";
  EXPECT_EQ(run({"synth", "--out", (root_ / "blocker" / "sub").string()}), 2) << err_.str();
}

TEST_F(CliTest, MissingDatasetIsValidationError) {
  EXPECT_EQ(run(small({"train"})), 3);
  EXPECT_NE(err_.str().find("not found"), std::string::npos);
}

TEST_F(CliTest, BadOptionIsValidationError) {
  EXPECT_EQ(run({"train", "--loss", "hinge"}), 3);
  EXPECT_EQ(run({"frobnicate"}), 3);
  EXPECT_EQ(run(small({"train", "--alpha", "2"})), 3);
}

TEST_F(CliTest, TrainMismatchedTestSetIsValidationError) {
  ASSERT_EQ(run(small({"synth"})), 0);
  const fs::path other = root_ / "other";
  auto args = small({"synth"}, other.string());
  args[std::find(args.begin(), args.end(), "--dim") - args.begin() + 1] = "5";
  ASSERT_EQ(run(args), 0);
  EXPECT_EQ(run(small({"train", "--test", (other / "data" / "test.dlds").string()})), 3);
}

TEST_F(CliTest, TrainWithZeroLearningRateHasFlatHistory) {
  ASSERT_EQ(run(small({"synth"})), 0);
  ASSERT_EQ(run(small({"train", "--lr", "0"})), 0) << err_.str();
  std::istringstream hist(slurp(fs::path(out_dir()) / "train_ce" / "seed_1" / "model_history.csv"));
  std::string line;
  std::getline(hist, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(hist, line)) {
    std::vector<std::string> fields;
    std::istringstream fs_line(line);
    for (std::string f; std::getline(fs_line, f, ',');) fields.push_back(f);
    rows.push_back(fields);
  }
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    ASSERT_EQ(r.size(), 7u);
    EXPECT_EQ(r[1], "0");
    EXPECT_NEAR(std::stod(r[2]), std::stod(rows[0][2]), 1e-12);
    for (std::size_t c = 3; c < 7; ++c) EXPECT_EQ(r[c], rows[0][c]);
  }
}

TEST_F(CliTest, DiveAutoWritesScanAndIsDeterministic) {
  ASSERT_EQ(run(small({"synth"})), 0);
  ASSERT_EQ(run(small({"dive", "--auto-tau"})), 0) << err_.str();
  const fs::path seed1 = fs::path(out_dir()) / "dive" / "seed_1";
  std::istringstream scan(slurp(seed1 / "scan.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(scan, line)) ++rows;
  EXPECT_GE(rows, 20);
  const std::string hist = slurp(seed1 / "student_history.csv");
  const std::string rep = slurp(seed1 / "student_report.csv");
  ASSERT_EQ(run(small({"dive", "--auto-tau", "--jobs", "2"})), 0);
  EXPECT_EQ(slurp(seed1 / "student_history.csv"), hist);
  EXPECT_EQ(slurp(seed1 / "student_report.csv"), rep);
  EXPECT_TRUE(fs::exists(fs::path(out_dir()) / "dive" / "summary.csv"));
}

TEST_F(CliTest, ManifestArtifactsExist) {
  ASSERT_EQ(run(small({"synth"})), 0);
  ASSERT_EQ(run(small({"train", "--loss", "bsce"})), 0) << err_.str();
  const auto manifest = nlohmann::json::parse(slurp(fs::path(out_dir()) / "train_bsce" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_FALSE(manifest["config"].get<std::string>().empty());
  ASSERT_FALSE(manifest["artifacts"].empty());
  for (const auto& a : manifest["artifacts"]) EXPECT_TRUE(fs::exists(a.get<std::string>())) << a;
}

TEST_F(CliTest, AnalyzeVeAndEval) {
  ASSERT_EQ(run(small({"synth"})), 0);
  ASSERT_EQ(run(small({"train", "--loss", "bsce"})), 0);
  const std::string ckpt = (fs::path(out_dir()) / "train_bsce" / "seed_1" / "model.ckpt").string();
  ASSERT_EQ(run(small({"analyze-ve", "--checkpoint", ckpt, "--tau-grid", "1,1000"})), 0) << err_.str();
  const fs::path dir = fs::path(out_dir()) / "analyze_ve";
  EXPECT_TRUE(fs::exists(dir / "virtual_examples.svg"));
  EXPECT_TRUE(fs::exists(dir / "recommendation.csv"));

  const Dataset train = load_dataset(fs::path(out_dir()) / "data" / "train.dlds");
  for (const char* name : {"hist_tau1_p0.csv", "hist_tau1_p1.csv", "hist_tau1000_p0.csv"}) {
    std::istringstream csv(slurp(dir / name));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "class_id,count,virtual_count");
    double mass = 0.0, lo = 1e300, hi = 0.0;
    while (std::getline(csv, line)) {
      const double v = std::stod(line.substr(line.rfind(',') + 1));
      mass += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    EXPECT_NEAR(mass, static_cast<double>(train.size()), 1e-6) << name;
    if (std::string(name) == "hist_tau1000_p0.csv") {
      EXPECT_LT((hi - lo) / mass, 1e-3);
    }
  }

  ASSERT_EQ(run(small({"eval", "--checkpoint", ckpt})), 0) << err_.str();
  EXPECT_EQ(slurp(fs::path(out_dir()) / "eval" / "report.csv"),
            slurp(fs::path(out_dir()) / "train_bsce" / "seed_1" / "model_report.csv"));
}

TEST_F(CliTest, AnalyzeVeRejectsIncompatibleCheckpoint) {
  ASSERT_EQ(run(small({"synth"})), 0);
  ASSERT_EQ(run(small({"train"})), 0);
  const std::string ckpt = (fs::path(out_dir()) / "train_ce" / "seed_1" / "model.ckpt").string();
  const fs::path other = root_ / "other";
  auto args = small({"synth"}, other.string());
  args[std::find(args.begin(), args.end(), "--classes") - args.begin() + 1] = "5";
  ASSERT_EQ(run(args), 0);
  EXPECT_EQ(run(small({"analyze-ve", "--checkpoint", ckpt, "--train",
                       (other / "data" / "train.dlds").string()})),
            3);
}

TEST_F(CliTest, BinaryExperimentTable) {
  ASSERT_EQ(run({"binary-exp", "--out", out_dir(), "--n-head", "100", "--n-tail", "10", "--epochs",
                 "2", "--milestones", "1", "--seeds", "1,2", "--test-per-class", "50"}),
            0)
      << err_.str();
  std::istringstream csv(slurp(fs::path(out_dir()) / "binary_exp" / "binary.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "epsilon,ratio_r,head_mean,head_std,tail_mean,tail_std,all_mean,all_std");
  std::getline(csv, line);
  EXPECT_EQ(line.substr(0, 6), "0,0.1,");
  int rows = 1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 5);
  EXPECT_TRUE(fs::exists(fs::path(out_dir()) / "binary_exp" / "binary.svg"));
}

TEST_F(CliTest, ConfigFileAndEnvironment) {
  const fs::path cfg = root_ / "exp.ini";
  std::ofstream(cfg) << "classes=5\nn-max=40\nbeta=4\ndim=3\n";
  ::setenv("DIVE_LAB_OUT", out_dir().c_str(), 1);
  const int rc = run({"synth", "--config", cfg.string(), "--dim", "6"});
  ::unsetenv("DIVE_LAB_OUT");
  ASSERT_EQ(rc, 0) << err_.str();
  const Dataset train = load_dataset(fs::path(out_dir()) / "data" / "train.dlds");
  EXPECT_EQ(train.profile, exp_profile(5, 40, 4));
  EXPECT_EQ(train.dim(), 6u);
}
