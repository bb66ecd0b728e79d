#pragma once

// dive-lab subcommands. Each command writes its artifacts below
// ExperimentConfig::out_dir and returns a manifest of what it wrote.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "divelab/distill.hpp"
#include "divelab/mathcore.hpp"
#include "divelab/model.hpp"

namespace divelab::cli {

/// Stable process exit codes.
enum class ExitCode : int { ok = 0, failure = 1, io = 2, validation = 3, numerical = 4 };

struct ExperimentConfig {
  std::filesystem::path out_dir = "dive_out";

  // Synthetic data.
  std::size_t classes = 20;
  std::size_t dim = 32;
  std::int64_t n_max = 200;
  double beta = 100.0;
  double separation = 3.0;
  std::int64_t test_per_class = 100;
  std::uint64_t data_seed = 1;

  // Inputs; empty paths resolve below out_dir.
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path checkpoint;

  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  LossKind loss = LossKind::ce;

  DistillConfig distill{0.5, 3.0, 0.5, TargetForm::teacher_t_tau};
  bool auto_tau = false;
  std::vector<double> tau_grid = default_tau_grid();
  std::vector<bool> power_options = {false, true};
  TeacherLogits teacher_logits = TeacherLogits::raw;
  std::int64_t split_hi = 100;
  std::int64_t split_lo = 20;

  // Binary smoothing experiment.
  std::int64_t n_head = 1000;
  std::int64_t n_tail = 100;
  std::vector<double> epsilons = {0.0, 0.1, 0.2, 0.3, 0.4};

  /// Seeds trained concurrently. Results do not depend on it.
  int jobs = 1;

  std::filesystem::path data_dir() const { return out_dir / "data"; }
  std::filesystem::path resolved_train() const;
  std::filesystem::path resolved_test() const;
};

/// Defaults binary-exp uses for options the user did not set.
ExperimentConfig binary_experiment_defaults();

struct RunManifest {
  std::string command;
  std::filesystem::path dir;
  std::string config_snapshot{};
  std::vector<std::filesystem::path> artifacts{};
  std::vector<std::pair<std::string, double>> timings_s{};

  nlohmann::json to_json() const;
};

RunManifest cmd_synth(const ExperimentConfig& cfg);
/// cfg.loss selects ce or bsce.
RunManifest cmd_train(const ExperimentConfig& cfg);
RunManifest cmd_dive(const ExperimentConfig& cfg);
RunManifest cmd_analyze_ve(const ExperimentConfig& cfg);
RunManifest cmd_binary_exp(const ExperimentConfig& cfg);
RunManifest cmd_eval(const ExperimentConfig& cfg);

/// Parses argv-style arguments (without the program name), runs the
/// subcommand, writes its manifest and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace divelab::cli
