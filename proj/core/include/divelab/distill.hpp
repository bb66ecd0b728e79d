#pragma once

// Virtual-example accounting, flatness analysis, the rule-of-thumb
// temperature selector and the teacher -> student distillation pipeline.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "divelab/data.hpp"
#include "divelab/mathcore.hpp"
#include "divelab/matrix.hpp"
#include "divelab/model.hpp"

namespace divelab {

/// Exponent used whenever power normalization is switched on.
inline constexpr double kPowerExponent = 0.5;

/// Per-class sums of the teacher's (tempered, optionally power-normalized)
/// distributions over a whole dataset.
struct VirtualHistogram {
  std::vector<double> per_class;
  double tau = 1.0;
  double power_p = 1.0;
  double total = 0.0;
};

struct FlatnessReport {
  /// Mean virtual count over the classes of each subset; NaN for an empty subset.
  double mean_many = 0.0;
  double mean_medium = 0.0;
  double mean_few = 0.0;
  /// Entropy of per_class / total, in nats.
  double entropy = 0.0;
  /// log C - entropy.
  double kl_to_uniform = 0.0;
};

struct ScanRow {
  double tau = 1.0;
  bool power = false;
  FlatnessReport flatness;
};

struct TauRecommendation {
  /// Temperature the teacher distribution effectively carries: the scanned
  /// tau, divided by kPowerExponent when power normalization is on.
  double tau = 1.0;
  bool power = false;
  /// Temperature for the student and for the teacher before power
  /// normalization: tau * kPowerExponent with power on, else tau.
  double student_tau = 1.0;
  /// True when the tail-over-head criterion was met; false for the fallback.
  bool criterion_met = false;
  std::vector<ScanRow> scan_table;

  /// The DistillConfig the student should train with.
  DistillConfig distill_config(double alpha) const;
};

/// Sum over rows of softmax(z / tau), each row square-root normalized when
/// `power` is set. Throws std::invalid_argument on empty input or tau <= 0.
VirtualHistogram virtual_distribution(const Matrix& teacher_logits, double tau, bool power);

/// Subset means, entropy and distance to uniform of a histogram.
FlatnessReport flatness(const VirtualHistogram& hist, const SubsetSplit& split,
                        const ClassProfile& profile);

/// Scans tau_grid (ascending) x power_options (off before on) and returns
/// the first configuration whose tail mean is at least its head mean. When
/// none qualifies, returns the one with the largest tail/head ratio. Head is
/// the first non-empty of many/medium/few, tail the first non-empty of
/// few/medium/many. Never trains anything.
TauRecommendation select_tau(const Matrix& teacher_logits, const SubsetSplit& split,
                             const ClassProfile& profile, std::span<const double> tau_grid,
                             const std::vector<bool>& power_options);

/// Default rule-of-thumb grid: 1, 2, ..., 10.
std::vector<double> default_tau_grid();

/// Per-example teacher supervision t^tau, one row per example.
Matrix teacher_targets(const Matrix& teacher_logits, double tau, bool power);

/// Which teacher scores feed the distillation target.
enum class TeacherLogits {
  raw,            ///< the network's logits z
  bsce_adjusted,  ///< z_k + log n_k
};

/// z_k + log n_k, row by row.
Matrix bsce_adjusted_logits(const Matrix& logits, std::span<const std::int64_t> counts);

struct PipelineOptions {
  /// Fixed distillation settings. Ignored fields when auto_tau is set: tau and power_p.
  DistillConfig distill;
  bool auto_tau = false;
  std::vector<double> tau_grid = default_tau_grid();
  std::vector<bool> power_options = {false, true};
  TeacherLogits teacher_logits = TeacherLogits::raw;
  std::int64_t split_hi = 100;
  std::int64_t split_lo = 20;
};

struct PipelineResult {
  TrainResult teacher;
  TrainResult student;
  EvalReport teacher_report;
  EvalReport student_report;
  /// The configuration the student was trained with.
  DistillConfig distill;
  /// Present in auto mode.
  std::optional<TauRecommendation> recommendation;
  /// Student's own virtual distribution at the distillation temperature.
  FlatnessReport student_flatness;
};

/// BSCE teacher -> (optional) rule-of-thumb temperature -> teacher targets ->
/// student trained on the DiVE loss.
PipelineResult dive_pipeline(const Dataset& train, const Dataset& test,
                             const TrainConfig& teacher_cfg, const TrainConfig& student_cfg,
                             const PipelineOptions& options);

}  // namespace divelab
