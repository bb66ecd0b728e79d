#pragma once

// Feedforward rectifier network with explicit backpropagation, the
// SGD-with-momentum training loop and subset-aware evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "divelab/data.hpp"
#include "divelab/mathcore.hpp"
#include "divelab/matrix.hpp"

namespace divelab {

struct Layer {
  Matrix weights;  ///< out x in
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

/// layer_sizes = (d, hidden..., C); layers[l] maps layer_sizes[l] -> layer_sizes[l+1].
struct ModelParams {
  std::vector<std::size_t> layer_sizes;
  std::vector<Layer> layers;

  std::size_t input_dim() const noexcept { return layer_sizes.front(); }
  std::size_t num_classes() const noexcept { return layer_sizes.back(); }
  std::size_t num_parameters() const noexcept;
  /// Shapes agree with layer_sizes and all entries are finite. Throws ValidationError.
  void validate() const;
  /// A zero-filled parameter set of the same shape.
  ModelParams zeros_like() const;

  bool operator==(const ModelParams&) const = default;
};

/// Same layout as the parameters they differentiate.
using Gradients = ModelParams;

/// Weights ~ N(0, 1) / sqrt(fan_in), biases zero.
ModelParams init_model(std::span<const std::size_t> layer_sizes, std::uint64_t seed);

/// Logits for every row of `inputs`. Hidden layers use max(0, x).
Matrix forward(const ModelParams& params, const Matrix& inputs);

/// Post-activation outputs of every layer; activations.front() is the input
/// batch and activations.back() the logits.
struct ForwardTrace {
  std::vector<Matrix> activations;
  const Matrix& logits() const { return activations.back(); }
};

ForwardTrace forward_trace(const ModelParams& params, const Matrix& inputs);

/// Gradient of sum_i <dlogits_i, logits_i> with respect to every parameter.
Gradients backward(const ModelParams& params, const ForwardTrace& trace, const Matrix& dlogits);
Gradients backward(const ModelParams& params, const Matrix& inputs, const Matrix& dlogits);

/// grads.weights += lambda * weights. Biases are not decayed.
void add_weight_decay(const ModelParams& params, double lambda, Gradients& grads);

// ---------------------------------------------------------------------------
// Objectives

enum class LossKind { ce, bsce, soft_target, kd, dive };

const char* loss_kind_name(LossKind kind) noexcept;

/// Which objective the training loop minimizes. kd/dive need one row of
/// teacher logits per training example; soft_target needs one target
/// distribution per training example.
struct LossSpec {
  LossKind kind = LossKind::ce;
  std::vector<std::int64_t> counts;
  Matrix teacher_logits;
  Matrix soft_targets;
  DistillConfig distill;

  static LossSpec cross_entropy();
  static LossSpec balanced(std::vector<std::int64_t> counts);
  static LossSpec soft(Matrix targets);
  static LossSpec knowledge_distillation(Matrix teacher_logits, DistillConfig cfg);
  static LossSpec dive(Matrix teacher_logits, std::vector<std::int64_t> counts, DistillConfig cfg);
};

/// A LossSpec bound to a training set, with teacher targets built once.
class Objective {
 public:
  Objective(const LossSpec& spec, const Dataset& train);

  /// Mean loss over the examples `ids` whose logits are the rows of `logits`.
  /// dlogits receives d(mean loss)/d(logits).
  double batch_loss(const Matrix& logits, std::span<const std::size_t> ids, Matrix& dlogits) const;

  const Matrix& teacher_targets() const noexcept { return targets_; }

 private:
  LossKind kind_;
  DistillConfig distill_;
  std::vector<std::int64_t> labels_;
  std::vector<double> log_counts_;
  Matrix targets_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  int epochs = 60;
  int batch_size = 64;
  int warmup_epochs = 3;
  std::vector<int> decay_milestones = {40, 50};
  double decay_factor = 0.1;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden = {64};

  /// Throws std::invalid_argument.
  void validate() const;
};

/// Learning rate for 0-based `epoch`: linear warmup lr * (e + 1) / warmup over
/// the first warmup epochs, then lr * decay^(#milestones <= e).
double learning_rate(const TrainConfig& cfg, int epoch);

struct EvalReport {
  double top1_all = 0.0;
  /// NaN when the subset has no classes.
  double top1_many = 0.0;
  double top1_medium = 0.0;
  double top1_few = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::int64_t>> confusion;
};

/// Top-1 of argmax(logits) against labels, overall and per subset.
EvalReport evaluate_logits(const Matrix& logits, std::span<const std::int64_t> labels,
                           const SubsetSplit& split);
/// Raw argmax prediction; no count adjustment at test time.
EvalReport evaluate(const ModelParams& params, const Dataset& test, const SubsetSplit& split);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double acc_all = 0.0;
  double acc_many = 0.0;
  double acc_medium = 0.0;
  double acc_few = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// Evaluation target for per-epoch accuracies.
struct EvalSet {
  const Dataset& test;
  const SubsetSplit& split;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

/// Runs epochs x ceil(n / batch) momentum-SGD steps on `train`. Accuracies in
/// the history are measured on `eval` when given, else on the training set.
/// Deterministic for a fixed cfg.seed. Throws NumericalError on a non-finite loss.
TrainResult train(const Dataset& train, const LossSpec& loss, const TrainConfig& cfg,
                  const EvalSet* eval = nullptr);

/// Same as train() but starting from `init` instead of a fresh initialization.
TrainResult train_from(ModelParams init, const Dataset& train, const LossSpec& loss,
                       const TrainConfig& cfg, const EvalSet* eval = nullptr);

// Checkpoint: "DIVECKPT" magic, u64 L, L x u64 layer sizes, then per layer the
// row-major weights and the bias as f64. Little-endian.

void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);
void write_model(const ModelParams& params, std::ostream& out);
ModelParams read_model(std::istream& in);

}  // namespace divelab
