#pragma once

// Softmax variants, the CE / BSCE / KD / DiVE loss family and their exact
// gradients with respect to the student logits.
//
// Two layers live here. The value-typed API (LogitVector, ProbVector,
// LossValue) validates its inputs and is what callers outside the training
// loop use. The span kernels at the bottom do no allocation and no
// validation; the model and distill modules call them per example.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace divelab {

/// Probabilities are floored at this value before taking a logarithm.
inline constexpr double kLogFloor = 1e-12;
/// Tolerance on the sum of a ProbVector.
inline constexpr double kProbSumTolerance = 1e-9;

/// Lowest index of the maximum entry.
std::size_t argmax(std::span<const double> values);

/// Unbounded class scores z. At least two classes, every entry finite.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }

 private:
  std::vector<double> values_;
};

/// A discrete distribution over C classes: entries >= 0, sum 1 within kProbSumTolerance.
class ProbVector {
 public:
  /// Validates; throws std::invalid_argument.
  explicit ProbVector(std::vector<double> values);

  /// Skips validation. The caller guarantees the invariants.
  static ProbVector unchecked(std::vector<double> values);
  static ProbVector one_hot(std::size_t classes, std::size_t k);
  static ProbVector uniform(std::size_t classes);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  std::size_t argmax() const { return divelab::argmax(values_); }

  /// Index of the single unit entry, or size() when the vector is not one-hot.
  std::size_t hot_index() const noexcept;

 private:
  struct Trusted {};
  ProbVector(Trusted, std::vector<double> values) : values_(std::move(values)) {}

  std::vector<double> values_;
};

/// Loss value in nats plus d(loss)/dz for the student logits z.
struct LossValue {
  double value = 0.0;
  std::vector<double> grad_logits;
};

/// Which supervision the distillation term sees.
enum class TargetForm {
  /// (1-a)y + a t^tau against s^tau with a tau^2 KL loss; no separate hard-label term.
  blended_ttilde,
  /// (1-a) hard-label term + a tau^2 KL(t^tau || s^tau).
  teacher_t_tau,
};

struct DistillConfig {
  double alpha = 0.5;
  double tau = 1.0;
  /// Power-normalization exponent applied to the teacher distribution; 1 disables it.
  double power_p = 1.0;
  TargetForm target_form = TargetForm::teacher_t_tau;

  /// Throws std::invalid_argument when alpha, tau or power_p is out of range.
  void validate() const;
  bool power_enabled() const noexcept { return power_p < 1.0; }
};

ProbVector softmax(const LogitVector& z);
/// softmax(z / tau).
ProbVector softmax_temp(const LogitVector& z, double tau);
/// Balanced softmax: s_i = n_i exp(z_i) / sum_k n_k exp(z_k).
ProbVector bsce_softmax(const LogitVector& z, std::span<const std::int64_t> counts);
/// Raises every entry to p in (0, 1] and renormalizes.
ProbVector power_normalize(const ProbVector& t, double p);

double cross_entropy(const ProbVector& target, const ProbVector& pred);
double kl_divergence(const ProbVector& t, const ProbVector& s);
double entropy(const ProbVector& d);

/// (1 - alpha) y + alpha t. y must be one-hot.
ProbVector blended_target(const ProbVector& y, const ProbVector& t, double alpha);

/// Knowledge-distillation loss
///   (1-a) CE(y, softmax(z_s)) + a tau^2 KL(t^tau, softmax(z_s / tau))
/// where t^tau is the teacher's tempered softmax, power-normalized when
/// cfg.power_p < 1. Power normalization never touches the student side.
LossValue kd_loss(const ProbVector& y, const LogitVector& teacher_z, const LogitVector& student_z,
                  const DistillConfig& cfg);

/// DiVE loss: the hard-label term of kd_loss with the balanced softmax in
/// place of softmax. The KL term is unchanged; s^tau uses neither counts nor
/// power normalization.
LossValue dive_loss(const ProbVector& y, const LogitVector& teacher_z, const LogitVector& student_z,
                    std::span<const std::int64_t> counts, const DistillConfig& cfg);

// ---------------------------------------------------------------------------
// Span kernels. No validation; sizes must agree.

/// log sum_k exp(z_k / tau), computed with the maximum subtracted.
double log_sum_exp(std::span<const double> z, double tau = 1.0);

/// out = softmax(z / tau).
void softmax_into(std::span<const double> z, double tau, std::span<double> out);

/// In-place x_k <- x_k^p / sum_j x_j^p.
void power_normalize_inplace(std::span<double> probs, double p);

/// Teacher supervision t^tau: tempered softmax, then power normalization when p < 1.
void teacher_distribution_into(std::span<const double> teacher_z, double tau, double power_p,
                               std::span<double> out);

/// Hard-label cross entropy of softmax(z + log_counts) at `label`. Empty
/// log_counts gives plain softmax CE. Writes d(loss)/dz into grad.
double hard_label_loss(std::size_t label, std::span<const double> z,
                       std::span<const double> log_counts, std::span<double> grad);

/// -sum_k target_k log softmax(z)_k. Writes d(loss)/dz into grad.
double soft_target_loss(std::span<const double> target, std::span<const double> z,
                        std::span<double> grad);

/// One example of the distillation family given an already-built teacher
/// target t^tau. With TargetForm::teacher_t_tau the hard-label term uses the
/// balanced softmax when log_counts is non-empty (DiVE) and plain softmax
/// otherwise (KD). With TargetForm::blended_ttilde log_counts is ignored.
double distill_loss(std::size_t label, std::span<const double> teacher_target,
                    std::span<const double> z, std::span<const double> log_counts,
                    const DistillConfig& cfg, std::span<double> grad);

/// log n_k for each class; throws std::invalid_argument on a count < 1.
std::vector<double> log_counts(std::span<const std::int64_t> counts);

}  // namespace divelab
