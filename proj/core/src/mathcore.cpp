#include "divelab/mathcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace divelab {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": size mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

void require_positive_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("temperature must be a finite value > 0");
  }
}

void require_power(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw std::invalid_argument("power-normalization exponent must lie in (0, 1]");
  }
}

std::size_t require_one_hot(const ProbVector& y) {
  const std::size_t k = y.hot_index();
  if (k == y.size()) throw std::invalid_argument("label distribution must be one-hot");
  return k;
}

double floored_log(double p) { return std::log(std::max(p, kLogFloor)); }

}  // namespace

std::size_t argmax(std::span<const double> values) {
  // std::max_element returns the first maximum, which is the tie-break we want.
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

LogitVector::LogitVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw std::invalid_argument("logit vector needs at least 2 classes");
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("logit vector has a non-finite entry");
  }
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("probability vector is empty");
  double sum = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("probability vector has a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) {
    throw std::invalid_argument("probability vector does not sum to 1 (sum = " +
                                std::to_string(sum) + ")");
  }
}

ProbVector ProbVector::unchecked(std::vector<double> values) {
  return ProbVector(Trusted{}, std::move(values));
}

ProbVector ProbVector::one_hot(std::size_t classes, std::size_t k) {
  if (k >= classes) throw std::invalid_argument("one-hot index out of range");
  std::vector<double> v(classes, 0.0);
  v[k] = 1.0;
  return ProbVector(Trusted{}, std::move(v));
}

ProbVector ProbVector::uniform(std::size_t classes) {
  if (classes == 0) throw std::invalid_argument("uniform distribution over zero classes");
  return ProbVector(Trusted{}, std::vector<double>(classes, 1.0 / static_cast<double>(classes)));
}

std::size_t ProbVector::hot_index() const noexcept {
  std::size_t hot = values_.size();
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (values_[k] == 1.0) {
      if (hot != values_.size()) return values_.size();
      hot = k;
    } else if (values_[k] != 0.0) {
      return values_.size();
    }
  }
  return hot;
}

void DistillConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  require_positive_tau(tau);
  require_power(power_p);
}

// ---------------------------------------------------------------------------
// Kernels

double log_sum_exp(std::span<const double> z, double tau) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp((v - m) / tau);
  return m / tau + std::log(sum);
}

void softmax_into(std::span<const double> z, double tau, std::span<double> out) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp((z[k] - m) / tau);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
}

void power_normalize_inplace(std::span<double> probs, double p) {
  if (p == 1.0) return;
  double sum = 0.0;
  for (double& v : probs) {
    v = std::pow(v, p);
    sum += v;
  }
  for (double& v : probs) v /= sum;
}

void teacher_distribution_into(std::span<const double> teacher_z, double tau, double power_p,
                               std::span<double> out) {
  softmax_into(teacher_z, tau, out);
  power_normalize_inplace(out, power_p);
}

double hard_label_loss(std::size_t label, std::span<const double> z,
                       std::span<const double> log_counts, std::span<double> grad) {
  const std::size_t C = z.size();
  const bool balanced = !log_counts.empty();
  auto shifted = [&](std::size_t k) { return balanced ? z[k] + log_counts[k] : z[k]; };

  double m = shifted(0);
  for (std::size_t k = 1; k < C; ++k) m = std::max(m, shifted(k));
  double sum = 0.0;
  for (std::size_t k = 0; k < C; ++k) {
    grad[k] = std::exp(shifted(k) - m);
    sum += grad[k];
  }
  for (std::size_t k = 0; k < C; ++k) grad[k] /= sum;
  grad[label] -= 1.0;
  return m + std::log(sum) - shifted(label);
}

double soft_target_loss(std::span<const double> target, std::span<const double> z,
                        std::span<double> grad) {
  const double lse = log_sum_exp(z);
  double mass = 0.0;
  double value = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    mass += target[k];
    if (target[k] > 0.0) value += target[k] * (lse - z[k]);
  }
  for (std::size_t k = 0; k < z.size(); ++k) grad[k] = mass * std::exp(z[k] - lse) - target[k];
  return value;
}

double distill_loss(std::size_t label, std::span<const double> teacher_target,
                    std::span<const double> z, std::span<const double> log_counts,
                    const DistillConfig& cfg, std::span<double> grad) {
  const std::size_t C = z.size();
  const double a = cfg.alpha;
  const double tau = cfg.tau;
  const double lse_tau = log_sum_exp(z, tau);

  if (cfg.target_form == TargetForm::blended_ttilde) {
    // tau^2 KL(t~, s^tau); d/dz = tau (s^tau - t~).
    double kl = 0.0;
    for (std::size_t k = 0; k < C; ++k) {
      const double target = (k == label ? 1.0 - a : 0.0) + a * teacher_target[k];
      const double log_s = z[k] / tau - lse_tau;
      if (target > 0.0) kl += target * (std::log(target) - log_s);
      grad[k] = tau * (std::exp(log_s) - target);
    }
    return tau * tau * kl;
  }

  double value = 0.0;
  if (a > 0.0) {
    // a tau^2 KL(t, s^tau); d/dz = a tau (s^tau - t).
    double kl = 0.0;
    for (std::size_t k = 0; k < C; ++k) {
      const double log_s = z[k] / tau - lse_tau;
      if (teacher_target[k] > 0.0) kl += teacher_target[k] * (std::log(teacher_target[k]) - log_s);
      grad[k] = a * tau * (std::exp(log_s) - teacher_target[k]);
    }
    value = a * tau * tau * kl;
  } else {
    std::fill(grad.begin(), grad.end(), 0.0);
  }

  if (a < 1.0) {
    std::vector<double> hard(C);
    const double ce = hard_label_loss(label, z, log_counts, hard);
    value += (1.0 - a) * ce;
    for (std::size_t k = 0; k < C; ++k) grad[k] += (1.0 - a) * hard[k];
  }
  return value;
}

std::vector<double> log_counts(std::span<const std::int64_t> counts) {
  std::vector<double> out(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] < 1) throw std::invalid_argument("class counts must be >= 1");
    out[k] = std::log(static_cast<double>(counts[k]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Value-typed API

ProbVector softmax(const LogitVector& z) { return softmax_temp(z, 1.0); }

ProbVector softmax_temp(const LogitVector& z, double tau) {
  require_positive_tau(tau);
  std::vector<double> out(z.size());
  softmax_into(z.values(), tau, out);
  return ProbVector::unchecked(std::move(out));
}

ProbVector bsce_softmax(const LogitVector& z, std::span<const std::int64_t> counts) {
  require_same_size(z.size(), counts.size(), "bsce_softmax");
  for (auto n : counts) {
    if (n < 1) throw std::invalid_argument("bsce_softmax: class counts must be >= 1");
  }
  // Weights relative to the largest count are exactly 1.0 when counts are
  // equal, so that case follows the plain softmax path bit for bit.
  const double n_max = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  const auto values = z.values();
  const double m = *std::max_element(values.begin(), values.end());
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = (static_cast<double>(counts[k]) / n_max) * std::exp(values[k] - m);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return ProbVector::unchecked(std::move(out));
}

ProbVector power_normalize(const ProbVector& t, double p) {
  require_power(p);
  std::vector<double> out(t.values().begin(), t.values().end());
  power_normalize_inplace(out, p);
  return ProbVector::unchecked(std::move(out));
}

double cross_entropy(const ProbVector& target, const ProbVector& pred) {
  require_same_size(target.size(), pred.size(), "cross_entropy");
  double sum = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] > 0.0) sum -= target[k] * floored_log(pred[k]);
  }
  return sum;
}

double kl_divergence(const ProbVector& t, const ProbVector& s) {
  require_same_size(t.size(), s.size(), "kl_divergence");
  double sum = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] > 0.0) sum += t[k] * (std::log(t[k]) - floored_log(s[k]));
  }
  return std::max(sum, 0.0);
}

double entropy(const ProbVector& d) {
  double h = 0.0;
  for (double v : d.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(d.size())));
}

ProbVector blended_target(const ProbVector& y, const ProbVector& t, double alpha) {
  require_same_size(y.size(), t.size(), "blended_target");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  require_one_hot(y);
  std::vector<double> out(y.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - alpha) * y[k] + alpha * t[k];
  return ProbVector::unchecked(std::move(out));
}

LossValue kd_loss(const ProbVector& y, const LogitVector& teacher_z, const LogitVector& student_z,
                  const DistillConfig& cfg) {
  cfg.validate();
  require_same_size(y.size(), student_z.size(), "kd_loss");
  require_same_size(teacher_z.size(), student_z.size(), "kd_loss");
  const std::size_t label = require_one_hot(y);

  std::vector<double> target(student_z.size());
  teacher_distribution_into(teacher_z.values(), cfg.tau, cfg.power_p, target);
  LossValue out;
  out.grad_logits.resize(student_z.size());
  out.value = distill_loss(label, target, student_z.values(), {}, cfg, out.grad_logits);
  return out;
}

LossValue dive_loss(const ProbVector& y, const LogitVector& teacher_z, const LogitVector& student_z,
                    std::span<const std::int64_t> counts, const DistillConfig& cfg) {
  cfg.validate();
  require_same_size(y.size(), student_z.size(), "dive_loss");
  require_same_size(teacher_z.size(), student_z.size(), "dive_loss");
  require_same_size(counts.size(), student_z.size(), "dive_loss");
  const std::size_t label = require_one_hot(y);
  const std::vector<double> logn = log_counts(counts);

  std::vector<double> target(student_z.size());
  teacher_distribution_into(teacher_z.values(), cfg.tau, cfg.power_p, target);
  LossValue out;
  out.grad_logits.resize(student_z.size());
  out.value = distill_loss(label, target, student_z.values(), logn, cfg, out.grad_logits);
  return out;
}

}  // namespace divelab
