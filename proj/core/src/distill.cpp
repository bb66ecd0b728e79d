#include "divelab/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "divelab/error.hpp"

namespace divelab {

namespace {

double mean_over(std::span<const double> values, const std::vector<std::size_t>& classes) {
  if (classes.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (auto k : classes) s += values[k];
  return s / static_cast<double>(classes.size());
}

// Head: many, else medium, else few. Tail: few, else medium, else many.
const std::vector<std::size_t>& head_classes(const SubsetSplit& split) {
  if (!split.many.empty()) return split.many;
  if (!split.medium.empty()) return split.medium;
  return split.few;
}

const std::vector<std::size_t>& tail_classes(const SubsetSplit& split) {
  if (!split.few.empty()) return split.few;
  if (!split.medium.empty()) return split.medium;
  return split.many;
}

}  // namespace

DistillConfig TauRecommendation::distill_config(double alpha) const {
  DistillConfig cfg;
  cfg.alpha = alpha;
  cfg.tau = student_tau;
  cfg.power_p = power ? kPowerExponent : 1.0;
  return cfg;
}

VirtualHistogram virtual_distribution(const Matrix& teacher_logits, double tau, bool power) {
  if (teacher_logits.rows == 0) throw std::invalid_argument("virtual_distribution: no examples");
  if (teacher_logits.cols < 2) throw std::invalid_argument("virtual_distribution: need >= 2 classes");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be > 0");

  VirtualHistogram h;
  h.tau = tau;
  h.power_p = power ? kPowerExponent : 1.0;
  h.per_class.assign(teacher_logits.cols, 0.0);
  std::vector<double> t(teacher_logits.cols);
  for (std::size_t i = 0; i < teacher_logits.rows; ++i) {
    teacher_distribution_into(teacher_logits.row(i), tau, h.power_p, t);
    for (std::size_t k = 0; k < t.size(); ++k) h.per_class[k] += t[k];
  }
  for (double v : h.per_class) h.total += v;
  return h;
}

FlatnessReport flatness(const VirtualHistogram& hist, const SubsetSplit& split,
                        const ClassProfile& profile) {
  const std::size_t C = hist.per_class.size();
  if (split.num_classes() != C || profile.num_classes() != C) {
    throw std::invalid_argument("flatness: histogram, split and profile disagree on the class count");
  }
  if (!(hist.total > 0.0)) throw std::invalid_argument("flatness: empty histogram");

  FlatnessReport rep;
  rep.mean_many = mean_over(hist.per_class, split.many);
  rep.mean_medium = mean_over(hist.per_class, split.medium);
  rep.mean_few = mean_over(hist.per_class, split.few);
  double h = 0.0;
  for (double v : hist.per_class) {
    const double q = v / hist.total;
    if (q > 0.0) h -= q * std::log(q);
  }
  const double log_c = std::log(static_cast<double>(C));
  rep.entropy = std::clamp(h, 0.0, log_c);
  rep.kl_to_uniform = log_c - rep.entropy;
  return rep;
}

std::vector<double> default_tau_grid() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }

TauRecommendation select_tau(const Matrix& teacher_logits, const SubsetSplit& split,
                             const ClassProfile& profile, std::span<const double> tau_grid,
                             const std::vector<bool>& power_options) {
  if (tau_grid.empty() || power_options.empty()) {
    throw std::invalid_argument("select_tau: empty temperature grid or power options");
  }
  std::vector<double> taus(tau_grid.begin(), tau_grid.end());
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  std::vector<bool> powers;
  for (bool p : {false, true}) {
    if (std::find(power_options.begin(), power_options.end(), p) != power_options.end()) {
      powers.push_back(p);
    }
  }

  const auto& head = head_classes(split);
  const auto& tail = tail_classes(split);

  TauRecommendation rec;
  std::optional<std::size_t> chosen;
  std::size_t best = 0;
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (double tau : taus) {
    for (bool power : powers) {
      const VirtualHistogram h = virtual_distribution(teacher_logits, tau, power);
      rec.scan_table.push_back({tau, power, flatness(h, split, profile)});
      const double head_mean = mean_over(h.per_class, head);
      const double tail_mean = mean_over(h.per_class, tail);
      const std::size_t row = rec.scan_table.size() - 1;
      if (!chosen && tail_mean >= head_mean) chosen = row;
      const double ratio = tail_mean / head_mean;
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = row;
      }
    }
  }

  rec.criterion_met = chosen.has_value();
  const ScanRow& pick = rec.scan_table[chosen.value_or(best)];
  rec.power = pick.power;
  rec.student_tau = pick.tau;
  rec.tau = pick.power ? pick.tau / kPowerExponent : pick.tau;
  return rec;
}

Matrix teacher_targets(const Matrix& teacher_logits, double tau, bool power) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be > 0");
  Matrix out(teacher_logits.rows, teacher_logits.cols);
  const double p = power ? kPowerExponent : 1.0;
  for (std::size_t i = 0; i < teacher_logits.rows; ++i) {
    teacher_distribution_into(teacher_logits.row(i), tau, p, out.row(i));
  }
  return out;
}

Matrix bsce_adjusted_logits(const Matrix& logits, std::span<const std::int64_t> counts) {
  if (counts.size() != logits.cols) throw std::invalid_argument("counts do not match logit width");
  const std::vector<double> logn = log_counts(counts);
  Matrix out = logits;
  for (std::size_t i = 0; i < out.rows; ++i) {
    auto r = out.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += logn[k];
  }
  return out;
}

PipelineResult dive_pipeline(const Dataset& train, const Dataset& test,
                             const TrainConfig& teacher_cfg, const TrainConfig& student_cfg,
                             const PipelineOptions& options) {
  if (train.dim() != test.dim() || train.num_classes() != test.num_classes()) {
    throw ValidationError("train and test sets differ in feature dimension or class count");
  }
  options.distill.validate();
  const SubsetSplit split = split_subsets(train.profile, options.split_hi, options.split_lo);
  const EvalSet eval{test, split};

  PipelineResult out;
  out.teacher = divelab::train(train, LossSpec::balanced(train.profile.counts), teacher_cfg, &eval);
  out.teacher_report = evaluate(out.teacher.params, test, split);

  Matrix logits = forward(out.teacher.params, train.features);
  if (options.teacher_logits == TeacherLogits::bsce_adjusted) {
    logits = bsce_adjusted_logits(logits, train.profile.counts);
  }

  out.distill = options.distill;
  if (options.auto_tau) {
    out.recommendation = select_tau(logits, split, train.profile, options.tau_grid,
                                    options.power_options);
    out.distill = out.recommendation->distill_config(options.distill.alpha);
    out.distill.target_form = options.distill.target_form;
  }

  const LossSpec loss = LossSpec::dive(std::move(logits), train.profile.counts, out.distill);
  out.student = divelab::train(train, loss, student_cfg, &eval);
  out.student_report = evaluate(out.student.params, test, split);

  const Matrix student_logits = forward(out.student.params, train.features);
  out.student_flatness =
      flatness(virtual_distribution(student_logits, out.distill.tau, false), split, train.profile);
  return out;
}

}  // namespace divelab
