#include "divelab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "divelab/error.hpp"
#include "rng.hpp"

namespace divelab {

namespace {

constexpr std::string_view kCheckpointMagic = "DIVECKPT";

void require_rows_cols(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows != rows || m.cols != cols) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                                std::to_string(m.cols));
  }
}

// out = in * W^T + b, optionally rectified.
Matrix affine(const Layer& layer, const Matrix& in, bool rectify) {
  const std::size_t out_dim = layer.weights.rows;
  Matrix out(in.rows, out_dim);
  for (std::size_t i = 0; i < in.rows; ++i) {
    const auto x = in.row(i);
    auto y = out.row(i);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const auto w = layer.weights.row(o);
      double acc = layer.bias[o];
      for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
      y[o] = rectify ? std::max(acc, 0.0) : acc;
    }
  }
  return out;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

std::size_t ModelParams::num_parameters() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.data.size() + l.bias.size();
  return n;
}

void ModelParams::validate() const {
  if (layer_sizes.size() < 2) throw ValidationError("model needs at least input and output sizes");
  if (layers.size() + 1 != layer_sizes.size()) throw ValidationError("layer count disagrees with sizes");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.rows != layer_sizes[l + 1] || layer.weights.cols != layer_sizes[l] ||
        layer.weights.data.size() != layer.weights.rows * layer.weights.cols ||
        layer.bias.size() != layer_sizes[l + 1]) {
      throw ValidationError("layer " + std::to_string(l) + " has inconsistent shape");
    }
    for (double v : layer.weights.data) {
      if (!std::isfinite(v)) throw ValidationError("non-finite weight in layer " + std::to_string(l));
    }
    for (double v : layer.bias) {
      if (!std::isfinite(v)) throw ValidationError("non-finite bias in layer " + std::to_string(l));
    }
  }
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.layer_sizes = layer_sizes;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({Matrix(l.weights.rows, l.weights.cols), std::vector<double>(l.bias.size())});
  }
  return z;
}

ModelParams init_model(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("model needs at least input and output sizes");
  for (auto s : layer_sizes) {
    if (s == 0) throw std::invalid_argument("layer sizes must be positive");
  }
  if (layer_sizes.back() < 2) throw std::invalid_argument("model needs at least 2 output classes");

  auto rng = seeded_rng(seed, streams::kInit);
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelParams p;
  p.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t in = layer_sizes[l];
    const std::size_t out = layer_sizes[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    Layer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weights.data) w = normal(rng) * scale;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

ForwardTrace forward_trace(const ModelParams& params, const Matrix& inputs) {
  if (inputs.cols != params.input_dim()) {
    throw std::invalid_argument("forward: feature dimension " + std::to_string(inputs.cols) +
                                " does not match model input " + std::to_string(params.input_dim()));
  }
  ForwardTrace trace;
  trace.activations.reserve(params.layers.size() + 1);
  trace.activations.push_back(inputs);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const bool hidden = l + 1 < params.layers.size();
    trace.activations.push_back(affine(params.layers[l], trace.activations.back(), hidden));
  }
  return trace;
}

Matrix forward(const ModelParams& params, const Matrix& inputs) {
  if (inputs.cols != params.input_dim()) {
    throw std::invalid_argument("forward: feature dimension " + std::to_string(inputs.cols) +
                                " does not match model input " + std::to_string(params.input_dim()));
  }
  Matrix act = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    act = affine(params.layers[l], act, l + 1 < params.layers.size());
  }
  return act;
}

Gradients backward(const ModelParams& params, const ForwardTrace& trace, const Matrix& dlogits) {
  if (trace.activations.size() != params.layers.size() + 1) {
    throw std::invalid_argument("backward: trace does not belong to this model");
  }
  require_rows_cols(dlogits, trace.logits().rows, params.num_classes(), "backward");

  Gradients grads = params.zeros_like();
  Matrix delta = dlogits;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Layer& layer = params.layers[l];
    const Matrix& in = trace.activations[l];
    Layer& g = grads.layers[l];
    for (std::size_t i = 0; i < delta.rows; ++i) {
      const auto d = delta.row(i);
      const auto x = in.row(i);
      for (std::size_t o = 0; o < d.size(); ++o) {
        if (d[o] == 0.0) continue;
        auto gw = g.weights.row(o);
        for (std::size_t j = 0; j < x.size(); ++j) gw[j] += d[o] * x[j];
        g.bias[o] += d[o];
      }
    }
    if (l == 0) break;
    // Propagate through W, then through the rectifier of layer l-1 (its
    // output is `in`; the derivative is 1 where the output is positive).
    Matrix prev(delta.rows, in.cols);
    for (std::size_t i = 0; i < delta.rows; ++i) {
      const auto d = delta.row(i);
      const auto x = in.row(i);
      auto p = prev.row(i);
      for (std::size_t o = 0; o < d.size(); ++o) {
        if (d[o] == 0.0) continue;
        const auto w = layer.weights.row(o);
        for (std::size_t j = 0; j < p.size(); ++j) p[j] += d[o] * w[j];
      }
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (x[j] <= 0.0) p[j] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

Gradients backward(const ModelParams& params, const Matrix& inputs, const Matrix& dlogits) {
  return backward(params, forward_trace(params, inputs), dlogits);
}

void add_weight_decay(const ModelParams& params, double lambda, Gradients& grads) {
  if (lambda == 0.0) return;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& w = params.layers[l].weights.data;
    auto& g = grads.layers[l].weights.data;
    for (std::size_t i = 0; i < w.size(); ++i) g[i] += lambda * w[i];
  }
}

// ---------------------------------------------------------------------------
// Objectives

const char* loss_kind_name(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::ce: return "ce";
    case LossKind::bsce: return "bsce";
    case LossKind::soft_target: return "soft";
    case LossKind::kd: return "kd";
    case LossKind::dive: return "dive";
  }
  return "?";
}

LossSpec LossSpec::cross_entropy() { return {}; }

LossSpec LossSpec::balanced(std::vector<std::int64_t> counts) {
  LossSpec s;
  s.kind = LossKind::bsce;
  s.counts = std::move(counts);
  return s;
}

LossSpec LossSpec::soft(Matrix targets) {
  LossSpec s;
  s.kind = LossKind::soft_target;
  s.soft_targets = std::move(targets);
  return s;
}

LossSpec LossSpec::knowledge_distillation(Matrix teacher_logits, DistillConfig cfg) {
  LossSpec s;
  s.kind = LossKind::kd;
  s.teacher_logits = std::move(teacher_logits);
  s.distill = cfg;
  return s;
}

LossSpec LossSpec::dive(Matrix teacher_logits, std::vector<std::int64_t> counts, DistillConfig cfg) {
  LossSpec s;
  s.kind = LossKind::dive;
  s.teacher_logits = std::move(teacher_logits);
  s.counts = std::move(counts);
  s.distill = cfg;
  return s;
}

Objective::Objective(const LossSpec& spec, const Dataset& train)
    : kind_(spec.kind), distill_(spec.distill), labels_(train.labels) {
  const std::size_t n = train.size();
  const std::size_t C = train.num_classes();

  if (kind_ == LossKind::bsce || kind_ == LossKind::dive) {
    const auto& counts = spec.counts.empty() ? train.profile.counts : spec.counts;
    if (counts.size() != C) throw std::invalid_argument("loss counts do not match the class count");
    log_counts_ = log_counts(counts);
  }
  if (kind_ == LossKind::soft_target) {
    require_rows_cols(spec.soft_targets, n, C, "soft targets");
    targets_ = spec.soft_targets;
  }
  if (kind_ == LossKind::kd || kind_ == LossKind::dive) {
    distill_.validate();
    require_rows_cols(spec.teacher_logits, n, C, "teacher logits");
    targets_ = Matrix(n, C);
    for (std::size_t i = 0; i < n; ++i) {
      teacher_distribution_into(spec.teacher_logits.row(i), distill_.tau, distill_.power_p,
                                targets_.row(i));
    }
  }
}

double Objective::batch_loss(const Matrix& logits, std::span<const std::size_t> ids,
                             Matrix& dlogits) const {
  if (logits.rows != ids.size()) throw std::invalid_argument("batch_loss: one logit row per id");
  dlogits = Matrix(logits.rows, logits.cols);
  double total = 0.0;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t i = ids[r];
    const auto label = static_cast<std::size_t>(labels_.at(i));
    const auto z = logits.row(r);
    auto g = dlogits.row(r);
    switch (kind_) {
      case LossKind::ce: total += hard_label_loss(label, z, {}, g); break;
      case LossKind::bsce: total += hard_label_loss(label, z, log_counts_, g); break;
      case LossKind::soft_target: total += soft_target_loss(targets_.row(i), z, g); break;
      case LossKind::kd: total += distill_loss(label, targets_.row(i), z, {}, distill_, g); break;
      case LossKind::dive:
        total += distill_loss(label, targets_.row(i), z, log_counts_, distill_, g);
        break;
    }
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (double& v : dlogits.data) v *= inv;
  return total * inv;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be >= 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (warmup_epochs < 0) throw std::invalid_argument("warmup epochs must be >= 0");
  if (!(decay_factor > 0.0)) throw std::invalid_argument("decay factor must be > 0");
  for (std::size_t i = 0; i < decay_milestones.size(); ++i) {
    if (decay_milestones[i] >= epochs || decay_milestones[i] < 0) {
      throw std::invalid_argument("decay milestones must lie in [0, epochs)");
    }
    if (i > 0 && decay_milestones[i] <= decay_milestones[i - 1]) {
      throw std::invalid_argument("decay milestones must be strictly increasing");
    }
  }
  for (auto h : hidden) {
    if (h == 0) throw std::invalid_argument("hidden layer sizes must be positive");
  }
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  if (epoch < cfg.warmup_epochs) {
    return cfg.lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
  }
  double lr = cfg.lr;
  for (int m : cfg.decay_milestones) {
    if (epoch >= m) lr *= cfg.decay_factor;
  }
  return lr;
}

EvalReport evaluate_logits(const Matrix& logits, std::span<const std::int64_t> labels,
                           const SubsetSplit& split) {
  if (logits.rows != labels.size()) throw std::invalid_argument("evaluate: one logit row per label");
  const std::size_t C = logits.cols;
  if (split.num_classes() != C) throw std::invalid_argument("evaluate: split does not cover the classes");

  EvalReport rep;
  rep.confusion.assign(C, std::vector<std::int64_t>(C, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= C) throw std::invalid_argument("evaluate: label out of range");
    ++rep.confusion[static_cast<std::size_t>(y)][argmax(logits.row(i))];
  }

  auto accuracy = [&](std::span<const std::size_t> classes) {
    std::int64_t hit = 0;
    std::int64_t total = 0;
    for (auto k : classes) {
      hit += rep.confusion[k][k];
      for (auto c : rep.confusion[k]) total += c;
    }
    return total == 0 ? nan() : static_cast<double>(hit) / static_cast<double>(total);
  };
  std::vector<std::size_t> all(C);
  std::iota(all.begin(), all.end(), std::size_t{0});
  rep.top1_all = accuracy(all);
  rep.top1_many = accuracy(split.many);
  rep.top1_medium = accuracy(split.medium);
  rep.top1_few = accuracy(split.few);
  return rep;
}

EvalReport evaluate(const ModelParams& params, const Dataset& test, const SubsetSplit& split) {
  if (test.num_classes() != params.num_classes()) {
    throw std::invalid_argument("evaluate: test set class count differs from model");
  }
  return evaluate_logits(forward(params, test.features), test.labels, split);
}

TrainResult train(const Dataset& train, const LossSpec& loss, const TrainConfig& cfg,
                  const EvalSet* eval) {
  cfg.validate();
  std::vector<std::size_t> sizes;
  sizes.push_back(train.dim());
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(train.num_classes());
  return train_from(init_model(sizes, cfg.seed), train, loss, cfg, eval);
}

TrainResult train_from(ModelParams params, const Dataset& train, const LossSpec& loss,
                       const TrainConfig& cfg, const EvalSet* eval) {
  cfg.validate();
  params.validate();
  if (params.input_dim() != train.dim() || params.num_classes() != train.num_classes()) {
    throw ValidationError("model shape does not match the training set");
  }
  if (train.size() == 0) throw std::invalid_argument("training set is empty");
  const Objective objective(loss, train);
  const SubsetSplit train_split = split_subsets(train.profile);

  auto rng = seeded_rng(cfg.seed, streams::kShuffle);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradients velocity = params.zeros_like();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  TrainHistory history;
  Matrix xb;
  Matrix dlogits;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::span<const std::size_t> ids(order.data() + start, end - start);
      xb = Matrix(ids.size(), train.dim());
      for (std::size_t r = 0; r < ids.size(); ++r) {
        std::copy_n(train.features.row(ids[r]).begin(), train.dim(), xb.row(r).begin());
      }
      const ForwardTrace trace = forward_trace(params, xb);
      const double value = objective.batch_loss(trace.logits(), ids, dlogits);
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(start / batch) + " (" + loss_kind_name(loss.kind) + ")");
      }
      loss_sum += value * static_cast<double>(ids.size());

      Gradients grads = backward(params, trace, dlogits);
      add_weight_decay(params, cfg.weight_decay, grads);
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto step = [&](std::vector<double>& w, std::vector<double>& v, const std::vector<double>& g) {
          for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = cfg.momentum * v[i] + g[i];
            w[i] -= lr * v[i];
          }
        };
        step(params.layers[l].weights.data, velocity.layers[l].weights.data,
             grads.layers[l].weights.data);
        step(params.layers[l].bias, velocity.layers[l].bias, grads.layers[l].bias);
      }
    }

    const EvalReport rep = eval ? evaluate(params, eval->test, eval->split)
                                : evaluate(params, train, train_split);
    history.epochs.push_back({epoch, lr, loss_sum / static_cast<double>(train.size()), rep.top1_all,
                              rep.top1_many, rep.top1_medium, rep.top1_few});
  }
  return {std::move(params), std::move(history)};
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_model(const ModelParams& params, std::ostream& out) {
  params.validate();
  binio::write_magic(out, kCheckpointMagic);
  binio::write_u64(out, params.layer_sizes.size());
  for (auto s : params.layer_sizes) binio::write_u64(out, s);
  for (const auto& l : params.layers) {
    for (double w : l.weights.data) binio::write_f64(out, w);
    for (double b : l.bias) binio::write_f64(out, b);
  }
}

ModelParams read_model(std::istream& in) {
  binio::Reader r(in);
  r.expect_magic(kCheckpointMagic);
  const std::size_t at = r.offset();
  const auto L = r.u64();
  if (L < 2 || L > 64) throw ParseError("implausible layer count " + std::to_string(L), at);
  ModelParams p;
  for (std::uint64_t i = 0; i < L; ++i) {
    const std::size_t size_at = r.offset();
    const auto s = r.u64();
    if (s == 0 || s > (std::uint64_t{1} << 24)) {
      throw ParseError("implausible layer size " + std::to_string(s), size_at);
    }
    p.layer_sizes.push_back(static_cast<std::size_t>(s));
  }
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    Layer layer{Matrix(p.layer_sizes[l + 1], p.layer_sizes[l]),
                std::vector<double>(p.layer_sizes[l + 1])};
    for (double& w : layer.weights.data) w = r.f64();
    for (double& b : layer.bias) b = r.f64();
    p.layers.push_back(std::move(layer));
  }
  r.expect_end();
  p.validate();
  return p;
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_model(params, out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_model(in);
}

}  // namespace divelab
