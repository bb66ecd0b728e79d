#include "divelab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "divelab/error.hpp"
#include "rng.hpp"

namespace divelab {

namespace {

constexpr std::string_view kDatasetMagic = "DIVEDSET";

}  // namespace

// ---------------------------------------------------------------------------
// ClassProfile / Dataset

ClassProfile ClassProfile::from_counts(std::vector<std::int64_t> counts) {
  ClassProfile p;
  p.counts = std::move(counts);
  if (p.counts.empty()) throw std::invalid_argument("class profile is empty");
  const auto [lo, hi] = std::minmax_element(p.counts.begin(), p.counts.end());
  if (*lo < 1) throw std::invalid_argument("class counts must be >= 1");
  p.beta = static_cast<double>(*hi) / static_cast<double>(*lo);
  return p;
}

std::int64_t ClassProfile::total() const noexcept {
  std::int64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

void ClassProfile::validate() const {
  if (counts.empty()) throw ValidationError("class profile is empty");
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] < 1) {
      throw ValidationError("class " + std::to_string(k) + " has count " +
                            std::to_string(counts[k]) + " (must be >= 1)");
    }
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  const double ratio = static_cast<double>(*hi) / static_cast<double>(*lo);
  if (std::abs(ratio - beta) > 1e-9 * ratio) {
    throw ValidationError("imbalance factor " + std::to_string(beta) +
                          " disagrees with counts (max/min = " + std::to_string(ratio) + ")");
  }
}

void Dataset::validate() const {
  profile.validate();
  if (features.rows != labels.size()) {
    throw ValidationError("feature rows (" + std::to_string(features.rows) +
                          ") differ from label count (" + std::to_string(labels.size()) + ")");
  }
  std::vector<std::int64_t> hist(profile.num_classes(), 0);
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= hist.size()) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(hist.size()) + ")");
    }
    ++hist[static_cast<std::size_t>(y)];
  }
  if (hist != profile.counts) throw ValidationError("label histogram differs from profile counts");
}

const char* subset_name(Subset s) noexcept {
  switch (s) {
    case Subset::many: return "many";
    case Subset::medium: return "medium";
    case Subset::few: return "few";
  }
  return "?";
}

Subset SubsetSplit::subset_of(std::size_t k) const {
  for (Subset s : {Subset::many, Subset::medium, Subset::few}) {
    const auto& m = members(s);
    if (std::find(m.begin(), m.end(), k) != m.end()) return s;
  }
  throw std::out_of_range("class " + std::to_string(k) + " is not in the split");
}

const std::vector<std::size_t>& SubsetSplit::members(Subset s) const noexcept {
  switch (s) {
    case Subset::many: return many;
    case Subset::medium: return medium;
    case Subset::few: break;
  }
  return few;
}

// ---------------------------------------------------------------------------
// Profiles

ClassProfile exp_profile(std::size_t num_classes, std::int64_t n_max, double beta) {
  if (num_classes < 2) throw std::invalid_argument("exp_profile needs at least 2 classes");
  if (n_max < 1) throw std::invalid_argument("exp_profile needs n_max >= 1");
  if (!(beta >= 1.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("imbalance factor must be a finite value >= 1");
  }
  std::vector<std::int64_t> counts(num_classes);
  const double last = static_cast<double>(num_classes - 1);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double exact = static_cast<double>(n_max) * std::pow(beta, -static_cast<double>(k) / last);
    counts[k] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(exact + 0.5)));
  }
  return ClassProfile::from_counts(std::move(counts));
}

ClassProfile flat_profile(std::size_t num_classes, std::int64_t per_class) {
  if (num_classes < 1) throw std::invalid_argument("flat_profile needs at least 1 class");
  if (per_class < 1) throw std::invalid_argument("flat_profile needs per_class >= 1");
  return ClassProfile::from_counts(std::vector<std::int64_t>(num_classes, per_class));
}

// ---------------------------------------------------------------------------
// Synthesis

Matrix class_means(std::size_t num_classes, std::size_t dim, double separation,
                   std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("feature dimension must be >= 2");
  if (!(separation > 0.0)) throw std::invalid_argument("separation must be > 0");
  auto rng = seeded_rng(seed, streams::kClassMeans);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(num_classes, dim);
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto row = means.row(k);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : row) {
        v = normal(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : row) v = v / norm * separation;
  }
  return means;
}

Dataset synth_gaussian_lt(const ClassProfile& profile, std::size_t dim, double separation,
                          std::uint64_t seed, SampleStream stream) {
  profile.validate();
  const Matrix means = class_means(profile.num_classes(), dim, separation, seed);
  auto rng = seeded_rng(seed, static_cast<std::uint64_t>(stream));
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.profile = profile;
  const auto n = static_cast<std::size_t>(profile.total());
  ds.features = Matrix(n, dim);
  ds.labels.reserve(n);
  std::size_t i = 0;
  for (std::size_t k = 0; k < profile.num_classes(); ++k) {
    const auto mean = means.row(k);
    for (std::int64_t c = 0; c < profile.counts[k]; ++c, ++i) {
      auto row = ds.features.row(i);
      for (std::size_t j = 0; j < dim; ++j) row[j] = mean[j] + normal(rng);
      ds.labels.push_back(static_cast<std::int64_t>(k));
    }
  }
  return ds;
}

TrainTestPair synth_train_test(const ClassProfile& profile, std::size_t dim, double separation,
                               std::int64_t test_per_class, std::uint64_t seed) {
  return {synth_gaussian_lt(profile, dim, separation, seed, SampleStream::train),
          synth_gaussian_lt(flat_profile(profile.num_classes(), test_per_class), dim, separation,
                            seed, SampleStream::test)};
}

Dataset subsample_longtail(const Dataset& balanced, double beta, std::uint64_t seed) {
  balanced.validate();
  const auto& counts = balanced.profile.counts;
  if (std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) != counts.end()) {
    throw std::invalid_argument("subsample_longtail expects a flat input profile");
  }
  const ClassProfile target = exp_profile(balanced.num_classes(), counts.front(), beta);

  std::vector<std::vector<std::size_t>> by_class(balanced.num_classes());
  for (std::size_t i = 0; i < balanced.size(); ++i) {
    by_class[static_cast<std::size_t>(balanced.labels[i])].push_back(i);
  }
  auto rng = seeded_rng(seed, streams::kSubsample);
  std::vector<char> keep(balanced.size(), 0);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    const auto want = static_cast<std::size_t>(target.counts[k]);
    if (want > idx.size()) {
      throw std::invalid_argument("class " + std::to_string(k) + " has " +
                                  std::to_string(idx.size()) + " examples, " +
                                  std::to_string(want) + " requested");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t j = 0; j < want; ++j) keep[idx[j]] = 1;
  }

  Dataset out;
  out.profile = target;
  const auto n = static_cast<std::size_t>(target.total());
  out.features = Matrix(n, balanced.dim());
  out.labels.reserve(n);
  std::size_t r = 0;
  for (std::size_t i = 0; i < balanced.size(); ++i) {
    if (!keep[i]) continue;
    std::copy_n(balanced.features.row(i).begin(), balanced.dim(), out.features.row(r++).begin());
    out.labels.push_back(balanced.labels[i]);
  }
  return out;
}

SubsetSplit split_subsets(const ClassProfile& profile, std::int64_t hi, std::int64_t lo) {
  if (lo > hi) throw std::invalid_argument("split thresholds require lo <= hi");
  SubsetSplit split;
  split.hi = hi;
  split.lo = lo;
  for (std::size_t k = 0; k < profile.num_classes(); ++k) {
    const auto n = profile.counts[k];
    if (n > hi) {
      split.many.push_back(k);
    } else if (n < lo) {
      split.few.push_back(k);
    } else {
      split.medium.push_back(k);
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Binary smoothing experiment

SmoothedTarget smoothing_targets(std::span<const std::int64_t> labels, std::size_t head_class,
                                 std::size_t tail_class, double epsilon) {
  if (head_class > 1 || tail_class > 1 || head_class == tail_class) {
    throw std::invalid_argument("smoothing targets need distinct head/tail classes in {0, 1}");
  }
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("epsilon must lie in [0, 0.5)");
  SmoothedTarget out;
  out.epsilon = epsilon;
  out.targets.reserve(labels.size());
  for (auto y : labels) {
    if (y == static_cast<std::int64_t>(head_class)) {
      std::vector<double> t(2, 0.0);
      t[head_class] = 1.0 - epsilon;
      t[tail_class] = epsilon;
      out.targets.push_back(ProbVector::unchecked(std::move(t)));
    } else if (y == static_cast<std::int64_t>(tail_class)) {
      out.targets.push_back(ProbVector::one_hot(2, tail_class));
    } else {
      throw std::invalid_argument("label " + std::to_string(y) + " is neither head nor tail");
    }
  }
  return out;
}

double virtual_ratio(std::int64_t n_head, std::int64_t n_tail, double epsilon) {
  if (n_tail < 1 || n_head < n_tail) throw std::invalid_argument("virtual_ratio needs n_head >= n_tail >= 1");
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("epsilon must lie in [0, 0.5)");
  const double h = static_cast<double>(n_head);
  return (static_cast<double>(n_tail) + h * epsilon) / (h - h * epsilon);
}

// ---------------------------------------------------------------------------
// Container

void write_dataset(const Dataset& ds, std::ostream& out) {
  ds.validate();
  binio::write_magic(out, kDatasetMagic);
  binio::write_u64(out, ds.num_classes());
  binio::write_u64(out, ds.size());
  binio::write_u64(out, ds.dim());
  for (auto c : ds.profile.counts) binio::write_i64(out, c);
  for (double v : ds.features.data) binio::write_f64(out, v);
  for (auto y : ds.labels) binio::write_i64(out, y);
}

Dataset read_dataset(std::istream& in) {
  binio::Reader r(in);
  r.expect_magic(kDatasetMagic);
  const std::size_t header_at = r.offset();
  const auto C = r.u64();
  const auto n = r.u64();
  const auto d = r.u64();
  // Reject absurd headers before allocating.
  constexpr std::uint64_t kMax = std::uint64_t{1} << 32;
  if (C < 1 || C > kMax || n > kMax || d > kMax || n * d > kMax) {
    throw ParseError("implausible header (C=" + std::to_string(C) + ", n=" + std::to_string(n) +
                         ", d=" + std::to_string(d) + ")",
                     header_at);
  }
  std::vector<std::int64_t> counts(C);
  for (auto& c : counts) {
    const std::size_t at = r.offset();
    c = r.i64();
    if (c < 1) throw ValidationError("empty class in header at byte " + std::to_string(at));
  }
  Dataset ds;
  ds.profile = ClassProfile::from_counts(std::move(counts));
  if (static_cast<std::uint64_t>(ds.profile.total()) != n) {
    throw ParseError("header counts sum to " + std::to_string(ds.profile.total()) + ", expected " +
                         std::to_string(n),
                     header_at);
  }
  ds.features = Matrix(n, d);
  for (double& v : ds.features.data) v = r.f64();
  ds.labels.resize(n);
  for (auto& y : ds.labels) y = r.i64();
  r.expect_end();
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(ds, out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in);
}

void write_profile_csv(const ClassProfile& profile, const SubsetSplit& split, std::ostream& out) {
  out << "class_id,count,subset\n";
  for (std::size_t k = 0; k < profile.num_classes(); ++k) {
    out << k << ',' << profile.counts[k] << ',' << subset_name(split.subset_of(k)) << '\n';
  }
}

}  // namespace divelab
