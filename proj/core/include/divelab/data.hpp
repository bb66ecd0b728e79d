#pragma once

// Long-tailed dataset synthesis, Many/Medium/Few splitting, the binary
// label-smoothing targets, and the binary dataset container.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "divelab/mathcore.hpp"
#include "divelab/matrix.hpp"

namespace divelab {

/// Training examples per class, head to tail, and the imbalance factor n_max / n_min.
struct ClassProfile {
  std::vector<std::int64_t> counts;
  double beta = 1.0;

  static ClassProfile from_counts(std::vector<std::int64_t> counts);

  std::size_t num_classes() const noexcept { return counts.size(); }
  std::int64_t total() const noexcept;
  /// Throws ValidationError when a count is < 1 or beta disagrees with the counts.
  void validate() const;

  bool operator==(const ClassProfile&) const = default;
};

/// n x d features, one label per row, and the training profile the labels follow.
struct Dataset {
  Matrix features;
  std::vector<std::int64_t> labels;
  ClassProfile profile;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols; }
  std::size_t num_classes() const noexcept { return profile.num_classes(); }
  /// Label histogram must equal profile.counts. Throws ValidationError.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

enum class Subset { many, medium, few };

const char* subset_name(Subset s) noexcept;

struct SubsetSplit {
  std::vector<std::size_t> many;
  std::vector<std::size_t> medium;
  std::vector<std::size_t> few;
  std::int64_t hi = 100;
  std::int64_t lo = 20;

  /// Subset of class k. Throws std::out_of_range for unknown classes.
  Subset subset_of(std::size_t k) const;
  std::size_t num_classes() const noexcept { return many.size() + medium.size() + few.size(); }
  const std::vector<std::size_t>& members(Subset s) const noexcept;
};

/// Per-example two-class targets for the label-smoothing experiment.
struct SmoothedTarget {
  std::vector<ProbVector> targets;
  double epsilon = 0.0;
};

/// counts[k] = round-half-up(n_max * beta^(-k / (C - 1))), floored at 1.
ClassProfile exp_profile(std::size_t num_classes, std::int64_t n_max, double beta);

/// Equal-count profile.
ClassProfile flat_profile(std::size_t num_classes, std::int64_t per_class);

/// Independent sample streams of one synthetic task. Class means depend only
/// on the seed, so the train and test streams describe the same mixture.
enum class SampleStream : std::uint64_t { train = 1, test = 2 };

/// Deterministic class means: seed-derived random unit directions scaled by `separation`.
Matrix class_means(std::size_t num_classes, std::size_t dim, double separation, std::uint64_t seed);

/// Isotropic unit-variance Gaussian mixture. Class k contributes profile.counts[k]
/// rows, grouped by class in class order.
Dataset synth_gaussian_lt(const ClassProfile& profile, std::size_t dim, double separation,
                          std::uint64_t seed, SampleStream stream = SampleStream::train);

struct TrainTestPair {
  Dataset train;
  Dataset test;
};

/// Long-tailed train set plus the balanced companion test set drawn from the same mixture.
TrainTestPair synth_train_test(const ClassProfile& profile, std::size_t dim, double separation,
                               std::int64_t test_per_class, std::uint64_t seed);

/// Keeps exp_profile(C, n, beta) examples per class from a flat dataset,
/// chosen uniformly without replacement. Surviving rows keep their order.
Dataset subsample_longtail(const Dataset& balanced, double beta, std::uint64_t seed);

/// many: count > hi, few: count < lo, medium otherwise.
SubsetSplit split_subsets(const ClassProfile& profile, std::int64_t hi = 100, std::int64_t lo = 20);

/// Head examples get (1 - eps) on the head class and eps on the tail class;
/// tail examples stay one-hot. Labels must be head_class or tail_class (both < 2).
SmoothedTarget smoothing_targets(std::span<const std::int64_t> labels, std::size_t head_class,
                                 std::size_t tail_class, double epsilon);

/// Tail-to-head virtual example ratio after smoothing:
/// (n_tail + n_head eps) / (n_head - n_head eps).
double virtual_ratio(std::int64_t n_head, std::int64_t n_tail, double epsilon);

// Container: "DIVEDSET" magic, u64 C, u64 n, u64 d, C x i64 counts,
// n*d f64 features (row-major), n x i64 labels. All little-endian.

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& ds, std::ostream& out);
/// Throws ParseError (with byte offset) or ValidationError.
Dataset read_dataset(std::istream& in);

/// CSV `class_id,count,subset`.
void write_profile_csv(const ClassProfile& profile, const SubsetSplit& split, std::ostream& out);

}  // namespace divelab
