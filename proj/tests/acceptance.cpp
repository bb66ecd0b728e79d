// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "divelab/data.hpp"
#include "divelab/distill.hpp"
#include "divelab/mathcore.hpp"
#include "divelab/model.hpp"
#include "finite_diff.hpp"

using namespace divelab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

struct Rand {
  std::mt19937_64 rng;
  explicit Rand(std::uint64_t seed) : rng(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
  LogitVector logits(std::size_t C, double scale) {
    std::vector<double> z(C);
    for (auto& v : z) v = uniform(-scale, scale);
    return LogitVector(z);
  }
};

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("divelab_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  if (rc != 0) std::cerr << "dive-lab " << args.front() << " failed (" << rc << "): " << err.str();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Parses a CSV with a header into column-name -> values (as strings).
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::istringstream s(line);
    for (std::string f; std::getline(s, f, ',');) out.push_back(f);
    return out;
  };
  std::string line;
  std::getline(in, line);
  const auto header = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    const auto fields = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < fields.size(); ++i) row[header[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

// The "mean" row of a summary.csv for one model.
std::map<std::string, std::string> summary_mean(const fs::path& p, const std::string& model) {
  for (auto& row : read_csv(p)) {
    if (row["model"] == model && row["seed"] == "mean") return row;
  }
  throw std::runtime_error("no mean row for " + model + " in " + p.string());
}

// ---------------------------------------------------------------------------

Outcome kd_blended_identity() {
  Rand r(101);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t C = 2 + r.index(19);
    const ProbVector y = ProbVector::one_hot(C, r.index(C));
    const LogitVector zt = r.logits(C, 5.0), zs = r.logits(C, 5.0);
    const double alpha = r.uniform(0.0, 1.0);
    const ProbVector t = softmax(zt);
    const double kd = kd_loss(y, zt, zs, {alpha, 1.0, 1.0}).value;
    const double dldl = cross_entropy(blended_target(y, t, alpha), softmax(zs)) - alpha * entropy(t);
    worst = std::max(worst, std::abs(kd - dldl));
  }
  return {worst < 1e-10, fmt("max |L_KD - (CE(t~,s) - a H(t))| = %.3g over 1000 tuples", worst)};
}

Outcome power_temperature_identity() {
  Rand r(102);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t C = 2 + r.index(19);
    const LogitVector z = r.logits(C, 10.0);
    const double tau = r.uniform(0.5, 20.0);
    const ProbVector a = power_normalize(softmax_temp(z, tau), 0.5);
    const ProbVector b = softmax_temp(z, 2.0 * tau);
    for (std::size_t k = 0; k < C; ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  }
  return {worst < 1e-12, fmt("max |pow(softmax(z/t), 0.5) - softmax(z/2t)| = %.3g over 1000 draws", worst)};
}

Outcome gradient_checks() {
  using divelab::testing::central_difference;
  using divelab::testing::relative_error;
  Rand r(103);
  constexpr int kInstances = 100;
  std::map<std::string, double> worst;

  for (int i = 0; i < kInstances; ++i) {
    const std::size_t C = 2 + r.index(9);
    const std::size_t label = r.index(C);
    const ProbVector y = ProbVector::one_hot(C, label);
    const LogitVector zt = r.logits(C, 3.0), zs = r.logits(C, 3.0);
    std::vector<std::int64_t> counts(C);
    for (auto& n : counts) n = 1 + static_cast<std::int64_t>(r.index(500));
    const std::vector<double> logn = log_counts(counts);
    const std::vector<double> x0(zs.values().begin(), zs.values().end());
    DistillConfig cfg{r.uniform(0, 1), r.uniform(0.5, 8), i % 2 ? 0.5 : 1.0};
    std::vector<double> g(C), scratch(C);

    hard_label_loss(label, zs.values(), {}, g);
    auto fd = central_difference([&](std::span<const double> x) { return hard_label_loss(label, x, {}, scratch); }, x0);
    worst["CE"] = std::max(worst["CE"], relative_error(g, fd));

    hard_label_loss(label, zs.values(), logn, g);
    fd = central_difference([&](std::span<const double> x) { return hard_label_loss(label, x, logn, scratch); }, x0);
    worst["BSCE"] = std::max(worst["BSCE"], relative_error(g, fd));

    const LossValue kd = kd_loss(y, zt, zs, cfg);
    fd = central_difference(
        [&](std::span<const double> x) { return kd_loss(y, zt, LogitVector({x.begin(), x.end()}), cfg).value; }, x0);
    worst["KD"] = std::max(worst["KD"], relative_error(kd.grad_logits, fd));

    const LossValue dive = dive_loss(y, zt, zs, counts, cfg);
    fd = central_difference(
        [&](std::span<const double> x) {
          return dive_loss(y, zt, LogitVector({x.begin(), x.end()}), counts, cfg).value;
        },
        x0);
    worst["DiVE"] = std::max(worst["DiVE"], relative_error(dive.grad_logits, fd));
  }

  // One full training-step gradient of a tiny network under the DiVE objective.
  {
    const ClassProfile prof = exp_profile(4, 12, 6);
    const Dataset ds = synth_gaussian_lt(prof, 5, 1.5, 3);
    Matrix teacher(ds.size(), 4);
    for (double& v : teacher.data) v = r.uniform(-3, 3);
    const Objective obj(LossSpec::dive(teacher, prof.counts, {0.5, 3.0, 0.5}), ds);
    std::vector<std::size_t> ids(ds.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    const std::vector<std::size_t> sizes = {5, 8, 4};
    const ModelParams p = init_model(sizes, 9);
    Matrix dl;
    const ForwardTrace tr = forward_trace(p, ds.features);
    obj.batch_loss(tr.logits(), ids, dl);
    const Gradients grads = backward(p, tr, dl);
    auto flatten = [](const ModelParams& m) {
      std::vector<double> out;
      for (const auto& l : m.layers) {
        out.insert(out.end(), l.weights.data.begin(), l.weights.data.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
      }
      return out;
    };
    ModelParams scratch = p;
    const auto fd = central_difference(
        [&](std::span<const double> theta) {
          std::size_t i = 0;
          for (auto& l : scratch.layers) {
            for (double& w : l.weights.data) w = theta[i++];
            for (double& b : l.bias) b = theta[i++];
          }
          Matrix unused;
          return obj.batch_loss(forward(scratch, ds.features), ids, unused);
        },
        flatten(p));
    worst["network"] = relative_error(flatten(grads), fd);
  }

  bool ok = true;
  std::string detail = "max rel. error:";
  for (const auto& [name, e] : worst) {
    ok = ok && e < 1e-5;
    detail += fmt(" %s %.2g", name.c_str(), e);
  }
  return {ok, detail + fmt(" (%d instances per loss)", kInstances)};
}

Outcome virtual_example_accounting() {
  const std::vector<double> p = {0.7, 0.02, 0.07, 0.01, 0.2};
  Matrix one(1, 5);
  for (std::size_t k = 0; k < 5; ++k) one(0, k) = std::log(p[k]);
  const VirtualHistogram h1 = virtual_distribution(one, 1.0, false);
  double row_err = 0.0;
  for (std::size_t k = 0; k < 5; ++k) row_err = std::max(row_err, std::abs(h1.per_class[k] - p[k]));

  Rand r(104);
  const std::size_t n = 2000, C = 20;
  Matrix z(n, C);
  for (double& v : z.data) v = r.uniform(-8, 8);
  double mass_err = 0.0;
  for (double tau : {0.5, 1.0, 2.0, 3.0, 6.0, 10.0, 1000.0}) {
    for (bool power : {false, true}) {
      const VirtualHistogram h = virtual_distribution(z, tau, power);
      double s = 0.0;
      for (double v : h.per_class) s += v;
      mass_err = std::max(mass_err, std::abs(s - static_cast<double>(n)));
    }
  }
  const VirtualHistogram hot = virtual_distribution(z, 1000.0, false);
  double uni_err = 0.0;
  for (double v : hot.per_class) uni_err = std::max(uni_err, std::abs(v / static_cast<double>(n) - 1.0 / C));

  const bool ok = row_err < 1e-15 && mass_err < 1e-9 && uni_err < 1e-3;
  return {ok, fmt("single-row error %.2g, max |mass - n| %.2g, tau=1000 max deviation from uniform %.2g",
                  row_err, mass_err, uni_err)};
}

Outcome desk_scale_ordering() {
  const fs::path out = scratch_dir("desk");
  const std::string o = out.string();
  if (cli({"synth", "--out", o}) || cli({"train", "--out", o, "--loss", "ce"}) ||
      cli({"train", "--out", o, "--loss", "bsce"}) || cli({"dive", "--out", o})) {
    return {false, "a dive-lab command failed"};
  }
  auto ce = summary_mean(out / "train_ce" / "summary.csv", "ce");
  auto bsce = summary_mean(out / "train_bsce" / "summary.csv", "bsce");
  auto dive = summary_mean(out / "dive" / "summary.csv", "dive");
  const double ce_all = std::stod(ce["top1_all"]), bsce_all = std::stod(bsce["top1_all"]);
  const double dive_all = std::stod(dive["top1_all"]);
  const double ce_few = std::stod(ce["top1_few"]), dive_few = std::stod(dive["top1_few"]);
  const bool ok = dive_all > bsce_all && bsce_all > ce_all && dive_few - ce_few >= 0.05;
  fs::remove_all(out);
  return {ok, fmt("overall CE %.2f%% < BSCE %.2f%% < DiVE %.2f%%; Few DiVE - CE = %+.2f points (5 seeds)",
                  100 * ce_all, 100 * bsce_all, 100 * dive_all, 100 * (dive_few - ce_few))};
}

Outcome binary_smoothing_trend() {
  const fs::path out = scratch_dir("binary");
  if (cli({"binary-exp", "--out", out.string()})) return {false, "binary-exp failed"};
  const auto rows = read_csv(out / "binary_exp" / "binary.csv");
  fs::remove_all(out);
  const std::map<std::string, std::string>* e0 = nullptr;
  const std::map<std::string, std::string>* e4 = nullptr;
  for (const auto& row : rows) {
    if (row.at("epsilon") == "0") e0 = &row;
    if (row.at("epsilon") == "0.4") e4 = &row;
  }
  if (!e0 || !e4) return {false, "binary.csv lacks the epsilon=0 or epsilon=0.4 row"};
  const double tail_gain = std::stod(e4->at("tail_mean")) - std::stod(e0->at("tail_mean"));
  const double head_drop = std::stod(e0->at("head_mean")) - std::stod(e4->at("head_mean"));
  return {tail_gain >= 0.05 && head_drop < 0.05,
          fmt("1000 vs 100, 5 seeds: tail %+.2f points, head %+.2f points from eps=0 to eps=0.4",
              100 * tail_gain, -100 * head_drop)};
}

Outcome selector_on_bsce_teacher() {
  const cli::ExperimentConfig cfg;
  const TrainTestPair data = synth_train_test(exp_profile(cfg.classes, cfg.n_max, cfg.beta), cfg.dim,
                                              cfg.separation, cfg.test_per_class, cfg.data_seed);
  const SubsetSplit split = split_subsets(data.train.profile, cfg.split_hi, cfg.split_lo);
  const TrainResult teacher = train(data.train, LossSpec::balanced({}), cfg.train);
  const Matrix logits = forward(teacher.params, data.train.features);

  const auto start = std::chrono::steady_clock::now();
  const TauRecommendation rec = select_tau(logits, split, data.train.profile, cfg.tau_grid, cfg.power_options);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const ScanRow* chosen = nullptr;
  for (const auto& row : rec.scan_table) {
    if (row.tau == rec.student_tau && row.power == rec.power) chosen = &row;
  }
  if (!chosen) return {false, "selected configuration missing from the scan table"};
  bool monotone = true;
  double prev = INFINITY;
  for (const auto& row : rec.scan_table) {
    if (row.power != rec.power || row.tau > rec.student_tau) continue;
    monotone = monotone && row.flatness.kl_to_uniform <= prev;
    prev = row.flatness.kl_to_uniform;
  }
  const bool ok = chosen->flatness.mean_few >= chosen->flatness.mean_many && monotone && secs < 30.0;
  return {ok, fmt("selected tau=%g (%s power normalization, student tau=%g): mean_few %.1f vs mean_many %.1f; "
                  "kl_to_uniform %s up to it; scan took %.2f s",
                  rec.tau, rec.power ? "with" : "without", rec.student_tau, chosen->flatness.mean_few,
                  chosen->flatness.mean_many, monotone ? "non-increasing" : "NOT monotone", secs)};
}

Outcome dive_determinism() {
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  for (const auto& dir : {a, b}) {
    if (cli({"synth", "--out", dir.string()}) ||
        cli({"dive", "--out", dir.string(), "--seeds", "3", "--auto-tau"})) {
      return {false, "a dive-lab command failed"};
    }
  }
  int compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(a / "dive" / "seed_3")) {
    const std::string name = entry.path().filename().string();
    if (name.find("_history.csv") == std::string::npos && name.find("_report.csv") == std::string::npos) continue;
    ++compared;
    if (slurp(entry.path()) != slurp(b / "dive" / "seed_3" / name)) ++differing;
  }
  fs::remove_all(a);
  fs::remove_all(b);
  return {compared == 4 && differing == 0,
          fmt("%d history/report CSVs compared across two runs, %d differ", compared, differing)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "KD equals blended-target CE minus scaled teacher entropy at tau=1", 1.0, kd_blended_identity},
      {2, "square-root power normalization doubles the temperature", 1.0, power_temperature_identity},
      {3, "analytic gradients match central finite differences", 10.0, gradient_checks},
      {4, "virtual-example accounting", 1.0, virtual_example_accounting},
      {5, "desk-scale accuracy ordering CE < BSCE < DiVE", 600.0, desk_scale_ordering},
      {6, "binary smoothing lifts the tail and keeps the head", 300.0, binary_smoothing_trend},
      {7, "rule-of-thumb temperature selection", 1e9, selector_on_bsce_teacher},
      {8, "dive runs are byte-for-byte reproducible", 1e9, dive_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail
              << fmt(" (%.2f s%s)", secs, in_time ? "" : ", over time budget") << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
