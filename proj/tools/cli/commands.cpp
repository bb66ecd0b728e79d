#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "divelab/data.hpp"
#include "divelab/error.hpp"
#include "divelab/report.hpp"
#include "svg.hpp"

#ifndef DIVELAB_VERSION
#define DIVELAB_VERSION "0.0.0"
#endif

namespace divelab::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

template <class Fn>
void write_csv(RunManifest& m, const fs::path& path, Fn&& fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
  m.artifacts.push_back(path);
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw ValidationError(std::string(what) + " not found: " + path.string());
  }
}

Dataset load_input(const fs::path& path, const char* what) {
  require_file(path, what);
  return load_dataset(path);
}

void require_compatible(const Dataset& train, const Dataset& test) {
  if (train.dim() != test.dim() || train.num_classes() != test.num_classes()) {
    throw ValidationError("train/test mismatch: d=" + std::to_string(train.dim()) + "/" +
                          std::to_string(test.dim()) + ", C=" + std::to_string(train.num_classes()) +
                          "/" + std::to_string(test.num_classes()));
  }
}

void require_compatible(const ModelParams& model, const Dataset& ds) {
  if (model.input_dim() != ds.dim() || model.num_classes() != ds.num_classes()) {
    throw ValidationError("checkpoint expects d=" + std::to_string(model.input_dim()) + ", C=" +
                          std::to_string(model.num_classes()) + " but dataset has d=" +
                          std::to_string(ds.dim()) + ", C=" + std::to_string(ds.num_classes()));
  }
}

void require_seeds(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ValidationError("at least one seed is required");
}

/// Applies fn to every seed, `jobs` at a time; results come back in seed order.
template <class Fn>
auto for_each_seed(const std::vector<std::uint64_t>& seeds, int jobs, Fn fn)
    -> std::vector<decltype(fn(std::uint64_t{}))> {
  using R = decltype(fn(std::uint64_t{}));
  std::vector<R> out;
  out.reserve(seeds.size());
  if (jobs <= 1) {
    for (auto s : seeds) out.push_back(fn(s));
    return out;
  }
  for (std::size_t start = 0; start < seeds.size(); start += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<R>> batch;
    const std::size_t end = std::min(seeds.size(), start + static_cast<std::size_t>(jobs));
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, fn, seeds[i]));
    }
    for (auto& f : batch) out.push_back(f.get());
  }
  return out;
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

struct SummaryRow {
  std::string model;
  std::uint64_t seed;
  EvalReport report;
};

// model,seed,top1_all,... with one "mean" row per model after the per-seed rows.
void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "model,seed,top1_all,top1_many,top1_medium,top1_few\n";
  std::vector<std::string> models;
  for (const auto& r : rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  for (const auto& model : models) {
    double sum[4] = {0, 0, 0, 0};
    double n = 0;
    for (const auto& r : rows) {
      if (r.model != model) continue;
      const double v[4] = {r.report.top1_all, r.report.top1_many, r.report.top1_medium,
                           r.report.top1_few};
      out << model << ',' << r.seed;
      for (int i = 0; i < 4; ++i) {
        out << ',' << format_number(v[i]);
        sum[i] += v[i];
      }
      out << '\n';
      n += 1;
    }
    out << model << ",mean";
    for (double s : sum) out << ',' << format_number(s / n);
    out << '\n';
  }
}

void write_run_artifacts(RunManifest& m, const fs::path& dir, const std::string& prefix,
                         const TrainResult& result, const EvalReport& report) {
  const fs::path ckpt = dir / (prefix + ".ckpt");
  save_model(result.params, ckpt);
  m.artifacts.push_back(ckpt);
  write_csv(m, dir / (prefix + "_history.csv"),
            [&](std::ostream& o) { write_history_csv(result.history, o); });
  write_csv(m, dir / (prefix + "_report.csv"), [&](std::ostream& o) { write_report_csv(report, o); });
  write_csv(m, dir / (prefix + "_confusion.csv"),
            [&](std::ostream& o) { write_confusion_csv(report, o); });
}

const char* target_form_name(TargetForm f) {
  return f == TargetForm::blended_ttilde ? "ttilde" : "ttau";
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

fs::path ExperimentConfig::resolved_train() const {
  return train_path.empty() ? data_dir() / "train.dlds" : train_path;
}

fs::path ExperimentConfig::resolved_test() const {
  return test_path.empty() ? data_dir() / "test.dlds" : test_path;
}

ExperimentConfig binary_experiment_defaults() {
  ExperimentConfig cfg;
  cfg.dim = 8;
  cfg.separation = 2.25;
  cfg.test_per_class = 1000;
  return cfg;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["tool_version"] = DIVELAB_VERSION;
  j["config"] = config_snapshot;
  auto& arts = j["artifacts"] = nlohmann::json::array();
  for (const auto& a : artifacts) arts.push_back(a.generic_string());
  auto& t = j["timings_s"] = nlohmann::json::object();
  for (const auto& [name, secs] : timings_s) t[name] = secs;
  return j;
}

// ---------------------------------------------------------------------------

RunManifest cmd_synth(const ExperimentConfig& cfg) {
  RunManifest m{"synth", cfg.data_dir()};
  const auto start = Clock::now();
  const ClassProfile profile = exp_profile(cfg.classes, cfg.n_max, cfg.beta);
  const TrainTestPair data =
      synth_train_test(profile, cfg.dim, cfg.separation, cfg.test_per_class, cfg.data_seed);
  const SubsetSplit split = split_subsets(profile, cfg.split_hi, cfg.split_lo);

  ensure_dir(m.dir);
  const fs::path train = m.dir / "train.dlds";
  const fs::path test = m.dir / "test.dlds";
  save_dataset(data.train, train);
  save_dataset(data.test, test);
  m.artifacts.push_back(train);
  m.artifacts.push_back(test);
  write_csv(m, m.dir / "profile.csv", [&](std::ostream& o) { write_profile_csv(profile, split, o); });
  m.timings_s.emplace_back("total", seconds_since(start));
  return m;
}

RunManifest cmd_train(const ExperimentConfig& cfg) {
  if (cfg.loss != LossKind::ce && cfg.loss != LossKind::bsce) {
    throw ValidationError("train supports --loss=ce or --loss=bsce");
  }
  require_seeds(cfg);
  const auto start = Clock::now();
  const Dataset train = load_input(cfg.resolved_train(), "training set");
  const Dataset test = load_input(cfg.resolved_test(), "test set");
  require_compatible(train, test);
  const SubsetSplit split = split_subsets(train.profile, cfg.split_hi, cfg.split_lo);
  const LossSpec loss = cfg.loss == LossKind::ce ? LossSpec::cross_entropy()
                                                 : LossSpec::balanced(train.profile.counts);

  RunManifest m{"train", cfg.out_dir / (std::string("train_") + loss_kind_name(cfg.loss))};
  ensure_dir(m.dir);
  struct Out {
    TrainResult result;
    EvalReport report;
    double seconds;
  };
  const EvalSet eval{test, split};
  auto runs = for_each_seed(cfg.seeds, cfg.jobs, [&](std::uint64_t seed) {
    const auto t0 = Clock::now();
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    TrainResult r = divelab::train(train, loss, tc, &eval);
    EvalReport rep = evaluate(r.params, test, split);
    return Out{std::move(r), std::move(rep), seconds_since(t0)};
  });

  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path dir = m.dir / seed_dir_name(cfg.seeds[i]);
    ensure_dir(dir);
    write_run_artifacts(m, dir, "model", runs[i].result, runs[i].report);
    rows.push_back({loss_kind_name(cfg.loss), cfg.seeds[i], runs[i].report});
    m.timings_s.emplace_back(seed_dir_name(cfg.seeds[i]), runs[i].seconds);
  }
  write_csv(m, m.dir / "summary.csv", [&](std::ostream& o) { write_summary(o, rows); });
  m.timings_s.emplace_back("total", seconds_since(start));
  return m;
}

RunManifest cmd_dive(const ExperimentConfig& cfg) {
  require_seeds(cfg);
  const auto start = Clock::now();
  const Dataset train = load_input(cfg.resolved_train(), "training set");
  const Dataset test = load_input(cfg.resolved_test(), "test set");
  require_compatible(train, test);

  PipelineOptions opts;
  opts.distill = cfg.distill;
  opts.auto_tau = cfg.auto_tau;
  opts.tau_grid = cfg.tau_grid;
  opts.power_options = cfg.power_options;
  opts.teacher_logits = cfg.teacher_logits;
  opts.split_hi = cfg.split_hi;
  opts.split_lo = cfg.split_lo;
  if (opts.auto_tau && (opts.tau_grid.empty() || opts.power_options.empty())) {
    throw ValidationError("auto temperature selection needs a non-empty grid and power options");
  }

  RunManifest m{"dive", cfg.out_dir / "dive"};
  ensure_dir(m.dir);
  struct Out {
    PipelineResult result;
    double seconds;
  };
  auto runs = for_each_seed(cfg.seeds, cfg.jobs, [&](std::uint64_t seed) {
    const auto t0 = Clock::now();
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    PipelineResult r = dive_pipeline(train, test, tc, tc, opts);
    return Out{std::move(r), seconds_since(t0)};
  });

  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i].result;
    const fs::path dir = m.dir / seed_dir_name(cfg.seeds[i]);
    ensure_dir(dir);
    write_run_artifacts(m, dir, "teacher", r.teacher, r.teacher_report);
    write_run_artifacts(m, dir, "student", r.student, r.student_report);
    write_csv(m, dir / "distill.csv", [&](std::ostream& o) {
      o << "alpha,tau,power_p,target_form,teacher_tau\n"
        << format_number(r.distill.alpha) << ',' << format_number(r.distill.tau) << ','
        << format_number(r.distill.power_p) << ',' << target_form_name(r.distill.target_form)
        << ',' << format_number(r.distill.tau / r.distill.power_p) << '\n';
    });
    write_csv(m, dir / "student_flatness.csv", [&](std::ostream& o) {
      const ScanRow row{r.distill.tau, false, r.student_flatness};
      write_scan_csv(std::span<const ScanRow>(&row, 1), o);
    });
    if (r.recommendation) {
      write_csv(m, dir / "scan.csv",
                [&](std::ostream& o) { write_scan_csv(r.recommendation->scan_table, o); });
    }
    rows.push_back({"bsce_teacher", cfg.seeds[i], r.teacher_report});
    rows.push_back({"dive", cfg.seeds[i], r.student_report});
    m.timings_s.emplace_back(seed_dir_name(cfg.seeds[i]), runs[i].seconds);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SummaryRow& a, const SummaryRow& b) { return a.model < b.model; });
  write_csv(m, m.dir / "summary.csv", [&](std::ostream& o) { write_summary(o, rows); });
  m.timings_s.emplace_back("total", seconds_since(start));
  return m;
}

RunManifest cmd_analyze_ve(const ExperimentConfig& cfg) {
  const auto start = Clock::now();
  if (cfg.checkpoint.empty()) throw ValidationError("analyze-ve needs --checkpoint");
  require_file(cfg.checkpoint, "checkpoint");
  const ModelParams model = load_model(cfg.checkpoint);
  const Dataset train = load_input(cfg.resolved_train(), "training set");
  require_compatible(model, train);
  if (cfg.tau_grid.empty() || cfg.power_options.empty()) {
    throw ValidationError("analyze-ve needs a non-empty --tau-grid and --power-options");
  }

  Matrix logits = forward(model, train.features);
  if (cfg.teacher_logits == TeacherLogits::bsce_adjusted) {
    logits = bsce_adjusted_logits(logits, train.profile.counts);
  }
  const SubsetSplit split = split_subsets(train.profile, cfg.split_hi, cfg.split_lo);
  const TauRecommendation rec =
      select_tau(logits, split, train.profile, cfg.tau_grid, cfg.power_options);

  RunManifest m{"analyze-ve", cfg.out_dir / "analyze_ve"};
  ensure_dir(m.dir);
  std::vector<svg::BarSeries> bars;
  {
    const VirtualHistogram input{std::vector<double>(train.profile.counts.begin(),
                                                     train.profile.counts.end()),
                                 1.0, 1.0, static_cast<double>(train.size())};
    const FlatnessReport f = flatness(input, split, train.profile);
    bars.push_back({"input", {f.mean_many, f.mean_medium, f.mean_few}});
  }
  for (const auto& row : rec.scan_table) {
    const VirtualHistogram h = virtual_distribution(logits, row.tau, row.power);
    const std::string tag = "tau" + format_number(row.tau) + "_p" + (row.power ? "1" : "0");
    write_csv(m, m.dir / ("hist_" + tag + ".csv"),
              [&](std::ostream& o) { write_histogram_csv(h, train.profile, o); });
    bars.push_back({"tau=" + format_number(row.tau) + (row.power ? " +pow" : ""),
                    {row.flatness.mean_many, row.flatness.mean_medium, row.flatness.mean_few}});
  }
  write_csv(m, m.dir / "scan.csv", [&](std::ostream& o) { write_scan_csv(rec.scan_table, o); });
  write_csv(m, m.dir / "recommendation.csv", [&](std::ostream& o) {
    o << "tau,power,student_tau,criterion_met\n"
      << format_number(rec.tau) << ',' << (rec.power ? 1 : 0) << ','
      << format_number(rec.student_tau) << ',' << (rec.criterion_met ? 1 : 0) << '\n';
  });
  const fs::path chart = m.dir / "virtual_examples.svg";
  write_text(chart, svg::grouped_bar_chart("Mean virtual examples per class", "examples per class",
                                           {"many", "medium", "few"}, bars));
  m.artifacts.push_back(chart);
  m.timings_s.emplace_back("total", seconds_since(start));
  return m;
}

RunManifest cmd_binary_exp(const ExperimentConfig& cfg) {
  require_seeds(cfg);
  if (cfg.n_tail < 1 || cfg.n_head < cfg.n_tail) {
    throw ValidationError("binary-exp needs n_head >= n_tail >= 1");
  }
  if (cfg.epsilons.empty()) throw ValidationError("binary-exp needs at least one epsilon");
  for (double e : cfg.epsilons) {
    if (!(e >= 0.0 && e < 0.5)) throw ValidationError("epsilon values must lie in [0, 0.5)");
  }
  const auto start = Clock::now();
  constexpr std::size_t kHead = 0;
  constexpr std::size_t kTail = 1;
  const ClassProfile profile = ClassProfile::from_counts({cfg.n_head, cfg.n_tail});
  const TrainTestPair data =
      synth_train_test(profile, cfg.dim, cfg.separation, cfg.test_per_class, cfg.data_seed);

  RunManifest m{"binary-exp", cfg.out_dir / "binary_exp"};
  ensure_dir(m.dir);

  struct Acc {
    double head, tail, all;
  };
  std::vector<std::vector<Acc>> per_eps;
  for (double eps : cfg.epsilons) {
    const SmoothedTarget st = smoothing_targets(data.train.labels, kHead, kTail, eps);
    Matrix targets(data.train.size(), 2);
    for (std::size_t i = 0; i < targets.rows; ++i) {
      targets(i, 0) = st.targets[i][0];
      targets(i, 1) = st.targets[i][1];
    }
    const LossSpec loss = LossSpec::soft(std::move(targets));
    per_eps.push_back(for_each_seed(cfg.seeds, cfg.jobs, [&](std::uint64_t seed) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      const TrainResult r = divelab::train(data.train, loss, tc);
      const Matrix logits = forward(r.params, data.test.features);
      std::int64_t hit[2] = {0, 0};
      std::int64_t total[2] = {0, 0};
      for (std::size_t i = 0; i < data.test.size(); ++i) {
        const auto y = static_cast<std::size_t>(data.test.labels[i]);
        ++total[y];
        if (argmax(logits.row(i)) == y) ++hit[y];
      }
      return Acc{static_cast<double>(hit[kHead]) / static_cast<double>(total[kHead]),
                 static_cast<double>(hit[kTail]) / static_cast<double>(total[kTail]),
                 static_cast<double>(hit[0] + hit[1]) / static_cast<double>(total[0] + total[1])};
    }));
  }

  std::vector<double> ratios;
  svg::LineSeries head{"head", {}, {}}, tail{"tail", {}, {}}, all{"all", {}, {}};
  write_csv(m, m.dir / "runs.csv", [&](std::ostream& o) {
    o << "epsilon,seed,head_acc,tail_acc,all_acc\n";
    for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) {
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        const Acc& a = per_eps[e][s];
        o << format_number(cfg.epsilons[e]) << ',' << cfg.seeds[s] << ',' << format_number(a.head)
          << ',' << format_number(a.tail) << ',' << format_number(a.all) << '\n';
      }
    }
  });
  write_csv(m, m.dir / "binary.csv", [&](std::ostream& o) {
    o << "epsilon,ratio_r,head_mean,head_std,tail_mean,tail_std,all_mean,all_std\n";
    for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) {
      std::vector<double> h, t, a;
      for (const Acc& acc : per_eps[e]) {
        h.push_back(acc.head);
        t.push_back(acc.tail);
        a.push_back(acc.all);
      }
      const double r = virtual_ratio(cfg.n_head, cfg.n_tail, cfg.epsilons[e]);
      ratios.push_back(r);
      head.mean.push_back(mean_of(h));
      head.spread.push_back(stddev_of(h));
      tail.mean.push_back(mean_of(t));
      tail.spread.push_back(stddev_of(t));
      all.mean.push_back(mean_of(a));
      all.spread.push_back(stddev_of(a));
      o << format_number(cfg.epsilons[e]) << ',' << format_number(r) << ','
        << format_number(head.mean.back()) << ',' << format_number(head.spread.back()) << ','
        << format_number(tail.mean.back()) << ',' << format_number(tail.spread.back()) << ','
        << format_number(all.mean.back()) << ',' << format_number(all.spread.back()) << '\n';
    }
  });
  const fs::path chart = m.dir / "binary.svg";
  write_text(chart, svg::line_chart("Accuracy vs. virtual example ratio", "ratio R (tail / head)",
                                    "accuracy", ratios, {head, tail, all}));
  m.artifacts.push_back(chart);
  m.timings_s.emplace_back("total", seconds_since(start));
  return m;
}

RunManifest cmd_eval(const ExperimentConfig& cfg) {
  const auto start = Clock::now();
  if (cfg.checkpoint.empty()) throw ValidationError("eval needs --checkpoint");
  require_file(cfg.checkpoint, "checkpoint");
  const ModelParams model = load_model(cfg.checkpoint);
  const Dataset train = load_input(cfg.resolved_train(), "training set");
  const Dataset test = load_input(cfg.resolved_test(), "test set");
  require_compatible(train, test);
  require_compatible(model, test);
  const SubsetSplit split = split_subsets(train.profile, cfg.split_hi, cfg.split_lo);
  const EvalReport rep = evaluate(model, test, split);

  RunManifest m{"eval", cfg.out_dir / "eval"};
  ensure_dir(m.dir);
  write_csv(m, m.dir / "report.csv", [&](std::ostream& o) { write_report_csv(rep, o); });
  write_csv(m, m.dir / "confusion.csv", [&](std::ostream& o) { write_confusion_csv(rep, o); });
  m.timings_s.emplace_back("total", seconds_since(start));
  return m;
}

// ---------------------------------------------------------------------------

namespace {

struct CliState {
  ExperimentConfig cfg;
  std::string out_dir;
  std::string train_path, test_path, checkpoint;
  std::vector<int> milestones;
  std::vector<std::size_t> hidden;
  std::vector<int> power_options = {0, 1};
  std::string loss = "ce";
  std::string target_form = "ttau";
  std::string teacher_logits = "raw";
};

void register_options(CLI::App& app, CliState& st) {
  auto& c = st.cfg;
  st.milestones = c.train.decay_milestones;
  st.hidden = c.train.hidden;

  app.set_config("--config", "", "flat key=value configuration file");
  app.add_option("--out", st.out_dir, "output root directory")
      ->envname("DIVE_LAB_OUT")
      ->default_val("dive_out");

  app.add_option("--classes", c.classes, "number of classes")->capture_default_str();
  app.add_option("--dim", c.dim, "feature dimension")->capture_default_str();
  app.add_option("--n-max", c.n_max, "examples in the largest class")->capture_default_str();
  app.add_option("--beta", c.beta, "imbalance factor n_max / n_min")->capture_default_str();
  app.add_option("--separation", c.separation, "distance of class means from the origin")
      ->capture_default_str();
  app.add_option("--test-per-class", c.test_per_class, "balanced test examples per class")
      ->capture_default_str();
  app.add_option("--data-seed", c.data_seed, "seed of the synthetic mixture")->capture_default_str();
  app.add_option("--train", st.train_path, "training set container (default <out>/data/train.dlds)");
  app.add_option("--test", st.test_path, "test set container (default <out>/data/test.dlds)");
  app.add_option("--checkpoint", st.checkpoint, "model checkpoint");

  app.add_option("--lr", c.train.lr, "base learning rate")->capture_default_str();
  app.add_option("--momentum", c.train.momentum)->capture_default_str();
  app.add_option("--weight-decay", c.train.weight_decay)->capture_default_str();
  app.add_option("--epochs", c.train.epochs)->capture_default_str();
  app.add_option("--batch-size", c.train.batch_size)->capture_default_str();
  app.add_option("--warmup", c.train.warmup_epochs, "linear warmup epochs")->capture_default_str();
  app.add_option("--milestones", st.milestones, "epochs at which the lr decays")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--decay", c.train.decay_factor, "lr multiplier at each milestone")
      ->capture_default_str();
  app.add_option("--hidden", st.hidden, "hidden layer widths")->delimiter(',')->capture_default_str();
  app.add_option("--seeds", c.seeds, "training seeds")->delimiter(',')->capture_default_str();
  app.add_option("--loss", st.loss, "train objective")
      ->check(CLI::IsMember({"ce", "bsce"}))
      ->capture_default_str();

  app.add_option("--alpha", c.distill.alpha, "weight of the distillation term")->capture_default_str();
  app.add_option("--tau", c.distill.tau, "distillation temperature")->capture_default_str();
  app.add_option("--power-p", c.distill.power_p, "teacher power-normalization exponent (1 = off)")
      ->capture_default_str();
  app.add_option("--target-form", st.target_form, "ttau or ttilde")
      ->check(CLI::IsMember({"ttau", "ttilde"}))
      ->capture_default_str();
  app.add_flag("--auto-tau", c.auto_tau, "pick tau with the rule of thumb");
  app.add_option("--tau-grid", c.tau_grid, "temperatures scanned")->delimiter(',')->capture_default_str();
  app.add_option("--power-options", st.power_options, "power normalization settings scanned (0,1)")
      ->delimiter(',')
      ->check(CLI::Range(0, 1))
      ->capture_default_str();
  app.add_option("--teacher-logits", st.teacher_logits, "raw or bsce")
      ->check(CLI::IsMember({"raw", "bsce"}))
      ->capture_default_str();
  app.add_option("--split-hi", c.split_hi, "many-shot threshold (count > hi)")->capture_default_str();
  app.add_option("--split-lo", c.split_lo, "few-shot threshold (count < lo)")->capture_default_str();

  app.add_option("--n-head", c.n_head, "binary-exp head class size")->capture_default_str();
  app.add_option("--n-tail", c.n_tail, "binary-exp tail class size")->capture_default_str();
  app.add_option("--epsilons", c.epsilons, "binary-exp smoothing values")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--jobs", c.jobs, "seeds trained concurrently")->capture_default_str();
}

// Fills binary-exp defaults for options that were neither given on the
// command line nor in a config file.
void apply_binary_defaults(CLI::App& app, ExperimentConfig& c) {
  const ExperimentConfig d = binary_experiment_defaults();
  auto unset = [&](const char* name) { return app.get_option(name)->count() == 0; };
  if (unset("--dim")) c.dim = d.dim;
  if (unset("--separation")) c.separation = d.separation;
  if (unset("--test-per-class")) c.test_per_class = d.test_per_class;
}

void finish(CliState& st) {
  auto& c = st.cfg;
  c.out_dir = st.out_dir;
  c.train_path = st.train_path;
  c.test_path = st.test_path;
  c.checkpoint = st.checkpoint;
  c.train.decay_milestones = st.milestones;
  c.train.hidden = st.hidden;
  c.loss = st.loss == "bsce" ? LossKind::bsce : LossKind::ce;
  c.distill.target_form = st.target_form == "ttilde" ? TargetForm::blended_ttilde
                                                     : TargetForm::teacher_t_tau;
  c.teacher_logits = st.teacher_logits == "bsce" ? TeacherLogits::bsce_adjusted : TeacherLogits::raw;
  c.power_options.clear();
  for (int p : st.power_options) c.power_options.push_back(p != 0);
  if (c.jobs < 1) throw ValidationError("--jobs must be >= 1");
  c.train.validate();
  c.distill.validate();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-tailed distillation experiments", "dive-lab"};
  app.set_version_flag("--version", DIVELAB_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  CliState st;
  register_options(app, st);

  using Command = std::function<RunManifest(const ExperimentConfig&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"synth", {"write train/test containers and the profile CSV", cmd_synth}},
      {"train", {"train CE or BSCE baselines", cmd_train}},
      {"dive", {"BSCE teacher, temperature selection, DiVE student", cmd_dive}},
      {"analyze-ve", {"virtual example distributions of a checkpoint", cmd_analyze_ve}},
      {"binary-exp",
       {"binary label-smoothing experiment; unless set, uses --dim 8 --separation 2.25 "
        "--test-per-class 1000",
        cmd_binary_exp}},
      {"eval", {"evaluate a checkpoint on the test set", cmd_eval}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first)->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return static_cast<int>(ExitCode::validation);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "binary-exp") apply_binary_defaults(app, st.cfg);
    finish(st);
    RunManifest manifest = commands.at(name).second(st.cfg);
    manifest.config_snapshot = app.config_to_str(true, false);
    const fs::path path = manifest.dir / "manifest.json";
    write_text(path, manifest.to_json().dump(2) + "\n");
    out << name << ": wrote " << manifest.artifacts.size() << " artifacts to "
        << manifest.dir.generic_string() << '\n';
    return static_cast<int>(ExitCode::ok);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::io);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::io);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return static_cast<int>(ExitCode::validation);
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return static_cast<int>(ExitCode::validation);
  } catch (const std::out_of_range& e) {
    err << "invalid input: " << e.what() << '\n';
    return static_cast<int>(ExitCode::validation);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::failure);
  }
}

}  // namespace divelab::cli
