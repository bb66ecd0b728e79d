#include "divelab/report.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace divelab {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
  out << "epoch,lr,loss,acc_all,acc_many,acc_medium,acc_few\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_number(e.lr) << ',' << format_number(e.loss) << ','
        << format_number(e.acc_all) << ',' << format_number(e.acc_many) << ','
        << format_number(e.acc_medium) << ',' << format_number(e.acc_few) << '\n';
  }
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
  out << "top1_all,top1_many,top1_medium,top1_few\n"
      << format_number(report.top1_all) << ',' << format_number(report.top1_many) << ','
      << format_number(report.top1_medium) << ',' << format_number(report.top1_few) << '\n';
}

void write_confusion_csv(const EvalReport& report, std::ostream& out) {
  const std::size_t C = report.confusion.size();
  out << "true_class";
  for (std::size_t k = 0; k < C; ++k) out << ",pred_" << k;
  out << '\n';
  for (std::size_t y = 0; y < C; ++y) {
    out << y;
    for (auto c : report.confusion[y]) out << ',' << c;
    out << '\n';
  }
}

void write_scan_csv(std::span<const ScanRow> rows, std::ostream& out) {
  out << "tau,power,mean_many,mean_medium,mean_few,entropy,kl_to_uniform\n";
  for (const auto& r : rows) {
    out << format_number(r.tau) << ',' << (r.power ? 1 : 0) << ','
        << format_number(r.flatness.mean_many) << ',' << format_number(r.flatness.mean_medium)
        << ',' << format_number(r.flatness.mean_few) << ',' << format_number(r.flatness.entropy)
        << ',' << format_number(r.flatness.kl_to_uniform) << '\n';
  }
}

void write_histogram_csv(const VirtualHistogram& hist, const ClassProfile& profile,
                         std::ostream& out) {
  if (hist.per_class.size() != profile.num_classes()) {
    throw std::invalid_argument("histogram and profile disagree on the class count");
  }
  out << "class_id,count,virtual_count\n";
  for (std::size_t k = 0; k < hist.per_class.size(); ++k) {
    out << k << ',' << profile.counts[k] << ',' << format_number(hist.per_class[k]) << '\n';
  }
}

}  // namespace divelab
