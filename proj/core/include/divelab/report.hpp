#pragma once

// CSV emitters. Numbers use the shortest round-trip decimal form with a '.'
// separator regardless of the process locale; NaN is written as "nan".

#include <iosfwd>
#include <span>
#include <string>

#include "divelab/data.hpp"
#include "divelab/distill.hpp"
#include "divelab/model.hpp"

namespace divelab {

std::string format_number(double v);

/// epoch,lr,loss,acc_all,acc_many,acc_medium,acc_few
void write_history_csv(const TrainHistory& history, std::ostream& out);
/// top1_all,top1_many,top1_medium,top1_few
void write_report_csv(const EvalReport& report, std::ostream& out);
/// true_class,pred_0,...,pred_{C-1}
void write_confusion_csv(const EvalReport& report, std::ostream& out);
/// tau,power,mean_many,mean_medium,mean_few,entropy,kl_to_uniform
void write_scan_csv(std::span<const ScanRow> rows, std::ostream& out);
/// class_id,count,virtual_count
void write_histogram_csv(const VirtualHistogram& hist, const ClassProfile& profile, std::ostream& out);

}  // namespace divelab
