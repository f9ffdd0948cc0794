#pragma once

// Generalized zero-shot metrics: per-class IoU, seen/unseen mean IoU and
// their harmonic mean.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rsovseg/backbones.hpp"
#include "rsovseg/decoder.hpp"
#include "rsovseg/labels.hpp"

namespace rsovseg {

/// Per-pixel argmax over classes, ties to the lowest index. One map per
/// batch item.
std::vector<LabelMap> predict(const SegmentationLogits& logits);

class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int num_classes = 0);

  void accumulate(const LabelMap& pred, const LabelMap& gt,
                  std::uint8_t ignore_index = kIgnoreIndex);
  void merge(const ConfusionAccumulator& other);

  int num_classes() const { return static_cast<int>(intersection_.size()); }
  std::uint64_t intersection(int c) const { return intersection_.at(c); }
  std::uint64_t union_count(int c) const { return union_.at(c); }
  /// IoU of class `c`; empty when the class never occurred in pred or gt.
  std::optional<double> iou(int c) const;
  std::vector<std::optional<double>> per_class_iou() const;

  bool operator==(const ConfusionAccumulator&) const = default;

 private:
  std::vector<std::uint64_t> intersection_;
  std::vector<std::uint64_t> union_;
};

/// Means are percentages in full precision; rounding happens on emission.
struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> per_class_iou;  // fractions in [0,1]
  std::vector<bool> seen;
  std::optional<double> s_miou;
  std::optional<double> u_miou;
  std::optional<double> h_miou;  // empty when either side has no class
};

double harmonic_mean(double s, double u);

MetricsReport split_miou(const std::vector<std::optional<double>>& per_class_iou,
                         const ClassRegistry& registry);

/// Independent arithmetic mean of each summary metric over the reports that
/// define it. Per-class values are averaged only when all class lists agree.
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

/// Round half-to-even to two decimals.
double round2(double v);
std::string format2(double v);

/// Key-value text ("key: value" per line).
std::string report_to_text(const MetricsReport& report);
/// CSV with header class,iou,seen_flag followed by summary rows.
std::string report_to_csv(const MetricsReport& report);
/// Parses the summary metrics of report_to_text() output.
MetricsReport parse_report_text(const std::string& text);

}  // namespace rsovseg
