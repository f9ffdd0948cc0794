#include "rsovseg/evaluation.hpp"

#include <cfenv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rsovseg/errors.hpp"

namespace rsovseg {

std::vector<LabelMap> predict(const SegmentationLogits& logits) {
  const int b = logits.batch(), h = logits.height(), w = logits.width(), nc = logits.classes();
  if (nc < 1) throw InvalidArgument("predict: no classes");
  if (nc > kIgnoreIndex) throw InvalidArgument("predict: more than 255 classes");
  const auto x = logits.grid.data();
  std::vector<LabelMap> out;
  for (int n = 0; n < b; ++n) {
    LabelMap m(h, w);
    for (std::size_t p = 0; p < m.labels.size(); ++p) {
      const double* row = &x[(static_cast<std::size_t>(n) * h * w + p) * nc];
      int best = 0;
      for (int c = 1; c < nc; ++c) {
        if (row[c] > row[best]) best = c;
      }
      m.labels[p] = static_cast<std::uint8_t>(best);
    }
    out.push_back(std::move(m));
  }
  return out;
}

ConfusionAccumulator::ConfusionAccumulator(int num_classes)
    : intersection_(num_classes, 0), union_(num_classes, 0) {}

void ConfusionAccumulator::accumulate(const LabelMap& pred, const LabelMap& gt,
                                      std::uint8_t ignore_index) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("accumulate: prediction " + std::to_string(pred.height) + "x" +
                     std::to_string(pred.width) + " vs ground truth " +
                     std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  const int nc = num_classes();
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int g = gt.labels[i];
    if (g == ignore_index) continue;
    const int p = pred.labels[i];
    if (g >= nc || p >= nc) {
      throw InvalidArgument("accumulate: label out of range at pixel " + std::to_string(i));
    }
    if (p == g) {
      ++intersection_[g];
      ++union_[g];
    } else {
      ++union_[g];
      ++union_[p];
    }
  }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.num_classes() != num_classes()) throw ShapeError("merge: class count mismatch");
  for (int c = 0; c < num_classes(); ++c) {
    intersection_[c] += other.intersection_[c];
    union_[c] += other.union_[c];
  }
}

std::optional<double> ConfusionAccumulator::iou(int c) const {
  if (union_.at(c) == 0) return std::nullopt;
  return static_cast<double>(intersection_[c]) / static_cast<double>(union_[c]);
}

std::vector<std::optional<double>> ConfusionAccumulator::per_class_iou() const {
  std::vector<std::optional<double>> out;
  for (int c = 0; c < num_classes(); ++c) out.push_back(iou(c));
  return out;
}

double harmonic_mean(double s, double u) {
  if (s + u == 0.0) return 0.0;
  return 2.0 * s * u / (s + u);
}

MetricsReport split_miou(const std::vector<std::optional<double>>& per_class_iou,
                         const ClassRegistry& registry) {
  if (static_cast<int>(per_class_iou.size()) != registry.size()) {
    throw ShapeError("split_miou: " + std::to_string(per_class_iou.size()) + " IoUs for " +
                     std::to_string(registry.size()) + " classes");
  }
  MetricsReport r;
  r.class_names = registry.names;
  r.per_class_iou = per_class_iou;
  r.seen = registry.seen;
  double s_sum = 0.0, u_sum = 0.0;
  int s_n = 0, u_n = 0;
  for (std::size_t c = 0; c < per_class_iou.size(); ++c) {
    if (!per_class_iou[c]) continue;
    if (registry.seen[c]) {
      s_sum += *per_class_iou[c];
      ++s_n;
    } else {
      u_sum += *per_class_iou[c];
      ++u_n;
    }
  }
  if (s_n > 0) r.s_miou = 100.0 * s_sum / s_n;
  if (u_n > 0) r.u_miou = 100.0 * u_sum / u_n;
  if (r.s_miou && r.u_miou) r.h_miou = harmonic_mean(*r.s_miou, *r.u_miou);
  return r;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw InvalidArgument("average_reports: no reports");
  auto mean_of = [&](std::optional<double> MetricsReport::*field) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : reports) {
      if (r.*field) {
        sum += *(r.*field);
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  };
  MetricsReport out;
  out.s_miou = mean_of(&MetricsReport::s_miou);
  out.u_miou = mean_of(&MetricsReport::u_miou);
  out.h_miou = mean_of(&MetricsReport::h_miou);

  bool same_classes = true;
  for (const auto& r : reports) {
    same_classes = same_classes && r.class_names == reports[0].class_names &&
                   r.per_class_iou.size() == reports[0].per_class_iou.size();
  }
  if (same_classes) {
    out.class_names = reports[0].class_names;
    out.seen = reports[0].seen;
    for (std::size_t c = 0; c < reports[0].per_class_iou.size(); ++c) {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : reports) {
        if (r.per_class_iou[c]) {
          sum += *r.per_class_iou[c];
          ++n;
        }
      }
      out.per_class_iou.push_back(n > 0 ? std::optional<double>(sum / n) : std::nullopt);
    }
  }
  return out;
}

double round2(double v) {
  const int previous = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(v * 100.0) / 100.0;
  std::fesetround(previous);
  return r;
}

std::string format2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", round2(v));
  return buf;
}

namespace {

std::string format_iou(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

std::string metric_or_na(const std::optional<double>& v) { return v ? format2(*v) : "n/a"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string report_to_text(const MetricsReport& r) {
  std::ostringstream os;
  os << "s_miou: " << metric_or_na(r.s_miou) << "\n";
  os << "u_miou: " << metric_or_na(r.u_miou) << "\n";
  os << "h_miou: " << metric_or_na(r.h_miou) << "\n";
  os << "h_miou_defined: " << (r.h_miou ? "true" : "false") << "\n";
  os << "num_classes: " << r.class_names.size() << "\n";
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    os << "iou[" << r.class_names[c] << "]: "
       << (r.per_class_iou[c] ? format_iou(r.per_class_iou[c]) : "n/a") << "\n";
  }
  return os.str();
}

std::string report_to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "class,iou,seen_flag\n";
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    os << csv_field(r.class_names[c]) << "," << format_iou(r.per_class_iou[c]) << ","
       << (r.seen[c] ? 1 : 0) << "\n";
  }
  os << "s_miou," << (r.s_miou ? format2(*r.s_miou) : "") << ",\n";
  os << "u_miou," << (r.u_miou ? format2(*r.u_miou) : "") << ",\n";
  os << "h_miou," << (r.h_miou ? format2(*r.h_miou) : "") << ",\n";
  return os.str();
}

MetricsReport parse_report_text(const std::string& text) {
  MetricsReport r;
  std::istringstream is(text);
  std::string line;
  auto parse_metric = [](const std::string& v) -> std::optional<double> {
    if (v == "n/a") return std::nullopt;
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw DataError("bad metric value \"" + v + "\"");
      return d;
    } catch (const std::logic_error&) {
      throw DataError("bad metric value \"" + v + "\"");
    }
  };
  bool any = false;
  while (std::getline(is, line)) {
    const auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon), value = line.substr(colon + 2);
    if (key == "s_miou") r.s_miou = parse_metric(value), any = true;
    if (key == "u_miou") r.u_miou = parse_metric(value), any = true;
    if (key == "h_miou") r.h_miou = parse_metric(value), any = true;
  }
  if (!any) throw DataError("report has no summary metrics");
  return r;
}

}  // namespace rsovseg
