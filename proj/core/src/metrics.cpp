#include "relab/metrics.hpp"

#include <cmath>

#include "relab/error.hpp"

namespace relab {

void tally(ConfusionMatrix& cm, int truth, int predicted) {
  if ((truth != 0 && truth != 1) || (predicted != 0 && predicted != 1))
    throw DataError("tally: labels must be 0 or 1");
  if (truth == 1)
    predicted == 1 ? ++cm.tp : ++cm.fn;
  else
    predicted == 0 ? ++cm.tn : ++cm.fp;
}

namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fp < 0 || cm.tn < 0 || cm.fn < 0)
    throw DataError("confusion matrix counts must be non-negative");
  if (cm.total() == 0) throw DataError("confusion matrix is empty");

  MetricsReport r;
  r.sensitivity = ratio(cm.tp, cm.tp + cm.fn);
  r.specificity = ratio(cm.tn, cm.tn + cm.fp);
  r.precision = ratio(cm.tp, cm.tp + cm.fp);
  r.precision_b = ratio(cm.tn, cm.tn + cm.fn);
  r.accuracy = ratio(cm.tp + cm.tn, cm.total());
  if (r.precision && r.sensitivity && (*r.precision + *r.sensitivity) > 0.0)
    r.f1 = 2.0 * *r.precision * *r.sensitivity / (*r.precision + *r.sensitivity);
  return r;
}

namespace {

template <class Get>
std::optional<double> field_mean(const std::vector<MetricsReport>& reports, Get get) {
  double sum = 0.0;
  long n = 0;
  for (const auto& r : reports) {
    if (const auto v = get(r)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

template <class Get>
std::optional<double> field_stddev(const std::vector<MetricsReport>& reports, Get get) {
  const auto mean = field_mean(reports, get);
  if (!mean) return std::nullopt;
  double sum = 0.0;
  long n = 0;
  for (const auto& r : reports) {
    if (const auto v = get(r)) {
      sum += (*v - *mean) * (*v - *mean);
      ++n;
    }
  }
  return std::sqrt(sum / static_cast<double>(n));
}

template <class Fold>
MetricsReport fold_fields(const std::vector<MetricsReport>& reports, Fold fold) {
  MetricsReport out;
  out.sensitivity = fold(reports, [](const MetricsReport& r) { return r.sensitivity; });
  out.specificity = fold(reports, [](const MetricsReport& r) { return r.specificity; });
  out.precision = fold(reports, [](const MetricsReport& r) { return r.precision; });
  out.precision_b = fold(reports, [](const MetricsReport& r) { return r.precision_b; });
  out.accuracy = fold(reports, [](const MetricsReport& r) { return r.accuracy; });
  out.f1 = fold(reports, [](const MetricsReport& r) { return r.f1; });
  return out;
}

}  // namespace

MetricsReport metrics_mean(const std::vector<MetricsReport>& reports) {
  return fold_fields(reports, [](const auto& rs, auto get) { return field_mean(rs, get); });
}

MetricsReport metrics_stddev(const std::vector<MetricsReport>& reports) {
  return fold_fields(reports, [](const auto& rs, auto get) { return field_stddev(rs, get); });
}

}  // namespace relab
