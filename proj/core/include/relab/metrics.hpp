#pragma once

#include <optional>
#include <vector>

namespace relab {

/// Binary confusion matrix; malignant (1) is the positive class.
struct ConfusionMatrix {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;

  long total() const { return tp + fp + tn + fn; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    tp += other.tp;
    fp += other.fp;
    tn += other.tn;
    fn += other.fn;
    return *this;
  }
};

/// Tallies one (truth, predicted) pair into the matrix.
void tally(ConfusionMatrix& cm, int truth, int predicted);

/// The six-metric suite. A metric whose denominator is zero is left
/// unset (std::nullopt) rather than forced to 0.
struct MetricsReport {
  std::optional<double> sensitivity;  // tp / (tp + fn)
  std::optional<double> specificity;  // tn / (tn + fp), recall of the benign class
  std::optional<double> precision;    // tp / (tp + fp)
  std::optional<double> precision_b;  // tn / (tn + fn), precision of the benign class
  std::optional<double> accuracy;     // (tp + tn) / total
  std::optional<double> f1;           // harmonic mean of precision and sensitivity
};

/// Throws DataError when the matrix is empty (total == 0).
MetricsReport compute_metrics(const ConfusionMatrix& cm);

/// Mean/stddev across reports, skipping unset fields per metric. A metric
/// unset in every report stays unset. Population stddev.
MetricsReport metrics_mean(const std::vector<MetricsReport>& reports);
MetricsReport metrics_stddev(const std::vector<MetricsReport>& reports);

}  // namespace relab
