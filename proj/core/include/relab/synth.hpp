#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "relab/dataset.hpp"

namespace relab {

/// Two isotropic Gaussian clusters plus a biased multi-rater scoring model.
/// Rater scores follow clamp(round(3 + gain * margin + rater_bias + noise), 1, 5)
/// where margin in [-1,1] is the signed normalized distance to the class
/// boundary (flattened to 0 inside the uncertain band) and gain is fixed at
/// 2.0 so noise-free scores span 1..5.
struct GeneratorConfig {
  int n_noisy = 922;
  int n_reference = 180;  // balanced benign/malignant; must be even
  int feature_dim = 16;
  double class_separation = 2.5;  // distance between class means, within-class stddev units
  int rater_count = 4;
  double rater_bias = 0.8;        // additive shift toward malignancy in score space
  double rater_noise_std = 0.7;
  double uncertain_band = 0.0;    // width of the margin region collapsed to score 3
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratedData {
  std::vector<SampleRecord> noisy;       // rater scores only, no verified labels
  std::vector<SampleRecord> reference;   // verified labels set
  std::map<std::string, int> ground_truth;  // every generated id
};

GeneratedData generate(const GeneratorConfig& config);

/// Fraction of ids in `labels` matching `ground_truth`. Throws DataError on
/// an id missing from the ground truth or when `labels` is empty.
double oracle_accuracy(const std::map<std::string, int>& labels,
                       const std::map<std::string, int>& ground_truth);

/// Sidecar audit file: header `id,true_label`.
void save_ground_truth_csv(const std::map<std::string, int>& truth,
                           const std::filesystem::path& path,
                           const std::string& header_comment = {});
std::map<std::string, int> load_ground_truth_csv(const std::filesystem::path& path);

GeneratorConfig load_generator_config(const std::filesystem::path& path);

}  // namespace relab
