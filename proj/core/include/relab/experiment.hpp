#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "relab/dataset.hpp"
#include "relab/metrics.hpp"
#include "relab/net.hpp"
#include "relab/relabel.hpp"
#include "relab/siamese.hpp"

namespace relab {

enum class ExperimentCase {
  Case1ScenarioTrain,  // train and test on scenario-labeled noisy data (k-fold)
  Case2ReferenceCv,    // k-fold cross-validation on the verified reference set
  Case3CrossTest,      // train on scenario-labeled noisy data, test on the full reference set
  Case3FineTune,       // Case 3 plus per-fold fine-tuning on reference folds
  RelabelRetrain,      // cross-fit relabel the noisy set, retrain from scratch, test per fold
};

struct ExperimentSpec {
  ExperimentCase kind = ExperimentCase::Case2ReferenceCv;
  std::optional<Scenario> scenario;       // required by case1 / case3 / relabel_retrain
  std::optional<RelabelConfig> relabel;   // required by relabel_retrain
  std::vector<std::uint64_t> seeds{0};
  int folds = 5;
  NetConfig net;          // input_dim 0 = infer from data; head set per role
  TrainConfig train;
  ContrastiveConfig pairs;

  void validate() const;
};

struct FoldResult {
  std::uint64_t seed = 0;
  int fold = 0;
  ConfusionMatrix cm;
  MetricsReport metrics;
};

/// Relabel bookkeeping per seed (relabel_retrain only).
struct RelabelRunStats {
  std::uint64_t seed = 0;
  long queries = 0;
  long relabeled = 0;
  long discarded = 0;  // consensus data reduction
};

struct ExperimentReport {
  std::string label;                    // case (+ scenario) summary
  ExperimentSpec spec;
  std::vector<FoldResult> per_seed;     // one entry per (seed, fold)
  ConfusionMatrix pooled;               // all entries pooled
  MetricsReport micro;                  // metrics of the pooled matrix
  MetricsReport macro_mean;             // mean of per-seed micro metrics
  MetricsReport macro_std;
  std::vector<MetricsReport> per_seed_micro;  // aligned with spec.seeds
  std::vector<RelabelRunStats> relabel_stats;  // empty unless relabel_retrain
};

struct ExperimentData {
  std::vector<SampleRecord> noisy;
  std::vector<SampleRecord> reference;
};

/// Runs the spec once per seed. Folds never overlap their training sets
/// (id-disjointness is asserted). Deterministic given spec and data.
ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentData& data);

/// One report per scenario, identical seeds throughout.
std::vector<ExperimentReport> scenario_sweep(const ExperimentSpec& base,
                                             const ExperimentData& data,
                                             const std::vector<Scenario>& scenarios);

enum class ReportFormat { Json, Markdown };

/// Deterministic serialization. Markdown renders a metrics grid with one
/// row per report; unset metrics render as "n/a". JSON follows
/// {spec, per_seed:[{seed, fold, cm, metrics}], aggregate:{micro, macro_mean, macro_std}}.
std::string render_report(const std::vector<ExperimentReport>& reports, ReportFormat format);

void write_report(const std::vector<ExperimentReport>& reports, const std::filesystem::path& path,
                  ReportFormat format);

/// Experiment spec JSON, e.g.
///   {"case":"case2_reference_cv","seeds":[1,2],"folds":5,
///    "scenario":"A","relabel":{...},"net":{...},"train":{...},"pairs":{...}}
/// `scenario` accepts a name from the table (file `scenarios` or built-ins)
/// or an inline definition.
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

}  // namespace relab
