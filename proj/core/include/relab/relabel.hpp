#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relab/dataset.hpp"
#include "relab/net.hpp"
#include "relab/siamese.hpp"

namespace relab {

enum class Strategy { Annotator, Comparator };
enum class Mode { Substitute, Consensus };

struct RelabelConfig {
  Strategy strategy = Strategy::Comparator;
  Mode mode = Mode::Substitute;
  double top_fraction = 0.20;
  bool include_uncertain = false;

  void validate() const;
};

/// Per-sample relabel result. In substitute mode new_label is always set;
/// in consensus mode it is set only when the machine label agrees with the
/// original one (agreed == true), otherwise the sample is discarded.
struct RelabelOutcome {
  std::string id;
  std::optional<int> new_label;
  double vote_mean = 0.0;  // top-n label mean (comparator) or probability (annotator)
  std::optional<int> original_label;
  std::optional<bool> agreed;
};

/// Ranks each query against the labeled references and awards the label of
/// the top ceil(top_fraction * |references|) partners by mean vote. A vote
/// mean of exactly 0.5 falls back to the nearest reference's label.
/// `original_labels` supplies consensus-mode originals; queries missing one
/// are relabeled substitute-fashion when include_uncertain is set, else
/// discarded.
std::vector<RelabelOutcome> relabel_comparator(const NetParams& params,
                                               const std::vector<SampleRecord>& queries,
                                               const std::vector<SampleRecord>& references,
                                               const RelabelConfig& config,
                                               const std::map<std::string, int>& original_labels = {});

/// Classifier probability > 0.5 -> malignant, otherwise benign (exactly 0.5
/// counts as benign). Consensus handling as in relabel_comparator.
std::vector<RelabelOutcome> relabel_annotator(const NetParams& params,
                                              const std::vector<SampleRecord>& queries,
                                              const RelabelConfig& config,
                                              const std::map<std::string, int>& original_labels = {});

struct CrossfitConfig {
  int k = 5;
  std::uint64_t seed = 0;
  NetConfig net;            // head is set per strategy
  TrainConfig train;
  ContrastiveConfig pairs;  // comparator strategy only
};

struct CrossfitResult {
  std::vector<RelabelOutcome> outcomes;     // one per query, query order
  FoldSplit reference_folds;                // stratified split of the references
  std::map<std::string, int> query_fold;    // query id -> fold whose model relabeled it
};

/// Cross-fitted relabeling: the references are split into k stratified
/// folds; the queries are dealt across folds by seeded shuffle; the model
/// for fold f trains on the other k-1 reference folds and relabels exactly
/// the queries dealt to f.
CrossfitResult crossfit_relabel(const std::vector<SampleRecord>& references,
                                const std::vector<SampleRecord>& queries,
                                const RelabelConfig& config, const CrossfitConfig& crossfit,
                                const std::map<std::string, int>& original_labels = {});

struct BinCounts {
  long relabeled_benign = 0;
  long relabeled_malignant = 0;
  long discarded = 0;
};

/// Outcome counts bucketed by nearest-integer original average score (1..5).
struct RelabelHistogram {
  std::array<BinCounts, 5> bins{};

  long total() const;
};

/// `average_scores` must cover every outcome id (DataError otherwise).
RelabelHistogram relabel_statistics(const std::vector<RelabelOutcome>& outcomes,
                                    const std::map<std::string, double>& average_scores);

void save_histogram_json(const RelabelHistogram& hist, const std::filesystem::path& path);

/// Outcome CSV: `id,new_label,vote_mean,original_label,agreed,avg_score`.
/// Optional fields are left empty. avg_score comes from `average_scores`
/// (cells left empty for ids it does not cover).
void save_outcomes_csv(const std::vector<RelabelOutcome>& outcomes,
                       const std::map<std::string, double>& average_scores,
                       const std::filesystem::path& path, const std::string& header_comment = {});

std::vector<RelabelOutcome> load_outcomes_csv(const std::filesystem::path& path);

RelabelConfig load_relabel_config(const std::filesystem::path& path);

}  // namespace relab
