#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relab/dataset.hpp"
#include "relab/net.hpp"

namespace relab {

struct PairSample {
  std::string id_a;
  std::string id_b;
  bool same_class = false;
};

struct ContrastiveConfig {
  double margin = 1.0;
  int pairs_per_epoch = 0;  // 0 -> 4 * |reference set|
  double positive_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  int resolved_pairs_per_epoch(std::size_t n_references) const;
};

/// sqrt(sum (u_i - v_i)^2). Throws DataError on dimension mismatch.
double euclidean_distance(std::span<const double> u, std::span<const double> v);

/// Same class: d^2. Different class: max(0, margin - d)^2.
/// Throws DataError for negative distance or non-positive margin.
double contrastive_loss(double distance, bool same_class, double margin);

/// Randomly draws pairs from the labeled reference set. Roughly
/// positive_fraction of them are same-class (exact up to rounding), ids
/// within a pair always differ, and a fixed seed reproduces the list.
/// Throws DataError if a class has fewer than 2 members while
/// positive_fraction > 0, or any reference lacks a verified label.
std::vector<PairSample> sample_pairs(const std::vector<SampleRecord>& references,
                                     const ContrastiveConfig& config);

/// Pair lists exportable for audit: header `id_a,id_b,same_class`.
void save_pairs_csv(const std::vector<PairSample>& pairs, const std::filesystem::path& path,
                    const std::string& header_comment = {});

/// Loss and shared-parameter gradient of one pair evaluated through both
/// branches of the tied network. `grads` accumulates.
double contrastive_pair_backprop(const NetParams& params, std::span<const double> xa,
                                 std::span<const double> xb, bool same_class, double margin,
                                 Gradients& grads);

/// Trains the embedding network on contrastive pairs. One parameter store is
/// evaluated twice per pair (weight tying), gradients flow through both
/// branches. Validation pairs are drawn once up front; training pairs are
/// redrawn every epoch. Returns the lowest-validation-loss parameters.
NetParams train_siamese(const NetConfig& net, const std::vector<SampleRecord>& references,
                        const TrainConfig& train_cfg, const ContrastiveConfig& pair_cfg,
                        TrainLog* log = nullptr);

/// References ranked by embedding distance to the query, ascending; ties
/// broken by reference id. Throws DataError when `references` is empty.
std::vector<std::pair<std::string, double>> similarity_scores(
    const NetParams& params, const SampleRecord& query,
    const std::vector<SampleRecord>& references);

/// Precomputed reference embeddings for scoring many queries against one
/// frozen network. Read-only once built.
class SimilarityIndex {
 public:
  SimilarityIndex(const NetParams& params, const std::vector<SampleRecord>& references);

  std::vector<std::pair<std::string, double>> rank(const SampleRecord& query) const;
  const std::vector<int>& labels() const { return labels_; }  // aligned with rank order input
  std::size_t size() const { return ids_.size(); }

  /// Label of the reference at ranked position `pos` for `query`.
  std::vector<int> top_labels(const SampleRecord& query, std::size_t n) const;

 private:
  // Indices into ids_ sorted by (distance to query, id). Pure; safe to call
  // concurrently from many query workers.
  std::vector<std::size_t> ranked_indices(const SampleRecord& query) const;

  NetParams params_;
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> embeddings_;
  std::vector<int> labels_;  // -1 when the reference carries no verified label
};

ContrastiveConfig load_contrastive_config(const std::filesystem::path& path);

}  // namespace relab
