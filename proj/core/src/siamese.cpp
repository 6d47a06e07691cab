#include "relab/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "config_json.hpp"
#include "json_util.hpp"
#include "relab/error.hpp"
#include "relab/rng.hpp"

namespace relab {

namespace {

struct ClassIndex {
  std::vector<std::size_t> benign;
  std::vector<std::size_t> malignant;

  const std::vector<std::size_t>& of(int label) const { return label == 0 ? benign : malignant; }
};

ClassIndex index_by_class(const std::vector<SampleRecord>& references) {
  ClassIndex idx;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto& rec = references[i];
    if (!rec.verified_label)
      throw DataError("reference '" + rec.id + "' has no verified label");
    (*rec.verified_label == 0 ? idx.benign : idx.malignant).push_back(i);
  }
  return idx;
}

std::vector<PairSample> draw_pairs(const std::vector<SampleRecord>& references,
                                   const ClassIndex& idx, int count, double positive_fraction,
                                   Rng& rng) {
  const auto n_pos = static_cast<int>(std::llround(positive_fraction * count));
  const int n_neg = count - n_pos;
  if (n_pos > 0 && (idx.benign.size() < 2 || idx.malignant.size() < 2)) {
    // Positive pairs alternate between the classes, so both need two members.
    throw DataError("positive pairs need at least 2 samples per class");
  }
  if (n_neg > 0 && (idx.benign.empty() || idx.malignant.empty()))
    throw DataError("negative pairs need at least 1 sample per class");

  std::vector<PairSample> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < n_pos; ++i) {
    const auto& members = idx.of(i % 2);
    const auto a = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(members.size()) - 1));
    auto b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(members.size()) - 2));
    if (b >= a) ++b;
    pairs.push_back({references[members[a]].id, references[members[b]].id, true});
  }
  for (int i = 0; i < n_neg; ++i) {
    const auto a = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(idx.benign.size()) - 1));
    const auto b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(idx.malignant.size()) - 1));
    pairs.push_back({references[idx.benign[a]].id, references[idx.malignant[b]].id, false});
  }
  rng.shuffle(pairs);
  return pairs;
}

}  // namespace

void ContrastiveConfig::validate() const {
  if (margin <= 0.0) throw DataError("pairs: margin must be > 0");
  if (positive_fraction <= 0.0 || positive_fraction >= 1.0)
    throw DataError("pairs: positive_fraction must be in (0,1)");
  if (pairs_per_epoch < 0) throw DataError("pairs: pairs_per_epoch must be >= 0");
}

int ContrastiveConfig::resolved_pairs_per_epoch(std::size_t n_references) const {
  return pairs_per_epoch > 0 ? pairs_per_epoch : static_cast<int>(4 * n_references);
}

double euclidean_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw DataError("distance: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                    std::to_string(v.size()) + ")");
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

double contrastive_loss(double distance, bool same_class, double margin) {
  if (margin <= 0.0) throw DataError("contrastive loss: margin must be > 0");
  if (distance < 0.0) throw DataError("contrastive loss: negative distance");
  if (same_class) return distance * distance;
  const double hinge = std::max(0.0, margin - distance);
  return hinge * hinge;
}

std::vector<PairSample> sample_pairs(const std::vector<SampleRecord>& references,
                                     const ContrastiveConfig& config) {
  config.validate();
  const auto idx = index_by_class(references);
  Rng rng(config.seed);
  return draw_pairs(references, idx, config.resolved_pairs_per_epoch(references.size()),
                    config.positive_fraction, rng);
}

void save_pairs_csv(const std::vector<PairSample>& pairs, const std::filesystem::path& path,
                    const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pairs file: " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "id_a,id_b,same_class\n";
  for (const auto& p : pairs)
    out << p.id_a << ',' << p.id_b << ',' << (p.same_class ? 1 : 0) << '\n';
}

double contrastive_pair_backprop(const NetParams& params, std::span<const double> xa,
                                 std::span<const double> xb, bool same_class, double margin,
                                 Gradients& grads) {
  if (params.config.head != Head::Embedding)
    throw DataError("contrastive training requires an embedding head");
  const ForwardTrace trace_a = forward_trace(params, xa);
  const ForwardTrace trace_b = forward_trace(params, xb);
  const auto dim = trace_a.output.size();

  std::vector<double> diff(dim);
  for (std::size_t i = 0; i < dim; ++i) diff[i] = trace_a.output[i] - trace_b.output[i];
  const double dist = euclidean_distance(trace_a.output, trace_b.output);
  const double loss = contrastive_loss(dist, same_class, margin);

  std::vector<double> d_a(dim, 0.0), d_b(dim, 0.0);
  if (same_class) {
    // L = d^2 = |ea - eb|^2
    for (std::size_t i = 0; i < dim; ++i) {
      d_a[i] = 2.0 * diff[i];
      d_b[i] = -2.0 * diff[i];
    }
  } else if (dist < margin && dist > 0.0) {
    // L = (margin - d)^2; subgradient zero at d == 0 and beyond the margin
    const double scale = -2.0 * (margin - dist) / dist;
    for (std::size_t i = 0; i < dim; ++i) {
      d_a[i] = scale * diff[i];
      d_b[i] = -scale * diff[i];
    }
  }
  accumulate_output_gradient(params, trace_a, d_a, grads);
  accumulate_output_gradient(params, trace_b, d_b, grads);
  return loss;
}

NetParams train_siamese(const NetConfig& net, const std::vector<SampleRecord>& references,
                        const TrainConfig& train_cfg, const ContrastiveConfig& pair_cfg,
                        TrainLog* log) {
  train_cfg.validate();
  pair_cfg.validate();
  if (references.empty()) throw DataError("reference set is empty");
  if (net.head != Head::Embedding)
    throw DataError("train_siamese requires an embedding-head net config");

  NetConfig cfg = net;
  if (cfg.input_dim == 0) cfg.input_dim = static_cast<int>(references[0].features.size());
  for (const auto& rec : references)
    if (rec.features.size() != static_cast<std::size_t>(cfg.input_dim))
      throw DataError("reference '" + rec.id + "' has dimension " +
                      std::to_string(rec.features.size()) + ", network expects " +
                      std::to_string(cfg.input_dim));

  const auto idx = index_by_class(references);
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < references.size(); ++i) by_id[references[i].id] = i;
  const auto features_of = [&](const std::string& id) -> const std::vector<double>& {
    return references[by_id.at(id)].features;
  };

  const int pairs_per_epoch = pair_cfg.resolved_pairs_per_epoch(references.size());
  Rng pair_rng(mix_seed(pair_cfg.seed, train_cfg.seed));

  // Fixed validation pairs, training pairs redrawn every epoch.
  const int n_val = std::max(1, static_cast<int>(train_cfg.validation_fraction *
                                                 static_cast<double>(pairs_per_epoch)));
  const auto val_pairs =
      draw_pairs(references, idx, n_val, pair_cfg.positive_fraction, pair_rng);

  NetParams params = init_params(cfg);
  AdamState adam = init_adam(params);
  Gradients grads = zero_gradients(params);

  const auto mean_val_loss = [&](const NetParams& p) {
    double sum = 0.0;
    for (const auto& pair : val_pairs) {
      const auto ea = forward(p, features_of(pair.id_a));
      const auto eb = forward(p, features_of(pair.id_b));
      sum += contrastive_loss(euclidean_distance(ea, eb), pair.same_class, pair_cfg.margin);
    }
    return sum / static_cast<double>(val_pairs.size());
  };

  NetParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  const auto batch = static_cast<std::size_t>(train_cfg.batch_size);

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto pairs =
        draw_pairs(references, idx, pairs_per_epoch, pair_cfg.positive_fraction, pair_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += batch) {
      const std::size_t stop = std::min(start + batch, pairs.size());
      for (auto& layer : grads.layers) {
        std::fill(layer.w.begin(), layer.w.end(), 0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
      }
      for (std::size_t i = start; i < stop; ++i)
        loss_sum += contrastive_pair_backprop(params, features_of(pairs[i].id_a),
                                              features_of(pairs[i].id_b), pairs[i].same_class,
                                              pair_cfg.margin, grads);
      if (train_cfg.optimizer == OptimizerKind::Adam)
        apply_adam(params, adam, grads, train_cfg.learning_rate);
      else
        apply_sgd(params, grads, train_cfg.learning_rate);
    }
    const double train_loss = loss_sum / static_cast<double>(pairs.size());
    const double val_loss = mean_val_loss(params);
    if (log) log->epochs.push_back({epoch, train_loss, val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      best = params;
      best_epoch = epoch;
    }
  }
  if (log) log->best_epoch = best_epoch;
  return train_cfg.epochs > 0 ? best : params;
}

SimilarityIndex::SimilarityIndex(const NetParams& params,
                                 const std::vector<SampleRecord>& references)
    : params_(params) {
  if (references.empty()) throw DataError("reference set is empty");
  ids_.reserve(references.size());
  embeddings_.reserve(references.size());
  labels_.reserve(references.size());
  for (const auto& rec : references) {
    ids_.push_back(rec.id);
    embeddings_.push_back(forward(params_, rec.features));
    labels_.push_back(rec.verified_label.value_or(-1));
  }
}

std::vector<std::size_t> SimilarityIndex::ranked_indices(const SampleRecord& query) const {
  const auto qe = forward(params_, query.features);
  std::vector<std::size_t> order(ids_.size());
  std::vector<double> dist(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    order[i] = i;
    dist[i] = euclidean_distance(qe, embeddings_[i]);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return ids_[a] < ids_[b];
  });
  return order;
}

std::vector<std::pair<std::string, double>> SimilarityIndex::rank(const SampleRecord& query) const {
  const auto qe = forward(params_, query.features);
  const auto order = ranked_indices(query);
  std::vector<std::pair<std::string, double>> ranked;
  ranked.reserve(order.size());
  for (std::size_t i : order) ranked.emplace_back(ids_[i], euclidean_distance(qe, embeddings_[i]));
  return ranked;
}

std::vector<int> SimilarityIndex::top_labels(const SampleRecord& query, std::size_t n) const {
  const auto order = ranked_indices(query);
  std::vector<int> labels;
  labels.reserve(std::min(n, order.size()));
  for (std::size_t i = 0; i < order.size() && labels.size() < n; ++i) {
    const int label = labels_[order[i]];
    if (label < 0)
      throw DataError("reference '" + ids_[order[i]] + "' has no verified label");
    labels.push_back(label);
  }
  return labels;
}

std::vector<std::pair<std::string, double>> similarity_scores(
    const NetParams& params, const SampleRecord& query,
    const std::vector<SampleRecord>& references) {
  return SimilarityIndex(params, references).rank(query);
}

namespace detail {

nlohmann::json contrastive_config_to_json(const ContrastiveConfig& cfg) {
  return {{"margin", cfg.margin},
          {"pairs_per_epoch", cfg.pairs_per_epoch},
          {"positive_fraction", cfg.positive_fraction},
          {"seed", cfg.seed}};
}

ContrastiveConfig contrastive_config_from_json(const nlohmann::json& j, const std::string& where) {
  check_known_keys(j, {"margin", "pairs_per_epoch", "positive_fraction", "seed"}, where);
  ContrastiveConfig cfg;
  cfg.margin = j.value("margin", cfg.margin);
  cfg.pairs_per_epoch = j.value("pairs_per_epoch", cfg.pairs_per_epoch);
  cfg.positive_fraction = j.value("positive_fraction", cfg.positive_fraction);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace detail

ContrastiveConfig load_contrastive_config(const std::filesystem::path& path) {
  return detail::contrastive_config_from_json(detail::read_json_file(path, "pair config"),
                                              path.string());
}

}  // namespace relab
