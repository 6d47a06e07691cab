#include "relab/relabel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "config_json.hpp"
#include "json_util.hpp"
#include "relab/error.hpp"
#include "relab/rng.hpp"

namespace relab {

namespace {

std::optional<int> lookup_original(const std::map<std::string, int>& originals,
                                   const std::string& id) {
  const auto it = originals.find(id);
  if (it == originals.end()) return std::nullopt;
  return it->second;
}

/// Applies substitute/consensus semantics to a machine-voted label.
RelabelOutcome finalize(std::string id, int voted, double vote_mean,
                        std::optional<int> original, const RelabelConfig& cfg) {
  RelabelOutcome out;
  out.id = std::move(id);
  out.vote_mean = vote_mean;
  out.original_label = original;
  if (cfg.mode == Mode::Substitute) {
    out.new_label = voted;
    if (original) out.agreed = (voted == *original);
    return out;
  }
  // Consensus: keep only agreements; samples without an original label are
  // relabeled substitute-fashion when include_uncertain is set.
  if (original) {
    out.agreed = (voted == *original);
    if (*out.agreed) out.new_label = voted;
  } else if (cfg.include_uncertain) {
    out.new_label = voted;
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void RelabelConfig::validate() const {
  if (top_fraction <= 0.0 || top_fraction > 1.0)
    throw DataError("relabel: top_fraction must be in (0,1]");
}

std::vector<RelabelOutcome> relabel_comparator(const NetParams& params,
                                               const std::vector<SampleRecord>& queries,
                                               const std::vector<SampleRecord>& references,
                                               const RelabelConfig& config,
                                               const std::map<std::string, int>& original_labels) {
  config.validate();
  if (references.empty()) throw DataError("relabel: reference set is empty");
  for (const auto& rec : references)
    if (!rec.verified_label)
      throw DataError("reference '" + rec.id + "' has no verified label");

  const SimilarityIndex index(params, references);
  const auto n_top = static_cast<std::size_t>(
      std::ceil(config.top_fraction * static_cast<double>(references.size())));

  std::vector<RelabelOutcome> outcomes;
  outcomes.reserve(queries.size());
  for (const auto& query : queries) {
    const auto top = index.top_labels(query, n_top);
    double sum = 0.0;
    for (int label : top) sum += label;
    const double vote_mean = sum / static_cast<double>(top.size());
    int voted;
    if (vote_mean > 0.5)
      voted = 1;
    else if (vote_mean < 0.5)
      voted = 0;
    else
      voted = index.top_labels(query, 1)[0];  // tie: nearest reference decides
    outcomes.push_back(finalize(query.id, voted, vote_mean,
                                lookup_original(original_labels, query.id), config));
  }
  return outcomes;
}

std::vector<RelabelOutcome> relabel_annotator(const NetParams& params,
                                              const std::vector<SampleRecord>& queries,
                                              const RelabelConfig& config,
                                              const std::map<std::string, int>& original_labels) {
  config.validate();
  if (params.config.head != Head::SigmoidClassifier)
    throw DataError("annotator strategy requires a sigmoid classifier head");

  std::vector<RelabelOutcome> outcomes;
  outcomes.reserve(queries.size());
  for (const auto& query : queries) {
    const double prob = forward(params, query.features)[0];
    const int voted = prob > 0.5 ? 1 : 0;  // exactly 0.5 counts as benign
    outcomes.push_back(finalize(query.id, voted, prob,
                                lookup_original(original_labels, query.id), config));
  }
  return outcomes;
}

CrossfitResult crossfit_relabel(const std::vector<SampleRecord>& references,
                                const std::vector<SampleRecord>& queries,
                                const RelabelConfig& config, const CrossfitConfig& crossfit,
                                const std::map<std::string, int>& original_labels) {
  config.validate();
  if (crossfit.k < 2) throw DataError("crossfit: k must be at least 2");

  CrossfitResult result;
  result.reference_folds =
      stratified_kfold(make_label_map(references), crossfit.k, mix_seed(crossfit.seed, 1));

  // Deal queries across folds by seeded shuffle.
  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(crossfit.seed, 2));
  rng.shuffle(order);
  std::vector<int> query_fold(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    query_fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(crossfit.k));
    result.query_fold[queries[order[i]].id] = query_fold[order[i]];
  }

  std::vector<RelabelOutcome> outcomes(queries.size());
  for (int fold = 0; fold < crossfit.k; ++fold) {
    std::vector<SampleRecord> train_refs;
    for (const auto& rec : references)
      if (result.reference_folds.assignments.at(rec.id) != fold) train_refs.push_back(rec);

    std::vector<SampleRecord> fold_queries;
    std::vector<std::size_t> fold_positions;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      if (query_fold[i] == fold) {
        fold_queries.push_back(queries[i]);
        fold_positions.push_back(i);
      }
    }

    NetConfig net = crossfit.net;
    TrainConfig train_cfg = crossfit.train;
    net.seed = mix_seed(crossfit.seed, 10 + static_cast<std::uint64_t>(fold));
    train_cfg.seed = mix_seed(crossfit.seed, 20 + static_cast<std::uint64_t>(fold));

    std::vector<RelabelOutcome> fold_outcomes;
    if (config.strategy == Strategy::Comparator) {
      net.head = Head::Embedding;
      ContrastiveConfig pair_cfg = crossfit.pairs;
      pair_cfg.seed = mix_seed(crossfit.seed, 30 + static_cast<std::uint64_t>(fold));
      const NetParams model = train_siamese(net, train_refs, train_cfg, pair_cfg);
      fold_outcomes = relabel_comparator(model, fold_queries, train_refs, config, original_labels);
    } else {
      net.head = Head::SigmoidClassifier;
      const NetParams model = train(train_cfg, net, make_examples_verified(train_refs));
      fold_outcomes = relabel_annotator(model, fold_queries, config, original_labels);
    }
    for (std::size_t i = 0; i < fold_positions.size(); ++i)
      outcomes[fold_positions[i]] = std::move(fold_outcomes[i]);
  }
  result.outcomes = std::move(outcomes);
  return result;
}

long RelabelHistogram::total() const {
  long n = 0;
  for (const auto& bin : bins) n += bin.relabeled_benign + bin.relabeled_malignant + bin.discarded;
  return n;
}

RelabelHistogram relabel_statistics(const std::vector<RelabelOutcome>& outcomes,
                                    const std::map<std::string, double>& average_scores) {
  RelabelHistogram hist;
  for (const auto& out : outcomes) {
    const auto it = average_scores.find(out.id);
    if (it == average_scores.end())
      throw DataError("no average score for outcome '" + out.id + "'");
    const long bin = std::clamp(std::lround(it->second), 1L, 5L) - 1;
    auto& counts = hist.bins[static_cast<std::size_t>(bin)];
    if (!out.new_label)
      ++counts.discarded;
    else if (*out.new_label == 0)
      ++counts.relabeled_benign;
    else
      ++counts.relabeled_malignant;
  }
  return hist;
}

void save_histogram_json(const RelabelHistogram& hist, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::object();
  for (std::size_t i = 0; i < hist.bins.size(); ++i) {
    doc[std::to_string(i + 1)] = {{"relabeled_benign", hist.bins[i].relabeled_benign},
                                  {"relabeled_malignant", hist.bins[i].relabeled_malignant},
                                  {"discarded", hist.bins[i].discarded}};
  }
  detail::write_json_file(doc, path, "histogram");
}

void save_outcomes_csv(const std::vector<RelabelOutcome>& outcomes,
                       const std::map<std::string, double>& average_scores,
                       const std::filesystem::path& path, const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write outcomes file: " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "id,new_label,vote_mean,original_label,agreed,avg_score\n";
  for (const auto& o : outcomes) {
    out << o.id << ',';
    if (o.new_label) out << *o.new_label;
    out << ',' << format_double(o.vote_mean) << ',';
    if (o.original_label) out << *o.original_label;
    out << ',';
    if (o.agreed) out << (*o.agreed ? 1 : 0);
    out << ',';
    const auto it = average_scores.find(o.id);
    if (it != average_scores.end()) out << format_double(it->second);
    out << '\n';
  }
}

std::vector<RelabelOutcome> load_outcomes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open outcomes file: " + path.string());
  std::vector<RelabelOutcome> outcomes;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != "id,new_label,vote_mean,original_label,agreed,avg_score")
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": unexpected header");
      saw_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (fields.size() != 6)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 6 fields");

    const auto parse_opt_int = [&](const std::string& text) -> std::optional<int> {
      if (text.empty()) return std::nullopt;
      int v = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || p != text.data() + text.size())
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad integer '" + text +
                        "'");
      return v;
    };

    RelabelOutcome o;
    o.id = fields[0];
    o.new_label = parse_opt_int(fields[1]);
    if (!fields[2].empty()) {
      const auto [p, ec] =
          std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), o.vote_mean);
      if (ec != std::errc{} || p != fields[2].data() + fields[2].size())
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad vote_mean");
    }
    o.original_label = parse_opt_int(fields[3]);
    if (const auto agreed = parse_opt_int(fields[4])) o.agreed = (*agreed != 0);
    outcomes.push_back(std::move(o));
  }
  if (!saw_header) throw DataError(path.string() + ": missing header line");
  return outcomes;
}

namespace detail {

nlohmann::json relabel_config_to_json(const RelabelConfig& cfg) {
  return {{"strategy", cfg.strategy == Strategy::Comparator ? "comparator" : "annotator"},
          {"mode", cfg.mode == Mode::Substitute ? "substitute" : "consensus"},
          {"top_fraction", cfg.top_fraction},
          {"include_uncertain", cfg.include_uncertain}};
}

RelabelConfig relabel_config_from_json(const nlohmann::json& j, const std::string& where) {
  check_known_keys(j, {"strategy", "mode", "top_fraction", "include_uncertain"}, where);
  RelabelConfig cfg;
  if (j.contains("strategy")) {
    const auto s = j["strategy"].get<std::string>();
    if (s == "comparator")
      cfg.strategy = Strategy::Comparator;
    else if (s == "annotator")
      cfg.strategy = Strategy::Annotator;
    else
      throw DataError(where + ": unknown strategy '" + s + "' (annotator, comparator)");
  }
  if (j.contains("mode")) {
    const auto m = j["mode"].get<std::string>();
    if (m == "substitute")
      cfg.mode = Mode::Substitute;
    else if (m == "consensus")
      cfg.mode = Mode::Consensus;
    else
      throw DataError(where + ": unknown mode '" + m + "' (substitute, consensus)");
  }
  cfg.top_fraction = j.value("top_fraction", cfg.top_fraction);
  cfg.include_uncertain = j.value("include_uncertain", cfg.include_uncertain);
  cfg.validate();
  return cfg;
}

}  // namespace detail

RelabelConfig load_relabel_config(const std::filesystem::path& path) {
  return detail::relabel_config_from_json(detail::read_json_file(path, "relabel config"),
                                          path.string());
}

}  // namespace relab
