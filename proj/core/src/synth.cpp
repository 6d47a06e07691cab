#include "relab/synth.hpp"

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

// Score gain: noise-free scores of fully margined samples span the whole
// 1..5 range (3 +- 2).
constexpr double kGain = 2.0;

// Rater noise splits into a per-sample component shared by every rater (the
// case reads more or less malignant than it is, independent of the feature
// view) and an independent per-rater component. Both scale with
// rater_noise_std, so the noise-free limit stays exact.
constexpr double kSharedNoiseRatio = 3.0;

/// Signed normalized margin in [-1,1]; the uncertain band around the class
/// boundary is collapsed to 0 and the rest rescaled.
double normalized_margin(double projection, double half_separation, double band) {
  double m = std::clamp(projection / half_separation, -1.0, 1.0);
  const double half_band = band / 2.0;
  if (std::abs(m) <= half_band) return 0.0;
  const double sign = m < 0.0 ? -1.0 : 1.0;
  return sign * (std::abs(m) - half_band) / (1.0 - half_band);
}

SampleRecord make_sample(const std::string& id, int true_label, const GeneratorConfig& cfg,
                         Rng& rng) {
  SampleRecord rec;
  rec.id = id;
  rec.features.resize(static_cast<std::size_t>(cfg.feature_dim));
  const double offset = (true_label == 1 ? 1.0 : -1.0) * cfg.class_separation / 2.0;
  for (int d = 0; d < cfg.feature_dim; ++d)
    rec.features[static_cast<std::size_t>(d)] = rng.normal(d == 0 ? offset : 0.0, 1.0);

  const double margin =
      normalized_margin(rec.features[0], cfg.class_separation / 2.0, cfg.uncertain_band);
  const double shared_noise = rng.normal(0.0, kSharedNoiseRatio * cfg.rater_noise_std);
  rec.rater_scores.resize(static_cast<std::size_t>(cfg.rater_count));
  for (int r = 0; r < cfg.rater_count; ++r) {
    const double raw = 3.0 + kGain * margin + cfg.rater_bias + shared_noise +
                       rng.normal(0.0, cfg.rater_noise_std);
    rec.rater_scores[static_cast<std::size_t>(r)] =
        static_cast<int>(std::clamp(std::lround(raw), 1L, 5L));
  }
  return rec;
}

std::string format_id(const char* prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%05d", prefix, i);
  return buf;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n_noisy < 0) throw DataError("generator: n_noisy must be >= 0");
  if (n_reference < 2) throw DataError("generator: n_reference must be >= 2");
  if (n_reference % 2 != 0)
    throw DataError("generator: n_reference must be even for a balanced reference set");
  if (feature_dim < 1) throw DataError("generator: feature_dim must be >= 1");
  if (class_separation <= 0.0) throw DataError("generator: class_separation must be > 0");
  if (rater_count < 1) throw DataError("generator: rater_count must be >= 1");
  if (rater_noise_std <= 0.0) throw DataError("generator: rater_noise_std must be > 0");
  if (uncertain_band < 0.0 || uncertain_band >= 2.0)
    throw DataError("generator: uncertain_band must be in [0,2)");
}

GeneratedData generate(const GeneratorConfig& config) {
  config.validate();
  GeneratedData data;
  Rng rng(config.seed);

  data.noisy.reserve(static_cast<std::size_t>(config.n_noisy));
  for (int i = 0; i < config.n_noisy; ++i) {
    const int truth = i % 2;  // alternate classes for a near-balanced pool
    auto rec = make_sample(format_id("n", i), truth, config, rng);
    data.ground_truth[rec.id] = truth;
    data.noisy.push_back(std::move(rec));
  }

  data.reference.reserve(static_cast<std::size_t>(config.n_reference));
  for (int i = 0; i < config.n_reference; ++i) {
    const int truth = i % 2;  // exactly balanced: n/2 per class
    auto rec = make_sample(format_id("r", i), truth, config, rng);
    rec.verified_label = truth;
    data.ground_truth[rec.id] = truth;
    data.reference.push_back(std::move(rec));
  }
  return data;
}

double oracle_accuracy(const std::map<std::string, int>& labels,
                       const std::map<std::string, int>& ground_truth) {
  if (labels.empty()) throw DataError("oracle_accuracy: no labels given");
  long matches = 0;
  for (const auto& [id, label] : labels) {
    const auto it = ground_truth.find(id);
    if (it == ground_truth.end())
      throw DataError("oracle_accuracy: id '" + id + "' not in ground truth");
    if (label == it->second) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(labels.size());
}

void save_ground_truth_csv(const std::map<std::string, int>& truth,
                           const std::filesystem::path& path,
                           const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ground truth file: " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "id,true_label\n";
  for (const auto& [id, label] : truth) out << id << ',' << label << '\n';
}

std::map<std::string, int> load_ground_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth file: " + path.string());
  std::map<std::string, int> truth;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != "id,true_label")
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": expected header 'id,true_label'");
      saw_header = true;
      continue;
    }
    const auto pos = line.find(',');
    if (pos == std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
    const std::string id = line.substr(0, pos);
    const std::string value = line.substr(pos + 1);
    int v = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size() || (v != 0 && v != 1))
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": field 'true_label': must be 0 or 1");
    if (!truth.emplace(id, v).second)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate id '" + id +
                      "'");
  }
  if (!saw_header) throw DataError(path.string() + ": missing header line");
  return truth;
}

namespace detail {

nlohmann::json generator_config_to_json(const GeneratorConfig& cfg) {
  return {{"n_noisy", cfg.n_noisy},
          {"n_reference", cfg.n_reference},
          {"feature_dim", cfg.feature_dim},
          {"class_separation", cfg.class_separation},
          {"rater_count", cfg.rater_count},
          {"rater_bias", cfg.rater_bias},
          {"rater_noise_std", cfg.rater_noise_std},
          {"uncertain_band", cfg.uncertain_band},
          {"seed", cfg.seed}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j, const std::string& where) {
  check_known_keys(j,
                   {"n_noisy", "n_reference", "feature_dim", "class_separation", "rater_count",
                    "rater_bias", "rater_noise_std", "uncertain_band", "seed"},
                   where);
  GeneratorConfig cfg;
  cfg.n_noisy = j.value("n_noisy", cfg.n_noisy);
  cfg.n_reference = j.value("n_reference", cfg.n_reference);
  cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
  cfg.class_separation = j.value("class_separation", cfg.class_separation);
  cfg.rater_count = j.value("rater_count", cfg.rater_count);
  cfg.rater_bias = j.value("rater_bias", cfg.rater_bias);
  cfg.rater_noise_std = j.value("rater_noise_std", cfg.rater_noise_std);
  cfg.uncertain_band = j.value("uncertain_band", cfg.uncertain_band);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace detail

GeneratorConfig load_generator_config(const std::filesystem::path& path) {
  return detail::generator_config_from_json(detail::read_json_file(path, "generator config"),
                                            path.string());
}

}  // namespace relab
