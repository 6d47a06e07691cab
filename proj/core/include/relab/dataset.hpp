#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace relab {

/// One instance: feature vector, per-rater malignancy scores in [1,5],
/// and an optional pathologically verified binary label.
struct SampleRecord {
  std::string id;
  std::vector<double> features;
  std::vector<int> rater_scores;
  std::optional<int> verified_label;  // 0 = benign, 1 = malignant
};

/// Arithmetic mean of the record's rater scores. Throws DataError when the
/// record carries no scores.
double average_score(const SampleRecord& record);

/// Interval over average scores with configurable endpoint closedness.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = true;
  bool hi_closed = true;

  bool contains(double x) const {
    if (x < lo || x > hi) return false;
    if (x == lo && !lo_closed) return false;
    if (x == hi && !hi_closed) return false;
    return true;
  }
  bool intersects(const Interval& other) const;
};

enum class Assigned { Benign, Malignant, Excluded };

/// Rule mapping an average rater score to benign / malignant / excluded.
/// The two ranges must be disjoint; everything else is excluded.
struct Scenario {
  std::string name;
  Interval benign;
  Interval malignant;

  /// Throws DataError if the two ranges overlap.
  void validate() const;
  Assigned classify(double avg) const;
};

/// The built-in scenario table A..F. A is anchored to treating average
/// scores 1-2 as benign and 4-5 as malignant; E puts score 3 on the benign
/// side. All six are plain data and can be overridden from a config file.
const std::vector<Scenario>& default_scenarios();

/// Looks up a scenario by name in `table` (default table when empty).
/// Throws DataError listing the known names when absent.
Scenario scenario_by_name(std::string_view name,
                          const std::vector<Scenario>& table = default_scenarios());

/// Scenario config JSON: map name -> {benign:[lo,hi,lo_closed,hi_closed], malignant:[...]}.
std::vector<Scenario> load_scenarios(const std::filesystem::path& path);
void save_scenarios(const std::vector<Scenario>& scenarios, const std::filesystem::path& path);

/// Output of assign_labels: binary labels plus the ids the scenario excluded.
/// Excluded records are reported, never silently dropped.
struct LabelAssignment {
  std::map<std::string, int> labels;
  std::vector<std::string> excluded;
};

LabelAssignment assign_labels(const std::vector<SampleRecord>& records, const Scenario& scenario);

/// Stratified k-fold assignment, deterministic given the seed.
struct FoldSplit {
  int k = 0;
  std::map<std::string, int> assignments;  // id -> fold in [0, k)

  std::vector<std::vector<std::string>> folds() const;
};

/// Per class: ids are shuffled with the seed, then dealt round-robin, so
/// per-fold class counts differ by at most one. Throws DataError when k < 2
/// or any present class has fewer than k members.
FoldSplit stratified_kfold(const std::map<std::string, int>& labels, int k, std::uint64_t seed);

/// (benign count, malignant count).
std::pair<std::size_t, std::size_t> label_distribution(const std::map<std::string, int>& labels);

/// id -> verified_label. Throws DataError naming the first unlabeled record.
std::map<std::string, int> make_label_map(const std::vector<SampleRecord>& records);

/// id -> average rater score.
std::map<std::string, double> make_average_score_map(const std::vector<SampleRecord>& records);

enum class FileFormat { Csv, Json };

/// CSV schema: header `id,f0,...,f{D-1},scores,label`; `scores` is a
/// `;`-separated list of integers, `label` empty, 0 or 1. Lines starting
/// with `#` are skipped. JSON schema: array of objects with keys `id`,
/// `features`, `rater_scores`, optional `verified_label`.
/// Errors name the offending line and field.
std::vector<SampleRecord> load_dataset(const std::filesystem::path& path, FileFormat format);

/// Format inferred from the extension (.csv / .json).
std::vector<SampleRecord> load_dataset(const std::filesystem::path& path);

/// `header_comment`, when non-empty, is written first as `# <comment>`.
void save_dataset(const std::vector<SampleRecord>& records, const std::filesystem::path& path,
                  FileFormat format, const std::string& header_comment = {});

/// Labels CSV: header `id,label`. Used for scenario assignments and audits.
std::map<std::string, int> load_labels_csv(const std::filesystem::path& path);
void save_labels_csv(const std::map<std::string, int>& labels, const std::filesystem::path& path,
                     const std::string& header_comment = {});

/// Plain id list CSV: header `id`.
std::vector<std::string> load_id_list_csv(const std::filesystem::path& path);
void save_id_list_csv(const std::vector<std::string>& ids, const std::filesystem::path& path,
                      const std::string& header_comment = {});

}  // namespace relab
