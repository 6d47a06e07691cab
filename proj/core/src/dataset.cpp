#include "relab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "config_json.hpp"
#include "relab/error.hpp"
#include "relab/rng.hpp"

namespace relab {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line_no,
                       const std::string& message) {
  throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + message);
}

double parse_double(const std::string& text, const std::filesystem::path& path,
                    std::size_t line_no, const std::string& field) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    fail(path, line_no, "field '" + field + "': not a number: '" + text + "'");
  return value;
}

int parse_int(const std::string& text, const std::filesystem::path& path, std::size_t line_no,
              const std::string& field) {
  int value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    fail(path, line_no, "field '" + field + "': not an integer: '" + text + "'");
  return value;
}

void check_scores(const std::vector<int>& scores, const std::filesystem::path& path,
                  std::size_t line_no) {
  if (scores.empty()) fail(path, line_no, "field 'scores': at least one rater score required");
  for (int s : scores) {
    if (s < 1 || s > 5)
      fail(path, line_no,
           "field 'scores': rater score " + std::to_string(s) + " out of range [1,5]");
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<SampleRecord> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  std::string line;
  std::size_t line_no = 0;
  // Header line (comments allowed before it).
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split(line, ',');
    break;
  }
  if (header.empty()) throw DataError(path.string() + ": missing header line");
  if (header.size() < 3 || header.front() != "id" || header[header.size() - 2] != "scores" ||
      header.back() != "label")
    fail(path, line_no, "header must be id,f0,...,scores,label");
  const std::size_t dim = header.size() - 3;

  std::vector<SampleRecord> records;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size())
      fail(path, line_no,
           "expected " + std::to_string(header.size()) + " fields, got " +
               std::to_string(fields.size()));

    SampleRecord rec;
    rec.id = fields[0];
    if (rec.id.empty()) fail(path, line_no, "field 'id': empty");
    if (!seen.insert(rec.id).second) fail(path, line_no, "duplicate id '" + rec.id + "'");

    rec.features.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i)
      rec.features.push_back(parse_double(fields[1 + i], path, line_no, header[1 + i]));

    for (const auto& tok : split(fields[header.size() - 2], ';')) {
      if (tok.empty()) continue;
      rec.rater_scores.push_back(parse_int(tok, path, line_no, "scores"));
    }
    check_scores(rec.rater_scores, path, line_no);

    const std::string& label = fields.back();
    if (!label.empty()) {
      const int v = parse_int(label, path, line_no, "label");
      if (v != 0 && v != 1) fail(path, line_no, "field 'label': must be empty, 0 or 1");
      rec.verified_label = v;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<SampleRecord> load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_array()) throw DataError(path.string() + ": expected a top-level array");

  std::vector<SampleRecord> records;
  std::set<std::string> seen;
  std::size_t index = 0;
  std::optional<std::size_t> dim;
  for (const auto& item : doc) {
    ++index;
    const std::string where = path.string() + ": record " + std::to_string(index);
    if (!item.is_object()) throw DataError(where + ": expected an object");
    SampleRecord rec;
    try {
      rec.id = item.at("id").get<std::string>();
      rec.features = item.at("features").get<std::vector<double>>();
      rec.rater_scores = item.at("rater_scores").get<std::vector<int>>();
      if (item.contains("verified_label") && !item["verified_label"].is_null())
        rec.verified_label = item["verified_label"].get<int>();
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (rec.id.empty()) throw DataError(where + ": field 'id': empty");
    if (!seen.insert(rec.id).second) throw DataError(where + ": duplicate id '" + rec.id + "'");
    if (rec.rater_scores.empty())
      throw DataError(where + ": field 'rater_scores': at least one rater score required");
    for (int s : rec.rater_scores)
      if (s < 1 || s > 5)
        throw DataError(where + ": field 'rater_scores': rater score " + std::to_string(s) +
                        " out of range [1,5]");
    if (rec.verified_label && *rec.verified_label != 0 && *rec.verified_label != 1)
      throw DataError(where + ": field 'verified_label': must be 0 or 1");
    if (dim && rec.features.size() != *dim)
      throw DataError(where + ": feature dimension " + std::to_string(rec.features.size()) +
                      " does not match dataset dimension " + std::to_string(*dim));
    if (!dim) dim = rec.features.size();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

double average_score(const SampleRecord& record) {
  if (record.rater_scores.empty())
    throw DataError("record '" + record.id + "' has no rater scores");
  double sum = 0.0;
  for (int s : record.rater_scores) sum += s;
  return sum / static_cast<double>(record.rater_scores.size());
}

bool Interval::intersects(const Interval& other) const {
  const auto empty = [](const Interval& iv) {
    return iv.lo > iv.hi || (iv.lo == iv.hi && !(iv.lo_closed && iv.hi_closed));
  };
  if (empty(*this) || empty(other)) return false;
  if (lo > other.hi || other.lo > hi) return false;
  if (hi == other.lo) return hi_closed && other.lo_closed;
  if (other.hi == lo) return other.hi_closed && lo_closed;
  return true;
}

void Scenario::validate() const {
  if (benign.lo > benign.hi || malignant.lo > malignant.hi)
    throw DataError("scenario '" + name + "': interval bounds out of order");
  if (benign.intersects(malignant))
    throw DataError("scenario '" + name + "': benign and malignant ranges overlap");
}

Assigned Scenario::classify(double avg) const {
  if (benign.contains(avg)) return Assigned::Benign;
  if (malignant.contains(avg)) return Assigned::Malignant;
  return Assigned::Excluded;
}

const std::vector<Scenario>& default_scenarios() {
  static const std::vector<Scenario> table = {
      {"A", {1.0, 2.0, true, true}, {4.0, 5.0, true, true}},
      {"B", {1.0, 2.5, true, false}, {4.0, 5.0, true, true}},
      {"C", {1.0, 2.5, true, false}, {2.5, 5.0, true, true}},
      {"D", {1.0, 3.0, true, false}, {3.0, 5.0, true, true}},
      {"E", {1.0, 3.0, true, true}, {3.0, 5.0, false, true}},
      {"F", {1.0, 3.5, true, false}, {3.5, 5.0, true, true}},
  };
  return table;
}

Scenario scenario_by_name(std::string_view name, const std::vector<Scenario>& table) {
  for (const auto& s : table)
    if (s.name == name) return s;
  std::string known;
  for (const auto& s : table) {
    if (!known.empty()) known += ", ";
    known += s.name;
  }
  throw DataError("unknown scenario '" + std::string(name) + "' (known: " + known + ")");
}

namespace detail {

static Interval interval_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() < 2 || j.size() > 4)
    throw DataError(where + ": interval must be [lo,hi,lo_closed,hi_closed]");
  Interval iv;
  iv.lo = j[0].get<double>();
  iv.hi = j[1].get<double>();
  if (j.size() > 2) iv.lo_closed = j[2].is_boolean() ? j[2].get<bool>() : j[2].get<int>() != 0;
  if (j.size() > 3) iv.hi_closed = j[3].is_boolean() ? j[3].get<bool>() : j[3].get<int>() != 0;
  return iv;
}

static json interval_to_json(const Interval& iv) {
  return json::array({iv.lo, iv.hi, iv.lo_closed, iv.hi_closed});
}

nlohmann::json scenario_to_json(const Scenario& s) {
  return {{"name", s.name},
          {"benign", interval_to_json(s.benign)},
          {"malignant", interval_to_json(s.malignant)}};
}

Scenario scenario_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("benign") || !j.contains("malignant"))
    throw DataError(where + ": scenario needs 'benign' and 'malignant' ranges");
  Scenario s;
  s.name = j.value("name", std::string("custom"));
  s.benign = interval_from_json(j["benign"], where);
  s.malignant = interval_from_json(j["malignant"], where);
  s.validate();
  return s;
}

}  // namespace detail

std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scenario file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw DataError(path.string() + ": expected an object of scenarios");

  std::vector<Scenario> out;
  for (const auto& [name, def] : doc.items()) {
    const std::string where = path.string() + ": scenario '" + name + "'";
    Scenario s = detail::scenario_from_json(def, where);
    s.name = name;
    s.validate();
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

void save_scenarios(const std::vector<Scenario>& scenarios, const std::filesystem::path& path) {
  json doc = json::object();
  for (const auto& s : scenarios) {
    json def = detail::scenario_to_json(s);
    def.erase("name");
    doc[s.name] = std::move(def);
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scenario file: " + path.string());
  out << doc.dump(2) << "\n";
}

LabelAssignment assign_labels(const std::vector<SampleRecord>& records, const Scenario& scenario) {
  scenario.validate();
  LabelAssignment result;
  for (const auto& rec : records) {
    switch (scenario.classify(average_score(rec))) {
      case Assigned::Benign:
        result.labels[rec.id] = 0;
        break;
      case Assigned::Malignant:
        result.labels[rec.id] = 1;
        break;
      case Assigned::Excluded:
        result.excluded.push_back(rec.id);
        break;
    }
  }
  return result;
}

std::vector<std::vector<std::string>> FoldSplit::folds() const {
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(k));
  for (const auto& [id, fold] : assignments) out[static_cast<std::size_t>(fold)].push_back(id);
  return out;
}

FoldSplit stratified_kfold(const std::map<std::string, int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw DataError("k must be at least 2, got " + std::to_string(k));

  std::map<int, std::vector<std::string>> by_class;
  for (const auto& [id, label] : labels) {
    if (label != 0 && label != 1)
      throw DataError("label for '" + id + "' must be 0 or 1, got " + std::to_string(label));
    by_class[label].push_back(id);
  }
  for (const auto& [label, ids] : by_class) {
    if (ids.size() < static_cast<std::size_t>(k))
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(ids.size()) +
                      " samples, need at least k=" + std::to_string(k));
  }

  FoldSplit split;
  split.k = k;
  Rng rng(seed);
  for (auto& [label, ids] : by_class) {
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i)
      split.assignments[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return split;
}

std::map<std::string, int> make_label_map(const std::vector<SampleRecord>& records) {
  std::map<std::string, int> labels;
  for (const auto& rec : records) {
    if (!rec.verified_label)
      throw DataError("record '" + rec.id + "' has no verified label");
    labels[rec.id] = *rec.verified_label;
  }
  return labels;
}

std::map<std::string, double> make_average_score_map(const std::vector<SampleRecord>& records) {
  std::map<std::string, double> scores;
  for (const auto& rec : records) scores[rec.id] = average_score(rec);
  return scores;
}

std::pair<std::size_t, std::size_t> label_distribution(const std::map<std::string, int>& labels) {
  std::size_t benign = 0, malignant = 0;
  for (const auto& [id, label] : labels) {
    if (label == 0)
      ++benign;
    else if (label == 1)
      ++malignant;
    else
      throw DataError("label for '" + id + "' must be 0 or 1, got " + std::to_string(label));
  }
  return {benign, malignant};
}

std::vector<SampleRecord> load_dataset(const std::filesystem::path& path, FileFormat format) {
  auto records = format == FileFormat::Csv ? load_csv(path) : load_json_file(path);
  // CSV dimension consistency is enforced by the header; double-check anyway.
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].features.size() != records[0].features.size())
      throw DataError(path.string() + ": inconsistent feature dimensions");
  }
  return records;
}

std::vector<SampleRecord> load_dataset(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".json") return load_dataset(path, FileFormat::Json);
  return load_dataset(path, FileFormat::Csv);
}

void save_dataset(const std::vector<SampleRecord>& records, const std::filesystem::path& path,
                  FileFormat format, const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path.string());

  if (format == FileFormat::Csv) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    const std::size_t dim = records.empty() ? 0 : records[0].features.size();
    out << "id";
    for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
    out << ",scores,label\n";
    for (const auto& rec : records) {
      out << rec.id;
      for (double f : rec.features) out << ',' << format_double(f);
      out << ',';
      for (std::size_t i = 0; i < rec.rater_scores.size(); ++i) {
        if (i) out << ';';
        out << rec.rater_scores[i];
      }
      out << ',';
      if (rec.verified_label) out << *rec.verified_label;
      out << '\n';
    }
    return;
  }

  json doc = json::array();
  for (const auto& rec : records) {
    json item = {{"id", rec.id}, {"features", rec.features}, {"rater_scores", rec.rater_scores}};
    if (rec.verified_label) item["verified_label"] = *rec.verified_label;
    doc.push_back(std::move(item));
  }
  out << doc.dump(2) << "\n";
}

std::map<std::string, int> load_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file: " + path.string());
  std::map<std::string, int> labels;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != "id,label") fail(path, line_no, "expected header 'id,label'");
      saw_header = true;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != 2) fail(path, line_no, "expected 2 fields");
    const int v = parse_int(fields[1], path, line_no, "label");
    if (v != 0 && v != 1) fail(path, line_no, "field 'label': must be 0 or 1");
    if (!labels.emplace(fields[0], v).second)
      fail(path, line_no, "duplicate id '" + fields[0] + "'");
  }
  if (!saw_header) throw DataError(path.string() + ": missing header line");
  return labels;
}

void save_labels_csv(const std::map<std::string, int>& labels, const std::filesystem::path& path,
                     const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write labels file: " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "id,label\n";
  for (const auto& [id, label] : labels) out << id << ',' << label << '\n';
}

std::vector<std::string> load_id_list_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open id list file: " + path.string());
  std::vector<std::string> ids;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      saw_header = true;  // header 'id'
      continue;
    }
    ids.push_back(line);
  }
  return ids;
}

void save_id_list_csv(const std::vector<std::string>& ids, const std::filesystem::path& path,
                      const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write id list file: " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "id\n";
  for (const auto& id : ids) out << id << '\n';
}

}  // namespace relab
