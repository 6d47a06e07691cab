// relab: command-line pipeline around the relabkit core library.
//
// Subcommands: generate, assign-labels, train-classifier, train-siamese,
// relabel, run, audit, report. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relab/dataset.hpp"
#include "relab/error.hpp"
#include "relab/experiment.hpp"
#include "relab/net.hpp"
#include "relab/relabel.hpp"
#include "relab/rng.hpp"
#include "relab/siamese.hpp"
#include "relab/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve_out(const fs::path& p) {
  if (p.is_absolute()) return p;
  const char* base = std::getenv("RELAB_OUT_DIR");
  if (!base || !*base) return p;
  return fs::path(base) / p;
}

std::string seed_comment(std::uint64_t seed) { return "seed=" + std::to_string(seed); }

/// Removes files this run created when it fails partway.
class OutputTracker {
 public:
  fs::path add(const fs::path& p) {
    files_.push_back(p);
    return p;
  }
  void keep() { files_.clear(); }
  ~OutputTracker() {
    for (const auto& p : files_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

 private:
  std::vector<fs::path> files_;
};

struct GenerateArgs {
  std::string config;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& args) {
  auto config = relab::load_generator_config(args.config);
  if (args.seed) config.seed = *args.seed;

  const fs::path dir = resolve_out(args.out_dir);
  fs::create_directories(dir);
  const auto data = relab::generate(config);

  OutputTracker tracker;
  const auto comment = seed_comment(config.seed);
  relab::save_dataset(data.noisy, tracker.add(dir / "noisy.csv"), relab::FileFormat::Csv, comment);
  relab::save_dataset(data.reference, tracker.add(dir / "reference.csv"), relab::FileFormat::Csv,
                      comment);
  relab::save_ground_truth_csv(data.ground_truth, tracker.add(dir / "ground_truth.csv"), comment);
  tracker.keep();

  std::cout << "wrote " << (dir / "noisy.csv").string() << " (" << data.noisy.size()
            << " records), " << (dir / "reference.csv").string() << " ("
            << data.reference.size() << " records), "
            << (dir / "ground_truth.csv").string() << "\n";
  return 0;
}

struct AssignArgs {
  std::string data;
  std::string scenario = "A";
  std::string scenarios_file;
  std::string out_labels = "labels.csv";
  std::string out_excluded = "excluded.csv";
  std::uint64_t seed = 0;
};

int cmd_assign_labels(const AssignArgs& args) {
  const auto records = relab::load_dataset(args.data);
  const auto table = args.scenarios_file.empty() ? relab::default_scenarios()
                                                 : relab::load_scenarios(args.scenarios_file);
  const auto scenario = relab::scenario_by_name(args.scenario, table);
  const auto assignment = relab::assign_labels(records, scenario);

  OutputTracker tracker;
  const auto comment = seed_comment(args.seed) + " scenario=" + scenario.name;
  relab::save_labels_csv(assignment.labels, tracker.add(resolve_out(args.out_labels)), comment);
  relab::save_id_list_csv(assignment.excluded, tracker.add(resolve_out(args.out_excluded)),
                          comment);
  tracker.keep();

  const auto [benign, malignant] = relab::label_distribution(assignment.labels);
  std::cout << "scenario " << scenario.name << ": " << benign << " benign, " << malignant
            << " malignant, " << assignment.excluded.size() << " excluded\n";
  return 0;
}

struct TrainClassifierArgs {
  std::string data;
  std::string labels;
  std::string net_config;
  std::string train_config;
  std::string out = "params.json";
  std::string log;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
};

int cmd_train_classifier(const TrainClassifierArgs& args) {
  const auto records = relab::load_dataset(args.data);
  relab::NetConfig net;
  if (!args.net_config.empty()) net = relab::load_net_config(args.net_config);
  relab::TrainConfig train_cfg;
  if (!args.train_config.empty()) train_cfg = relab::load_train_config(args.train_config);
  // Explicit flags beat config-file values.
  if (args.epochs) train_cfg.epochs = *args.epochs;
  if (args.learning_rate) train_cfg.learning_rate = *args.learning_rate;
  if (args.seed) {
    net.seed = relab::mix_seed(*args.seed, 1);
    train_cfg.seed = relab::mix_seed(*args.seed, 2);
  }
  net.head = relab::Head::SigmoidClassifier;

  const auto examples = args.labels.empty()
                            ? relab::make_examples_verified(records)
                            : relab::make_examples(records, relab::load_labels_csv(args.labels));
  if (examples.empty()) throw relab::DataError("no labeled training samples");

  relab::TrainLog log;
  const auto params = relab::train(train_cfg, net, examples, &log);
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";

  OutputTracker tracker;
  relab::save_params(params, tracker.add(resolve_out(args.out)));
  if (!args.log.empty()) log.write_jsonl(tracker.add(resolve_out(args.log)));
  tracker.keep();

  std::cout << "trained classifier on " << examples.size() << " samples, best epoch "
            << log.best_epoch << ", params -> " << resolve_out(args.out).string() << "\n";
  return 0;
}

struct TrainSiameseArgs {
  std::string data;
  std::string net_config;
  std::string train_config;
  std::string pair_config;
  std::string out = "params.json";
  std::string log;
  std::string export_pairs;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
};

int cmd_train_siamese(const TrainSiameseArgs& args) {
  const auto references = relab::load_dataset(args.data);
  relab::NetConfig net;
  if (!args.net_config.empty()) net = relab::load_net_config(args.net_config);
  relab::TrainConfig train_cfg;
  if (!args.train_config.empty()) train_cfg = relab::load_train_config(args.train_config);
  relab::ContrastiveConfig pair_cfg;
  if (!args.pair_config.empty()) pair_cfg = relab::load_contrastive_config(args.pair_config);
  if (args.epochs) train_cfg.epochs = *args.epochs;
  if (args.learning_rate) train_cfg.learning_rate = *args.learning_rate;
  if (args.seed) {
    net.seed = relab::mix_seed(*args.seed, 1);
    train_cfg.seed = relab::mix_seed(*args.seed, 2);
    pair_cfg.seed = relab::mix_seed(*args.seed, 3);
  }
  net.head = relab::Head::Embedding;

  relab::TrainLog log;
  const auto params = relab::train_siamese(net, references, train_cfg, pair_cfg, &log);

  OutputTracker tracker;
  relab::save_params(params, tracker.add(resolve_out(args.out)));
  if (!args.log.empty()) log.write_jsonl(tracker.add(resolve_out(args.log)));
  if (!args.export_pairs.empty())
    relab::save_pairs_csv(relab::sample_pairs(references, pair_cfg),
                          tracker.add(resolve_out(args.export_pairs)),
                          seed_comment(pair_cfg.seed));
  tracker.keep();

  std::cout << "trained comparator on " << references.size() << " references, best epoch "
            << log.best_epoch << ", params -> " << resolve_out(args.out).string() << "\n";
  return 0;
}

struct RelabelArgs {
  std::string params;
  std::string strategy = "comparator";
  std::string mode = "substitute";
  std::string queries;
  std::string references;
  std::string original_labels;
  double top_fraction = 0.20;
  bool include_uncertain = false;
  std::string out = "outcomes.csv";
  std::string histogram;
  std::uint64_t seed = 0;
};

int cmd_relabel(const RelabelArgs& args) {
  relab::RelabelConfig cfg;
  if (args.strategy == "comparator")
    cfg.strategy = relab::Strategy::Comparator;
  else if (args.strategy == "annotator")
    cfg.strategy = relab::Strategy::Annotator;
  else
    throw CLI::ValidationError("--strategy must be comparator or annotator");
  if (args.mode == "substitute")
    cfg.mode = relab::Mode::Substitute;
  else if (args.mode == "consensus")
    cfg.mode = relab::Mode::Consensus;
  else
    throw CLI::ValidationError("--mode must be substitute or consensus");
  cfg.top_fraction = args.top_fraction;
  cfg.include_uncertain = args.include_uncertain;

  const auto params = relab::load_params(args.params);
  const auto all_queries = relab::load_dataset(args.queries);
  std::map<std::string, int> originals;
  if (!args.original_labels.empty()) originals = relab::load_labels_csv(args.original_labels);

  // Without include_uncertain the under-labeled pool is restricted to
  // samples that do have an original label.
  std::vector<relab::SampleRecord> queries;
  for (const auto& rec : all_queries)
    if (cfg.include_uncertain || originals.empty() || originals.count(rec.id))
      queries.push_back(rec);

  std::vector<relab::RelabelOutcome> outcomes;
  if (cfg.strategy == relab::Strategy::Comparator) {
    if (args.references.empty())
      throw CLI::ValidationError("--references is required for the comparator strategy");
    const auto references = relab::load_dataset(args.references);
    outcomes = relab::relabel_comparator(params, queries, references, cfg, originals);
  } else {
    outcomes = relab::relabel_annotator(params, queries, cfg, originals);
  }

  const auto avg_scores = relab::make_average_score_map(queries);
  OutputTracker tracker;
  relab::save_outcomes_csv(outcomes, avg_scores, tracker.add(resolve_out(args.out)),
                           seed_comment(args.seed));
  if (!args.histogram.empty())
    relab::save_histogram_json(relab::relabel_statistics(outcomes, avg_scores),
                               tracker.add(resolve_out(args.histogram)));
  tracker.keep();

  long relabeled = 0, discarded = 0;
  for (const auto& o : outcomes) o.new_label ? ++relabeled : ++discarded;
  std::cout << outcomes.size() << " queries, " << relabeled << " relabeled, " << discarded
            << " discarded -> " << resolve_out(args.out).string() << "\n";
  return 0;
}

struct RunArgs {
  std::string spec;
  std::string out_dir = ".";
  std::string sweep;  // comma-separated scenario names
};

int cmd_run(const RunArgs& args) {
  const auto spec = relab::load_experiment_spec(args.spec);

  // Data paths live in the same spec file.
  std::ifstream spec_in(args.spec);
  json doc;
  spec_in >> doc;
  if (!doc.contains("data") || !doc["data"].is_object())
    throw relab::DataError(args.spec + ": missing 'data' object with dataset paths");
  relab::ExperimentData data;
  if (doc["data"].contains("noisy"))
    data.noisy = relab::load_dataset(doc["data"]["noisy"].get<std::string>());
  if (doc["data"].contains("reference"))
    data.reference = relab::load_dataset(doc["data"]["reference"].get<std::string>());

  const fs::path dir = resolve_out(args.out_dir);
  fs::create_directories(dir);
  OutputTracker tracker;

  std::vector<relab::ExperimentReport> reports;
  if (!args.sweep.empty()) {
    std::vector<relab::Scenario> scenarios;
    const auto table = doc.contains("scenarios_file")
                           ? relab::load_scenarios(doc["scenarios_file"].get<std::string>())
                           : relab::default_scenarios();
    std::string token;
    std::istringstream names(args.sweep);
    while (std::getline(names, token, ','))
      scenarios.push_back(relab::scenario_by_name(token, table));
    reports = relab::scenario_sweep(spec, data, scenarios);
  } else {
    reports.push_back(relab::run_experiment(spec, data));
  }

  relab::write_report(reports, tracker.add(dir / "report.json"), relab::ReportFormat::Json);
  relab::write_report(reports, tracker.add(dir / "report.md"), relab::ReportFormat::Markdown);

  // Final-deployment relabel artifacts: model trained on the full reference
  // set relabels every query once, as in the production path.
  if (spec.kind == relab::ExperimentCase::RelabelRetrain) {
    const auto seed = spec.seeds.front();
    const auto assignment = relab::assign_labels(data.noisy, *spec.scenario);
    std::vector<relab::SampleRecord> queries;
    for (const auto& rec : data.noisy)
      if (assignment.labels.count(rec.id) || spec.relabel->include_uncertain)
        queries.push_back(rec);

    relab::NetConfig net = spec.net;
    net.seed = relab::mix_seed(seed, 11);
    relab::TrainConfig train_cfg = spec.train;
    train_cfg.seed = relab::mix_seed(seed, 12);

    std::vector<relab::RelabelOutcome> outcomes;
    if (spec.relabel->strategy == relab::Strategy::Comparator) {
      net.head = relab::Head::Embedding;
      relab::ContrastiveConfig pair_cfg = spec.pairs;
      pair_cfg.seed = relab::mix_seed(seed, 13);
      const auto model = relab::train_siamese(net, data.reference, train_cfg, pair_cfg);
      outcomes = relab::relabel_comparator(model, queries, data.reference, *spec.relabel,
                                           assignment.labels);
    } else {
      net.head = relab::Head::SigmoidClassifier;
      const auto model =
          relab::train(train_cfg, net, relab::make_examples_verified(data.reference));
      outcomes = relab::relabel_annotator(model, queries, *spec.relabel, assignment.labels);
    }
    const auto avg_scores = relab::make_average_score_map(queries);
    relab::save_outcomes_csv(outcomes, avg_scores, tracker.add(dir / "outcomes.csv"),
                             seed_comment(seed));
    relab::save_histogram_json(relab::relabel_statistics(outcomes, avg_scores),
                               tracker.add(dir / "histogram.json"));
  }
  tracker.keep();

  for (const auto& r : reports) {
    std::cout << r.label << ": accuracy=";
    if (r.micro.accuracy)
      std::cout << *r.micro.accuracy;
    else
      std::cout << "n/a";
    std::cout << " (pooled over " << r.per_seed.size() << " fold runs)\n";
  }
  std::cout << "report -> " << (dir / "report.json").string() << "\n";
  return 0;
}

struct AuditArgs {
  std::string outcomes;
  std::string truth;
  std::string out;
};

int cmd_audit(const AuditArgs& args) {
  const auto outcomes = relab::load_outcomes_csv(args.outcomes);
  const auto truth = relab::load_ground_truth_csv(args.truth);

  std::map<std::string, int> new_labels, original_labels;
  for (const auto& o : outcomes) {
    if (o.new_label) new_labels[o.id] = *o.new_label;
    if (o.original_label) original_labels[o.id] = *o.original_label;
  }
  if (new_labels.empty() && original_labels.empty())
    throw relab::DataError("audit: outcomes carry no labels to score");

  json result;
  result["outcomes"] = outcomes.size();
  if (!new_labels.empty()) {
    result["relabel_accuracy"] = relab::oracle_accuracy(new_labels, truth);
    const auto [benign, malignant] = relab::label_distribution(new_labels);
    result["relabeled_benign"] = benign;
    result["relabeled_malignant"] = malignant;
  }
  if (!original_labels.empty())
    result["original_accuracy"] = relab::oracle_accuracy(original_labels, truth);
  result["discarded"] = outcomes.size() - new_labels.size();

  std::cout << result.dump(2) << "\n";
  if (!args.out.empty()) {
    std::ofstream out(resolve_out(args.out));
    if (!out) throw relab::DataError("cannot write audit file: " + args.out);
    out << result.dump(2) << "\n";
  }
  return 0;
}

struct ReportArgs {
  std::string in;
  std::string format = "markdown";
  std::string out;
};

std::string metric_cell(const json& v) {
  if (v.is_null()) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v.get<double>());
  return buf;
}

int cmd_report(const ReportArgs& args) {
  std::ifstream in(args.in);
  if (!in) throw relab::DataError("cannot open report file: " + args.in);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw relab::DataError(args.in + ": invalid JSON: " + std::string(e.what()));
  }
  if (!doc.is_array()) throw relab::DataError(args.in + ": expected an array of reports");

  std::string rendered;
  if (args.format == "json") {
    rendered = doc.dump(2) + "\n";
  } else if (args.format == "markdown") {
    std::ostringstream md;
    md << "# Experiment report\n\n";
    md << "| Experiment | Sensitivity | Specificity | Precision | Precision_b | Accuracy | F1 "
          "|\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : doc) {
      const auto& m = r.at("aggregate").at("micro");
      md << "| " << r.value("label", std::string("?")) << " | "
         << metric_cell(m.at("sensitivity")) << " | " << metric_cell(m.at("specificity"))
         << " | " << metric_cell(m.at("precision")) << " | " << metric_cell(m.at("precision_b"))
         << " | " << metric_cell(m.at("accuracy")) << " | " << metric_cell(m.at("f1")) << " |\n";
    }
    rendered = md.str();
  } else {
    throw CLI::ValidationError("--format must be json or markdown");
  }

  if (args.out.empty()) {
    std::cout << rendered;
  } else {
    std::ofstream out(resolve_out(args.out));
    if (!out) throw relab::DataError("cannot write report file: " + args.out);
    out << rendered;
    std::cout << "report -> " << resolve_out(args.out).string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Re-labeling toolkit for noisily annotated binary datasets"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* sc_gen = app.add_subcommand("generate", "Generate a synthetic noisy + reference dataset");
  sc_gen->add_option("--config", gen.config, "Generator config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sc_gen->add_option("--out-dir", gen.out_dir, "Output directory");
  sc_gen->add_option("--seed", gen.seed, "Override the config seed");

  AssignArgs assign;
  auto* sc_assign = app.add_subcommand("assign-labels", "Assign binary labels from rater scores");
  sc_assign->add_option("--data", assign.data, "Dataset CSV/JSON")->required()
      ->check(CLI::ExistingFile);
  sc_assign->add_option("--scenario", assign.scenario, "Scenario name (default A)");
  sc_assign->add_option("--scenarios", assign.scenarios_file, "Scenario table JSON")
      ->check(CLI::ExistingFile);
  sc_assign->add_option("--out-labels", assign.out_labels, "Labels CSV output");
  sc_assign->add_option("--out-excluded", assign.out_excluded, "Excluded ids CSV output");
  sc_assign->add_option("--seed", assign.seed, "Seed logged in output headers");

  TrainClassifierArgs tc;
  auto* sc_tc = app.add_subcommand("train-classifier", "Train the sigmoid classifier");
  sc_tc->add_option("--data", tc.data, "Dataset CSV/JSON")->required()->check(CLI::ExistingFile);
  sc_tc->add_option("--labels", tc.labels, "Labels CSV (default: verified labels)")
      ->check(CLI::ExistingFile);
  sc_tc->add_option("--net", tc.net_config, "Net config JSON")->check(CLI::ExistingFile);
  sc_tc->add_option("--train", tc.train_config, "Train config JSON")->check(CLI::ExistingFile);
  sc_tc->add_option("--out", tc.out, "Parameter JSON output");
  sc_tc->add_option("--log", tc.log, "Training log JSONL output");
  sc_tc->add_option("--seed", tc.seed, "Override config seeds");
  sc_tc->add_option("--epochs", tc.epochs, "Override config epochs");
  sc_tc->add_option("--learning-rate", tc.learning_rate, "Override config learning rate");

  TrainSiameseArgs ts;
  auto* sc_ts = app.add_subcommand("train-siamese", "Train the metric-learning comparator");
  sc_ts->add_option("--data", ts.data, "Reference dataset with verified labels")
      ->required()
      ->check(CLI::ExistingFile);
  sc_ts->add_option("--net", ts.net_config, "Net config JSON")->check(CLI::ExistingFile);
  sc_ts->add_option("--train", ts.train_config, "Train config JSON")->check(CLI::ExistingFile);
  sc_ts->add_option("--pairs", ts.pair_config, "Pair sampling config JSON")
      ->check(CLI::ExistingFile);
  sc_ts->add_option("--out", ts.out, "Parameter JSON output");
  sc_ts->add_option("--log", ts.log, "Training log JSONL output");
  sc_ts->add_option("--export-pairs", ts.export_pairs, "Audit CSV of one sampled pair list");
  sc_ts->add_option("--seed", ts.seed, "Override config seeds");
  sc_ts->add_option("--epochs", ts.epochs, "Override config epochs");
  sc_ts->add_option("--learning-rate", ts.learning_rate, "Override config learning rate");

  RelabelArgs rl;
  auto* sc_rl = app.add_subcommand("relabel", "Relabel queries with a trained model");
  sc_rl->add_option("--params", rl.params, "Trained parameter JSON")->required()
      ->check(CLI::ExistingFile);
  sc_rl->add_option("--strategy", rl.strategy, "comparator | annotator");
  sc_rl->add_option("--mode", rl.mode, "substitute | consensus");
  sc_rl->add_option("--queries", rl.queries, "Query dataset CSV/JSON")->required()
      ->check(CLI::ExistingFile);
  sc_rl->add_option("--references", rl.references, "Reference dataset (comparator)")
      ->check(CLI::ExistingFile);
  sc_rl->add_option("--original-labels", rl.original_labels, "Original labels CSV")
      ->check(CLI::ExistingFile);
  sc_rl->add_option("--top-fraction", rl.top_fraction, "Top partner fraction (default 0.20)");
  sc_rl->add_flag("--include-uncertain", rl.include_uncertain,
                  "Also relabel queries without an original label");
  sc_rl->add_option("--out", rl.out, "Outcomes CSV output");
  sc_rl->add_option("--histogram", rl.histogram, "Score-bin histogram JSON output");
  sc_rl->add_option("--seed", rl.seed, "Seed logged in output headers");

  RunArgs run;
  auto* sc_run = app.add_subcommand("run", "Run an experiment spec end to end");
  sc_run->add_option("--spec", run.spec, "Experiment spec JSON")->required()
      ->check(CLI::ExistingFile);
  sc_run->add_option("--out-dir", run.out_dir, "Output directory");
  sc_run->add_option("--sweep", run.sweep, "Comma-separated scenario names to sweep");

  AuditArgs audit;
  auto* sc_audit = app.add_subcommand("audit", "Score relabel outcomes against ground truth");
  sc_audit->add_option("--outcomes", audit.outcomes, "Outcomes CSV")->required()
      ->check(CLI::ExistingFile);
  sc_audit->add_option("--truth", audit.truth, "Ground truth CSV")->required()
      ->check(CLI::ExistingFile);
  sc_audit->add_option("--out", audit.out, "Audit JSON output");

  ReportArgs rep;
  auto* sc_rep = app.add_subcommand("report", "Re-render a saved report JSON");
  sc_rep->add_option("--in", rep.in, "Report JSON")->required()->check(CLI::ExistingFile);
  sc_rep->add_option("--format", rep.format, "json | markdown");
  sc_rep->add_option("--out", rep.out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sc_gen) return cmd_generate(gen);
    if (*sc_assign) return cmd_assign_labels(assign);
    if (*sc_tc) return cmd_train_classifier(tc);
    if (*sc_ts) return cmd_train_siamese(ts);
    if (*sc_rl) return cmd_relabel(rl);
    if (*sc_run) return cmd_run(run);
    if (*sc_audit) return cmd_audit(audit);
    if (*sc_rep) return cmd_report(rep);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const relab::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
