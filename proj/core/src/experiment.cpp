#include "relab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "config_json.hpp"
#include "json_util.hpp"
#include "relab/error.hpp"
#include "relab/rng.hpp"
#include "relab/synth.hpp"

namespace relab {

namespace {

const char* case_name(ExperimentCase c) {
  switch (c) {
    case ExperimentCase::Case1ScenarioTrain: return "case1_scenario_train";
    case ExperimentCase::Case2ReferenceCv: return "case2_reference_cv";
    case ExperimentCase::Case3CrossTest: return "case3_cross_test";
    case ExperimentCase::Case3FineTune: return "case3_fine_tune";
    case ExperimentCase::RelabelRetrain: return "relabel_retrain";
  }
  return "?";
}

ExperimentCase case_from(const std::string& s, const std::string& where) {
  if (s == "case1_scenario_train") return ExperimentCase::Case1ScenarioTrain;
  if (s == "case2_reference_cv") return ExperimentCase::Case2ReferenceCv;
  if (s == "case3_cross_test") return ExperimentCase::Case3CrossTest;
  if (s == "case3_fine_tune") return ExperimentCase::Case3FineTune;
  if (s == "relabel_retrain") return ExperimentCase::RelabelRetrain;
  throw DataError(where + ": unknown case '" + s +
                  "' (case1_scenario_train, case2_reference_cv, case3_cross_test, "
                  "case3_fine_tune, relabel_retrain)");
}

void assert_disjoint(const std::vector<Example>& train, const std::vector<Example>& test) {
  std::set<std::string> train_ids;
  for (const auto& e : train) train_ids.insert(e.id);
  for (const auto& e : test)
    if (train_ids.count(e.id))
      throw std::logic_error("harness invariant violated: id '" + e.id +
                             "' in both train and test split");
}

ConfusionMatrix evaluate_classifier(const NetParams& params, const std::vector<Example>& test) {
  ConfusionMatrix cm;
  for (const auto& ex : test) {
    const double p = forward(params, ex.features)[0];
    tally(cm, ex.label, p > 0.5 ? 1 : 0);
  }
  return cm;
}

struct SeedContext {
  NetConfig net;
  TrainConfig train;
  ContrastiveConfig pairs;
  std::uint64_t fold_seed = 0;
  std::uint64_t crossfit_seed = 0;
};

SeedContext derive_context(const ExperimentSpec& spec, std::uint64_t seed) {
  SeedContext ctx;
  ctx.net = spec.net;
  ctx.net.seed = mix_seed(seed, 101);
  ctx.train = spec.train;
  ctx.train.seed = mix_seed(seed, 102);
  ctx.pairs = spec.pairs;
  ctx.pairs.seed = mix_seed(seed, 103);
  ctx.fold_seed = mix_seed(seed, 104);
  ctx.crossfit_seed = mix_seed(seed, 105);
  return ctx;
}

/// Stratified CV of a classifier over one labeled example set.
std::vector<FoldResult> run_cv(const std::vector<Example>& examples,
                               const std::map<std::string, int>& labels, int k,
                               const SeedContext& ctx, std::uint64_t seed) {
  const FoldSplit split = stratified_kfold(labels, k, ctx.fold_seed);
  std::vector<FoldResult> results;
  for (int fold = 0; fold < k; ++fold) {
    std::vector<Example> train_exs, test_exs;
    for (const auto& ex : examples)
      (split.assignments.at(ex.id) == fold ? test_exs : train_exs).push_back(ex);
    assert_disjoint(train_exs, test_exs);

    NetConfig net = ctx.net;
    net.head = Head::SigmoidClassifier;
    net.seed = mix_seed(ctx.net.seed, static_cast<std::uint64_t>(fold));
    TrainConfig tc = ctx.train;
    tc.seed = mix_seed(ctx.train.seed, static_cast<std::uint64_t>(fold));

    const NetParams model = train(tc, net, train_exs);
    FoldResult r;
    r.seed = seed;
    r.fold = fold;
    r.cm = evaluate_classifier(model, test_exs);
    r.metrics = compute_metrics(r.cm);
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<FoldResult> run_case_seed(const ExperimentSpec& spec, const ExperimentData& data,
                                      std::uint64_t seed, std::vector<RelabelRunStats>* stats) {
  const SeedContext ctx = derive_context(spec, seed);

  switch (spec.kind) {
    case ExperimentCase::Case1ScenarioTrain: {
      const auto assignment = assign_labels(data.noisy, *spec.scenario);
      return run_cv(make_examples(data.noisy, assignment.labels), assignment.labels, spec.folds,
                    ctx, seed);
    }
    case ExperimentCase::Case2ReferenceCv: {
      const auto labels = make_label_map(data.reference);
      return run_cv(make_examples_verified(data.reference), labels, spec.folds, ctx, seed);
    }
    case ExperimentCase::Case3CrossTest: {
      const auto assignment = assign_labels(data.noisy, *spec.scenario);
      const auto train_exs = make_examples(data.noisy, assignment.labels);
      const auto test_exs = make_examples_verified(data.reference);
      assert_disjoint(train_exs, test_exs);
      NetConfig net = ctx.net;
      net.head = Head::SigmoidClassifier;
      const NetParams model = train(ctx.train, net, train_exs);
      FoldResult r;
      r.seed = seed;
      r.fold = 0;
      r.cm = evaluate_classifier(model, test_exs);
      r.metrics = compute_metrics(r.cm);
      return {r};
    }
    case ExperimentCase::Case3FineTune: {
      const auto assignment = assign_labels(data.noisy, *spec.scenario);
      const auto pretrain_exs = make_examples(data.noisy, assignment.labels);
      NetConfig net = ctx.net;
      net.head = Head::SigmoidClassifier;
      const NetParams base = train(ctx.train, net, pretrain_exs);

      const auto ref_labels = make_label_map(data.reference);
      const auto ref_exs = make_examples_verified(data.reference);
      const FoldSplit split = stratified_kfold(ref_labels, spec.folds, ctx.fold_seed);
      std::vector<FoldResult> results;
      for (int fold = 0; fold < spec.folds; ++fold) {
        std::vector<Example> tune_exs, test_exs;
        for (const auto& ex : ref_exs)
          (split.assignments.at(ex.id) == fold ? test_exs : tune_exs).push_back(ex);
        assert_disjoint(tune_exs, test_exs);
        TrainConfig tc = ctx.train;
        tc.seed = mix_seed(ctx.train.seed, static_cast<std::uint64_t>(fold));
        const NetParams tuned = fine_tune(base, tc, tune_exs);
        FoldResult r;
        r.seed = seed;
        r.fold = fold;
        r.cm = evaluate_classifier(tuned, test_exs);
        r.metrics = compute_metrics(r.cm);
        results.push_back(std::move(r));
      }
      return results;
    }
    case ExperimentCase::RelabelRetrain: {
      const auto assignment = assign_labels(data.noisy, *spec.scenario);
      const RelabelConfig& rc = *spec.relabel;

      std::vector<SampleRecord> queries;
      for (const auto& rec : data.noisy)
        if (assignment.labels.count(rec.id) || rc.include_uncertain) queries.push_back(rec);

      CrossfitConfig cf;
      cf.k = spec.folds;
      cf.seed = ctx.crossfit_seed;
      cf.net = ctx.net;
      cf.train = ctx.train;
      cf.pairs = ctx.pairs;
      const CrossfitResult res =
          crossfit_relabel(data.reference, queries, rc, cf, assignment.labels);

      if (stats) {
        RelabelRunStats s;
        s.seed = seed;
        s.queries = static_cast<long>(queries.size());
        for (const auto& o : res.outcomes)
          o.new_label ? ++s.relabeled : ++s.discarded;
        stats->push_back(s);
      }

      std::map<std::string, const SampleRecord*> by_id;
      for (const auto& rec : queries) by_id[rec.id] = &rec;
      const auto ref_exs = make_examples_verified(data.reference);

      // Every query carries exactly one cross-fitted label; the retrained
      // model uses them all and is scored fold by fold on the reference set.
      std::vector<Example> train_exs;
      for (const auto& o : res.outcomes) {
        if (!o.new_label) continue;
        train_exs.push_back({o.id, by_id.at(o.id)->features, *o.new_label});
      }
      if (train_exs.empty())
        throw DataError("relabel_retrain: no relabeled samples to train on");

      std::vector<FoldResult> results;
      for (int fold = 0; fold < spec.folds; ++fold) {
        std::vector<Example> test_exs;
        for (const auto& ex : ref_exs)
          if (res.reference_folds.assignments.at(ex.id) == fold) test_exs.push_back(ex);
        assert_disjoint(train_exs, test_exs);

        NetConfig net = ctx.net;
        net.head = Head::SigmoidClassifier;
        net.seed = mix_seed(ctx.net.seed, 500 + static_cast<std::uint64_t>(fold));
        TrainConfig tc = ctx.train;
        tc.seed = mix_seed(ctx.train.seed, 500 + static_cast<std::uint64_t>(fold));
        const NetParams model = train(tc, net, train_exs);
        FoldResult r;
        r.seed = seed;
        r.fold = fold;
        r.cm = evaluate_classifier(model, test_exs);
        r.metrics = compute_metrics(r.cm);
        results.push_back(std::move(r));
      }
      return results;
    }
  }
  throw std::logic_error("unreachable experiment case");
}

nlohmann::json metrics_to_json(const MetricsReport& m) {
  const auto field = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"sensitivity", field(m.sensitivity)}, {"specificity", field(m.specificity)},
          {"precision", field(m.precision)},     {"precision_b", field(m.precision_b)},
          {"accuracy", field(m.accuracy)},       {"f1", field(m.f1)}};
}

nlohmann::json cm_to_json(const ConfusionMatrix& cm) {
  return {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
}

nlohmann::json spec_to_json(const ExperimentSpec& spec) {
  nlohmann::json j;
  j["case"] = case_name(spec.kind);
  j["scenario"] = spec.scenario ? detail::scenario_to_json(*spec.scenario) : nlohmann::json(nullptr);
  j["relabel"] = spec.relabel ? detail::relabel_config_to_json(*spec.relabel) : nlohmann::json(nullptr);
  j["seeds"] = spec.seeds;
  j["folds"] = spec.folds;
  j["net"] = detail::net_config_to_json(spec.net);
  j["train"] = detail::train_config_to_json(spec.train);
  j["pairs"] = detail::contrastive_config_to_json(spec.pairs);
  return j;
}

nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["label"] = report.label;
  j["spec"] = spec_to_json(report.spec);
  j["per_seed"] = nlohmann::json::array();
  for (const auto& fr : report.per_seed)
    j["per_seed"].push_back({{"seed", fr.seed},
                             {"fold", fr.fold},
                             {"cm", cm_to_json(fr.cm)},
                             {"metrics", metrics_to_json(fr.metrics)}});
  j["aggregate"] = {{"pooled_cm", cm_to_json(report.pooled)},
                    {"micro", metrics_to_json(report.micro)},
                    {"macro_mean", metrics_to_json(report.macro_mean)},
                    {"macro_std", metrics_to_json(report.macro_std)}};
  if (!report.relabel_stats.empty()) {
    j["relabel_stats"] = nlohmann::json::array();
    for (const auto& s : report.relabel_stats)
      j["relabel_stats"].push_back({{"seed", s.seed},
                                    {"queries", s.queries},
                                    {"relabeled", s.relabeled},
                                    {"discarded", s.discarded}});
  }
  return j;
}

std::string format_metric(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw DataError("experiment: at least one seed required");
  if (folds < 2) throw DataError("experiment: folds must be at least 2");
  const bool needs_scenario = kind == ExperimentCase::Case1ScenarioTrain ||
                              kind == ExperimentCase::Case3CrossTest ||
                              kind == ExperimentCase::Case3FineTune ||
                              kind == ExperimentCase::RelabelRetrain;
  if (needs_scenario && !scenario)
    throw DataError(std::string("experiment: case ") + case_name(kind) + " requires a scenario");
  if (scenario) scenario->validate();
  if (kind == ExperimentCase::RelabelRetrain && !relabel)
    throw DataError("experiment: relabel_retrain requires a relabel config");
  if (relabel) relabel->validate();
  train.validate();
  pairs.validate();
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentData& data) {
  spec.validate();
  {
    std::set<std::string> noisy_ids;
    for (const auto& rec : data.noisy) noisy_ids.insert(rec.id);
    for (const auto& rec : data.reference)
      if (noisy_ids.count(rec.id))
        throw DataError("id '" + rec.id + "' appears in both the noisy and reference datasets");
  }

  ExperimentReport report;
  report.spec = spec;
  report.label = case_name(spec.kind);
  if (spec.scenario) report.label += " scenario " + spec.scenario->name;
  if (spec.relabel) {
    report.label += spec.relabel->strategy == Strategy::Comparator ? " comparator" : " annotator";
    report.label += spec.relabel->mode == Mode::Substitute ? "/substitute" : "/consensus";
    report.label += spec.relabel->include_uncertain ? " incl-uncertain" : " excl-uncertain";
  }

  for (const std::uint64_t seed : spec.seeds) {
    const auto fold_results = run_case_seed(spec, data, seed, &report.relabel_stats);
    ConfusionMatrix seed_cm;
    for (const auto& fr : fold_results) {
      seed_cm += fr.cm;
      report.pooled += fr.cm;
      report.per_seed.push_back(fr);
    }
    report.per_seed_micro.push_back(compute_metrics(seed_cm));
  }
  report.micro = compute_metrics(report.pooled);
  report.macro_mean = metrics_mean(report.per_seed_micro);
  report.macro_std = metrics_stddev(report.per_seed_micro);
  return report;
}

std::vector<ExperimentReport> scenario_sweep(const ExperimentSpec& base,
                                             const ExperimentData& data,
                                             const std::vector<Scenario>& scenarios) {
  if (scenarios.empty()) throw DataError("scenario sweep: at least one scenario required");
  std::vector<ExperimentReport> reports;
  reports.reserve(scenarios.size());
  for (const auto& scenario : scenarios) {
    ExperimentSpec spec = base;
    spec.scenario = scenario;
    reports.push_back(run_experiment(spec, data));
  }
  return reports;
}

std::string render_report(const std::vector<ExperimentReport>& reports, ReportFormat format) {
  if (format == ReportFormat::Json) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& r : reports) doc.push_back(report_to_json(r));
    return doc.dump(2) + "\n";
  }

  std::ostringstream out;
  out << "# Experiment report\n\n";
  out << "| Experiment | Sensitivity | Specificity | Precision | Precision_b | Accuracy | F1 |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    out << "| " << r.label << " | " << format_metric(r.micro.sensitivity) << " | "
        << format_metric(r.micro.specificity) << " | " << format_metric(r.micro.precision)
        << " | " << format_metric(r.micro.precision_b) << " | "
        << format_metric(r.micro.accuracy) << " | " << format_metric(r.micro.f1) << " |\n";
  }
  for (const auto& r : reports) {
    out << "\n## " << r.label << "\n\n";
    out << "Pooled confusion matrix: tp=" << r.pooled.tp << " fp=" << r.pooled.fp
        << " tn=" << r.pooled.tn << " fn=" << r.pooled.fn << "\n\n";
    if (!r.relabel_stats.empty()) {
      out << "| Seed | Queries | Relabeled | Discarded |\n|---|---|---|---|\n";
      for (const auto& s : r.relabel_stats)
        out << "| " << s.seed << " | " << s.queries << " | " << s.relabeled << " | "
            << s.discarded << " |\n";
      out << "\n";
    }
    out << "| Seed | Fold | tp | fp | tn | fn | Accuracy |\n|---|---|---|---|---|---|---|\n";
    for (const auto& fr : r.per_seed)
      out << "| " << fr.seed << " | " << fr.fold << " | " << fr.cm.tp << " | " << fr.cm.fp
          << " | " << fr.cm.tn << " | " << fr.cm.fn << " | " << format_metric(fr.metrics.accuracy)
          << " |\n";
  }
  return out.str();
}

void write_report(const std::vector<ExperimentReport>& reports, const std::filesystem::path& path,
                  ReportFormat format) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report file: " + path.string());
  out << render_report(reports, format);
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  const auto doc = detail::read_json_file(path, "experiment spec");
  const std::string where = path.string();
  detail::check_known_keys(doc,
                           {"case", "scenario", "scenarios_file", "relabel", "seeds", "folds",
                            "net", "train", "pairs", "data"},
                           where);
  if (!doc.contains("case")) throw DataError(where + ": missing 'case'");

  ExperimentSpec spec;
  spec.kind = case_from(doc["case"].get<std::string>(), where);
  if (doc.contains("scenario") && !doc["scenario"].is_null()) {
    if (doc["scenario"].is_string()) {
      const auto table = doc.contains("scenarios_file")
                             ? load_scenarios(doc["scenarios_file"].get<std::string>())
                             : default_scenarios();
      spec.scenario = scenario_by_name(doc["scenario"].get<std::string>(), table);
    } else {
      spec.scenario = detail::scenario_from_json(doc["scenario"], where + ": scenario");
    }
  }
  if (doc.contains("relabel") && !doc["relabel"].is_null())
    spec.relabel = detail::relabel_config_from_json(doc["relabel"], where + ": relabel");
  if (doc.contains("seeds")) spec.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  spec.folds = doc.value("folds", spec.folds);
  if (doc.contains("net")) spec.net = detail::net_config_from_json(doc["net"], where + ": net");
  if (doc.contains("train"))
    spec.train = detail::train_config_from_json(doc["train"], where + ": train");
  if (doc.contains("pairs"))
    spec.pairs = detail::contrastive_config_from_json(doc["pairs"], where + ": pairs");
  spec.validate();
  return spec;
}

}  // namespace relab
