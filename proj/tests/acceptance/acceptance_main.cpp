// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Optional argv: criterion numbers to run (default: all).

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "relab/dataset.hpp"
#include "relab/error.hpp"
#include "relab/experiment.hpp"
#include "relab/metrics.hpp"
#include "relab/net.hpp"
#include "relab/relabel.hpp"
#include "relab/rng.hpp"
#include "relab/siamese.hpp"
#include "relab/synth.hpp"
#include "support/finite_diff.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace relab;
using namespace relab::testing;

namespace {

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message) {
  if (!condition) throw Failure(message);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

/// Runs fn over the seeds concurrently; results come back in seed order.
template <class Fn>
auto over_seeds(Fn fn) {
  using R = std::invoke_result_t<Fn, std::uint64_t>;
  std::vector<std::future<R>> futures;
  futures.reserve(kSeeds.size());
  for (const auto seed : kSeeds)
    futures.push_back(std::async(std::launch::async, fn, seed));
  std::vector<R> results;
  results.reserve(kSeeds.size());
  for (auto& f : futures) results.push_back(f.get());
  return results;
}

ExperimentData as_experiment_data(const GeneratedData& g) { return {g.noisy, g.reference}; }

ExperimentSpec default_spec(ExperimentCase kind, std::uint64_t seed) {
  ExperimentSpec spec;
  spec.kind = kind;
  spec.seeds = {seed};
  spec.folds = 5;
  return spec;  // net/train/pairs keep their library defaults
}

// ---------------------------------------------------------------------------
// 1. Metric arithmetic, exact.

std::string criterion_metric_arithmetic() {
  const auto m = compute_metrics({60, 36, 54, 30});
  const std::vector<std::pair<double, double>> expected = {
      {*m.sensitivity, 0.6667}, {*m.specificity, 0.6000}, {*m.precision, 0.6250},
      {*m.precision_b, 0.6429}, {*m.accuracy, 0.6333},    {*m.f1, 0.6452}};
  for (const auto& [actual, target] : expected)
    require(std::abs(actual - target) <= 5e-5,
            "metric " + fmt(actual) + " deviates from " + fmt(target));
  return "all six reference values reproduced within 5e-5";
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness over a randomized configuration matrix.

std::string criterion_gradients() {
  Rng rng(2024);
  int n_checked = 0;
  double worst = 0.0;
  const std::vector<std::vector<int>> hiddens{{}, {4}, {8, 4}};
  for (const auto activation : {Activation::Relu, Activation::Tanh}) {
    for (const auto& hidden : hiddens) {
      for (const int input_dim : {3, 6}) {
        for (const bool use_bce : {true, false}) {
          NetConfig cfg;
          cfg.input_dim = input_dim;
          cfg.hidden_dims = hidden;
          cfg.embed_dim = 4;
          cfg.activation = activation;
          cfg.head = use_bce ? Head::SigmoidClassifier : Head::Embedding;
          cfg.seed = rng.next_u64();
          const NetParams params = init_params(cfg);

          std::vector<double> analytic, numeric;
          if (use_bce) {
            std::vector<Example> batch;
            for (int i = 0; i < 3; ++i) {
              Example ex;
              ex.id = "g" + std::to_string(i);
              ex.label = i % 2;
              for (int d = 0; d < input_dim; ++d) ex.features.push_back(rng.normal());
              batch.push_back(std::move(ex));
            }
            analytic = flatten(bce_backprop(params, batch));
            numeric = numeric_gradient(
                params, [&](const NetParams& p) { return bce_batch_loss(p, batch); });
          } else {
            std::vector<double> xa, xb;
            for (int d = 0; d < input_dim; ++d) {
              xa.push_back(rng.normal());
              xb.push_back(rng.normal());
            }
            const bool same_class = n_checked % 2 == 0;
            const double margin = 6.0;  // hinge active on typical distances
            Gradients grads = zero_gradients(params);
            contrastive_pair_backprop(params, xa, xb, same_class, margin, grads);
            analytic = flatten(grads);
            numeric = numeric_gradient(params, [&](const NetParams& p) {
              return contrastive_loss(euclidean_distance(forward(p, xa), forward(p, xb)),
                                      same_class, margin);
            });
          }
          const auto check = compare_gradients(analytic, numeric, 1e-4);
          char detail[64];
          std::snprintf(detail, sizeof(detail), "gradient mismatch, max rel error %.3e",
                        check.max_rel_error);
          require(check.ok, detail);
          worst = std::max(worst, check.max_rel_error);
          ++n_checked;
        }
      }
    }
  }
  require(n_checked >= 20, "config matrix too small");
  char detail[96];
  std::snprintf(detail, sizeof(detail), "%d configurations, worst rel error %.3e", n_checked,
                worst);
  return detail;
}

// ---------------------------------------------------------------------------
// 3. Metric-learning separation on the synthetic reference set.

std::string criterion_siamese_separation() {
  const auto wins = over_seeds([](std::uint64_t seed) -> bool {
    GeneratorConfig gen;
    gen.seed = seed;
    const auto data = generate(gen);

    NetConfig net;
    net.head = Head::Embedding;
    net.seed = mix_seed(seed, 301);
    TrainConfig train_cfg;
    train_cfg.seed = mix_seed(seed, 302);
    ContrastiveConfig pair_cfg;
    pair_cfg.seed = mix_seed(seed, 303);
    const auto params = train_siamese(net, data.reference, train_cfg, pair_cfg);

    std::vector<std::vector<double>> embeds;
    embeds.reserve(data.reference.size());
    for (const auto& rec : data.reference) embeds.push_back(forward(params, rec.features));
    double within = 0.0, cross = 0.0;
    long n_within = 0, n_cross = 0;
    for (std::size_t i = 0; i < embeds.size(); ++i) {
      for (std::size_t j = i + 1; j < embeds.size(); ++j) {
        const double d = euclidean_distance(embeds[i], embeds[j]);
        if (*data.reference[i].verified_label == *data.reference[j].verified_label) {
          within += d;
          ++n_within;
        } else {
          cross += d;
          ++n_cross;
        }
      }
    }
    return within / static_cast<double>(n_within) < cross / static_cast<double>(n_cross);
  });
  const long n_wins = std::count(wins.begin(), wins.end(), true);
  require(n_wins >= 9, "separation held in only " + std::to_string(n_wins) + "/10 seeds");
  return "within-class < cross-class mean distance in " + std::to_string(n_wins) + "/10 seeds";
}

// ---------------------------------------------------------------------------
// 4 + 5. Scenario sweep: bias detection under A, declining false positives.

struct SweepRow {
  std::vector<long> fp;          // per scenario A..F
  double sens_a = 0.0;
  double spec_a = 0.0;
  double acc_a = 0.0;            // reused by criterion 6
};

std::vector<SweepRow> run_sweep() {
  return over_seeds([](std::uint64_t seed) -> SweepRow {
    GeneratorConfig gen;
    gen.seed = seed;
    const auto data = generate(gen);
    const auto exp_data = as_experiment_data(data);

    SweepRow row;
    for (const auto& scenario : default_scenarios()) {
      auto spec = default_spec(ExperimentCase::Case3CrossTest, seed);
      spec.scenario = scenario;
      const auto report = run_experiment(spec, exp_data);
      row.fp.push_back(report.pooled.fp);
      if (scenario.name == "A") {
        row.sens_a = *report.micro.sensitivity;
        row.spec_a = *report.micro.specificity;
        row.acc_a = *report.micro.accuracy;
      }
    }
    return row;
  });
}

const std::vector<SweepRow>& sweep_rows() {
  static const std::vector<SweepRow> rows = run_sweep();
  return rows;
}

std::string criterion_bias_detection() {
  double gap_sum = 0.0;
  for (const auto& row : sweep_rows()) gap_sum += row.sens_a - row.spec_a;
  const double mean_gap = gap_sum / static_cast<double>(kSeeds.size());
  require(mean_gap >= 0.15,
          "mean sensitivity-specificity gap " + fmt(mean_gap) + " below 0.15");
  return "scenario-A mean sensitivity-specificity gap " + fmt(mean_gap) + " (>= 0.15)";
}

std::string criterion_threshold_trend() {
  const auto& rows = sweep_rows();
  std::vector<double> mean_fp(default_scenarios().size(), 0.0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.fp.size(); ++i)
      mean_fp[i] += static_cast<double>(row.fp[i]) / static_cast<double>(rows.size());

  int inversions = 0;
  for (std::size_t i = 0; i + 1 < mean_fp.size(); ++i)
    if (mean_fp[i + 1] > mean_fp[i]) ++inversions;

  std::string series;
  for (const double v : mean_fp) series += (series.empty() ? "" : ", ") + fmt(v);
  require(inversions <= 1,
          "false-positive series has " + std::to_string(inversions) + " inversions: " + series);
  return "mean false positives A..F = [" + series + "], " + std::to_string(inversions) +
         " adjacent inversion(s)";
}

// ---------------------------------------------------------------------------
// 6 + 7. Re-labeling wins and the uncertain-inclusion gain.

struct RelabelRow {
  double relabel_acc = 0.0;
  double original_acc = 0.0;
  double retrain_acc_incl = 0.0;
  double retrain_acc_excl = 0.0;
};

std::vector<RelabelRow> run_relabel_rows() {
  return over_seeds([](std::uint64_t seed) -> RelabelRow {
    GeneratorConfig gen;
    gen.seed = seed;
    const auto data = generate(gen);
    const auto exp_data = as_experiment_data(data);
    const auto assignment = assign_labels(data.noisy, scenario_by_name("A"));

    RelabelRow row;
    {
      // Cross-fitted comparator relabels of the scenario-A-labeled queries,
      // scored against the generator's hidden truth.
      std::vector<SampleRecord> queries;
      for (const auto& rec : data.noisy)
        if (assignment.labels.count(rec.id)) queries.push_back(rec);

      RelabelConfig rc;
      rc.strategy = Strategy::Comparator;
      rc.mode = Mode::Substitute;
      CrossfitConfig cf;
      cf.k = 5;
      cf.seed = mix_seed(seed, 601);
      const auto result = crossfit_relabel(data.reference, queries, rc, cf, assignment.labels);

      std::map<std::string, int> new_labels;
      for (const auto& o : result.outcomes) new_labels[o.id] = *o.new_label;
      row.relabel_acc = oracle_accuracy(new_labels, data.ground_truth);
      row.original_acc = oracle_accuracy(assignment.labels, data.ground_truth);
    }

    const auto retrain_accuracy = [&](bool include_uncertain) {
      auto spec = default_spec(ExperimentCase::RelabelRetrain, seed);
      spec.scenario = scenario_by_name("A");
      RelabelConfig rc;
      rc.strategy = Strategy::Comparator;
      rc.mode = Mode::Substitute;
      rc.include_uncertain = include_uncertain;
      spec.relabel = rc;
      return *run_experiment(spec, exp_data).micro.accuracy;
    };
    row.retrain_acc_incl = retrain_accuracy(true);
    row.retrain_acc_excl = retrain_accuracy(false);
    return row;
  });
}

const std::vector<RelabelRow>& relabel_rows() {
  static const std::vector<RelabelRow> rows = run_relabel_rows();
  return rows;
}

std::string criterion_relabel_wins() {
  double label_gain = 0.0, retrain_gain = 0.0;
  const auto& rows = relabel_rows();
  const auto& sweep = sweep_rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    label_gain += rows[i].relabel_acc - rows[i].original_acc;
    retrain_gain += rows[i].retrain_acc_incl - sweep[i].acc_a;
  }
  label_gain /= static_cast<double>(rows.size());
  retrain_gain /= static_cast<double>(rows.size());
  require(label_gain >= 0.05, "mean relabel accuracy gain " + fmt(label_gain) + " below 0.05");
  require(retrain_gain >= 0.03, "mean retrain accuracy gain " + fmt(retrain_gain) + " below 0.03");
  return "label accuracy +" + fmt(label_gain) + " (>= 0.05), retrained reference accuracy +" +
         fmt(retrain_gain) + " (>= 0.03)";
}

std::string criterion_uncertain_inclusion() {
  double incl = 0.0, excl = 0.0;
  for (const auto& row : relabel_rows()) {
    incl += row.retrain_acc_incl;
    excl += row.retrain_acc_excl;
  }
  incl /= static_cast<double>(relabel_rows().size());
  excl /= static_cast<double>(relabel_rows().size());
  require(incl >= excl - 0.01, "including uncertain samples dropped accuracy from " + fmt(excl) +
                                   " to " + fmt(incl));
  return "mean accuracy incl-uncertain " + fmt(incl) + " vs excl " + fmt(excl) +
         " (>= excl - 0.01)";
}

// ---------------------------------------------------------------------------
// 8. Substitute / consensus mode contracts, exact.

std::string criterion_mode_contracts() {
  GeneratorConfig gen;
  gen.n_noisy = 300;
  gen.n_reference = 60;
  gen.seed = 808;
  const auto data = generate(gen);
  const auto assignment = assign_labels(data.noisy, scenario_by_name("A"));

  NetConfig net;
  net.input_dim = gen.feature_dim;
  net.head = Head::Embedding;
  net.seed = 1;
  const NetParams params = init_params(net);  // contracts hold for any frozen model

  long checked_runs = 0;
  for (const auto strategy : {Strategy::Comparator, Strategy::Annotator}) {
    NetConfig cls = net;
    cls.head = Head::SigmoidClassifier;
    const NetParams cls_params = init_params(cls);

    for (const bool include_uncertain : {false, true}) {
      std::vector<SampleRecord> queries;
      for (const auto& rec : data.noisy)
        if (assignment.labels.count(rec.id) || include_uncertain) queries.push_back(rec);

      RelabelConfig cfg;
      cfg.strategy = strategy;
      cfg.include_uncertain = include_uncertain;

      cfg.mode = Mode::Substitute;
      const auto substitute =
          strategy == Strategy::Comparator
              ? relabel_comparator(params, queries, data.reference, cfg, assignment.labels)
              : relabel_annotator(cls_params, queries, cfg, assignment.labels);
      require(substitute.size() == queries.size(), "substitute outcome count mismatch");
      for (const auto& o : substitute)
        require(o.new_label.has_value(), "substitute left '" + o.id + "' unlabeled");

      cfg.mode = Mode::Consensus;
      const auto consensus =
          strategy == Strategy::Comparator
              ? relabel_comparator(params, queries, data.reference, cfg, assignment.labels)
              : relabel_annotator(cls_params, queries, cfg, assignment.labels);
      long retained = 0, discarded = 0, disagreements = 0, uncertain_kept = 0;
      for (const auto& o : consensus) {
        if (o.new_label) {
          if (o.original_label) {
            require(*o.new_label == *o.original_label,
                    "consensus retained a changed label for '" + o.id + "'");
            ++retained;
          } else {
            ++uncertain_kept;  // include_uncertain substitute-fashion
          }
        } else {
          ++discarded;
        }
        if (o.agreed.has_value() && !*o.agreed) ++disagreements;
      }
      require(retained + uncertain_kept + discarded == static_cast<long>(queries.size()),
              "consensus outcome partition broken");
      require(discarded == disagreements, "data-reduction count " + std::to_string(discarded) +
                                              " != disagreements " +
                                              std::to_string(disagreements));
      ++checked_runs;
    }
  }
  return std::to_string(checked_runs) + " strategy/query-pool runs hold both mode contracts";
}

// ---------------------------------------------------------------------------
// 9. 1-NN oracle equivalence.

std::string criterion_knn_equivalence() {
  GeneratorConfig gen;
  gen.n_noisy = 100;
  gen.n_reference = 60;
  gen.seed = 909;
  const auto data = generate(gen);

  NetConfig net;
  net.head = Head::Embedding;
  net.seed = 11;
  TrainConfig train_cfg;
  train_cfg.epochs = 30;
  train_cfg.seed = 12;
  ContrastiveConfig pair_cfg;
  pair_cfg.seed = 13;
  const auto params = train_siamese(net, data.reference, train_cfg, pair_cfg);

  RelabelConfig cfg;
  cfg.top_fraction = 1.0 / static_cast<double>(data.reference.size());  // ceil -> top-1
  const auto outcomes = relabel_comparator(params, data.noisy, data.reference, cfg);
  for (std::size_t i = 0; i < data.noisy.size(); ++i) {
    const int oracle = brute_force_1nn_label(params, data.noisy[i], data.reference);
    require(*outcomes[i].new_label == oracle,
            "query '" + data.noisy[i].id + "' disagrees with the 1-NN oracle");
  }
  return "100 queries match the brute-force nearest-neighbor labeler exactly";
}

// ---------------------------------------------------------------------------
// 10. Byte-identical pipeline commands.

std::string criterion_determinism() {
  const char* cli = std::getenv("RELAB_CLI");
  require(cli != nullptr && *cli, "RELAB_CLI must point at the relab binary");

  TempDir tmp("relab_acc");
  const auto run = [&](const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    require(WIFEXITED(rc) && WEXITSTATUS(rc) == 0, "command failed: " + args);
  };
  const auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  const auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
  };

  write(tmp.file("gen.json"),
        R"({"n_noisy": 80, "n_reference": 24, "feature_dim": 4, "seed": 17})");
  write(tmp.file("train.json"), R"({"epochs": 5})");
  write(tmp.file("net.json"), R"({"hidden_dims": [6], "embed_dim": 3})");

  long files_compared = 0;
  const auto expect_identical = [&](const std::string& name, const std::filesystem::path& a,
                                    const std::filesystem::path& b) {
    const auto left = slurp(a);
    require(!left.empty(), name + ": empty output " + a.string());
    require(left == slurp(b), name + ": outputs differ between reruns");
    ++files_compared;
  };

  for (const char* round : {"x", "y"}) {
    const auto dir = tmp.file(round);
    std::filesystem::create_directories(dir);
    run("generate --config " + tmp.file("gen.json").string() + " --out-dir " + dir.string());
    run("assign-labels --data " + (dir / "noisy.csv").string() + " --out-labels " +
        (dir / "labels.csv").string() + " --out-excluded " + (dir / "excluded.csv").string());
    run("train-classifier --data " + (dir / "noisy.csv").string() + " --labels " +
        (dir / "labels.csv").string() + " --train " + tmp.file("train.json").string() +
        " --net " + tmp.file("net.json").string() + " --seed 3 --out " +
        (dir / "cls.json").string());
    run("train-siamese --data " + (dir / "reference.csv").string() + " --train " +
        tmp.file("train.json").string() + " --net " + tmp.file("net.json").string() +
        " --seed 4 --out " + (dir / "siam.json").string());
    run("relabel --params " + (dir / "siam.json").string() +
        " --strategy comparator --mode substitute --queries " + (dir / "noisy.csv").string() +
        " --references " + (dir / "reference.csv").string() + " --original-labels " +
        (dir / "labels.csv").string() + " --include-uncertain --out " +
        (dir / "outcomes.csv").string() + " --histogram " + (dir / "hist.json").string());
    write(dir / "spec.json",
          "{\"case\":\"case2_reference_cv\",\"seeds\":[1],\"folds\":4,"
          "\"net\":{\"hidden_dims\":[6]},\"train\":{\"epochs\":4},"
          "\"data\":{\"reference\":\"" +
              (dir / "reference.csv").string() + "\"}}");
    run("run --spec " + (dir / "spec.json").string() + " --out-dir " + (dir / "out").string());
    run("audit --outcomes " + (dir / "outcomes.csv").string() + " --truth " +
        (dir / "ground_truth.csv").string() + " --out " + (dir / "audit.json").string());
    run("report --in " + (dir / "out" / "report.json").string() + " --format markdown --out " +
        (dir / "report2.md").string());
  }

  const auto x = tmp.file("x");
  const auto y = tmp.file("y");
  for (const char* name :
       {"noisy.csv", "reference.csv", "ground_truth.csv", "labels.csv", "excluded.csv",
        "cls.json", "siam.json", "outcomes.csv", "hist.json", "audit.json", "report2.md"})
    expect_identical(name, x / name, y / name);
  expect_identical("report.json", x / "out" / "report.json", y / "out" / "report.json");
  expect_identical("report.md", x / "out" / "report.md", y / "out" / "report.md");

  return std::to_string(files_compared) + " output files byte-identical across reruns";
}

struct Criterion {
  int id;
  const char* name;
  std::function<std::string()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "metric arithmetic (reference confusion matrix)", criterion_metric_arithmetic},
      {2, "gradient correctness vs central finite differences", criterion_gradients},
      {3, "metric-learning separation on the reference set", criterion_siamese_separation},
      {4, "bias detection under scenario A", criterion_bias_detection},
      {5, "false-positive trend across the scenario sweep", criterion_threshold_trend},
      {6, "re-labeling beats the original scenario-A labels", criterion_relabel_wins},
      {7, "uncertain-inclusion does not hurt retraining", criterion_uncertain_inclusion},
      {8, "substitute/consensus mode contracts", criterion_mode_contracts},
      {9, "top-1 comparator equals brute-force 1-NN", criterion_knn_equivalence},
      {10, "byte-identical pipeline commands", criterion_determinism},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (!selected.empty() && !selected.count(criterion.id)) continue;
    try {
      const auto detail = criterion.fn();
      std::cout << "[PASS] criterion " << criterion.id << ": " << criterion.name << ": "
                << detail << "\n";
    } catch (const std::exception& e) {
      std::cout << "[FAIL] criterion " << criterion.id << ": " << criterion.name << ": "
                << e.what() << "\n";
      ++failures;
    }
    std::cout.flush();
  }
  if (failures > 0) {
    std::cout << failures << " criterion(s) failed\n";
    return 1;
  }
  std::cout << "all criteria passed\n";
  return 0;
}
