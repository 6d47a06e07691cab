#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "support/tmpdir.hpp"

using relab::testing::TempDir;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

std::string cli_path() {
  const char* p = std::getenv("RELAB_CLI");
  REQUIRE_MESSAGE(p != nullptr, "RELAB_CLI must point at the relab binary");
  return p;
}

CliResult run_cli(const std::string& args, const TempDir& tmp) {
  static int run_id = 0;
  const auto capture = tmp.file("cli_out_" + std::to_string(run_id++) + ".txt");
  const std::string cmd = cli_path() + " " + args + " > " + capture.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(capture);
  std::stringstream buf;
  buf << in.rdbuf();
  result.output = buf.str();
  return result;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kGenConfig = R"({"n_noisy": 60, "n_reference": 24, "feature_dim": 4,
  "class_separation": 3.0, "seed": 11})";

}  // namespace

TEST_CASE("generate writes three files and is byte-identical across reruns") {
  TempDir tmp;
  write_file(tmp.file("gen.json"), kGenConfig);

  const auto first = run_cli("generate --config " + tmp.file("gen.json").string() +
                                 " --out-dir " + tmp.file("run1").string(),
                             tmp);
  CAPTURE(first.output);
  REQUIRE(first.exit_code == 0);
  for (const char* name : {"noisy.csv", "reference.csv", "ground_truth.csv"})
    CHECK(std::filesystem::exists(tmp.file("run1") / name));

  const auto second = run_cli("generate --config " + tmp.file("gen.json").string() +
                                  " --out-dir " + tmp.file("run2").string(),
                              tmp);
  REQUIRE(second.exit_code == 0);
  for (const char* name : {"noisy.csv", "reference.csv", "ground_truth.csv"})
    CHECK(slurp(tmp.file("run1") / name) == slurp(tmp.file("run2") / name));

  // Seed is logged in the file header.
  CHECK(slurp(tmp.file("run1") / "noisy.csv").rfind("# seed=11", 0) == 0);
}

TEST_CASE("missing config file fails naming the path") {
  TempDir tmp;
  const auto result = run_cli("generate --config " + tmp.file("nope.json").string(), tmp);
  CHECK(result.exit_code != 0);
  CHECK(result.output.find("nope.json") != std::string::npos);
}

TEST_CASE("assign-labels writes labels and excluded ids") {
  TempDir tmp;
  write_file(tmp.file("gen.json"), kGenConfig);
  REQUIRE(run_cli("generate --config " + tmp.file("gen.json").string() + " --out-dir " +
                      tmp.path().string(),
                  tmp)
              .exit_code == 0);

  const auto result = run_cli("assign-labels --data " + tmp.file("noisy.csv").string() +
                                  " --scenario A --out-labels " + tmp.file("labels.csv").string() +
                                  " --out-excluded " + tmp.file("excluded.csv").string(),
                              tmp);
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);
  CHECK(std::filesystem::exists(tmp.file("labels.csv")));
  CHECK(std::filesystem::exists(tmp.file("excluded.csv")));
  CHECK(result.output.find("benign") != std::string::npos);

  const auto invalid = run_cli("assign-labels --data " + tmp.file("noisy.csv").string() +
                                   " --scenario Z --out-labels " + tmp.file("x.csv").string() +
                                   " --out-excluded " + tmp.file("y.csv").string(),
                               tmp);
  CHECK(invalid.exit_code == 2);
  CHECK(invalid.output.find("A, B, C, D, E, F") != std::string::npos);
}

TEST_CASE("malformed dataset exits with the data error code") {
  TempDir tmp;
  write_file(tmp.file("bad.csv"), "id,f0,scores,label\nx,0.5,7,\n");
  write_file(tmp.file("labels.csv"), "id,label\nx,1\n");
  const auto result = run_cli("assign-labels --data " + tmp.file("bad.csv").string() +
                                  " --out-labels " + tmp.file("l.csv").string() +
                                  " --out-excluded " + tmp.file("e.csv").string(),
                              tmp);
  CHECK(result.exit_code == 2);
  CHECK(result.output.find("out of range") != std::string::npos);
}

TEST_CASE("train, relabel, audit pipeline round trip" * doctest::timeout(300)) {
  TempDir tmp;
  write_file(tmp.file("gen.json"), kGenConfig);
  write_file(tmp.file("train.json"), R"({"epochs": 6})");
  write_file(tmp.file("net.json"), R"({"hidden_dims": [6], "embed_dim": 3})");
  REQUIRE(run_cli("generate --config " + tmp.file("gen.json").string() + " --out-dir " +
                      tmp.path().string(),
                  tmp)
              .exit_code == 0);
  REQUIRE(run_cli("assign-labels --data " + tmp.file("noisy.csv").string() + " --out-labels " +
                      tmp.file("labels.csv").string() + " --out-excluded " +
                      tmp.file("excluded.csv").string(),
                  tmp)
              .exit_code == 0);

  const auto trained = run_cli(
      "train-siamese --data " + tmp.file("reference.csv").string() + " --net " +
          tmp.file("net.json").string() + " --train " + tmp.file("train.json").string() +
          " --seed 5 --out " + tmp.file("siamese.json").string() + " --log " +
          tmp.file("log.jsonl").string() + " --export-pairs " + tmp.file("pairs.csv").string(),
      tmp);
  CAPTURE(trained.output);
  REQUIRE(trained.exit_code == 0);
  CHECK(std::filesystem::exists(tmp.file("pairs.csv")));
  CHECK(std::filesystem::exists(tmp.file("log.jsonl")));

  const auto relabeled = run_cli(
      "relabel --params " + tmp.file("siamese.json").string() +
          " --strategy comparator --mode substitute --queries " + tmp.file("noisy.csv").string() +
          " --references " + tmp.file("reference.csv").string() + " --original-labels " +
          tmp.file("labels.csv").string() + " --include-uncertain --out " +
          tmp.file("outcomes.csv").string() + " --histogram " + tmp.file("hist.json").string(),
      tmp);
  CAPTURE(relabeled.output);
  REQUIRE(relabeled.exit_code == 0);
  CHECK(std::filesystem::exists(tmp.file("hist.json")));

  const auto audit = run_cli("audit --outcomes " + tmp.file("outcomes.csv").string() +
                                 " --truth " + tmp.file("ground_truth.csv").string() + " --out " +
                                 tmp.file("audit.json").string(),
                             tmp);
  CAPTURE(audit.output);
  REQUIRE(audit.exit_code == 0);
  CHECK(audit.output.find("relabel_accuracy") != std::string::npos);
  CHECK(audit.output.find("original_accuracy") != std::string::npos);
  CHECK(std::filesystem::exists(tmp.file("audit.json")));

  // Classifier path: same data, annotator relabel without references.
  const auto cls = run_cli("train-classifier --data " + tmp.file("noisy.csv").string() +
                               " --labels " + tmp.file("labels.csv").string() + " --train " +
                               tmp.file("train.json").string() + " --seed 5 --out " +
                               tmp.file("cls.json").string(),
                           tmp);
  CAPTURE(cls.output);
  REQUIRE(cls.exit_code == 0);
  const auto annotated = run_cli(
      "relabel --params " + tmp.file("cls.json").string() +
          " --strategy annotator --mode consensus --queries " + tmp.file("noisy.csv").string() +
          " --original-labels " + tmp.file("labels.csv").string() + " --out " +
          tmp.file("outcomes2.csv").string(),
      tmp);
  CAPTURE(annotated.output);
  REQUIRE(annotated.exit_code == 0);
  CHECK(annotated.output.find("discarded") != std::string::npos);
}

TEST_CASE("run executes a case2 spec and writes reports" * doctest::timeout(300)) {
  TempDir tmp;
  write_file(tmp.file("gen.json"), kGenConfig);
  REQUIRE(run_cli("generate --config " + tmp.file("gen.json").string() + " --out-dir " +
                      tmp.path().string(),
                  tmp)
              .exit_code == 0);
  write_file(tmp.file("spec.json"),
             "{\"case\":\"case2_reference_cv\",\"seeds\":[1],\"folds\":4,"
             "\"net\":{\"hidden_dims\":[6]},\"train\":{\"epochs\":4},"
             "\"data\":{\"reference\":\"" +
                 tmp.file("reference.csv").string() + "\"}}");

  const auto result = run_cli("run --spec " + tmp.file("spec.json").string() + " --out-dir " +
                                  tmp.file("out").string(),
                              tmp);
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);
  CHECK(std::filesystem::exists(tmp.file("out") / "report.json"));
  CHECK(std::filesystem::exists(tmp.file("out") / "report.md"));

  const auto report = slurp(tmp.file("out") / "report.json");
  CHECK(report.find("\"fold\": 3") != std::string::npos);
  CHECK(report.find("case2_reference_cv") != std::string::npos);

  // report re-render from the saved json
  const auto rerender = run_cli("report --in " + (tmp.file("out") / "report.json").string() +
                                    " --format markdown --out " + tmp.file("again.md").string(),
                                tmp);
  REQUIRE(rerender.exit_code == 0);
  CHECK(slurp(tmp.file("again.md")).find("| case2_reference_cv") != std::string::npos);
}

TEST_CASE("relabel_retrain run also writes outcomes and histogram" * doctest::timeout(300)) {
  TempDir tmp;
  write_file(tmp.file("gen.json"), kGenConfig);
  REQUIRE(run_cli("generate --config " + tmp.file("gen.json").string() + " --out-dir " +
                      tmp.path().string(),
                  tmp)
              .exit_code == 0);
  write_file(tmp.file("spec.json"),
             "{\"case\":\"relabel_retrain\",\"scenario\":\"A\","
             "\"relabel\":{\"strategy\":\"comparator\",\"mode\":\"substitute\","
             "\"include_uncertain\":true},"
             "\"seeds\":[1],\"folds\":3,"
             "\"net\":{\"hidden_dims\":[6],\"embed_dim\":3},\"train\":{\"epochs\":4},"
             "\"data\":{\"noisy\":\"" +
                 tmp.file("noisy.csv").string() + "\",\"reference\":\"" +
                 tmp.file("reference.csv").string() + "\"}}");

  const auto result = run_cli("run --spec " + tmp.file("spec.json").string() + " --out-dir " +
                                  tmp.file("out").string(),
                              tmp);
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);
  for (const char* name : {"report.json", "report.md", "outcomes.csv", "histogram.json"})
    CHECK(std::filesystem::exists(tmp.file("out") / name));
  CHECK(slurp(tmp.file("out") / "report.json").find("relabel_stats") != std::string::npos);

  // Every noisy sample got exactly one final-deployment outcome.
  std::ifstream in(tmp.file("out") / "outcomes.csv");
  std::string line;
  long rows = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    ++rows;
  }
  CHECK(rows == 60);
}

TEST_CASE("audit scores hand-written outcomes exactly") {
  TempDir tmp;
  write_file(tmp.file("outcomes.csv"),
             "id,new_label,vote_mean,original_label,agreed,avg_score\n"
             "a,1,0.9,0,0,4.5\n"
             "b,0,0.1,0,1,1.5\n"
             "c,1,0.8,,,3.0\n");
  write_file(tmp.file("truth.csv"), "id,true_label\na,1\nb,0\nc,1\n");

  const auto result = run_cli("audit --outcomes " + tmp.file("outcomes.csv").string() +
                                  " --truth " + tmp.file("truth.csv").string(),
                              tmp);
  CAPTURE(result.output);
  REQUIRE(result.exit_code == 0);
  // New labels match the truth everywhere; originals match on 1 of 2.
  CHECK(result.output.find("\"relabel_accuracy\": 1.0") != std::string::npos);
  CHECK(result.output.find("\"original_accuracy\": 0.5") != std::string::npos);
  // Counts agree with the label distribution of the new labels.
  CHECK(result.output.find("\"relabeled_benign\": 1") != std::string::npos);
  CHECK(result.output.find("\"relabeled_malignant\": 2") != std::string::npos);

  // Ids absent from the ground truth are a data error.
  write_file(tmp.file("other.csv"), "id,true_label\nzz,1\n");
  const auto mismatch = run_cli("audit --outcomes " + tmp.file("outcomes.csv").string() +
                                    " --truth " + tmp.file("other.csv").string(),
                                tmp);
  CHECK(mismatch.exit_code == 2);
}

TEST_CASE("usage errors exit with code 1") {
  TempDir tmp;
  CHECK(run_cli("frobnicate", tmp).exit_code == 1);
  CHECK(run_cli("relabel --strategy comparator", tmp).exit_code == 1);  // missing required
}
