#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "uml/cli.hpp"
#include "uml/io.hpp"
#include "uml/neural.hpp"
#include "uml/rng.hpp"
#include "uml/theorems.hpp"

using namespace uml;
using namespace uml::cli;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("uml_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { write_text_file(dir_ / name, text); }
  Json report(const std::string& outdir) const { return Json::parse(read_text_file(dir_ / outdir / "report.json")); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, MalformedConfigExitsOneWithoutOutput) {
  write("bad.json", "{ not json");
  EXPECT_EQ(run({"verify-theorems", "--config", path("bad.json"), "--outdir", path("out")}), kValidationError);
  EXPECT_FALSE(fs::exists(path("out")));
}

TEST_F(CliTest, UnknownKeyTypeMismatchAndSchemaVersionRejected) {
  write("unknown.json", R"({"configz": 5})");
  EXPECT_EQ(run({"verify-theorems", "--config", path("unknown.json"), "--outdir", path("out")}), kValidationError);
  write("type.json", R"({"configs": "many"})");
  EXPECT_EQ(run({"verify-theorems", "--config", path("type.json"), "--outdir", path("out")}), kValidationError);
  write("schema.json", R"({"schema_version": 2})");
  EXPECT_EQ(run({"verify-theorems", "--config", path("schema.json"), "--outdir", path("out")}), kValidationError);
  write("nested.json", R"({"task": {"clases": 3}})");
  EXPECT_EQ(run({"train-sup", "--config", path("nested.json"), "--outdir", path("out")}), kValidationError);
  EXPECT_FALSE(fs::exists(path("out")));
  EXPECT_THROW(resolve_config("train-sup", Json{{"lambda", "one"}}), ConfigError);
  EXPECT_THROW(default_config("no-such"), ConfigError);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), kValidationError);
  EXPECT_EQ(run({"frobnicate"}), kValidationError);
  EXPECT_EQ(run({"verify-theorems", "--workers", "0"}), kValidationError);
  EXPECT_EQ(run({"--config", path("missing.json"), "verify-theorems", "--outdir", path("out")}), kValidationError);
  EXPECT_EQ(run({"--replay", path("missing.json")}), kValidationError);
  EXPECT_EQ(run({"--version"}), kOk);
}

TEST_F(CliTest, DefaultsCoverEverySubcommand) {
  for (const auto& sub : subcommands()) {
    const Json c = default_config(sub);
    EXPECT_EQ(c["schema_version"], kSchemaVersion) << sub;
    EXPECT_EQ(resolve_config(sub, Json::object()), c) << sub;
  }
}

TEST_F(CliTest, VerifyTheoremsWritesReportAndCsv) {
  ASSERT_EQ(run({"verify-theorems", "--configs", "20", "--outdir", path("out"), "--seed", "4"}), kOk);
  const Json r = report("out");
  EXPECT_EQ(r["subcommand"], "verify-theorems");
  EXPECT_EQ(r["seed"], 4);
  EXPECT_EQ(r["config"]["configs"], 20);
  EXPECT_EQ(r["metrics"]["total_failures"], 0);
  EXPECT_EQ(r["metrics"]["theorems"].size(), theorem_ids().size());
  EXPECT_TRUE(fs::exists(path("out/theorems.csv")));
}

TEST_F(CliTest, ReplayReproducesMetricsAndDetectsTampering) {
  write("cfg.json", R"({"trials": 300, "total_budget": 40})");
  ASSERT_EQ(run({"budget-sweep", "--config", path("cfg.json"), "--outdir", path("a"), "--workers", "2"}), kOk);
  EXPECT_EQ(run({"--replay", path("a/report.json"), "--workers", "1", "--outdir", path("b")}), kOk);
  EXPECT_EQ(report("a")["metrics"], report("b")["metrics"]);
  EXPECT_EQ(report("b")["workers"], 1);

  Json tampered = report("a");
  tampered["metrics"]["points"][0]["crlb_trace"] = 123.0;
  write("tampered.json", tampered.dump());
  EXPECT_EQ(run({"--replay", path("tampered.json"), "--outdir", path("c")}), kInternalError);
  EXPECT_EQ(run({"--replay", path("a/report.json"), "budget-sweep"}), kValidationError);
}

TEST_F(CliTest, MrsFitFromCsvAndChangedInputBlocksReplay) {
  std::string csv = "img_shots,txt_shots,accuracy\n";
  for (int i : {0, 1, 3, 7}) {
    for (int t : {0, 1, 3, 7}) {
      const double acc = 0.3 + 0.1 * std::log2(1.0 + i) + 0.02 * std::log2(1.0 + t);
      csv += std::to_string(i) + "," + std::to_string(t) + "," + format_double(acc) + "\n";
    }
  }
  write("shots.csv", csv);
  ASSERT_EQ(run({"mrs-fit", "--input", path("shots.csv"), "--words-per-text", "12", "--outdir", path("m")}), kOk);
  const Json r = report("m");
  EXPECT_NEAR(r["metrics"]["texts_per_image"].get<double>(), 5.0, 1e-9);
  EXPECT_NEAR(r["metrics"]["words_per_image"].get<double>(), 60.0, 1e-8);
  EXPECT_EQ(r["input_digests"][path("shots.csv")], sha256_hex(csv));
  write("shots.csv", csv + "0,0,0.5\n");
  EXPECT_EQ(run({"--replay", path("m/report.json"), "--outdir", path("m2")}), kValidationError);
}

TEST_F(CliTest, TrainSupOutputsFeedAnalyze) {
  write("cfg.json", R"({"seeds": 1, "epochs": 20})");
  ASSERT_EQ(run({"train-sup", "--config", path("cfg.json"), "--outdir", path("t")}), kOk);
  for (const char* f : {"joint_head.umlw", "joint_head.umlw.json", "joint_test_embeddings.emb", "train_sup.csv"}) {
    EXPECT_TRUE(fs::exists(path(std::string("t/") + f))) << f;
  }
  ASSERT_EQ(run({"analyze", "--embeddings", path("t/joint_test_embeddings.emb"), "--head", path("t/joint_head.umlw"),
                 "--aux-embeddings", path("t/joint_aux_embeddings.emb"), "--outdir", path("an")}),
            kOk);
  for (const char* f : {"margins.csv", "cluster.csv", "prototypes.csv"}) {
    EXPECT_TRUE(fs::exists(path(std::string("an/") + f))) << f;
  }
  // A multi-layer network is not a classifier head.
  Rng rng(1);
  save_weights(dir_ / "deep.umlw", make_dense_net({4, 3, 2}, {Activation::ReLU, Activation::Identity}, rng));
  EXPECT_EQ(run({"analyze", "--embeddings", path("t/joint_test_embeddings.emb"), "--head", path("deep.umlw"),
                 "--outdir", path("an2")}),
            kValidationError);
  EXPECT_FALSE(fs::exists(path("an2")));
}

TEST_F(CliTest, TheoremFailureExitCodeIsReserved) {
  // Exit code 3 is distinct from validation and internal errors.
  EXPECT_NE(kTheoremFailure, kValidationError);
  EXPECT_NE(kTheoremFailure, kInternalError);
  Outcome o = execute("verify-theorems", resolve_config("verify-theorems", Json{{"configs", 5}}), 0, 1);
  EXPECT_FALSE(o.theorem_failure);
}
