#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "json.hpp"
#include "vcf/rules.hpp"

namespace {

struct Result {
  int code = -1;
  std::string output;  // stdout and stderr
};

Result run(const std::string& args, const fixture::TempDir& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string(VCFSCREEN_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  fixture::TempDir dir;
  EXPECT_EQ(run("", dir).code, 2);
  EXPECT_EQ(run("frobnicate", dir).code, 2);
  EXPECT_EQ(run("extract --label 20", dir).code, 2);  // --volume is required
  EXPECT_EQ(run("--grid-size 2 phantom --out " + q(dir / "b"), dir).code, 2);
  EXPECT_EQ(run("phantom --volume " + q(dir / "x.lvol") + " --deformation squash:0.5", dir).code, 2);
  EXPECT_EQ(run("phantom --volume " + q(dir / "x.lvol") + " --spacing 5", dir).code, 2);  // too coarse
  std::ofstream(dir / "bad.json") << R"({"grid": 16})";
  EXPECT_EQ(run("--config " + q(dir / "bad.json") + " phantom --out " + q(dir / "b"), dir).code, 2);
}

TEST(Cli, HelpExitsZero) {
  fixture::TempDir dir;
  const auto r = run("--help", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("predict"), std::string::npos);
}

TEST(Cli, DataErrorsExitThree) {
  fixture::TempDir dir;
  EXPECT_EQ(run("extract --volume " + q(dir / "absent.lvol") + " --label 20", dir).code, 3);
  std::ofstream(dir / "junk.nii") << "not a nifti file";
  EXPECT_EQ(run("extract --volume " + q(dir / "junk.nii") + " --label 20", dir).code, 3);
  ASSERT_EQ(run("phantom --volume " + q(dir / "p.lvol"), dir).code, 0);
  const auto r = run("extract --volume " + q(dir / "p.lvol") + " --label 7", dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("error:"), std::string::npos);
}

TEST(Cli, PhantomExtractRenderAndPredict) {
  fixture::TempDir dir;
  ASSERT_EQ(run("phantom --volume " + q(dir / "w.lvol") + " --deformation wedge:0.8", dir).code, 0);
  const auto ex = run("extract --volume " + q(dir / "w.lvol") + " --label 20 --dump-pose " + q(dir / "pose.json") +
                          " --heightmap-csv " + q(dir / "h.csv") + " --pgm " + q(dir / "h.pgm") + " --dump-mesh " +
                          q(dir / "m.ply"),
                      dir);
  ASSERT_EQ(ex.code, 0) << ex.output;
  EXPECT_NE(ex.output.find("A0 mean"), std::string::npos);
  const auto pose = nlohmann::json::parse(slurp(dir / "pose.json"));
  EXPECT_EQ(pose["rotation"].size(), 3u);
  EXPECT_EQ(pose["cluster_sizes"].size(), 6u);
  EXPECT_EQ(slurp(dir / "h.pgm").rfind("P5", 0), 0u);
  EXPECT_EQ(slurp(dir / "m.ply").rfind("ply", 0), 0u);
  EXPECT_NE(slurp(dir / "h.csv").find(','), std::string::npos);

  ASSERT_EQ(run("render --volume " + q(dir / "w.lvol") + " --label 19 --out " + q(dir / "r.pgm") + " --scale 2", dir).code, 0);
  EXPECT_EQ(slurp(dir / "r.pgm").rfind("P5\n32 32\n255\n", 0), 0u);

  const auto wedge = run("predict --volume " + q(dir / "w.lvol") + " --label 20", dir);
  ASSERT_EQ(wedge.code, 0) << wedge.output;
  EXPECT_NE(wedge.output.find("prediction: positive"), std::string::npos) << wedge.output;
  EXPECT_NE(wedge.output.find("rule 1 fired"), std::string::npos) << wedge.output;

  const auto normal = run("predict --volume " + q(dir / "w.lvol") + " --label 19", dir);
  ASSERT_EQ(normal.code, 0) << normal.output;
  EXPECT_NE(normal.output.find("prediction: negative"), std::string::npos) << normal.output;
}

TEST(Cli, NiftiPhantomRoundTripsThroughExtract) {
  fixture::TempDir dir;
  ASSERT_EQ(run("phantom --volume " + q(dir / "c.nii") + " --deformation crush:0.75", dir).code, 0);
  EXPECT_EQ(run("extract --volume " + q(dir / "c.nii") + " --label 20", dir).code, 0);
}

TEST(Cli, FeaturesTrainEvalPredictFlow) {
  fixture::TempDir dir;
  const auto data = dir / "bench";
  ASSERT_EQ(run("--seed 4 phantom --out " + q(data) + " --scans 12", dir).code, 0);
  ASSERT_TRUE(std::filesystem::exists(data / "annotations.csv"));

  const auto fe = run("features --dataset " + q(data) + " --out " + q(dir / "f.csv"), dir);
  ASSERT_EQ(fe.code, 0) << fe.output;
  EXPECT_NE(fe.output.find("36 vertebrae with features, 0 excluded"), std::string::npos) << fe.output;

  const auto ev1 = run("eval --dataset " + q(data) + " --report " + q(dir / "r1.json") + " --features-out " + q(dir / "e1.csv"), dir);
  ASSERT_EQ(ev1.code, 0) << ev1.output;
  EXPECT_NE(ev1.output.find("F1"), std::string::npos);
  ASSERT_EQ(run("--threads 2 eval --dataset " + q(data) + " --report " + q(dir / "r2.json") + " --features-out " + q(dir / "e2.csv"), dir).code, 0);
  EXPECT_EQ(slurp(dir / "r1.json"), slurp(dir / "r2.json"));
  EXPECT_EQ(slurp(dir / "e1.csv"), slurp(dir / "e2.csv"));
  EXPECT_EQ(slurp(dir / "e1.csv"), slurp(dir / "f.csv"));

  const auto tr = run("--seed 2 train --features " + q(dir / "f.csv") + " --labels-from " + q(data / "annotations.csv") +
                          " --out " + q(dir / "model.json") + " --report " + q(dir / "train.json"),
                      dir);
  ASSERT_EQ(tr.code, 0) << tr.output;
  const auto model = vcf::rules::load_model(dir / "model.json");
  EXPECT_GE(model.rules.size(), 1u);
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir / "train.json")).contains("cv_path"));

  const auto pr = run("predict --features " + q(dir / "f.csv") + " --scan phantom000 --label 19 --model " + q(dir / "model.json"), dir);
  ASSERT_EQ(pr.code, 0) << pr.output;
  EXPECT_NE(pr.output.find("prediction:"), std::string::npos);
  EXPECT_EQ(run("predict --features " + q(dir / "f.csv") + " --scan nosuch --label 19", dir).code, 2);
  EXPECT_EQ(run("predict --label 19", dir).code, 2);
}

TEST(Cli, MissingModelFeatureExitsTwo) {
  fixture::TempDir dir;
  std::ofstream(dir / "f.csv") << "scan_id,vertebra_label,reference_label,pair_P_A0\ns,20,19,0.8\n";
  EXPECT_EQ(run("predict --features " + q(dir / "f.csv") + " --scan s --label 20", dir).code, 2);
}

TEST(Cli, EmptyEvaluationExitsThree) {
  fixture::TempDir dir;
  std::ofstream(dir / "annotations.csv") << "scan_id,vertebra_label,genant_grade,flags\nsolo,20,0,\n";
  const auto r = run("eval --dataset " + q(dir.path()), dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("no vertebra"), std::string::npos) << r.output;
}

TEST(Cli, BadGradeInAnnotationsExitsTwo) {
  fixture::TempDir dir;
  std::ofstream(dir / "annotations.csv") << "scan_id,vertebra_label,genant_grade,flags\ns1,20,5,\n";
  EXPECT_EQ(run("eval --dataset " + q(dir.path()), dir).code, 2);
}
