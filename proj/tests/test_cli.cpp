#include <filesystem>
#include <sstream>

#include "hilml/cli.hpp"
#include "hilml/csv.hpp"
#include "support.hpp"

using namespace hilml;
namespace fs = std::filesystem;

namespace {

const fs::path kDemo = fs::path(HILML_DATA_DIR) / "demo";

fs::path scratch(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("hilml-cli-" + std::to_string(::getpid()) + "-" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& f : fs::recursive_directory_iterator(dir)) {
    if (f.is_regular_file()) out[fs::relative(f.path(), dir).string()] = read_file(f.path());
  }
  return out;
}

}  // namespace

TEST(Cli, DemoRunWritesEverythingAndIsDeterministic) {
  const fs::path root = scratch("det");
  RunOptions o;
  o.data = kDemo / "collisions.csv";
  o.problem = kDemo / "problem.json";
  o.corpus = kDemo / "corpus";
  o.keywords = "weather";
  o.seed = 11;
  o.out = root / "a";
  std::ostringstream err;
  ASSERT_EQ(run_headless(o, err), kExitOk) << err.str();
  o.out = root / "b";
  o.workers = 1;
  ASSERT_EQ(run_headless(o, err), kExitOk);

  const auto a = tree(root / "a");
  const auto b = tree(root / "b");
  EXPECT_EQ(a, b);
  const Json sol = Json::parse(a.at("solutions.json"));
  EXPECT_LE(sol["solutions"].size(), 40u);
  EXPECT_GE(sol["solutions"].size(), 1u);
  EXPECT_TRUE(a.count("ranking.txt"));
  EXPECT_TRUE(a.count("explanations/r1-1-scatter.json"));
  EXPECT_TRUE(a.count("explanations/r1-1-pdp-trips.json"));
  const Json cands = Json::parse(a.at("augment_candidates.json"));
  ASSERT_EQ(cands["candidates"].size(), 1u);
  EXPECT_EQ(cands["candidates"][0]["corpus"], "weather");
  fs::remove_all(root);
}

TEST(Cli, BadTargetExitsOneNamingIt) {
  const fs::path root = scratch("bad");
  Json p = Json::parse(read_file(kDemo / "problem.json"));
  p["target"] = "fatalities";
  write_file_atomic(root / "problem.json", p.dump());
  RunOptions o;
  o.data = kDemo / "collisions.csv";
  o.problem = root / "problem.json";
  o.out = root / "out";
  std::ostringstream err;
  EXPECT_EQ(run_headless(o, err), kExitInvalid);
  EXPECT_NE(err.str().find("fatalities"), std::string::npos) << err.str();
  EXPECT_FALSE(fs::exists(root / "out" / "solutions.json"));
  fs::remove_all(root);
}

TEST(Cli, NothingScoredExitsTwo) {
  // Three usable rows cannot fill five folds, so every pipeline fails.
  const fs::path root = scratch("none");
  write_file_atomic(root / "tiny.csv", "x,y\n1,2\n2,4\n3,7\n");
  write_file_atomic(root / "problem.json",
                    R"({"task_type":"regression","target":"y","features":["x"],"primary_metric":"mae","eval_method":{"kind":"kfold","k":5},"budget":{"max_pipelines":5,"time_limit_seconds":10}})");
  RunOptions o;
  o.data = root / "tiny.csv";
  o.problem = root / "problem.json";
  o.out = root / "out";
  std::ostringstream err;
  EXPECT_EQ(run_headless(o, err), kExitNothingScored) << err.str();
  const Json sol = Json::parse(read_file(root / "out" / "solutions.json"));
  for (const auto& s : sol["solutions"]) EXPECT_EQ(s["status"], "failed");
  fs::remove_all(root);
}
