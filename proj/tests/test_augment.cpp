#include <filesystem>
#include <random>

#include "hilml/augment.hpp"
#include "hilml/csv.hpp"
#include "support.hpp"

using namespace hilml;
using namespace hilml::testing;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("hilml-augment-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_entry(const fs::path& dir, const std::string& name, const std::string& csv, const Json& columns,
                 const std::string& description = "", std::vector<std::string> keywords = {}) {
  write_file_atomic(dir / (name + ".csv"), csv);
  write_file_atomic(dir / (name + ".meta.json"),
                    Json{{"name", name}, {"description", description}, {"keywords", keywords}, {"columns", columns}}.dump());
}

Json col(const std::string& name, const std::string& dtype) { return Json{{"name", name}, {"dtype", dtype}}; }

Column temporal(std::string name, const std::vector<std::string>& stamps) {
  std::vector<std::optional<double>> v;
  for (const auto& s : stamps) {
    if (s.empty()) v.emplace_back();
    else v.emplace_back(static_cast<double>(*parse_timestamp(s)));
  }
  return Column::temporal(std::move(name), std::move(v));
}

std::string hourly_csv(int days, double (*value)(int day, int hour)) {
  std::string csv = "time,temp\n";
  for (int d = 0; d < days; ++d) {
    for (int h = 0; h < 24; ++h) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "2020-01-%02d %02d:00,%.17g\n", d + 1, h, value(d, h));
      csv += buf;
    }
  }
  return csv;
}

}  // namespace

TEST(Corpus, EmptyDirectoryIndexesNothing) {
  TempDir dir;
  const auto corpus = index_corpus(dir.path());
  EXPECT_TRUE(corpus.entries.empty());
  const auto q = dataset("q", {num("x", {1, 2})});
  EXPECT_TRUE(search_augmentations(corpus, q, "").empty());
  EXPECT_TRUE(search_augmentations(corpus, q, "weather").empty());
}

TEST(Corpus, MissingDirectoryIsAnError) {
  EXPECT_EQ(error_of([] { index_corpus("/nonexistent/hilml/corpus"); }), ErrorCode::CorpusError);
}

TEST(Corpus, BadEntriesAreSkippedWithWarnings) {
  TempDir dir;
  write_entry(dir.path(), "good", "k,v\na,1\n", Json::array({col("k", "categorical"), col("v", "numeric")}));
  write_entry(dir.path(), "wrong-dtype", "k,v\na,hello\n", Json::array({col("k", "categorical"), col("v", "numeric")}));
  write_entry(dir.path(), "wrong-header", "k,w\na,1\n", Json::array({col("k", "categorical"), col("v", "numeric")}));
  write_entry(dir.path(), "wrong-granularity", "t\n2020-01-01 10:00\n",
              Json::array({Json{{"name", "t"}, {"dtype", "temporal"}, {"granularity", "day"}}}));
  write_file_atomic(dir.path() / "no-csv.meta.json", R"({"name":"no-csv","columns":[]})");
  write_file_atomic(dir.path() / "broken.meta.json", "{not json");
  const auto corpus = index_corpus(dir.path());
  ASSERT_EQ(corpus.entries.size(), 1u);
  EXPECT_EQ(corpus.entries[0].name, "good");
  EXPECT_EQ(corpus.warnings.size(), 5u);
}

TEST(Corpus, ReindexingIsDeterministic) {
  TempDir dir;
  write_entry(dir.path(), "b", "k,v\na,1\n", Json::array({col("k", "categorical"), col("v", "numeric")}), "", {"beta"});
  write_entry(dir.path(), "a", "k,v\nb,2\n", Json::array({col("k", "categorical"), col("v", "numeric")}), "", {"alpha"});
  const auto first = index_corpus(dir.path());
  const auto second = index_corpus(dir.path());
  ASSERT_EQ(first.entries.size(), 2u);
  EXPECT_EQ(first.entries[0].name, "a");
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(to_json(first.entries[i]), to_json(second.entries[i]));
    EXPECT_EQ(first.entries[i].fingerprint, second.entries[i].fingerprint);
  }
}

TEST(Search, KeywordRetrievesTemporalJoinOnly) {
  TempDir dir;
  write_entry(dir.path(), "weather-daily", "day,rain\n2020-01-01,1\n2020-01-02,0\n",
              Json::array({col("day", "temporal"), col("rain", "numeric")}), "daily rainfall", {"weather"});
  write_entry(dir.path(), "census-by-state", "state,population\nNY,19\nCA,39\n",
              Json::array({col("state", "categorical"), col("population", "numeric")}), "weather of people", {"census"});
  const auto corpus = index_corpus(dir.path());
  const auto q = dataset("q", {temporal("date", {"2020-01-01", "2020-01-02", "2020-01-03"}), num("y", {1, 2, 3})});
  const auto found = search_augmentations(corpus, q, "weather");
  ASSERT_EQ(found.size(), 1u);
  EXPECT_EQ(found[0].corpus_name, "weather-daily");
  const auto* plan = std::get_if<JoinPlan>(&found[0].operation);
  ASSERT_TRUE(plan);
  EXPECT_TRUE(plan->temporal);
  EXPECT_EQ(plan->keys, (std::vector<KeyPair>{{"date", "day"}}));
  EXPECT_EQ(found[0].key_overlap, 2u);
}

TEST(Search, IdenticalSchemaIsUnion) {
  TempDir dir;
  write_entry(dir.path(), "more", "k,v\nc,3\nd,4\n", Json::array({col("k", "categorical"), col("v", "numeric")}));
  const auto corpus = index_corpus(dir.path());
  const auto q = dataset("q", {cat("k", {"a", "b"}), num("v", {1, 2})});
  const auto found = search_augmentations(corpus, q, "");
  ASSERT_EQ(found.size(), 1u);
  ASSERT_TRUE(std::holds_alternative<UnionPlan>(found[0].operation));
  const auto merged = apply_augmentation(q, found[0], corpus);
  EXPECT_EQ(merged.row_count(), 4u);
  EXPECT_EQ(merged.table.column_count(), 2u);
  EXPECT_EQ(merged.table.at("k").strings()[3], Str{"d"});
  EXPECT_EQ(merged.provenance.kind, Provenance::Kind::augmented);
  EXPECT_EQ(merged.provenance.parents, (std::vector<std::string>{"q", "more"}));
}

TEST(Search, NameMatchOutranksDescriptionMatch) {
  TempDir dir;
  const Json cols = Json::array({col("k", "categorical"), col("w", "numeric")});
  write_entry(dir.path(), "traffic-counts", "k,w\na,1\n", cols, "vehicles per street");
  write_entry(dir.path(), "street-works", "k,w\na,1\n", cols, "road closures and traffic");
  const auto corpus = index_corpus(dir.path());
  // traffic-counts: name 3x1; street-works: description 1x1.
  EXPECT_DOUBLE_EQ(relevance_score(*corpus.find("traffic-counts"), "traffic"), 3.0);
  EXPECT_DOUBLE_EQ(relevance_score(*corpus.find("street-works"), "traffic"), 1.0);
  // Keyword list and column names: 2 each, plus term frequency.
  EXPECT_DOUBLE_EQ(relevance_score(*corpus.find("street-works"), "street k k"), 3.0 + 2.0 * 2);
  const auto q = dataset("q", {cat("k", {"a"}), num("y", {1})});
  const auto found = search_augmentations(corpus, q, "traffic");
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].corpus_name, "traffic-counts");
  EXPECT_EQ(found[1].corpus_name, "street-works");
}

TEST(Search, TiesBreakByOverlapThenName) {
  TempDir dir;
  const Json cols = Json::array({col("k", "categorical"), col("w", "numeric")});
  write_entry(dir.path(), "c-one", "k,w\na,1\n", cols);
  write_entry(dir.path(), "b-two", "k,w\na,1\nb,2\n", cols);
  write_entry(dir.path(), "a-one", "k,w\nb,1\n", cols);
  write_entry(dir.path(), "zero", "k,w\nzz,1\n", cols);
  const auto corpus = index_corpus(dir.path());
  const auto q = dataset("q", {cat("k", {"a", "b"}), num("y", {1, 2})});
  const auto found = search_augmentations(corpus, q, "");
  ASSERT_EQ(found.size(), 3u);
  EXPECT_EQ(found[0].corpus_name, "b-two");
  EXPECT_EQ(found[1].corpus_name, "a-one");
  EXPECT_EQ(found[2].corpus_name, "c-one");
}

TEST(Join, HourlyToDailyMeansMatchHandAggregation) {
  TempDir dir;
  auto temp = [](int d, int h) { return 0.1 * (d * 24 + h) * ((h % 3) - 1) + 0.37 * h; };
  write_entry(dir.path(), "weather", hourly_csv(2, temp), Json::array({col("time", "temporal"), col("temp", "numeric")}));
  const auto corpus = index_corpus(dir.path());
  const auto q = dataset("q", {temporal("date", {"2020-01-01", "2020-01-02"}), num("y", {5, 6})});
  const auto found = search_augmentations(corpus, q, "");
  ASSERT_EQ(found.size(), 1u);
  const auto joined = apply_augmentation(q, found[0], corpus);
  ASSERT_EQ(joined.row_count(), 2u);
  for (int d = 0; d < 2; ++d) {
    double s = 0;
    for (int h = 0; h < 24; ++h) s += temp(d, h);
    EXPECT_EQ(*joined.table.at("temp").numbers()[static_cast<std::size_t>(d)], s / 24);
  }
  EXPECT_EQ(std::get<JoinPlan>(found[0].operation).granularity, Granularity::day);
}

TEST(Join, UnmatchedRowsGetMissingCellsAndCollisionsAreRenamed) {
  // "v" differs in dtype, so it is carried (renamed) rather than used as a key.
  const auto q = dataset("q", {cat("k", {"a", "b", {}, "c"}), num("v", {1, 2, 3, 4})});
  const auto c = dataset("c", {cat("k", {"a", "a", "c"}), cat("v", {"x", "y", "y"}), num("w", {10, 20, 30})});
  TempDir dir;
  write_file_atomic(dir.path() / "c.csv", to_csv(c.table));
  write_file_atomic(dir.path() / "c.meta.json",
                    Json{{"name", "c"}, {"columns", Json::array({col("k", "categorical"), col("v", "categorical"), col("w", "numeric")})}}.dump());
  const auto corpus = index_corpus(dir.path());
  const auto found = search_augmentations(corpus, q, "");
  ASSERT_EQ(found.size(), 1u);
  const auto* plan = std::get_if<JoinPlan>(&found[0].operation);
  ASSERT_TRUE(plan);
  EXPECT_FALSE(plan->temporal);
  const auto joined = apply_augmentation(q, found[0], corpus);
  EXPECT_EQ(joined.table.column_count(), 2u + 2u);
  EXPECT_EQ(joined.table.column(2).name(), "v_aug");
  EXPECT_EQ(joined.table.at("v_aug").strings(), (std::vector<Str>{"x", {}, {}, "y"}));
  EXPECT_EQ(joined.table.at("w").numbers(), (std::vector<Num>{15, {}, {}, 30}));
  EXPECT_EQ(joined.table.at("v").numbers(), q.table.at("v").numbers());
}

TEST(Search, SupersetSchemaIsUnionNotJoin) {
  TempDir dir;
  write_entry(dir.path(), "wide", "k,v,extra\nc,3,9\n",
              Json::array({col("k", "categorical"), col("v", "numeric"), col("extra", "numeric")}));
  const auto corpus = index_corpus(dir.path());
  const auto q = dataset("q", {cat("k", {"a", "b"}), num("v", {1, 2})});
  const auto found = search_augmentations(corpus, q, "");
  ASSERT_EQ(found.size(), 1u);
  ASSERT_TRUE(std::holds_alternative<UnionPlan>(found[0].operation));
  const auto merged = apply_augmentation(q, found[0], corpus);
  EXPECT_EQ(merged.table.column_count(), 2u);
  EXPECT_EQ(merged.row_count(), 3u);
}

TEST(Join, RandomFixturesPreserveRowsAndMatchBruteForce) {
  std::mt19937_64 rng(99);
  const Timestamp base = *parse_timestamp("2021-03-01");
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nq = 1 + rng() % 30;
    const std::size_t nc = 1 + rng() % 80;
    std::vector<Num> qt, qv, ct, cv;
    std::vector<Str> cc;
    for (std::size_t i = 0; i < nq; ++i) {
      qt.push_back(rng() % 10 == 0 ? Num{} : Num{static_cast<double>(base + static_cast<Timestamp>(rng() % 8) * 86400)});
      qv.push_back(static_cast<double>(i));
    }
    for (std::size_t i = 0; i < nc; ++i) {
      ct.push_back(static_cast<double>(base + static_cast<Timestamp>(rng() % (10 * 24)) * 3600));
      cv.push_back(rng() % 7 == 0 ? Num{} : Num{static_cast<double>(rng() % 1000) / 7});
      cc.push_back(std::string(1, static_cast<char>('p' + rng() % 3)));
    }
    const Dataset q = dataset("q", {Column::temporal("day", qt, Granularity::day), num("row", qv)});
    const Dataset c = dataset("c", {Column::temporal("at", ct), num("x", cv), cat("kind", cc)});
    JoinPlan plan;
    plan.temporal = true;
    plan.granularity = Granularity::day;
    plan.keys = {{"day", "at"}};
    plan.carried = {{"x", "x", Aggregation::mean}, {"kind", "kind", Aggregation::mode}};
    const Dataset j = join_datasets(q, c, plan);
    ASSERT_EQ(j.row_count(), nq);
    ASSERT_EQ(j.table.at("row").numbers(), qv);
    ASSERT_EQ(j.table.at("day").numbers(), qt);
    ASSERT_EQ(j.table.column_count(), 2u + 2u);
    // Brute force: for each query row scan the candidate, then aggregate.
    for (std::size_t r = 0; r < nq; ++r) {
      double s = 0;
      std::size_t n = 0;
      std::map<std::string, int> counts;
      bool matched = false;
      for (std::size_t i = 0; i < nc; ++i) {
        if (!qt[r] || truncate(static_cast<Timestamp>(*ct[i]), Granularity::day) != static_cast<Timestamp>(*qt[r])) continue;
        matched = true;
        if (cv[i]) {
          s += *cv[i];
          ++n;
        }
        ++counts[*cc[i]];
      }
      const Num want_x = n ? Num{s / static_cast<double>(n)} : Num{};
      ASSERT_EQ(j.table.at("x").numbers()[r].has_value(), want_x.has_value());
      if (want_x) EXPECT_NEAR(*j.table.at("x").numbers()[r], *want_x, 1e-9);
      Str want_kind;
      int best = 0;
      for (const auto& [k, v] : counts) {
        if (v > best) {
          best = v;
          want_kind = k;
        }
      }
      EXPECT_EQ(j.table.at("kind").strings()[r], matched ? want_kind : Str{});
    }
  }
}

TEST(Join, CoarserCandidateBroadcastsToFinerQuery) {
  const Dataset q = dataset("q", {temporal("at", {"2020-01-01 03:00", "2020-01-01 20:00", "2020-01-02 01:00"})});
  const Dataset c = dataset("c", {temporal("day", {"2020-01-01", "2020-01-02"}), num("rain", {4, 7})});
  TempDir dir;
  write_file_atomic(dir.path() / "c.csv", to_csv(c.table));
  write_file_atomic(dir.path() / "c.meta.json",
                    Json{{"name", "c"}, {"columns", Json::array({col("day", "temporal"), col("rain", "numeric")})}}.dump());
  const auto corpus = index_corpus(dir.path());
  const auto found = search_augmentations(corpus, q, "");
  ASSERT_EQ(found.size(), 1u);
  EXPECT_EQ(std::get<JoinPlan>(found[0].operation).granularity, Granularity::day);
  const auto j = apply_augmentation(q, found[0], corpus);
  EXPECT_EQ(j.table.at("rain").numbers(), (std::vector<Num>{4, 4, 7}));
}

TEST(Apply, StaleQueryIsRejected) {
  TempDir dir;
  write_entry(dir.path(), "more", "k,w\na,3\n", Json::array({col("k", "categorical"), col("w", "numeric")}));
  const auto corpus = index_corpus(dir.path());
  const auto q = dataset("q", {cat("k", {"a", "b"}), num("v", {1, 2})});
  const auto found = search_augmentations(corpus, q, "");
  ASSERT_EQ(found.size(), 1u);
  const auto changed = dataset("q", {cat("k", {"a", "b"}), num("v", {1, 5})});
  EXPECT_EQ(error_of([&] { apply_augmentation(changed, found[0], corpus); }), ErrorCode::StaleCandidate);
  auto missing = found[0];
  missing.corpus_name = "gone";
  EXPECT_EQ(error_of([&] { apply_augmentation(q, missing, corpus); }), ErrorCode::StaleCandidate);
  EXPECT_NO_THROW(apply_augmentation(q, found[0], corpus));
}

TEST(Apply, CandidateJsonRoundTripsAndPreviewIsBounded) {
  TempDir dir;
  write_entry(dir.path(), "weather", hourly_csv(1, [](int, int h) { return double(h); }),
              Json::array({col("time", "temporal"), col("temp", "numeric")}), "hourly", {"weather"});
  const auto corpus = index_corpus(dir.path());
  const auto q = dataset("q", {temporal("date", {"2020-01-01"}), num("y", {1})});
  const auto found = search_augmentations(corpus, q, "weather");
  ASSERT_EQ(found.size(), 1u);
  EXPECT_EQ(augment_candidate_from_json(to_json(found[0])), found[0]);
  const auto preview = candidate_preview(corpus.entries[0]);
  EXPECT_EQ(preview["rows"].size(), 5u);
  EXPECT_EQ(preview["profiles"].size(), 2u);
  EXPECT_EQ(preview["entry"]["columns"][0]["granularity"], "hour");
}
