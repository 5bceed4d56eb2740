#include <random>

#include "hilml/evaluation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hilml;
using namespace hilml::testing;

TEST(Metrics, Examples) {
  const Target t = Values{2, 4};
  const Target p = Values{1, 2};
  EXPECT_EQ(compute_metric(Metric::mae, t, p), 1.5);
  EXPECT_EQ(compute_metric(Metric::mse, t, p), 2.5);
  EXPECT_EQ(compute_metric(Metric::r2, t, t), 1.0);

  const Target lt = Labels{"a", "a", "b", "b"};
  const Target lp = Labels{"a", "b", "b", "b"};
  EXPECT_NEAR(compute_metric(Metric::precision, lt, lp), 5.0 / 6, 1e-15);
  EXPECT_NEAR(compute_metric(Metric::recall, lt, lp), 0.75, 1e-15);
  EXPECT_EQ(compute_metric(Metric::accuracy, lt, lt), 1.0);
  EXPECT_EQ(compute_metric(Metric::f1, lt, lt), 1.0);
}

TEST(Metrics, UndefinedCases) {
  EXPECT_EQ(error_of([] { compute_metric(Metric::r2, Values{3, 3}, Values{1, 2}); }), ErrorCode::UndefinedMetric);
  EXPECT_EQ(error_of([] { compute_metric(Metric::mae, Values{}, Values{}); }), ErrorCode::UndefinedMetric);
  EXPECT_EQ(error_of([] { compute_metric(Metric::f1, Values{1}, Values{1}); }), ErrorCode::UndefinedMetric);
}

TEST(Metrics, FlagsClassesWithoutPredictions) {
  std::vector<std::string> flags;
  compute_metric(Metric::precision, Labels{"a", "b"}, Labels{"a", "a"}, &flags);
  ASSERT_EQ(flags.size(), 1u);
  EXPECT_NE(flags[0].find("'b'"), std::string::npos);
}

TEST(Metrics, MacroF1ExhaustiveOverSmallThreeClassInputs) {
  const std::vector<std::string> cls{"a", "b", "c"};
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < 2 * n; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      Labels t(n), p(n);
      std::size_t c = code;
      for (std::size_t i = 0; i < n; ++i, c /= 3) t[i] = cls[c % 3];
      for (std::size_t i = 0; i < n; ++i, c /= 3) p[i] = cls[c % 3];
      ASSERT_NEAR(compute_metric(Metric::f1, t, p), oracle::macro(t, p, 2), 1e-12);
      ++cases;
    }
  }
  EXPECT_EQ(cases, 9u + 81 + 729 + 6561 + 59049 + 531441);
}

TEST(Metrics, JensenAndRmseLaws) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    Values t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = g(rng);
      p[i] = g(rng);
    }
    const double mse = compute_metric(Metric::mse, t, p);
    const double rmse = compute_metric(Metric::rmse, t, p);
    EXPECT_NEAR(rmse * rmse, mse, 1e-12 * std::max(1.0, mse));
    EXPECT_LE(compute_metric(Metric::mae, t, p), rmse * (1 + 1e-15));
  }
}

TEST(Metrics, InvariantUnderConsistentPermutation) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    Labels t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = std::string(1, static_cast<char>('a' + rng() % 3));
      p[i] = std::string(1, static_cast<char>('a' + rng() % 3));
    }
    const auto perm = shuffled_order(n, rng());
    Labels tp(n), pp(n);
    for (std::size_t i = 0; i < n; ++i) {
      tp[i] = t[perm[i]];
      pp[i] = p[perm[i]];
    }
    for (Metric m : metrics_for(TaskType::classification)) {
      EXPECT_NEAR(compute_metric(m, t, p), compute_metric(m, tp, pp), 1e-15);
    }
  }
}

TEST(Folds, PartitionLaw) {
  for (int k : {2, 3, 5, 10}) {
    for (std::size_t n : {10u, 11u, 37u, 100u}) {
      const auto folds = assign_folds(n, k, 99);
      std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
      for (int f : folds) ++sizes.at(static_cast<std::size_t>(f));
      const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
      EXPECT_LE(*hi - *lo, 1u);
    }
  }
  const auto f100 = assign_folds(100, 5, 1);
  for (int f = 0; f < 5; ++f) EXPECT_EQ(std::count(f100.begin(), f100.end(), f), 20);
  EXPECT_EQ(error_of([] { assign_folds(4, 5, 1); }), ErrorCode::TooFewRows);
  EXPECT_EQ(assign_folds(50, 5, 7), assign_folds(50, 5, 7));
  EXPECT_NE(assign_folds(50, 5, 7), assign_folds(50, 5, 8));
}

TEST(Folds, StratifiedWhenEveryClassIsLargeEnough) {
  Labels y;
  for (int i = 0; i < 30; ++i) y.push_back(i < 10 ? "rare" : "common");
  std::vector<std::string> warnings;
  const auto folds = assign_folds(y.size(), 5, 3, &y, &warnings);
  EXPECT_TRUE(warnings.empty());
  for (int f = 0; f < 5; ++f) {
    int rare = 0;
    for (std::size_t i = 0; i < y.size(); ++i) rare += folds[i] == f && y[i] == "rare";
    EXPECT_EQ(rare, 2);
  }
  y[0] = "singleton";
  assign_folds(y.size(), 5, 3, &y, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
}

namespace {

Dataset noisy_linear(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  std::vector<Num> a, y;
  std::vector<Str> label;
  for (std::size_t i = 0; i < n; ++i) {
    const double av = g(rng);
    a.push_back(av);
    y.push_back(2 * av + g(rng));
    label.push_back(av + 0.3 * g(rng) > 0 ? "up" : "down");
  }
  return dataset("noisy", {num("a", a), num("y", y), cat("label", label)});
}

ValidatedSpec regression_spec(const Dataset& d, EvalMethod m) {
  ProblemSpec s;
  s.target = "y";
  s.features = {"a"};
  s.primary_metric = Metric::mae;
  s.report_metrics = metrics_for(TaskType::regression);
  s.eval_method = m;
  return validate(s, d);
}

}  // namespace

TEST(Evaluate, EveryRowGetsOneOutOfFoldPrediction) {
  const Dataset d = noisy_linear(100, 4);
  const auto spec = regression_spec(d, EvalMethod::kfold(5));
  const auto p = make_pipeline({make_primitive("linear_regression")});
  const ScoreReport r = evaluate(p, d, spec, 17);
  ASSERT_EQ(r.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(r.rows[i], i);
  // Each fold is predicted by a model that never saw it: refit on the other
  // folds and compare.
  for (int f = 0; f < 5; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < 100; ++i) (r.folds[i] == f ? test : train).push_back(i);
    EXPECT_EQ(test.size(), 20u);
    const auto fp = fit_pipeline(p, d, spec, train);
    const auto pred = std::get<Values>(fp.predict(feature_table(d, spec, test)));
    for (std::size_t t = 0; t < test.size(); ++t) EXPECT_EQ(std::get<Values>(r.y_pred)[test[t]], pred[t]);
  }
  EXPECT_EQ(evaluate(p, d, spec, 17), r);
  EXPECT_EQ(*r.metric(Metric::mae), oracle::mae(std::get<Values>(r.y_true), std::get<Values>(r.y_pred)));
}

TEST(Evaluate, MeanBaselineHasNonPositiveR2) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset d = noisy_linear(30 + seed, seed);
    const auto spec = regression_spec(d, EvalMethod::kfold(5));
    const ScoreReport r = evaluate(make_pipeline({make_primitive("mean_baseline")}), d, spec, seed);
    const double r2 = oracle::r2(std::get<Values>(r.y_true), std::get<Values>(r.y_pred));
    EXPECT_LE(r2, 0);
    EXPECT_NEAR(*r.metric(Metric::r2), r2, 1e-12);
  }
}

TEST(Evaluate, Holdout) {
  const Dataset d = noisy_linear(50, 5);
  const auto spec = regression_spec(d, EvalMethod::holdout(0.25));
  const ScoreReport r = evaluate(make_pipeline({make_primitive("ridge_regression")}), d, spec, 3);
  EXPECT_EQ(r.size(), 13u);
  const auto order = shuffled_order(50, 3);
  std::vector<std::size_t> held(order.end() - 13, order.end());
  std::sort(held.begin(), held.end());
  EXPECT_EQ(r.rows, held);
}

TEST(Evaluate, TooFewRows) {
  const Dataset d = noisy_linear(4, 5);
  EXPECT_EQ(error_of([&] { evaluate(make_pipeline({make_primitive("mean_baseline")}), d,
                                    regression_spec(d, EvalMethod::kfold(5)), 1); }),
            ErrorCode::TooFewRows);
}

TEST(Evaluate, MissingTargetRowsAreNeverScored) {
  Dataset d = noisy_linear(40, 6);
  auto y = d.table.at("y").numbers();
  y[3] = std::nullopt;
  y[17] = std::nullopt;
  d = dataset("holes", {d.table.at("a"), num("y", y)});
  const ScoreReport r = evaluate(make_pipeline({make_primitive("linear_regression")}), d,
                                 regression_spec(d, EvalMethod::kfold(3)), 1);
  EXPECT_EQ(r.size(), 38u);
  EXPECT_EQ(std::count(r.rows.begin(), r.rows.end(), 3u), 0);
}

TEST(Evaluate, ClassificationReportJsonRoundTrip) {
  const Dataset d = noisy_linear(60, 8);
  ProblemSpec s;
  s.task_type = TaskType::classification;
  s.target = "label";
  s.features = {"a"};
  s.primary_metric = Metric::f1;
  s.report_metrics = metrics_for(TaskType::classification);
  const auto spec = validate(s, d);
  const ScoreReport r = evaluate(make_pipeline({make_primitive("logistic_regression")}), d, spec, 2);
  EXPECT_GT(*r.metric(Metric::accuracy), 0.7);
  EXPECT_EQ(score_report_from_json(Json::parse(to_json(r).dump()), TaskType::classification), r);
  const Json j = to_json(r);
  EXPECT_EQ(j.at("predictions").size(), 60u);
  EXPECT_TRUE(j.at("predictions")[0].contains("fold"));
}
