#include "hilml/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace hilml {

namespace {

Error undefined(Metric m, const std::string& why) {
  return Error(ErrorCode::UndefinedMetric, std::string(to_string(m)) + " is undefined: " + why,
               Json{{"metric", std::string(to_string(m))}});
}

double regression_metric(Metric m, const Values& t, const Values& p) {
  const double n = static_cast<double>(t.size());
  double abs_sum = 0;
  double sq_sum = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - p[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  switch (m) {
    case Metric::mae: return abs_sum / n;
    case Metric::mse: return sq_sum / n;
    case Metric::rmse: return std::sqrt(sq_sum / n);
    case Metric::r2: {
      const double mean = std::accumulate(t.begin(), t.end(), 0.0) / n;
      double sst = 0;
      for (double v : t) sst += (v - mean) * (v - mean);
      if (sst == 0) throw undefined(m, "y_true is constant");
      return 1 - sq_sum / sst;
    }
    default: throw undefined(m, "not a regression metric");
  }
}

double classification_metric(Metric m, const Labels& t, const Labels& p, std::vector<std::string>* flags) {
  const double n = static_cast<double>(t.size());
  if (m == Metric::accuracy) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < t.size(); ++i) hit += t[i] == p[i];
    return static_cast<double>(hit) / n;
  }
  std::set<std::string> classes(t.begin(), t.end());
  classes.insert(p.begin(), p.end());
  std::map<std::string, std::size_t> tp, predicted, actual;
  for (std::size_t i = 0; i < t.size(); ++i) {
    ++actual[t[i]];
    ++predicted[p[i]];
    if (t[i] == p[i]) ++tp[t[i]];
  }
  double total = 0;
  for (const auto& c : classes) {
    const double hits = static_cast<double>(tp[c]);
    const double pp = static_cast<double>(predicted[c]);
    const double ap = static_cast<double>(actual[c]);
    const double precision = pp > 0 ? hits / pp : 0.0;
    const double recall = ap > 0 ? hits / ap : 0.0;
    if (flags) {
      if (pp == 0 && m != Metric::recall) flags->push_back("class '" + c + "' has no predicted members");
      if (ap == 0 && m != Metric::precision) flags->push_back("class '" + c + "' has no actual members");
    }
    switch (m) {
      case Metric::precision: total += precision; break;
      case Metric::recall: total += recall; break;
      case Metric::f1: total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0; break;
      default: throw undefined(m, "not a classification metric");
    }
  }
  return total / static_cast<double>(classes.size());
}

}  // namespace

double compute_metric(Metric metric, const Target& y_true, const Target& y_pred, std::vector<std::string>* flags) {
  if (y_true.index() != y_pred.index()) throw undefined(metric, "y_true and y_pred differ in kind");
  if (target_size(y_true) != target_size(y_pred)) {
    throw Error(ErrorCode::SchemaMismatch, "y_true and y_pred differ in length");
  }
  if (target_size(y_true) == 0) throw undefined(metric, "no samples");
  const bool regression = std::holds_alternative<Values>(y_true);
  if (metric_applies(metric, TaskType::regression) != regression) {
    throw undefined(metric, regression ? "targets are numeric" : "targets are labels");
  }
  if (regression) return regression_metric(metric, std::get<Values>(y_true), std::get<Values>(y_pred));
  return classification_metric(metric, std::get<Labels>(y_true), std::get<Labels>(y_pred), flags);
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed, const Labels* strata,
                              std::vector<std::string>* warnings) {
  if (k < 2) throw Error(ErrorCode::SchemaError, "k must be at least 2", Json{{"path", "$.eval_method.k"}});
  if (static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::TooFewRows, "k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " usable rows",
                Json{{"k", k}, {"rows", n}});
  }
  std::vector<std::size_t> order = shuffled_order(n, seed);
  if (strata) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : *strata) ++counts[s];
    const auto small = std::find_if(counts.begin(), counts.end(),
                                    [&](const auto& c) { return c.second < static_cast<std::size_t>(k); });
    if (small == counts.end()) {
      // Class-major order, shuffled within each class; dealing round-robin
      // spreads every class evenly over the folds.
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return (*strata)[a] < (*strata)[b]; });
    } else if (warnings) {
      warnings->push_back("class '" + small->first + "' has fewer than " + std::to_string(k) +
                          " members; folds are not stratified");
    }
  }
  std::vector<int> folds(n);
  for (std::size_t t = 0; t < n; ++t) folds[order[t]] = static_cast<int>(t % static_cast<std::size_t>(k));
  return folds;
}

std::optional<double> ScoreReport::metric(Metric m) const {
  auto it = metrics.find(m);
  return it == metrics.end() ? std::nullopt : it->second;
}

Json to_json(const ScoreReport& r) {
  Json metrics = Json::object();
  for (const auto& [m, v] : r.metrics) metrics[std::string(to_string(m))] = v ? Json(*v) : Json(nullptr);
  Json preds = Json::array();
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    preds.push_back(Json{{"row", r.rows[i]},
                         {"y_true", target_cell_json(r.y_true, i)},
                         {"y_pred", target_cell_json(r.y_pred, i)},
                         {"fold", r.folds[i]}});
  }
  return Json{{"metrics", metrics}, {"predictions", preds}, {"warnings", r.warnings}};
}

ScoreReport score_report_from_json(const Json& j, TaskType task) {
  ScoreReport r;
  try {
    for (const auto& [k, v] : j.at("metrics").items()) {
      r.metrics[parse_metric(k)] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    Values tv, pv;
    Labels tl, pl;
    for (const auto& p : j.at("predictions")) {
      r.rows.push_back(p.at("row").get<std::size_t>());
      r.folds.push_back(p.at("fold").get<int>());
      if (task == TaskType::regression) {
        tv.push_back(p.at("y_true").get<double>());
        pv.push_back(p.at("y_pred").get<double>());
      } else {
        tl.push_back(p.at("y_true").get<std::string>());
        pl.push_back(p.at("y_pred").get<std::string>());
      }
    }
    if (task == TaskType::regression) {
      r.y_true = tv;
      r.y_pred = pv;
    } else {
      r.y_true = tl;
      r.y_pred = pl;
    }
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed score report: ") + e.what());
  }
  return r;
}

namespace {

void place(Target& into, std::size_t at, const Target& from, std::size_t i) {
  std::visit(
      [&](auto& dst) {
        using T = std::decay_t<decltype(dst)>;
        dst[at] = std::get<T>(from)[i];
      },
      into);
}

Target sized_like(const Target& t, std::size_t n) {
  if (std::holds_alternative<Values>(t)) return Values(n);
  return Labels(n);
}

}  // namespace

ScoreReport evaluate(const Pipeline& p, const Dataset& dataset, const ValidatedSpec& spec, std::uint64_t seed,
                     std::stop_token stop) {
  const auto& usable = spec.usable_rows;
  const std::size_t n = usable.size();
  const Target y_all = target_values(dataset, spec, usable);
  ScoreReport report;

  // Per position in `usable`: fold index, or -1 for training-only rows (holdout).
  std::vector<int> folds;
  int fold_count = 0;
  if (spec.spec.eval_method.kind == EvalMethod::Kind::kfold) {
    fold_count = spec.spec.eval_method.k;
    const Labels* strata = std::get_if<Labels>(&y_all);
    folds = assign_folds(n, fold_count, seed, strata, &report.warnings);
  } else {
    const double f = spec.spec.eval_method.test_fraction;
    const auto test = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n)));
    if (test == 0 || test >= n) {
      throw Error(ErrorCode::TooFewRows, "holdout of " + std::to_string(test) + " rows leaves no training rows",
                  Json{{"rows", n}, {"test_rows", test}});
    }
    folds.assign(n, -1);
    const auto order = shuffled_order(n, seed);
    for (std::size_t t = n - test; t < n; ++t) folds[order[t]] = 0;
    fold_count = 1;
  }

  std::vector<std::size_t> scored;  // positions in `usable` with a prediction
  for (std::size_t i = 0; i < n; ++i) {
    if (folds[i] >= 0) scored.push_back(i);
  }
  Target y_pred = sized_like(y_all, n);
  for (int f = 0; f < fold_count; ++f) {
    if (stop.stop_requested()) throw Error(ErrorCode::Cancelled, "evaluation cancelled");
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_pos;
    for (std::size_t i = 0; i < n; ++i) {
      if (folds[i] == f) test_pos.push_back(i);
      else train_rows.push_back(usable[i]);
    }
    std::vector<std::size_t> test_rows;
    for (auto i : test_pos) test_rows.push_back(usable[i]);
    const FittedPipeline fp = fit_pipeline(p, dataset, spec, train_rows, stop);
    const Target pred = fp.predict(feature_table(dataset, spec, test_rows), stop);
    for (std::size_t t = 0; t < test_pos.size(); ++t) place(y_pred, test_pos[t], pred, t);
  }

  for (auto i : scored) {
    report.rows.push_back(usable[i]);
    report.folds.push_back(folds[i]);
  }
  report.y_true = target_take(y_all, scored);
  report.y_pred = target_take(y_pred, scored);
  for (Metric m : spec.spec.report_metrics) {
    std::vector<std::string> flags;
    try {
      report.metrics[m] = compute_metric(m, report.y_true, report.y_pred, &flags);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UndefinedMetric) throw;
      report.metrics[m] = std::nullopt;
      report.warnings.push_back(e.what());
    }
    for (auto& fl : flags) report.warnings.push_back(std::string(to_string(m)) + ": " + fl);
  }
  return report;
}

}  // namespace hilml
