#include "hilml/problem_spec.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hilml {

namespace {

Error schema_error(const std::string& path, const std::string& what) {
  return Error(ErrorCode::SchemaError, path + ": " + what, Json{{"path", path}});
}

const Json& require(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw schema_error(path + "." + key, "required field missing");
  return j.at(key);
}

std::string require_string(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_string()) throw schema_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

int require_positive_int(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = require(j, key, path);
  if (!v.is_number_integer()) throw schema_error(path + "." + key, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x <= 0 || x > 1'000'000'000) throw schema_error(path + "." + key, "must be a positive integer");
  return static_cast<int>(x);
}

Metric metric_at(const Json& v, const std::string& path) {
  if (!v.is_string()) throw schema_error(path, "expected a metric name");
  try {
    return parse_metric(v.get<std::string>());
  } catch (const Error&) {
    throw schema_error(path, "unknown metric '" + v.get<std::string>() + "'");
  }
}

void check_budget_and_eval(const ProblemSpec& s) {
  if (s.budget.max_pipelines <= 0) throw schema_error("$.budget.max_pipelines", "must be a positive integer");
  if (s.budget.time_limit_seconds <= 0) {
    throw schema_error("$.budget.time_limit_seconds", "must be a positive integer");
  }
  if (s.eval_method.kind == EvalMethod::Kind::kfold && s.eval_method.k < 2) {
    throw schema_error("$.eval_method.k", "must be at least 2");
  }
  if (s.eval_method.kind == EvalMethod::Kind::holdout &&
      !(s.eval_method.test_fraction > 0 && s.eval_method.test_fraction < 1)) {
    throw schema_error("$.eval_method.test_fraction", "must lie in (0, 1)");
  }
  if (std::find(s.report_metrics.begin(), s.report_metrics.end(), s.primary_metric) ==
      s.report_metrics.end()) {
    throw schema_error("$.report_metrics", "must include the primary metric");
  }
}

}  // namespace

std::string_view to_string(TaskType t) {
  return t == TaskType::classification ? "classification" : "regression";
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::precision: return "precision";
    case Metric::recall: return "recall";
    case Metric::f1: return "f1";
    case Metric::mae: return "mae";
    case Metric::mse: return "mse";
    case Metric::rmse: return "rmse";
    case Metric::r2: return "r2";
  }
  return "mae";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::accuracy, Metric::precision, Metric::recall, Metric::f1, Metric::mae,
                   Metric::mse, Metric::rmse, Metric::r2}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::UnknownMetric, "unknown metric '" + std::string(name) + "'",
              Json{{"metric", std::string(name)}});
}

const std::vector<Metric>& metrics_for(TaskType t) {
  static const std::vector<Metric> cls{Metric::accuracy, Metric::precision, Metric::recall, Metric::f1};
  static const std::vector<Metric> reg{Metric::mae, Metric::mse, Metric::rmse, Metric::r2};
  return t == TaskType::classification ? cls : reg;
}

bool metric_applies(Metric m, TaskType t) {
  const auto& ms = metrics_for(t);
  return std::find(ms.begin(), ms.end(), m) != ms.end();
}

bool higher_is_better(Metric m) {
  return m != Metric::mae && m != Metric::mse && m != Metric::rmse;
}

ValidatedSpec validate(const ProblemSpec& spec, const Dataset& dataset) {
  const Table& t = dataset.table;
  if (spec.features.empty()) throw Error(ErrorCode::EmptyFeatures, "feature list is empty");
  const Column* target = t.find(spec.target);
  if (!target) {
    throw Error(ErrorCode::TargetNotFound, "target '" + spec.target + "' not found in dataset '" +
                                               dataset.name + "'",
                Json{{"target", spec.target}});
  }
  std::set<std::string> seen;
  for (const auto& f : spec.features) {
    if (f == spec.target) {
      throw Error(ErrorCode::TargetInFeatures, "target '" + f + "' is also listed as a feature",
                  Json{{"feature", f}});
    }
    if (!t.find(f)) {
      throw Error(ErrorCode::FeatureNotFound, "feature '" + f + "' not found in dataset '" +
                                                  dataset.name + "'",
                  Json{{"feature", f}});
    }
    if (!seen.insert(f).second) {
      throw Error(ErrorCode::SchemaError, "feature '" + f + "' listed twice", Json{{"path", "$.features"}});
    }
  }
  const bool ok_target = spec.task_type == TaskType::classification
                             ? target->dtype() == DType::categorical
                             : target->dtype() == DType::numeric;
  if (!ok_target) {
    throw Error(ErrorCode::TaskTargetMismatch,
                std::string(to_string(spec.task_type)) + " needs a " +
                    (spec.task_type == TaskType::classification ? "categorical" : "numeric") +
                    " target; '" + spec.target + "' is " + std::string(to_string(target->dtype())),
                Json{{"target", spec.target}, {"dtype", std::string(to_string(target->dtype()))}});
  }
  auto check_metric = [&](Metric m) {
    if (!metric_applies(m, spec.task_type)) {
      throw Error(ErrorCode::MetricTaskMismatch,
                  "metric " + std::string(to_string(m)) + " does not apply to " +
                      std::string(to_string(spec.task_type)),
                  Json{{"metric", std::string(to_string(m))}});
    }
  };
  check_metric(spec.primary_metric);
  for (Metric m : spec.report_metrics) check_metric(m);
  check_budget_and_eval(spec);

  ValidatedSpec v;
  v.spec = spec;
  v.dataset_name = dataset.name;
  v.dataset_fingerprint = fingerprint(dataset);
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    if (!target->missing(r)) v.usable_rows.push_back(r);
  }
  return v;
}

ValidatedSpec validate(const ValidatedSpec& spec, const Dataset& dataset) {
  return validate(spec.spec, dataset);
}

Json to_json(const ProblemSpec& s) {
  Json metrics = Json::array();
  for (Metric m : s.report_metrics) metrics.push_back(std::string(to_string(m)));
  Json eval = s.eval_method.kind == EvalMethod::Kind::kfold
                  ? Json{{"kind", "kfold"}, {"k", s.eval_method.k}}
                  : Json{{"kind", "holdout"}, {"test_fraction", s.eval_method.test_fraction}};
  return Json{{"task_type", std::string(to_string(s.task_type))},
              {"target", s.target},
              {"features", s.features},
              {"primary_metric", std::string(to_string(s.primary_metric))},
              {"report_metrics", metrics},
              {"eval_method", eval},
              {"budget", Json{{"max_pipelines", s.budget.max_pipelines},
                              {"time_limit_seconds", s.budget.time_limit_seconds}}}};
}

ProblemSpec problem_spec_from_json(const Json& j) {
  if (!j.is_object()) throw schema_error("$", "expected an object");
  ProblemSpec s;

  const std::string task = require_string(j, "task_type", "$");
  if (task == "classification") s.task_type = TaskType::classification;
  else if (task == "regression") s.task_type = TaskType::regression;
  else if (task == "clustering" || task == "time_series_forecasting" || task == "forecasting") {
    throw Error(ErrorCode::UnsupportedTaskType, "task type '" + task + "' is not supported",
                Json{{"path", "$.task_type"}, {"task_type", task}});
  } else {
    throw schema_error("$.task_type", "unknown task type '" + task + "'");
  }

  s.target = require_string(j, "target", "$");

  const Json& features = require(j, "features", "$");
  if (!features.is_array()) throw schema_error("$.features", "expected an array");
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!features[i].is_string()) {
      throw schema_error("$.features[" + std::to_string(i) + "]", "expected a string");
    }
    s.features.push_back(features[i].get<std::string>());
  }

  s.primary_metric = metric_at(require(j, "primary_metric", "$"), "$.primary_metric");

  if (j.contains("report_metrics")) {
    const Json& rm = j.at("report_metrics");
    if (!rm.is_array()) throw schema_error("$.report_metrics", "expected an array");
    for (std::size_t i = 0; i < rm.size(); ++i) {
      s.report_metrics.push_back(metric_at(rm[i], "$.report_metrics[" + std::to_string(i) + "]"));
    }
  } else {
    s.report_metrics = metrics_for(s.task_type);
    // A mismatched primary metric is reported by validate() as MetricTaskMismatch.
    if (!metric_applies(s.primary_metric, s.task_type)) {
      s.report_metrics.insert(s.report_metrics.begin(), s.primary_metric);
    }
  }

  if (j.contains("eval_method")) {
    const Json& e = j.at("eval_method");
    const std::string kind = require_string(e, "kind", "$.eval_method");
    if (kind == "kfold") {
      const Json& k = require(e, "k", "$.eval_method");
      if (!k.is_number_integer()) throw schema_error("$.eval_method.k", "expected an integer");
      s.eval_method = EvalMethod::kfold(k.get<int>());
    } else if (kind == "holdout") {
      const Json& f = require(e, "test_fraction", "$.eval_method");
      if (!f.is_number()) throw schema_error("$.eval_method.test_fraction", "expected a number");
      s.eval_method = EvalMethod::holdout(f.get<double>());
    } else {
      throw schema_error("$.eval_method.kind", "expected 'kfold' or 'holdout'");
    }
  } else {
    s.eval_method = EvalMethod::kfold(5);
  }

  const Json& budget = require(j, "budget", "$");
  s.budget.max_pipelines = require_positive_int(budget, "max_pipelines", "$.budget");
  s.budget.time_limit_seconds = require_positive_int(budget, "time_limit_seconds", "$.budget");

  check_budget_and_eval(s);
  return s;
}

}  // namespace hilml
