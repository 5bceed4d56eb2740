#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hilml/table.hpp"

namespace hilml {

enum class TaskType { classification, regression };

enum class Metric { accuracy, precision, recall, f1, mae, mse, rmse, r2 };

std::string_view to_string(TaskType t);
std::string_view to_string(Metric m);
/// Throws UnknownMetric.
Metric parse_metric(std::string_view name);

/// Metrics valid for `t`, in canonical order.
const std::vector<Metric>& metrics_for(TaskType t);
bool metric_applies(Metric m, TaskType t);
bool higher_is_better(Metric m);

struct EvalMethod {
  enum class Kind { kfold, holdout };
  Kind kind = Kind::kfold;
  int k = 5;
  double test_fraction = 0.2;

  static EvalMethod kfold(int k) { return {Kind::kfold, k, 0.2}; }
  static EvalMethod holdout(double fraction) { return {Kind::holdout, 5, fraction}; }

  bool operator==(const EvalMethod& o) const {
    return kind == o.kind && (kind == Kind::kfold ? k == o.k : test_fraction == o.test_fraction);
  }
};

struct Budget {
  int max_pipelines = 20;
  int time_limit_seconds = 60;

  bool operator==(const Budget&) const = default;
};

struct ProblemSpec {
  TaskType task_type = TaskType::regression;
  std::string target;
  std::vector<std::string> features;
  Metric primary_metric = Metric::mae;
  std::vector<Metric> report_metrics;
  EvalMethod eval_method;
  Budget budget;

  bool operator==(const ProblemSpec&) const = default;
};

/// A spec checked against one dataset.  `usable_rows` are the rows whose
/// target is present, in dataset order; the others never reach training or
/// evaluation.
struct ValidatedSpec {
  ProblemSpec spec;
  std::string dataset_name;
  std::string dataset_fingerprint;
  std::vector<std::size_t> usable_rows;

  bool operator==(const ValidatedSpec&) const = default;
};

/// Checks, in this order: EmptyFeatures, TargetNotFound, TargetInFeatures,
/// FeatureNotFound, TaskTargetMismatch, MetricTaskMismatch, SchemaError
/// (primary metric not reported, bad budget or eval method).
ValidatedSpec validate(const ProblemSpec& spec, const Dataset& dataset);
/// Idempotent: re-validating a bound spec yields the same value.
ValidatedSpec validate(const ValidatedSpec& spec, const Dataset& dataset);

/// Writes every field, defaults included.
Json to_json(const ProblemSpec& spec);
/// Throws SchemaError (details.path is the JSON path of the offending field) or
/// UnsupportedTaskType.  Omitted eval_method defaults to kfold(5); omitted
/// report_metrics default to every metric of the task type.
ProblemSpec problem_spec_from_json(const Json& j);

}  // namespace hilml
