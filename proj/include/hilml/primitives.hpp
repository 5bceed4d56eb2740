#pragma once

#include <map>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hilml/cart.hpp"
#include "hilml/problem_spec.hpp"
#include "hilml/table.hpp"

namespace hilml {

// ---------------------------------------------------------------------------
// Targets and predictions

using Values = std::vector<double>;
using Labels = std::vector<std::string>;
/// Regression targets/predictions are Values, classification ones are Labels.
using Target = std::variant<Values, Labels>;

std::size_t target_size(const Target& t);
Target target_take(const Target& t, const std::vector<std::size_t>& rows);
Json target_cell_json(const Target& t, std::size_t i);

// ---------------------------------------------------------------------------
// Catalog

enum class PrimitiveRole { preprocessor, estimator };

std::string_view to_string(PrimitiveRole r);

enum class ScaleKind { log, linear, choice };

/// A tunable hyperparameter.  `grid` is the finite set the search draws from
/// (inside [low, high] as declared); `valid_min`/`valid_max` are the hard
/// bounds accepted by fit.
struct HyperparamRange {
  std::string name;
  ScaleKind scale = ScaleKind::linear;
  double low = 0;
  double high = 0;
  bool integer = false;
  std::vector<double> grid;
  double default_value = 0;
  double valid_min = 0;
  double valid_max = 0;
};

struct PrimitiveDescriptor {
  std::string name;
  PrimitiveRole role = PrimitiveRole::preprocessor;
  std::vector<TaskType> tasks;  // estimators only
  std::vector<HyperparamRange> hyperparams;
  /// Column dtypes the primitive rewrites; others pass through (preprocessors).
  std::vector<DType> consumes;
  /// Output columns produced per consumed input column (0 = data dependent, 1 = in place).
  int outputs_per_input = 1;
  std::string output_schema;
  /// Estimators: requires every input column numeric with no missing cells.
  bool numeric_only = false;
  /// Search hint: estimator results depend on feature scale.
  bool scale_sensitive = false;
};

const std::vector<PrimitiveDescriptor>& registry();
/// Throws UnknownPrimitive.
const PrimitiveDescriptor& descriptor(std::string_view name);

struct PrimitiveSpec {
  std::string name;
  std::map<std::string, double> hyperparams;

  bool operator==(const PrimitiveSpec&) const = default;
};

/// Spec with every declared hyperparameter at its default, overridden by `overrides`.
PrimitiveSpec make_primitive(std::string_view name, const std::map<std::string, double>& overrides = {});
/// Throws UnknownPrimitive or InvalidHyperparameter.
void check_primitive(const PrimitiveSpec& spec);

Json to_json(const PrimitiveSpec& spec);
PrimitiveSpec primitive_spec_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Learned state

struct ColumnSchema {
  std::string name;
  DType dtype = DType::numeric;

  bool operator==(const ColumnSchema&) const = default;
};
using Schema = std::vector<ColumnSchema>;

Schema schema_of(const Table& t);

struct ImputerState {
  std::map<std::string, double> fill;  // numeric and temporal columns
};
struct ScalerState {
  std::map<std::string, std::pair<double, double>> offset_scale;  // x' = (x - offset) / scale
};
struct OneHotState {
  std::map<std::string, std::vector<std::string>> categories;  // sorted
};
struct DatetimeState {
  std::map<std::string, std::vector<double>> fallback;  // year, month, day, weekday means
};
struct LinearState {
  std::vector<double> coef;
  double intercept = 0;
  bool singular_fallback = false;
  int iterations = 0;
  bool converged = true;
};
struct LogisticState {
  std::vector<std::string> classes;
  std::vector<std::vector<double>> weights;  // per class, per feature
  std::vector<double> bias;
  int iterations = 0;
  bool converged = false;
  double final_loss = 0;
};
struct TreeState {
  std::vector<TreeNode> nodes;
  std::vector<std::string> classes;  // empty for regression
};
struct KnnState {
  int k = 1;
  std::vector<std::vector<double>> points;
  Target targets;
};
struct ConstantState {
  std::optional<double> value;
  std::optional<std::string> label;
};

using LearnedState = std::variant<ImputerState, ScalerState, OneHotState, DatetimeState, LinearState,
                                  LogisticState, TreeState, KnnState, ConstantState>;

/// Immutable result of fitting one primitive.
class FittedPrimitive {
 public:
  FittedPrimitive(PrimitiveSpec spec, Schema input_schema, LearnedState state)
      : spec_(std::move(spec)), input_schema_(std::move(input_schema)), state_(std::move(state)) {}

  const PrimitiveSpec& spec() const { return spec_; }
  const Schema& input_schema() const { return input_schema_; }
  const LearnedState& state() const { return state_; }
  PrimitiveRole role() const { return descriptor(spec_.name).role; }

  /// Preprocessors only.  Row count is preserved.  Throws SchemaMismatch.
  Table transform(const Table& x) const;
  /// Estimators only.  Throws SchemaMismatch, NonNumericInput, MissingValues,
  /// or Cancelled once `stop` is requested.
  Target predict(const Table& x, std::stop_token stop = {}) const;

  Json to_json() const;
  static FittedPrimitive from_json(const Json& j);

 private:
  void check_schema(const Table& x) const;

  PrimitiveSpec spec_;
  Schema input_schema_;
  LearnedState state_;
};

/// Estimators require `y`; preprocessors ignore it.  Deterministic: identical
/// inputs produce bit-identical learned state.  `stop` aborts long solvers with
/// a Cancelled error.
FittedPrimitive fit_primitive(const PrimitiveSpec& spec, const Table& x, const Target* y,
                              std::stop_token stop = {});

// ---------------------------------------------------------------------------
// Solver entry points, exposed for direct testing.

/// Rows x columns matrix; throws NonNumericInput / MissingValues naming `who`.
Eigen::MatrixXd numeric_matrix(const Table& x, std::string_view who);

inline constexpr double kLassoTolerance = 1e-6;
inline constexpr int kLassoMaxSweeps = 10000;
inline constexpr double kSingularRidge = 1e-8;

/// min (1/2n)||y - b0 - Xb||^2 + lambda ||b||_1 by cyclic coordinate descent.
LinearState fit_lasso(const Eigen::MatrixXd& x, const std::vector<double>& y, double lambda,
                      std::stop_token stop = {});
/// min ||y - b0 - Xb||^2 + lambda ||b||^2 (intercept unpenalised).
LinearState fit_ridge(const Eigen::MatrixXd& x, const std::vector<double>& y, double lambda);
/// Least squares; rank-deficient designs fall back to ridge(1e-8) with the flag set.
LinearState fit_least_squares(const Eigen::MatrixXd& x, const std::vector<double>& y);

inline constexpr double kLogisticTolerance = 1e-6;
inline constexpr int kLogisticMaxIterations = 2000;

/// Multinomial logistic regression, full-batch gradient descent with the fixed
/// step 1/L where L bounds the loss curvature.  Loss is mean cross-entropy plus
/// (lambda/2)||W||^2.  When `loss_trace` is given it receives the loss before
/// every step and after the last.
LogisticState fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y,
                           const std::vector<std::string>& classes, double lambda,
                           std::stop_token stop = {}, std::vector<double>* loss_trace = nullptr);

}  // namespace hilml
