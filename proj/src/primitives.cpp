#include "hilml/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "hilml/detail/overloaded.hpp"

namespace hilml {

// ---------------------------------------------------------------------------
// Targets

std::size_t target_size(const Target& t) {
  return std::visit([](const auto& v) { return v.size(); }, t);
}

Target target_take(const Target& t, const std::vector<std::size_t>& rows) {
  return std::visit(
      [&](const auto& v) -> Target {
        std::decay_t<decltype(v)> out;
        out.reserve(rows.size());
        for (auto r : rows) out.push_back(v.at(r));
        return out;
      },
      t);
}

Json target_cell_json(const Target& t, std::size_t i) {
  return std::visit([&](const auto& v) -> Json { return v.at(i); }, t);
}

// ---------------------------------------------------------------------------
// Catalog

std::string_view to_string(PrimitiveRole r) {
  return r == PrimitiveRole::preprocessor ? "preprocessor" : "estimator";
}

namespace {

constexpr double kHuge = 1e300;

// Default is given as a grid index so it is always a grid point.
HyperparamRange lambda_range(std::size_t default_index) {
  HyperparamRange h;
  h.name = "lambda";
  h.scale = ScaleKind::log;
  h.low = 1e-4;
  h.high = 10;
  for (int i = 0; i <= 10; ++i) h.grid.push_back(std::pow(10.0, -4.0 + 0.5 * i));
  h.grid.back() = 10.0;
  h.grid.front() = 1e-4;
  h.default_value = h.grid.at(default_index);
  h.valid_min = 0;
  h.valid_max = 1e6;
  return h;
}

HyperparamRange choice_range(std::string name, std::vector<double> grid, double default_value,
                             double valid_min, double valid_max) {
  HyperparamRange h;
  h.name = std::move(name);
  h.scale = ScaleKind::choice;
  h.integer = true;
  h.low = grid.front();
  h.high = grid.back();
  h.grid = std::move(grid);
  h.default_value = default_value;
  h.valid_min = valid_min;
  h.valid_max = valid_max;
  return h;
}

std::vector<PrimitiveDescriptor> build_registry() {
  using R = PrimitiveRole;
  const std::vector<TaskType> reg{TaskType::regression};
  const std::vector<TaskType> cls{TaskType::classification};
  std::vector<PrimitiveDescriptor> out;

  auto pre = [&](std::string name, std::vector<DType> consumes, int outs, std::string schema) {
    PrimitiveDescriptor d;
    d.name = std::move(name);
    d.role = R::preprocessor;
    d.consumes = std::move(consumes);
    d.outputs_per_input = outs;
    d.output_schema = std::move(schema);
    return d;
  };
  auto est = [&](std::string name, std::vector<TaskType> tasks, bool numeric_only, bool scale_sensitive) {
    PrimitiveDescriptor d;
    d.name = std::move(name);
    d.role = R::estimator;
    d.tasks = std::move(tasks);
    d.numeric_only = numeric_only;
    d.scale_sensitive = scale_sensitive;
    d.outputs_per_input = 0;
    d.output_schema = "predictions";
    return d;
  };

  out.push_back(pre("mean_imputer", {DType::numeric, DType::temporal}, 1,
                    "same columns; missing numeric/temporal cells replaced by fit-time means"));
  {
    auto d = pre("constant_imputer", {DType::numeric}, 1,
                 "same columns; missing numeric cells replaced by fill_value");
    HyperparamRange h;
    h.name = "fill_value";
    h.scale = ScaleKind::linear;
    h.grid = {0.0};
    h.valid_min = -kHuge;
    h.valid_max = kHuge;
    d.hyperparams.push_back(h);
    out.push_back(d);
  }
  out.push_back(pre("standard_scaler", {DType::numeric}, 1,
                    "same columns; numeric columns centred and divided by population std"));
  out.push_back(pre("minmax_scaler", {DType::numeric}, 1, "same columns; numeric columns mapped to [0, 1]"));
  out.push_back(pre("one_hot_encoder", {DType::categorical, DType::text}, 0,
                    "each categorical column replaced by one numeric 0/1 column per fit-time category "
                    "(named column=category)"));
  out.push_back(pre("datetime_expander", {DType::temporal}, 4,
                    "each temporal column replaced by 4 numeric columns: .year .month .day .weekday"));

  out.push_back(est("mean_baseline", reg, false, false));
  out.push_back(est("majority_class_baseline", cls, false, false));
  out.push_back(est("linear_regression", reg, true, false));
  {
    auto d = est("ridge_regression", reg, true, true);
    d.hyperparams.push_back(lambda_range(8));
    out.push_back(d);
  }
  {
    auto d = est("lasso_regression", reg, true, true);
    d.hyperparams.push_back(lambda_range(4));
    out.push_back(d);
  }
  const std::vector<double> depths{2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> leaves{1, 5, 20};
  const std::vector<double> ks{1, 3, 5, 11, 25};
  {
    auto d = est("decision_tree_regressor", reg, true, false);
    d.hyperparams.push_back(choice_range("max_depth", depths, 5, 1, 64));
    d.hyperparams.push_back(choice_range("min_leaf", leaves, 5, 1, 1e9));
    out.push_back(d);
  }
  {
    auto d = est("knn_regressor", reg, true, true);
    d.hyperparams.push_back(choice_range("k", ks, 5, 1, 1e9));
    out.push_back(d);
  }
  {
    auto d = est("logistic_regression", cls, true, true);
    d.hyperparams.push_back(lambda_range(4));
    out.push_back(d);
  }
  {
    auto d = est("decision_tree_classifier", cls, true, false);
    d.hyperparams.push_back(choice_range("max_depth", depths, 5, 1, 64));
    d.hyperparams.push_back(choice_range("min_leaf", leaves, 5, 1, 1e9));
    out.push_back(d);
  }
  {
    auto d = est("knn_classifier", cls, true, true);
    d.hyperparams.push_back(choice_range("k", ks, 5, 1, 1e9));
    out.push_back(d);
  }
  return out;
}

}  // namespace

const std::vector<PrimitiveDescriptor>& registry() {
  static const std::vector<PrimitiveDescriptor> r = build_registry();
  return r;
}

const PrimitiveDescriptor& descriptor(std::string_view name) {
  for (const auto& d : registry()) {
    if (d.name == name) return d;
  }
  throw Error(ErrorCode::UnknownPrimitive, "unknown primitive '" + std::string(name) + "'",
              Json{{"primitive", std::string(name)}});
}

PrimitiveSpec make_primitive(std::string_view name, const std::map<std::string, double>& overrides) {
  const auto& d = descriptor(name);
  PrimitiveSpec s;
  s.name = d.name;
  for (const auto& h : d.hyperparams) s.hyperparams[h.name] = h.default_value;
  for (const auto& [k, v] : overrides) s.hyperparams[k] = v;
  check_primitive(s);
  return s;
}

void check_primitive(const PrimitiveSpec& spec) {
  const auto& d = descriptor(spec.name);
  for (const auto& [k, v] : spec.hyperparams) {
    auto it = std::find_if(d.hyperparams.begin(), d.hyperparams.end(),
                           [&](const HyperparamRange& h) { return h.name == k; });
    if (it == d.hyperparams.end()) {
      throw Error(ErrorCode::InvalidHyperparameter, spec.name + " has no hyperparameter '" + k + "'",
                  Json{{"primitive", spec.name}, {"hyperparameter", k}});
    }
    const bool bad_int = it->integer && std::floor(v) != v;
    if (!std::isfinite(v) || v < it->valid_min || v > it->valid_max || bad_int) {
      throw Error(ErrorCode::InvalidHyperparameter,
                  spec.name + "." + k + " = " + std::to_string(v) + " is out of range",
                  Json{{"primitive", spec.name}, {"hyperparameter", k}, {"value", v}});
    }
  }
  for (const auto& h : d.hyperparams) {
    if (!spec.hyperparams.count(h.name)) {
      throw Error(ErrorCode::InvalidHyperparameter, spec.name + " is missing hyperparameter '" + h.name + "'",
                  Json{{"primitive", spec.name}, {"hyperparameter", h.name}});
    }
  }
}

Json to_json(const PrimitiveSpec& spec) {
  Json hp = Json::object();
  for (const auto& [k, v] : spec.hyperparams) hp[k] = v;
  return Json{{"name", spec.name}, {"hyperparams", hp}};
}

PrimitiveSpec primitive_spec_from_json(const Json& j) {
  PrimitiveSpec s;
  try {
    s.name = j.at("name").get<std::string>();
    if (j.contains("hyperparams")) {
      for (const auto& [k, v] : j.at("hyperparams").items()) s.hyperparams[k] = v.get<double>();
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed primitive step: ") + e.what());
  }
  check_primitive(s);
  return s;
}

// ---------------------------------------------------------------------------
// Helpers

Schema schema_of(const Table& t) {
  Schema s;
  s.reserve(t.column_count());
  for (const auto& c : t.columns()) s.push_back({c.name(), c.dtype()});
  return s;
}

Eigen::MatrixXd numeric_matrix(const Table& x, std::string_view who) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(x.row_count()), static_cast<Eigen::Index>(x.column_count()));
  for (std::size_t c = 0; c < x.column_count(); ++c) {
    const Column& col = x.column(c);
    if (col.dtype() != DType::numeric) {
      throw Error(ErrorCode::NonNumericInput,
                  std::string(who) + " needs numeric input; column '" + col.name() + "' is " +
                      std::string(to_string(col.dtype())),
                  Json{{"column", col.name()}, {"primitive", std::string(who)}});
    }
    for (std::size_t r = 0; r < x.row_count(); ++r) {
      const auto& v = col.numbers()[r];
      if (!v) {
        throw Error(ErrorCode::MissingValues,
                    std::string(who) + " cannot handle missing values (column '" + col.name() + "')",
                    Json{{"column", col.name()}, {"primitive", std::string(who)}});
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
    }
  }
  return m;
}

namespace {

double hp(const PrimitiveSpec& s, const std::string& name) { return s.hyperparams.at(name); }

void check_cancel(const std::stop_token& stop) {
  if (stop.stop_requested()) throw Error(ErrorCode::Cancelled, "fit cancelled");
}

std::vector<std::string> sorted_classes(const Labels& y) {
  std::set<std::string> s(y.begin(), y.end());
  return {s.begin(), s.end()};
}

std::vector<int> class_indices(const Labels& y, const std::vector<std::string>& classes) {
  std::vector<int> out;
  out.reserve(y.size());
  for (const auto& l : y) {
    out.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), l) - classes.begin()));
  }
  return out;
}

std::string majority_label(const Labels& y) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : y) ++counts[l];
  std::string best;
  std::size_t best_n = 0;
  for (const auto& [l, n] : counts) {
    if (n > best_n) {
      best = l;
      best_n = n;
    }
  }
  return best;
}

const Values& need_values(const Target* y, const std::string& who) {
  if (!y || !std::holds_alternative<Values>(*y)) {
    throw Error(ErrorCode::WrongTaskType, who + " needs a numeric target");
  }
  return std::get<Values>(*y);
}

const Labels& need_labels(const Target* y, const std::string& who) {
  if (!y || !std::holds_alternative<Labels>(*y)) {
    throw Error(ErrorCode::WrongTaskType, who + " needs a label target");
  }
  return std::get<Labels>(*y);
}

double mean_of(const std::vector<std::optional<double>>& v, double fallback) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& x : v) {
    if (x) {
      s += *x;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : fallback;
}

std::array<double, 4> expand_timestamp(double ts) {
  const auto t = static_cast<Timestamp>(ts);
  const CivilTime c = to_civil(t);
  return {static_cast<double>(c.year), static_cast<double>(c.month), static_cast<double>(c.day),
          static_cast<double>(weekday(t))};
}

constexpr std::array<const char*, 4> kDatetimeParts{"year", "month", "day", "weekday"};

// Softmax cross-entropy state for logistic regression.
struct LogisticEval {
  double loss = 0;
  Eigen::MatrixXd grad_w;
  Eigen::VectorXd grad_b;
};

LogisticEval logistic_eval(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::MatrixXd& w,
                           const Eigen::VectorXd& b, double lambda) {
  const auto n = x.rows();
  const auto k = w.rows();
  Eigen::MatrixXd logits = x * w.transpose();
  logits.rowwise() += b.transpose();
  double loss = 0;
  Eigen::MatrixXd g(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    double z = 0;
    for (Eigen::Index c = 0; c < k; ++c) z += std::exp(logits(i, c) - mx);
    const double lz = mx + std::log(z);
    loss += lz - logits(i, y[static_cast<std::size_t>(i)]);
    for (Eigen::Index c = 0; c < k; ++c) g(i, c) = std::exp(logits(i, c) - lz);
    g(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  LogisticEval e;
  e.loss = loss * inv_n + 0.5 * lambda * w.squaredNorm();
  e.grad_w = g.transpose() * x * inv_n + lambda * w;
  e.grad_b = g.colwise().sum().transpose() * inv_n;
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// Solvers

LinearState fit_least_squares(const Eigen::MatrixXd& x, const std::vector<double>& y) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (n == 0) throw Error(ErrorCode::TooFewRows, "least squares needs at least one row");
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = yv.mean();
  LinearState s;
  if (p == 0) {
    s.intercept = ym;
    return s;
  }
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const Eigen::VectorXd yc = yv.array() - ym;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
  if (qr.rank() < p) {
    s = fit_ridge(x, y, kSingularRidge);
    s.singular_fallback = true;
    return s;
  }
  const Eigen::VectorXd beta = qr.solve(yc);
  s.coef.assign(beta.data(), beta.data() + p);
  s.intercept = ym - xm.dot(beta);
  return s;
}

LinearState fit_ridge(const Eigen::MatrixXd& x, const std::vector<double>& y, double lambda) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (n == 0) throw Error(ErrorCode::TooFewRows, "ridge needs at least one row");
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = yv.mean();
  LinearState s;
  if (p == 0) {
    s.intercept = ym;
    return s;
  }
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const Eigen::VectorXd yc = yv.array() - ym;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd beta = gram.ldlt().solve(xc.transpose() * yc);
  s.coef.assign(beta.data(), beta.data() + p);
  s.intercept = ym - xm.dot(beta);
  return s;
}

LinearState fit_lasso(const Eigen::MatrixXd& x, const std::vector<double>& y, double lambda,
                      std::stop_token stop) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (n == 0) throw Error(ErrorCode::TooFewRows, "lasso needs at least one row");
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = yv.mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  Eigen::VectorXd residual = yv.array() - ym;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const Eigen::VectorXd norms = xc.colwise().squaredNorm().transpose() * inv_n;

  LinearState s;
  s.converged = false;
  for (int sweep = 1; sweep <= kLassoMaxSweeps; ++sweep) {
    check_cancel(stop);
    double max_change = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (norms(j) <= 0) continue;
      const double rho = xc.col(j).dot(residual) * inv_n + norms(j) * beta(j);
      double updated = 0;
      if (rho > lambda) updated = (rho - lambda) / norms(j);
      else if (rho < -lambda) updated = (rho + lambda) / norms(j);
      const double delta = updated - beta(j);
      if (delta != 0) {
        residual -= xc.col(j) * delta;
        beta(j) = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    s.iterations = sweep;
    if (max_change < kLassoTolerance) {
      s.converged = true;
      break;
    }
  }
  s.coef.assign(beta.data(), beta.data() + p);
  s.intercept = ym - xm.dot(beta);
  return s;
}

LogisticState fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y,
                           const std::vector<std::string>& classes, double lambda, std::stop_token stop,
                           std::vector<double>* loss_trace) {
  const auto n = x.rows();
  const auto p = x.cols();
  const auto k = static_cast<Eigen::Index>(classes.size());
  if (n == 0) throw Error(ErrorCode::TooFewRows, "logistic regression needs at least one row");
  LogisticState s;
  s.classes = classes;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(k, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);

  // Curvature bound: 1/2 * lambda_max(Z'Z/n) + lambda with Z = [X 1]; the largest
  // eigenvalue is bounded by both the trace and the max absolute row sum.
  Eigen::MatrixXd z(n, p + 1);
  z << x, Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd gram = z.transpose() * z / static_cast<double>(n);
  const double trace = gram.trace();
  const double row_sum = gram.cwiseAbs().rowwise().sum().maxCoeff();
  const double curvature = 0.5 * std::min(trace, row_sum) + lambda;
  const double step = 1.0 / curvature;

  if (k > 1) {
    for (int it = 0; it < kLogisticMaxIterations; ++it) {
      check_cancel(stop);
      const LogisticEval e = logistic_eval(x, y, w, b, lambda);
      if (loss_trace) loss_trace->push_back(e.loss);
      s.final_loss = e.loss;
      const double g = std::max(e.grad_w.size() ? e.grad_w.cwiseAbs().maxCoeff() : 0.0,
                                e.grad_b.cwiseAbs().maxCoeff());
      if (g < kLogisticTolerance) {
        s.converged = true;
        break;
      }
      w -= step * e.grad_w;
      b -= step * e.grad_b;
      s.iterations = it + 1;
    }
    if (!s.converged) {
      const LogisticEval e = logistic_eval(x, y, w, b, lambda);
      if (loss_trace) loss_trace->push_back(e.loss);
      s.final_loss = e.loss;
    }
  } else {
    s.converged = true;
  }
  s.weights.assign(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(p)));
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index j = 0; j < p; ++j) s.weights[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] = w(c, j);
  }
  s.bias.assign(b.data(), b.data() + k);
  return s;
}

// ---------------------------------------------------------------------------
// Fit

FittedPrimitive fit_primitive(const PrimitiveSpec& spec, const Table& x, const Target* y, std::stop_token stop) {
  check_primitive(spec);
  const auto& d = descriptor(spec.name);
  const Schema schema = schema_of(x);
  const std::string& name = spec.name;

  if (d.role == PrimitiveRole::estimator) {
    if (!y) throw Error(ErrorCode::WrongTaskType, name + " needs a target");
    if (target_size(*y) != x.row_count()) {
      throw Error(ErrorCode::SchemaMismatch, name + ": target length differs from feature rows");
    }
    if (x.row_count() == 0) throw Error(ErrorCode::TooFewRows, name + " needs at least one training row");
  }

  if (name == "mean_imputer" || name == "constant_imputer") {
    ImputerState s;
    for (const auto& c : x.columns()) {
      if (c.dtype() == DType::numeric) {
        s.fill[c.name()] = name == "mean_imputer" ? mean_of(c.numbers(), 0.0) : hp(spec, "fill_value");
      } else if (c.dtype() == DType::temporal && name == "mean_imputer") {
        s.fill[c.name()] = std::round(mean_of(c.numbers(), 0.0));
      }
    }
    return {spec, schema, s};
  }
  if (name == "standard_scaler" || name == "minmax_scaler") {
    ScalerState s;
    for (const auto& c : x.columns()) {
      if (c.dtype() != DType::numeric) continue;
      std::vector<double> v;
      for (const auto& e : c.numbers()) {
        if (e) v.push_back(*e);
      }
      double offset = 0;
      double scale = 1;
      if (!v.empty()) {
        if (name == "standard_scaler") {
          offset = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
          double ss = 0;
          for (double e : v) ss += (e - offset) * (e - offset);
          scale = std::sqrt(ss / static_cast<double>(v.size()));
        } else {
          const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
          offset = *lo;
          scale = *hi - *lo;
        }
        if (!(scale > 0)) scale = 1;
      }
      s.offset_scale[c.name()] = {offset, scale};
    }
    return {spec, schema, s};
  }
  if (name == "one_hot_encoder") {
    OneHotState s;
    for (const auto& c : x.columns()) {
      if (c.dtype() != DType::categorical && c.dtype() != DType::text) continue;
      std::set<std::string> cats;
      for (const auto& e : c.strings()) {
        if (e) cats.insert(*e);
      }
      s.categories[c.name()] = {cats.begin(), cats.end()};
    }
    return {spec, schema, s};
  }
  if (name == "datetime_expander") {
    DatetimeState s;
    for (const auto& c : x.columns()) {
      if (c.dtype() != DType::temporal) continue;
      std::vector<double> sums(4, 0.0);
      std::size_t n = 0;
      for (const auto& e : c.numbers()) {
        if (!e) continue;
        const auto parts = expand_timestamp(*e);
        for (std::size_t i = 0; i < 4; ++i) sums[i] += parts[i];
        ++n;
      }
      for (auto& v : sums) v = n ? v / static_cast<double>(n) : 0.0;
      s.fallback[c.name()] = sums;
    }
    return {spec, schema, s};
  }

  // Estimators.
  if (name == "mean_baseline") {
    const Values& yv = need_values(y, name);
    ConstantState s;
    s.value = std::accumulate(yv.begin(), yv.end(), 0.0) / static_cast<double>(yv.size());
    return {spec, schema, s};
  }
  if (name == "majority_class_baseline") {
    ConstantState s;
    s.label = majority_label(need_labels(y, name));
    return {spec, schema, s};
  }

  const Eigen::MatrixXd m = numeric_matrix(x, name);
  if (name == "linear_regression") return {spec, schema, fit_least_squares(m, need_values(y, name))};
  if (name == "ridge_regression") return {spec, schema, fit_ridge(m, need_values(y, name), hp(spec, "lambda"))};
  if (name == "lasso_regression") {
    return {spec, schema, fit_lasso(m, need_values(y, name), hp(spec, "lambda"), stop)};
  }
  if (name == "decision_tree_regressor") {
    TreeState s;
    s.nodes = grow_regression_tree(
        m, need_values(y, name),
        TreeGrowth{static_cast<int>(hp(spec, "max_depth")), static_cast<std::size_t>(hp(spec, "min_leaf"))}, stop);
    return {spec, schema, s};
  }
  if (name == "decision_tree_classifier") {
    const Labels& yl = need_labels(y, name);
    TreeState s;
    s.classes = sorted_classes(yl);
    s.nodes = grow_classification_tree(
        m, class_indices(yl, s.classes), static_cast<int>(s.classes.size()),
        TreeGrowth{static_cast<int>(hp(spec, "max_depth")), static_cast<std::size_t>(hp(spec, "min_leaf"))}, stop);
    return {spec, schema, s};
  }
  if (name == "knn_regressor" || name == "knn_classifier") {
    KnnState s;
    s.k = static_cast<int>(hp(spec, "k"));
    s.points.assign(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) s.points[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
    }
    if (name == "knn_regressor") s.targets = need_values(y, name);
    else s.targets = need_labels(y, name);
    return {spec, schema, s};
  }
  if (name == "logistic_regression") {
    const Labels& yl = need_labels(y, name);
    const auto classes = sorted_classes(yl);
    return {spec, schema, fit_logistic(m, class_indices(yl, classes), classes, hp(spec, "lambda"), stop)};
  }
  throw Error(ErrorCode::UnknownPrimitive, "no fit routine for '" + name + "'");
}

// ---------------------------------------------------------------------------
// Transform / predict

void FittedPrimitive::check_schema(const Table& x) const {
  Json missing = Json::array();
  Json extra = Json::array();
  Json retyped = Json::array();
  for (const auto& c : input_schema_) {
    const Column* col = x.find(c.name);
    if (!col) missing.push_back(c.name);
    else if (col->dtype() != c.dtype) retyped.push_back(c.name);
  }
  for (const auto& col : x.columns()) {
    const bool known = std::any_of(input_schema_.begin(), input_schema_.end(),
                                   [&](const ColumnSchema& c) { return c.name == col.name(); });
    if (!known) extra.push_back(col.name());
  }
  if (!missing.empty() || !extra.empty() || !retyped.empty()) {
    throw Error(ErrorCode::SchemaMismatch,
                spec_.name + ": input schema differs from fit-time schema",
                Json{{"missing", missing}, {"extra", extra}, {"dtype_changed", retyped}});
  }
}

Table FittedPrimitive::transform(const Table& x) const {
  if (role() != PrimitiveRole::preprocessor) {
    throw Error(ErrorCode::InvalidPipelineStructure, spec_.name + " is an estimator; use predict");
  }
  check_schema(x);
  std::vector<Column> out;
  for (const auto& cs : input_schema_) {
    const Column& c = x.at(cs.name);
    std::visit(
        detail::Overloaded{
            [&](const ImputerState& s) {
              auto it = s.fill.find(c.name());
              if (it == s.fill.end()) {
                out.push_back(c);
                return;
              }
              auto v = c.numbers();
              for (auto& e : v) {
                if (!e) e = it->second;
              }
              out.push_back(c.dtype() == DType::temporal ? Column::temporal(c.name(), std::move(v), c.granularity())
                                                         : Column::numeric(c.name(), std::move(v)));
            },
            [&](const ScalerState& s) {
              auto it = s.offset_scale.find(c.name());
              if (it == s.offset_scale.end()) {
                out.push_back(c);
                return;
              }
              auto v = c.numbers();
              for (auto& e : v) {
                if (e) e = (*e - it->second.first) / it->second.second;
              }
              out.push_back(Column::numeric(c.name(), std::move(v)));
            },
            [&](const OneHotState& s) {
              auto it = s.categories.find(c.name());
              if (it == s.categories.end()) {
                out.push_back(c);
                return;
              }
              const auto& cats = it->second;
              std::vector<std::vector<std::optional<double>>> cols(cats.size(),
                                                                   std::vector<std::optional<double>>(c.size(), 0.0));
              for (std::size_t r = 0; r < c.size(); ++r) {
                const auto& e = c.strings()[r];
                if (!e) continue;
                auto pos = std::lower_bound(cats.begin(), cats.end(), *e);
                if (pos != cats.end() && *pos == *e) cols[static_cast<std::size_t>(pos - cats.begin())][r] = 1.0;
              }
              for (std::size_t k = 0; k < cats.size(); ++k) {
                out.push_back(Column::numeric(c.name() + "=" + cats[k], std::move(cols[k])));
              }
            },
            [&](const DatetimeState& s) {
              auto it = s.fallback.find(c.name());
              if (it == s.fallback.end()) {
                out.push_back(c);
                return;
              }
              std::array<std::vector<std::optional<double>>, 4> parts;
              for (auto& p : parts) p.reserve(c.size());
              for (const auto& e : c.numbers()) {
                if (e) {
                  const auto v = expand_timestamp(*e);
                  for (std::size_t i = 0; i < 4; ++i) parts[i].push_back(v[i]);
                } else {
                  for (std::size_t i = 0; i < 4; ++i) parts[i].push_back(it->second[i]);
                }
              }
              for (std::size_t i = 0; i < 4; ++i) {
                out.push_back(Column::numeric(c.name() + "." + kDatetimeParts[i], std::move(parts[i])));
              }
            },
            [&](const auto&) {
              throw Error(ErrorCode::InvalidPipelineStructure, spec_.name + " has no transform");
            }},
        state_);
  }
  return Table(std::move(out), x.row_count());
}

Target FittedPrimitive::predict(const Table& x, std::stop_token stop) const {
  if (role() != PrimitiveRole::estimator) {
    throw Error(ErrorCode::InvalidPipelineStructure, spec_.name + " is a preprocessor; use transform");
  }
  check_schema(x);
  const std::size_t n = x.row_count();

  if (const auto* s = std::get_if<ConstantState>(&state_)) {
    if (s->label) return Labels(n, *s->label);
    return Values(n, *s->value);
  }

  std::vector<std::string> order;
  for (const auto& c : input_schema_) order.push_back(c.name);
  const Eigen::MatrixXd m = numeric_matrix(x.select(order), spec_.name);

  return std::visit(
      detail::Overloaded{
          [&](const LinearState& s) -> Target {
            Values out(n, s.intercept);
            for (std::size_t r = 0; r < n; ++r) {
              double acc = s.intercept;
              for (std::size_t j = 0; j < s.coef.size(); ++j) acc += s.coef[j] * m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
              out[r] = acc;
            }
            return out;
          },
          [&](const TreeState& s) -> Target {
            if (s.classes.empty()) {
              Values out(n);
              for (std::size_t r = 0; r < n; ++r) {
                out[r] = s.nodes[static_cast<std::size_t>(tree_leaf(s.nodes, m, static_cast<Eigen::Index>(r)))].value;
              }
              return out;
            }
            Labels out(n);
            for (std::size_t r = 0; r < n; ++r) {
              const auto& leaf = s.nodes[static_cast<std::size_t>(tree_leaf(s.nodes, m, static_cast<Eigen::Index>(r)))];
              out[r] = s.classes[static_cast<std::size_t>(leaf.class_index)];
            }
            return out;
          },
          [&](const KnnState& s) -> Target {
            const std::size_t train = s.points.size();
            const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(s.k), train);
            std::vector<std::pair<double, std::size_t>> dist(train);
            std::vector<std::vector<std::size_t>> neighbours(n);
            for (std::size_t r = 0; r < n; ++r) {
              if (r % 64 == 0) check_cancel(stop);
              for (std::size_t t = 0; t < train; ++t) {
                double d2 = 0;
                for (std::size_t j = 0; j < s.points[t].size(); ++j) {
                  const double diff = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) - s.points[t][j];
                  d2 += diff * diff;
                }
                dist[t] = {d2, t};
              }
              std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
              for (std::size_t i = 0; i < k; ++i) neighbours[r].push_back(dist[i].second);
            }
            if (const auto* yv = std::get_if<Values>(&s.targets)) {
              Values out(n);
              for (std::size_t r = 0; r < n; ++r) {
                double acc = 0;
                for (auto t : neighbours[r]) acc += (*yv)[t];
                out[r] = acc / static_cast<double>(k);
              }
              return out;
            }
            const auto& yl = std::get<Labels>(s.targets);
            Labels out(n);
            for (std::size_t r = 0; r < n; ++r) {
              Labels votes;
              for (auto t : neighbours[r]) votes.push_back(yl[t]);
              out[r] = majority_label(votes);
            }
            return out;
          },
          [&](const LogisticState& s) -> Target {
            Labels out(n);
            for (std::size_t r = 0; r < n; ++r) {
              std::size_t best = 0;
              double best_logit = -std::numeric_limits<double>::infinity();
              for (std::size_t c = 0; c < s.classes.size(); ++c) {
                double z = s.bias[c];
                for (std::size_t j = 0; j < s.weights[c].size(); ++j) z += s.weights[c][j] * m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
                if (z > best_logit) {
                  best_logit = z;
                  best = c;
                }
              }
              out[r] = s.classes[best];
            }
            return out;
          },
          [&](const auto&) -> Target {
            throw Error(ErrorCode::InvalidPipelineStructure, spec_.name + " has no predict");
          }},
      state_);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

Json state_json(const LearnedState& state) {
  return std::visit(
      detail::Overloaded{
          [](const ImputerState& s) { return Json{{"kind", "imputer"}, {"fill", s.fill}}; },
          [](const ScalerState& s) {
            Json cols = Json::object();
            for (const auto& [k, v] : s.offset_scale) cols[k] = Json{{"offset", v.first}, {"scale", v.second}};
            return Json{{"kind", "scaler"}, {"columns", cols}};
          },
          [](const OneHotState& s) { return Json{{"kind", "one_hot"}, {"categories", s.categories}}; },
          [](const DatetimeState& s) { return Json{{"kind", "datetime"}, {"fallback", s.fallback}}; },
          [](const LinearState& s) {
            return Json{{"kind", "linear"},          {"coef", s.coef},
                        {"intercept", s.intercept},  {"singular_fallback", s.singular_fallback},
                        {"iterations", s.iterations}, {"converged", s.converged}};
          },
          [](const LogisticState& s) {
            return Json{{"kind", "logistic"},       {"classes", s.classes},
                        {"weights", s.weights},     {"bias", s.bias},
                        {"iterations", s.iterations}, {"converged", s.converged},
                        {"final_loss", s.final_loss}};
          },
          [](const TreeState& s) {
            return Json{{"kind", "tree"}, {"classes", s.classes}, {"root", tree_to_json(s.nodes)}};
          },
          [](const KnnState& s) {
            Json targets = std::visit([](const auto& v) { return Json(v); }, s.targets);
            return Json{{"kind", "knn"},
                        {"k", s.k},
                        {"points", s.points},
                        {"targets", targets},
                        {"classification", std::holds_alternative<Labels>(s.targets)}};
          },
          [](const ConstantState& s) {
            Json j{{"kind", "constant"}};
            j["value"] = s.value ? Json(*s.value) : Json(nullptr);
            j["label"] = s.label ? Json(*s.label) : Json(nullptr);
            return j;
          }},
      state);
}

LearnedState state_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "imputer") return ImputerState{j.at("fill").get<std::map<std::string, double>>()};
  if (kind == "scaler") {
    ScalerState s;
    for (const auto& [k, v] : j.at("columns").items()) {
      s.offset_scale[k] = {v.at("offset").get<double>(), v.at("scale").get<double>()};
    }
    return s;
  }
  if (kind == "one_hot") return OneHotState{j.at("categories").get<std::map<std::string, std::vector<std::string>>>()};
  if (kind == "datetime") return DatetimeState{j.at("fallback").get<std::map<std::string, std::vector<double>>>()};
  if (kind == "linear") {
    LinearState s;
    s.coef = j.at("coef").get<std::vector<double>>();
    s.intercept = j.at("intercept").get<double>();
    s.singular_fallback = j.at("singular_fallback").get<bool>();
    s.iterations = j.at("iterations").get<int>();
    s.converged = j.at("converged").get<bool>();
    return s;
  }
  if (kind == "logistic") {
    LogisticState s;
    s.classes = j.at("classes").get<std::vector<std::string>>();
    s.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    s.bias = j.at("bias").get<std::vector<double>>();
    s.iterations = j.at("iterations").get<int>();
    s.converged = j.at("converged").get<bool>();
    s.final_loss = j.at("final_loss").get<double>();
    return s;
  }
  if (kind == "tree") {
    TreeState s;
    s.classes = j.at("classes").get<std::vector<std::string>>();
    s.nodes = tree_from_json(j.at("root"));
    return s;
  }
  if (kind == "knn") {
    KnnState s;
    s.k = j.at("k").get<int>();
    s.points = j.at("points").get<std::vector<std::vector<double>>>();
    if (j.at("classification").get<bool>()) s.targets = j.at("targets").get<Labels>();
    else s.targets = j.at("targets").get<Values>();
    return s;
  }
  if (kind == "constant") {
    ConstantState s;
    if (!j.at("value").is_null()) s.value = j.at("value").get<double>();
    if (!j.at("label").is_null()) s.label = j.at("label").get<std::string>();
    return s;
  }
  throw Error(ErrorCode::SchemaError, "unknown learned state kind '" + kind + "'");
}

}  // namespace

Json FittedPrimitive::to_json() const {
  Json schema = Json::array();
  for (const auto& c : input_schema_) schema.push_back(Json{{"name", c.name}, {"dtype", std::string(hilml::to_string(c.dtype))}});
  Json j = hilml::to_json(spec_);
  j["input_schema"] = schema;
  j["state"] = state_json(state_);
  return j;
}

FittedPrimitive FittedPrimitive::from_json(const Json& j) {
  try {
    PrimitiveSpec spec = primitive_spec_from_json(j);
    Schema schema;
    for (const auto& c : j.at("input_schema")) {
      schema.push_back({c.at("name").get<std::string>(), parse_dtype(c.at("dtype").get<std::string>())});
    }
    return FittedPrimitive(std::move(spec), std::move(schema), state_from_json(j.at("state")));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed fitted primitive: ") + e.what());
  }
}

}  // namespace hilml
