#include "hilml/explain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

namespace hilml {

// ---------------------------------------------------------------------------
// Confusion matrix

ConfusionMatrix confusion_matrix(const ScoreReport& report) {
  const auto* t = std::get_if<Labels>(&report.y_true);
  const auto* p = std::get_if<Labels>(&report.y_pred);
  if (!t || !p) throw Error(ErrorCode::WrongTaskType, "confusion matrix needs a classification report");
  std::set<std::string> labels(t->begin(), t->end());
  labels.insert(p->begin(), p->end());
  ConfusionMatrix m;
  m.labels.assign(labels.begin(), labels.end());
  m.counts.assign(m.labels.size(), std::vector<std::size_t>(m.labels.size(), 0));
  auto index = [&](const std::string& l) {
    return static_cast<std::size_t>(std::lower_bound(m.labels.begin(), m.labels.end(), l) - m.labels.begin());
  };
  for (std::size_t i = 0; i < t->size(); ++i) ++m.counts[index((*t)[i])][index((*p)[i])];
  return m;
}

Json to_json(const ConfusionMatrix& m) { return Json{{"labels", m.labels}, {"counts", m.counts}}; }

// ---------------------------------------------------------------------------
// Surrogate rules

namespace {

struct SurrogateColumn {
  std::string feature;
  DType dtype = DType::numeric;
  std::optional<std::string> category;  // indicator column: 0 when equal, 1 otherwise
};

struct SurrogateDesign {
  std::vector<SurrogateColumn> columns;
  Eigen::MatrixXd x;
};

SurrogateDesign surrogate_design(const Dataset& dataset, const ValidatedSpec& spec, const std::vector<std::size_t>& rows) {
  SurrogateDesign d;
  std::vector<std::vector<double>> cols;
  for (const auto& f : spec.spec.features) {
    const Column& c = dataset.table.at(f);
    if (c.is_numeric_storage()) {
      std::vector<double> v;
      for (auto r : rows) v.push_back(c.numbers()[r] ? *c.numbers()[r] : std::numeric_limits<double>::quiet_NaN());
      d.columns.push_back({f, c.dtype(), std::nullopt});
      cols.push_back(std::move(v));
      continue;
    }
    std::set<std::string> cats;
    for (auto r : rows) {
      if (c.strings()[r]) cats.insert(*c.strings()[r]);
    }
    for (const auto& cat : cats) {
      std::vector<double> v;
      for (auto r : rows) v.push_back(c.strings()[r] && *c.strings()[r] == cat ? 0.0 : 1.0);
      d.columns.push_back({f, c.dtype(), cat});
      cols.push_back(std::move(v));
    }
  }
  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t i = 0; i < rows.size(); ++i) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
  }
  return d;
}

Predicate make_predicate(const SurrogateColumn& c, const TreeNode& node, bool left) {
  Predicate p;
  p.feature = c.feature;
  p.dtype = c.dtype;
  if (c.category) {
    p.category = *c.category;
    p.op = left ? Predicate::Op::eq : Predicate::Op::ne;
  } else {
    p.threshold = node.threshold;
    p.op = left ? Predicate::Op::le : Predicate::Op::gt;
  }
  return p;
}

void collect_rules(const std::vector<TreeNode>& nodes, int id, const SurrogateDesign& design,
                   std::vector<Predicate>& path, std::vector<int>& leaf_ids, std::vector<std::vector<Predicate>>& paths) {
  const TreeNode& n = nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf()) {
    leaf_ids.push_back(id);
    paths.push_back(path);
    return;
  }
  const auto& col = design.columns[static_cast<std::size_t>(n.feature)];
  path.push_back(make_predicate(col, n, true));
  collect_rules(nodes, n.left, design, path, leaf_ids, paths);
  path.back() = make_predicate(col, n, false);
  collect_rules(nodes, n.right, design, path, leaf_ids, paths);
  path.pop_back();
}

double gini(const std::vector<double>& counts) {
  double n = 0, sq = 0;
  for (double c : counts) {
    n += c;
    sq += c * c;
  }
  return n > 0 ? n - sq / n : 0.0;
}

// Collapses the split with the smallest impurity decrease until at most
// `max_leaves` leaves remain.
std::vector<TreeNode> prune_to(std::vector<TreeNode> nodes, std::size_t max_leaves) {
  while (tree_leaf_count(nodes) > max_leaves) {
    int weakest = -1;
    double weakest_gain = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& n = nodes[i];
      if (n.is_leaf() || !nodes[static_cast<std::size_t>(n.left)].is_leaf() ||
          !nodes[static_cast<std::size_t>(n.right)].is_leaf()) {
        continue;
      }
      const double gain = gini(n.class_counts) - gini(nodes[static_cast<std::size_t>(n.left)].class_counts) -
                          gini(nodes[static_cast<std::size_t>(n.right)].class_counts);
      if (weakest < 0 || gain < weakest_gain) {
        weakest = static_cast<int>(i);
        weakest_gain = gain;
      }
    }
    TreeNode& n = nodes[static_cast<std::size_t>(weakest)];
    n.feature = -1;
    n.left = n.right = -1;
    nodes = tree_from_json(tree_to_json(nodes));  // drops the orphaned children
  }
  return nodes;
}

// Recounts every node's class counts from the rows routed through it.
void restat(std::vector<TreeNode>& nodes, const Eigen::MatrixXd& x, const std::vector<int>& y, int n_classes) {
  for (auto& n : nodes) {
    n.class_counts.assign(static_cast<std::size_t>(n_classes), 0.0);
    n.samples = 0;
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int id = 0;
    for (;;) {
      TreeNode& n = nodes[static_cast<std::size_t>(id)];
      n.class_counts[static_cast<std::size_t>(y[static_cast<std::size_t>(r)])] += 1;
      ++n.samples;
      if (n.is_leaf()) break;
      id = x(r, n.feature) <= n.threshold ? n.left : n.right;
    }
  }
  for (auto& n : nodes) {
    n.class_index = static_cast<int>(std::max_element(n.class_counts.begin(), n.class_counts.end()) - n.class_counts.begin());
  }
}

// A tree estimator whose splits all read untouched raw features can be
// restated over the surrogate design as is.
std::optional<std::vector<TreeNode>> model_tree(const FittedPipeline& model, const Table& features,
                                                const SurrogateDesign& design) {
  const auto* state = std::get_if<TreeState>(&model.steps().back().state());
  if (!state || state->classes.empty() || state->nodes.empty()) return std::nullopt;
  const Table input = model.transform(features);
  const Schema& schema = model.steps().back().input_schema();
  std::vector<TreeNode> nodes = state->nodes;
  for (auto& n : nodes) {
    if (n.is_leaf()) continue;
    const std::string& name = schema.at(static_cast<std::size_t>(n.feature)).name;
    int j = -1;
    for (std::size_t c = 0; c < design.columns.size(); ++c) {
      if (design.columns[c].feature == name && !design.columns[c].category) j = static_cast<int>(c);
    }
    if (j < 0 || !input.at(name).is_numeric_storage()) return std::nullopt;
    const auto& v = input.at(name).numbers();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i] || *v[i] != design.x(static_cast<Eigen::Index>(i), j)) return std::nullopt;
    }
    n.feature = j;
  }
  return nodes;
}

std::string op_text(Predicate::Op op) {
  switch (op) {
    case Predicate::Op::le: return "<=";
    case Predicate::Op::gt: return ">";
    case Predicate::Op::eq: return "=";
    case Predicate::Op::ne: return "!=";
  }
  return "<=";
}

}  // namespace

RuleSet extract_rules(const FittedPipeline& model, const Dataset& dataset, const ValidatedSpec& spec,
                      const std::vector<std::size_t>& rows, std::size_t max_rules) {
  if (spec.spec.task_type != TaskType::classification) {
    throw Error(ErrorCode::WrongTaskType, "rules explain classification models only");
  }
  if (max_rules < 2) throw Error(ErrorCode::BadRequest, "max_rules must be at least 2", Json{{"max_rules", max_rules}});
  if (rows.empty()) throw Error(ErrorCode::BadRequest, "no rows to explain");

  const Table features = feature_table(dataset, spec, rows);
  const Labels predicted = std::get<Labels>(model.predict(features));
  std::set<std::string> class_set(predicted.begin(), predicted.end());
  const std::vector<std::string> classes(class_set.begin(), class_set.end());
  std::vector<int> y;
  for (const auto& p : predicted) {
    y.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), p) - classes.begin()));
  }

  RuleSet out;
  out.features = spec.spec.features;
  out.sample_count = rows.size();

  if (classes.size() == 1) {
    Rule r;
    r.predicted_class = classes[0];
    r.support = rows.size();
    r.confidence = 1.0;
    r.output_distribution[classes[0]] = rows.size();
    out.rules.push_back(r);
    out.fidelity = 1.0;
    out.degenerate_model = true;
    out.rule_of_row.assign(rows.size(), 0);
    return out;
  }

  const SurrogateDesign design = surrogate_design(dataset, spec, rows);
  auto fidelity_of = [&](const std::vector<TreeNode>& nodes) {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      agree += nodes[static_cast<std::size_t>(tree_leaf(nodes, design.x, static_cast<Eigen::Index>(i)))].class_index == y[i];
    }
    return static_cast<double>(agree) / static_cast<double>(rows.size());
  };

  struct Grown {
    int depth;
    std::vector<TreeNode> nodes;
    double fidelity;
  };
  std::vector<Grown> grown;
  for (int depth = kMinSurrogateDepth; depth <= kMaxSurrogateDepth; ++depth) {
    auto nodes = prune_to(grow_classification_tree(design.x, y, static_cast<int>(classes.size()), TreeGrowth{depth, 1}),
                          max_rules);
    const double f = fidelity_of(nodes);
    grown.push_back({tree_depth(nodes), std::move(nodes), f});
  }
  if (auto own = model_tree(model, features, design)) {
    restat(*own, design.x, y, static_cast<int>(classes.size()));
    auto nodes = prune_to(std::move(*own), max_rules);
    if (tree_depth(nodes) <= kMaxSurrogateDepth) {
      const double f = fidelity_of(nodes);
      const int d = tree_depth(nodes);
      const auto at = std::find_if(grown.begin(), grown.end(), [&](const Grown& g) { return g.depth > d; });
      grown.insert(at, {d, std::move(nodes), f});
    }
  }
  const Grown* chosen = nullptr;
  for (double need : {1.0, kMinFidelity}) {
    for (const auto& g : grown) {
      if (!chosen && g.fidelity >= need) chosen = &g;
    }
  }
  if (!chosen) {
    for (const auto& g : grown) {
      if (!chosen || g.fidelity > chosen->fidelity) chosen = &g;
    }
    out.low_fidelity = true;
  }
  out.depth = chosen->depth;
  out.fidelity = chosen->fidelity;

  std::vector<Predicate> path;
  std::vector<int> leaf_ids;
  std::vector<std::vector<Predicate>> paths;
  collect_rules(chosen->nodes, 0, design, path, leaf_ids, paths);
  for (std::size_t k = 0; k < leaf_ids.size(); ++k) {
    Rule r;
    r.predicates = paths[k];
    r.predicted_class = classes[static_cast<std::size_t>(chosen->nodes[static_cast<std::size_t>(leaf_ids[k])].class_index)];
    out.rules.push_back(std::move(r));
  }
  std::vector<std::size_t> agree(out.rules.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int leaf = tree_leaf(chosen->nodes, design.x, static_cast<Eigen::Index>(i));
    const auto k = static_cast<std::size_t>(std::find(leaf_ids.begin(), leaf_ids.end(), leaf) - leaf_ids.begin());
    out.rule_of_row.push_back(k);
    Rule& r = out.rules[k];
    ++r.support;
    ++r.output_distribution[predicted[i]];
    agree[k] += predicted[i] == r.predicted_class;
  }
  for (std::size_t k = 0; k < out.rules.size(); ++k) {
    auto& r = out.rules[k];
    r.confidence = r.support ? static_cast<double>(agree[k]) / static_cast<double>(r.support) : 0.0;
  }
  return out;
}

Json to_json(const RuleSet& r) {
  Json rules = Json::array();
  for (const auto& rule : r.rules) {
    Json preds = Json::array();
    for (const auto& p : rule.predicates) {
      Json v;
      if (p.op == Predicate::Op::eq || p.op == Predicate::Op::ne) v = p.category;
      else v = p.threshold;
      Json pj{{"feature", p.feature}, {"op", op_text(p.op)}, {"value", v}};
      if (p.dtype == DType::temporal && !v.is_string()) {
        pj["display"] = format_timestamp(static_cast<Timestamp>(std::floor(p.threshold)), Granularity::second);
      }
      preds.push_back(pj);
    }
    rules.push_back(Json{{"predicates", preds},
                         {"predicted_class", rule.predicted_class},
                         {"support", rule.support},
                         {"confidence", rule.confidence},
                         {"output_distribution", rule.output_distribution}});
  }
  return Json{{"features", r.features},       {"rules", rules},
              {"fidelity", r.fidelity},       {"depth", r.depth},
              {"sample_count", r.sample_count}, {"low_fidelity", r.low_fidelity},
              {"degenerate_model", r.degenerate_model}};
}

// ---------------------------------------------------------------------------
// Partial dependence

std::vector<double> quantile_grid(std::vector<double> values, std::size_t points) {
  std::vector<double> grid;
  if (values.empty()) return grid;
  std::sort(values.begin(), values.end());
  const double m = static_cast<double>(values.size() - 1);
  for (std::size_t i = 0; i < points; ++i) {
    const double h = m * static_cast<double>(i) / static_cast<double>(points - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double q = values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
    if (grid.empty() || q > grid.back()) grid.push_back(q);
  }
  return grid;
}

PDPCurve partial_dependence(const FittedPipeline& model, const Dataset& dataset, const ValidatedSpec& spec,
                            const std::vector<std::size_t>& rows, const std::string& feature) {
  const auto& features = spec.spec.features;
  if (std::find(features.begin(), features.end(), feature) == features.end()) {
    throw Error(ErrorCode::FeatureNotFound, "'" + feature + "' is not a feature of this problem", Json{{"feature", feature}});
  }
  const Column& col = dataset.table.at(feature);
  if (!col.is_numeric_storage()) {
    throw Error(ErrorCode::TypeMismatch, "partial dependence needs a numeric or temporal feature; '" + feature + "' is " +
                                             std::string(to_string(col.dtype())),
                Json{{"feature", feature}});
  }
  PDPCurve c;
  c.feature = feature;
  c.dtype = col.dtype();
  std::vector<double> present;
  for (auto r : rows) {
    if (col.numbers()[r]) present.push_back(*col.numbers()[r]);
    else ++c.missing;
  }
  if (present.empty()) throw Error(ErrorCode::BadRequest, "'" + feature + "' has no values on the explained rows");
  c.grid = quantile_grid(present);
  if (c.dtype == DType::temporal) {
    for (auto& g : c.grid) g = std::round(g);
    c.grid.erase(std::unique(c.grid.begin(), c.grid.end()), c.grid.end());
  }
  c.constant_feature = c.grid.size() == 1;

  c.counts.assign(c.grid.size(), 0);
  for (double v : present) {
    std::size_t bin = 0;
    while (bin + 1 < c.grid.size() && v > c.grid[bin] + (c.grid[bin + 1] - c.grid[bin]) / 2) ++bin;
    ++c.counts[bin];
  }

  // One predict call over rows x grid points.
  const std::size_t n = rows.size();
  const std::size_t g = c.grid.size();
  std::vector<std::size_t> repeated;
  repeated.reserve(n * g);
  for (std::size_t k = 0; k < g; ++k) repeated.insert(repeated.end(), rows.begin(), rows.end());
  const Table base = feature_table(dataset, spec, repeated);
  std::vector<std::optional<double>> clamped(n * g);
  for (std::size_t k = 0; k < g; ++k) {
    for (std::size_t i = 0; i < n; ++i) clamped[k * n + i] = c.grid[k];
  }
  std::vector<Column> cols;
  for (const auto& bc : base.columns()) {
    if (bc.name() != feature) cols.push_back(bc);
    else if (c.dtype == DType::temporal) cols.push_back(Column::temporal(feature, clamped));
    else cols.push_back(Column::numeric(feature, clamped));
  }
  const Target pred = model.predict(Table(std::move(cols), n * g));

  if (const auto* v = std::get_if<Values>(&pred)) {
    for (std::size_t k = 0; k < g; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += (*v)[k * n + i];
      c.values.push_back(s / static_cast<double>(n));
    }
  } else {
    const auto& l = std::get<Labels>(pred);
    const Labels targets = std::get<Labels>(target_values(dataset, spec, spec.usable_rows));
    std::set<std::string> cls(targets.begin(), targets.end());
    cls.insert(l.begin(), l.end());
    c.classes.assign(cls.begin(), cls.end());
    for (std::size_t k = 0; k < g; ++k) {
      std::vector<double> frac(c.classes.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto at = std::lower_bound(c.classes.begin(), c.classes.end(), l[k * n + i]) - c.classes.begin();
        frac[static_cast<std::size_t>(at)] += 1.0 / static_cast<double>(n);
      }
      c.class_fractions.push_back(frac);
    }
  }
  return c;
}

Json to_json(const PDPCurve& c) {
  Json j{{"feature", c.feature},
         {"dtype", std::string(to_string(c.dtype))},
         {"grid", c.grid},
         {"counts", c.counts},
         {"missing", c.missing},
         {"constant_feature", c.constant_feature}};
  if (c.dtype == DType::temporal) {
    Json labels = Json::array();
    for (double g : c.grid) labels.push_back(format_timestamp(static_cast<Timestamp>(g), exact_granularity(static_cast<Timestamp>(g))));
    j["grid_labels"] = labels;
  }
  if (c.classes.empty()) {
    j["values"] = c.values;
  } else {
    j["classes"] = c.classes;
    j["class_fractions"] = c.class_fractions;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Confusion scatter

ConfusionScatter confusion_scatter(const ScoreReport& report) {
  const auto* t = std::get_if<Values>(&report.y_true);
  const auto* p = std::get_if<Values>(&report.y_pred);
  if (!t || !p) throw Error(ErrorCode::WrongTaskType, "confusion scatter needs a regression report");
  ConfusionScatter s;
  s.rows = report.rows;
  s.y_true = *t;
  s.y_pred = *p;
  const bool target_varies = std::any_of(t->begin(), t->end(), [&](double v) { return v != t->front(); });
  std::map<int, double> first_in_fold;
  bool constant_per_fold = true;
  for (std::size_t i = 0; i < p->size(); ++i) {
    auto [it, inserted] = first_in_fold.emplace(report.folds[i], (*p)[i]);
    if (!inserted && it->second != (*p)[i]) constant_per_fold = false;
  }
  s.degenerate = target_varies && constant_per_fold;
  return s;
}

Json to_json(const ConfusionScatter& s) {
  Json points = Json::array();
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    points.push_back(Json{{"row", s.rows[i]}, {"y_true", s.y_true[i]}, {"y_pred", s.y_pred[i]}});
  }
  return Json{{"points", points}, {"degenerate", s.degenerate}};
}

}  // namespace hilml
