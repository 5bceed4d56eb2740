#include "hilml/cart.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hilml {

namespace {

struct RegressionPolicy {
  const std::vector<double>& y;
  double shift = 0;

  struct Stats {
    double n = 0;
    double sum = 0;
    double sumsq = 0;
  };

  Stats empty() const { return {}; }
  void add(Stats& s, std::size_t i) const {
    const double v = y[i] - shift;
    s.n += 1;
    s.sum += v;
    s.sumsq += v * v;
  }
  Stats minus(const Stats& a, const Stats& b) const { return {a.n - b.n, a.sum - b.sum, a.sumsq - b.sumsq}; }
  double impurity(const Stats& s) const { return s.n > 0 ? std::max(0.0, s.sumsq - s.sum * s.sum / s.n) : 0.0; }
  void leaf(TreeNode& node, const Stats& s) const { node.value = s.n > 0 ? s.sum / s.n + shift : 0.0; }
  void prepare(const std::vector<std::size_t>& idx) {
    double m = 0;
    for (auto i : idx) m += y[i];
    shift = idx.empty() ? 0.0 : m / static_cast<double>(idx.size());
  }
};

struct ClassificationPolicy {
  const std::vector<int>& y;
  int n_classes;

  struct Stats {
    double n = 0;
    std::vector<double> counts;
  };

  Stats empty() const { return {0, std::vector<double>(static_cast<std::size_t>(n_classes), 0.0)}; }
  void add(Stats& s, std::size_t i) const {
    s.n += 1;
    s.counts[static_cast<std::size_t>(y[i])] += 1;
  }
  Stats minus(const Stats& a, const Stats& b) const {
    Stats out = a;
    out.n -= b.n;
    for (std::size_t k = 0; k < out.counts.size(); ++k) out.counts[k] -= b.counts[k];
    return out;
  }
  double impurity(const Stats& s) const {
    if (s.n <= 0) return 0;
    double sq = 0;
    for (double c : s.counts) sq += c * c;
    return std::max(0.0, s.n - sq / s.n);
  }
  void leaf(TreeNode& node, const Stats& s) const {
    node.class_counts = s.counts;
    node.class_index = 0;
    for (int k = 1; k < n_classes; ++k) {
      if (s.counts[static_cast<std::size_t>(k)] > s.counts[static_cast<std::size_t>(node.class_index)]) {
        node.class_index = k;
      }
    }
  }
  void prepare(const std::vector<std::size_t>&) {}
};

template <class Policy>
class Grower {
 public:
  Grower(const Eigen::MatrixXd& x, Policy policy, const TreeGrowth& growth, std::stop_token stop)
      : x_(x), policy_(std::move(policy)), growth_(growth), stop_(std::move(stop)) {}

  std::vector<TreeNode> run() {
    std::vector<std::size_t> idx(static_cast<std::size_t>(x_.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    build(idx, 0);
    return std::move(nodes_);
  }

 private:
  int build(const std::vector<std::size_t>& idx, int depth) {
    if (stop_.stop_requested()) throw Error(ErrorCode::Cancelled, "tree growth cancelled");
    if (depth == 0) policy_.prepare(idx);
    auto total = policy_.empty();
    for (auto i : idx) policy_.add(total, i);

    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[static_cast<std::size_t>(id)].depth = depth;
    nodes_[static_cast<std::size_t>(id)].samples = idx.size();
    policy_.leaf(nodes_[static_cast<std::size_t>(id)], total);

    const double parent = policy_.impurity(total);
    if (depth >= growth_.max_depth || idx.size() < 2 * std::max<std::size_t>(growth_.min_leaf, 1) ||
        parent <= 1e-12) {
      return id;
    }

    int best_feature = -1;
    double best_threshold = 0;
    double best_gain = 1e-12 * std::max(1.0, parent);
    std::vector<std::size_t> present;
    present.reserve(idx.size());
    for (Eigen::Index f = 0; f < x_.cols(); ++f) {
      present.clear();
      for (auto i : idx) {
        if (!std::isnan(x_(static_cast<Eigen::Index>(i), f))) present.push_back(i);
      }
      std::sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
        const double va = x_(static_cast<Eigen::Index>(a), f);
        const double vb = x_(static_cast<Eigen::Index>(b), f);
        return va < vb || (va == vb && a < b);
      });
      auto left = policy_.empty();
      for (std::size_t k = 0; k + 1 < present.size(); ++k) {
        policy_.add(left, present[k]);
        const double a = x_(static_cast<Eigen::Index>(present[k]), f);
        const double b = x_(static_cast<Eigen::Index>(present[k + 1]), f);
        if (!(a < b)) continue;
        const std::size_t nl = k + 1;
        const std::size_t nr = idx.size() - nl;
        if (nl < growth_.min_leaf || nr < growth_.min_leaf) continue;
        const auto right = policy_.minus(total, left);
        const double gain = parent - policy_.impurity(left) - policy_.impurity(right);
        if (gain > best_gain + 1e-10 * parent) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          double thr = a + (b - a) / 2;
          if (!(thr < b)) thr = a;
          best_threshold = thr;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> li;
    std::vector<std::size_t> ri;
    for (auto i : idx) {
      const double v = x_(static_cast<Eigen::Index>(i), best_feature);
      (v <= best_threshold ? li : ri).push_back(i);
    }
    nodes_[static_cast<std::size_t>(id)].feature = best_feature;
    nodes_[static_cast<std::size_t>(id)].threshold = best_threshold;
    const int l = build(li, depth + 1);
    const int r = build(ri, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const Eigen::MatrixXd& x_;
  Policy policy_;
  TreeGrowth growth_;
  std::stop_token stop_;
  std::vector<TreeNode> nodes_;
};

Json node_json(const std::vector<TreeNode>& nodes, int id) {
  const TreeNode& n = nodes.at(static_cast<std::size_t>(id));
  Json j{{"samples", n.samples}};
  if (n.is_leaf()) {
    j["leaf"] = true;
    j["value"] = n.value;
    if (n.class_index >= 0) {
      j["class_index"] = n.class_index;
      j["class_counts"] = n.class_counts;
    }
    return j;
  }
  j["feature"] = n.feature;
  j["threshold"] = n.threshold;
  j["left"] = node_json(nodes, n.left);
  j["right"] = node_json(nodes, n.right);
  return j;
}

int node_from_json(const Json& j, int depth, std::vector<TreeNode>& out) {
  const int id = static_cast<int>(out.size());
  out.emplace_back();
  TreeNode n;
  n.depth = depth;
  n.samples = j.at("samples").get<std::size_t>();
  if (j.value("leaf", false)) {
    n.value = j.at("value").get<double>();
    if (j.contains("class_index")) {
      n.class_index = j.at("class_index").get<int>();
      n.class_counts = j.at("class_counts").get<std::vector<double>>();
    }
    out[static_cast<std::size_t>(id)] = n;
    return id;
  }
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  out[static_cast<std::size_t>(id)] = n;
  const int l = node_from_json(j.at("left"), depth + 1, out);
  const int r = node_from_json(j.at("right"), depth + 1, out);
  out[static_cast<std::size_t>(id)].left = l;
  out[static_cast<std::size_t>(id)].right = r;
  return id;
}

}  // namespace

std::vector<TreeNode> grow_regression_tree(const Eigen::MatrixXd& x, const std::vector<double>& y,
                                           const TreeGrowth& growth, std::stop_token stop) {
  return Grower<RegressionPolicy>(x, RegressionPolicy{y}, growth, std::move(stop)).run();
}

std::vector<TreeNode> grow_classification_tree(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                               int n_classes, const TreeGrowth& growth,
                                               std::stop_token stop) {
  return Grower<ClassificationPolicy>(x, ClassificationPolicy{y, n_classes}, growth, std::move(stop)).run();
}

int tree_leaf(const std::vector<TreeNode>& nodes, const Eigen::MatrixXd& x, Eigen::Index r) {
  int id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    const double v = x(r, n.feature);
    id = v <= n.threshold ? n.left : n.right;
  }
  return id;
}

int tree_depth(const std::vector<TreeNode>& nodes) {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::size_t tree_leaf_count(const std::vector<TreeNode>& nodes) {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

Json tree_to_json(const std::vector<TreeNode>& nodes) {
  if (nodes.empty()) return nullptr;
  return node_json(nodes, 0);
}

std::vector<TreeNode> tree_from_json(const Json& j) {
  std::vector<TreeNode> out;
  if (!j.is_null()) node_from_json(j, 0, out);
  return out;
}

}  // namespace hilml
