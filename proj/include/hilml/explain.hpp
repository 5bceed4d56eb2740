#pragma once

#include <map>
#include <string>
#include <vector>

#include "hilml/evaluation.hpp"

namespace hilml {

/// counts[i][j]: samples of true class labels[i] predicted as labels[j].
struct ConfusionMatrix {
  std::vector<std::string> labels;  // sorted
  std::vector<std::vector<std::size_t>> counts;
};

/// Throws WrongTaskType on regression reports.
ConfusionMatrix confusion_matrix(const ScoreReport& report);
Json to_json(const ConfusionMatrix& m);

struct Predicate {
  enum class Op { le, gt, eq, ne };
  std::string feature;
  Op op = Op::le;
  double threshold = 0;  // le / gt
  std::string category;  // eq / ne
  DType dtype = DType::numeric;
};

struct Rule {
  std::vector<Predicate> predicates;  // root-to-leaf path
  std::string predicted_class;
  std::size_t support = 0;
  double confidence = 0;
  std::map<std::string, std::size_t> output_distribution;  // model predictions among matches
};

struct RuleSet {
  std::vector<std::string> features;
  std::vector<Rule> rules;
  double fidelity = 0;
  int depth = 0;
  std::size_t sample_count = 0;
  bool low_fidelity = false;
  bool degenerate_model = false;
  /// Rule index of every explained row, parallel to the rows passed in.
  std::vector<std::size_t> rule_of_row;
};

inline constexpr double kMinFidelity = 0.8;
inline constexpr int kMinSurrogateDepth = 2;
inline constexpr int kMaxSurrogateDepth = 6;

/// Surrogate decision tree fit to the model's predictions on `rows`, over the
/// raw spec features (categories become indicator splits; missing values go to
/// the `>` / `!=` side).  Trees of depth 2..6 are pruned to at most
/// `max_rules` leaves; the shallowest exact one wins, else the shallowest with
/// fidelity >= 0.8, else the most faithful one flagged low_fidelity.
/// A model predicting a single class yields one universal rule flagged
/// degenerate_model.  Throws WrongTaskType, BadRequest (max_rules < 2).
RuleSet extract_rules(const FittedPipeline& model, const Dataset& dataset, const ValidatedSpec& spec,
                      const std::vector<std::size_t>& rows, std::size_t max_rules);
Json to_json(const RuleSet& r);

struct PDPCurve {
  std::string feature;
  DType dtype = DType::numeric;
  std::vector<double> grid;                 // strictly increasing
  std::vector<double> values;               // regression: mean prediction per grid point
  std::vector<std::string> classes;         // classification
  std::vector<std::vector<double>> class_fractions;  // [grid point][class]
  std::vector<std::size_t> counts;          // rows per grid bin (missing values excluded)
  std::size_t missing = 0;
  bool constant_feature = false;
};

inline constexpr std::size_t kPdpGridPoints = 20;

/// Quantile grid (type 7) over the feature's present values, deduplicated.
std::vector<double> quantile_grid(std::vector<double> values, std::size_t points = kPdpGridPoints);

/// PD(v) = mean over `rows` of the model prediction with `feature` set to v.
/// Throws FeatureNotFound (not a spec feature), TypeMismatch (not numeric or
/// temporal).  A constant feature yields a one-point curve flagged constant_feature.
PDPCurve partial_dependence(const FittedPipeline& model, const Dataset& dataset, const ValidatedSpec& spec,
                            const std::vector<std::size_t>& rows, const std::string& feature);
Json to_json(const PDPCurve& c);

struct ConfusionScatter {
  std::vector<std::size_t> rows;
  Values y_true;
  Values y_pred;
  /// True when y_true varies but the predictions are constant within every
  /// fold (a constant model evaluated by cross validation).
  bool degenerate = false;
};

/// Throws WrongTaskType on classification reports.
ConfusionScatter confusion_scatter(const ScoreReport& report);
Json to_json(const ConfusionScatter& s);

}  // namespace hilml
