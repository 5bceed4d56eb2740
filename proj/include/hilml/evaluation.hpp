#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "hilml/pipeline.hpp"

namespace hilml {

/// Throws UndefinedMetric for empty input, r2 with constant y_true, or a
/// classification metric on numeric values (and vice versa).  Macro averages
/// run over the union of observed classes; a class with no predicted (or no
/// actual) members contributes 0 precision (or recall) and is named in `flags`.
double compute_metric(Metric metric, const Target& y_true, const Target& y_pred,
                      std::vector<std::string>* flags = nullptr);

/// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

/// Fold of each position 0..n-1 (k near-equal folds).  With `strata` given
/// and every class holding >= k members the folds are stratified; otherwise a
/// plain shuffle is used and a warning appended.
std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed, const Labels* strata = nullptr,
                              std::vector<std::string>* warnings = nullptr);

/// Out-of-sample evaluation of one pipeline.  `rows`, `y_true`, `y_pred` and
/// `folds` are parallel and ordered by dataset row.  Undefined metric values
/// are null.
struct ScoreReport {
  std::map<Metric, std::optional<double>> metrics;
  std::vector<std::size_t> rows;
  Target y_true;
  Target y_pred;
  std::vector<int> folds;
  std::vector<std::string> warnings;

  std::size_t size() const { return rows.size(); }
  std::optional<double> metric(Metric m) const;
  bool operator==(const ScoreReport&) const = default;
};

Json to_json(const ScoreReport& r);
ScoreReport score_report_from_json(const Json& j, TaskType task);

/// k-fold: usable rows shuffled by `seed`, split into k folds, the pipeline
/// refit k times.  Holdout: the last ceil(f*n) rows of the shuffled order are
/// held out.  Throws TooFewRows, primitive errors, or Cancelled.
ScoreReport evaluate(const Pipeline& p, const Dataset& dataset, const ValidatedSpec& spec, std::uint64_t seed,
                     std::stop_token stop = {});

}  // namespace hilml
