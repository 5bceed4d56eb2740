#pragma once

#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "hilml/primitives.hpp"

namespace hilml {

/// Preprocessors followed by exactly one estimator.  `id` is a content hash of
/// the steps, so equal step lists always share an id.
struct Pipeline {
  std::string id;
  std::vector<PrimitiveSpec> steps;

  const PrimitiveSpec& estimator() const { return steps.back(); }
  bool operator==(const Pipeline&) const = default;
};

std::string pipeline_id(const std::vector<PrimitiveSpec>& steps);
/// Builds a pipeline and checks its structure (InvalidPipelineStructure).
Pipeline make_pipeline(std::vector<PrimitiveSpec> steps);
void check_structure(const Pipeline& p);
/// Structure plus estimator/task compatibility and the dtype chain over the
/// spec's features.  Throws InvalidPipelineStructure.
void check_pipeline(const Pipeline& p, const ValidatedSpec& spec, const Dataset& dataset);

Json to_json(const Pipeline& p);
/// Throws SchemaError (details.path "$.id" when the id does not match the steps).
Pipeline pipeline_from_json(const Json& j);

/// Feature columns of `rows` (in spec order).
Table feature_table(const Dataset& dataset, const ValidatedSpec& spec, const std::vector<std::size_t>& rows);
/// Target cells of `rows`; every row must have a present target.
Target target_values(const Dataset& dataset, const ValidatedSpec& spec, const std::vector<std::size_t>& rows);

class FittedPipeline {
 public:
  FittedPipeline(Pipeline pipeline, std::vector<FittedPrimitive> steps, Schema features)
      : pipeline_(std::move(pipeline)), steps_(std::move(steps)), features_(std::move(features)) {}

  const Pipeline& pipeline() const { return pipeline_; }
  const std::vector<FittedPrimitive>& steps() const { return steps_; }
  const Schema& features() const { return features_; }

  /// `rows` must carry exactly the fit-time feature columns (SchemaMismatch otherwise).
  Target predict(const Table& rows, std::stop_token stop = {}) const;
  /// Output of every preprocessor, i.e. the estimator's input.
  Table transform(const Table& rows) const;

  Json to_json() const;
  static FittedPipeline from_json(const Json& j);

 private:
  Pipeline pipeline_;
  std::vector<FittedPrimitive> steps_;
  Schema features_;
};

/// Fits every step in order on `rows` of the dataset; only the spec's feature
/// columns and target are visible.  Primitive errors are rethrown with
/// details.step and details.primitive added.
FittedPipeline fit_pipeline(const Pipeline& p, const Dataset& dataset, const ValidatedSpec& spec,
                            const std::vector<std::size_t>& rows, std::stop_token stop = {});

enum class StepStatus { same, changed_hyperparams, only_in_p1, only_in_p2 };

std::string_view to_string(StepStatus s);

struct StepDiffEntry {
  StepStatus status = StepStatus::same;
  std::optional<PrimitiveSpec> left;
  std::optional<PrimitiveSpec> right;

  bool operator==(const StepDiffEntry&) const = default;
};

using StepDiff = std::vector<StepDiffEntry>;

/// Aligns the two step lists by a longest common subsequence of primitive
/// names.  Swapping the arguments swaps the only-in labels and nothing else.
StepDiff diff(const Pipeline& p1, const Pipeline& p2);
Json to_json(const StepDiff& d);

}  // namespace hilml
