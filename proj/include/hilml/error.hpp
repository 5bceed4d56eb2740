#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace hilml {

using Json = nlohmann::json;

/// Every anticipated failure in the engine maps onto exactly one of these.
enum class ErrorCode {
  // data_model
  ParseError,
  EmptyDataset,
  ColumnNotFound,
  InvalidDataset,
  TypeMismatch,
  // problem_spec
  TargetNotFound,
  FeatureNotFound,
  TargetInFeatures,
  TaskTargetMismatch,
  MetricTaskMismatch,
  EmptyFeatures,
  SchemaError,
  UnsupportedTaskType,
  // primitives / pipeline
  UnknownPrimitive,
  InvalidHyperparameter,
  NonNumericInput,
  MissingValues,
  SchemaMismatch,
  InvalidPipelineStructure,
  NotFitted,
  // evaluation / search
  UndefinedMetric,
  TooFewRows,
  NoScoredSolutions,
  UnknownMetric,
  Cancelled,
  // explain
  WrongTaskType,
  // augment
  StaleCandidate,
  CorpusError,
  // service
  SessionNotFound,
  DatasetNotFound,
  ProblemNotFound,
  RunNotFound,
  SolutionNotFound,
  CandidateNotFound,
  RouteNotFound,
  BadRequest,
  IoError,
};

/// Machine-readable name, e.g. ErrorCode::SessionNotFound -> "SESSION_NOT_FOUND".
std::string_view error_code_name(ErrorCode code);

/// HTTP status used by the service for this error class.
int http_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, Json details = Json::object())
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const Json& details() const noexcept { return details_; }

  Json to_json() const;

 private:
  ErrorCode code_;
  Json details_;
};

}  // namespace hilml
