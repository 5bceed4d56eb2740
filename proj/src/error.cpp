#include "hilml/error.hpp"

namespace hilml {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::ColumnNotFound: return "COLUMN_NOT_FOUND";
    case ErrorCode::InvalidDataset: return "INVALID_DATASET";
    case ErrorCode::TypeMismatch: return "TYPE_MISMATCH";
    case ErrorCode::TargetNotFound: return "TARGET_NOT_FOUND";
    case ErrorCode::FeatureNotFound: return "FEATURE_NOT_FOUND";
    case ErrorCode::TargetInFeatures: return "TARGET_IN_FEATURES";
    case ErrorCode::TaskTargetMismatch: return "TASK_TARGET_MISMATCH";
    case ErrorCode::MetricTaskMismatch: return "METRIC_TASK_MISMATCH";
    case ErrorCode::EmptyFeatures: return "EMPTY_FEATURES";
    case ErrorCode::SchemaError: return "SCHEMA_ERROR";
    case ErrorCode::UnsupportedTaskType: return "UNSUPPORTED_TASK_TYPE";
    case ErrorCode::UnknownPrimitive: return "UNKNOWN_PRIMITIVE";
    case ErrorCode::InvalidHyperparameter: return "INVALID_HYPERPARAMETER";
    case ErrorCode::NonNumericInput: return "NON_NUMERIC_INPUT";
    case ErrorCode::MissingValues: return "MISSING_VALUES";
    case ErrorCode::SchemaMismatch: return "SCHEMA_MISMATCH";
    case ErrorCode::InvalidPipelineStructure: return "INVALID_PIPELINE_STRUCTURE";
    case ErrorCode::NotFitted: return "NOT_FITTED";
    case ErrorCode::UndefinedMetric: return "UNDEFINED_METRIC";
    case ErrorCode::TooFewRows: return "TOO_FEW_ROWS";
    case ErrorCode::NoScoredSolutions: return "NO_SCORED_SOLUTIONS";
    case ErrorCode::UnknownMetric: return "UNKNOWN_METRIC";
    case ErrorCode::Cancelled: return "CANCELLED";
    case ErrorCode::WrongTaskType: return "WRONG_TASK_TYPE";
    case ErrorCode::StaleCandidate: return "STALE_CANDIDATE";
    case ErrorCode::CorpusError: return "CORPUS_ERROR";
    case ErrorCode::SessionNotFound: return "SESSION_NOT_FOUND";
    case ErrorCode::DatasetNotFound: return "DATASET_NOT_FOUND";
    case ErrorCode::ProblemNotFound: return "PROBLEM_NOT_FOUND";
    case ErrorCode::RunNotFound: return "RUN_NOT_FOUND";
    case ErrorCode::SolutionNotFound: return "SOLUTION_NOT_FOUND";
    case ErrorCode::CandidateNotFound: return "CANDIDATE_NOT_FOUND";
    case ErrorCode::RouteNotFound: return "ROUTE_NOT_FOUND";
    case ErrorCode::BadRequest: return "BAD_REQUEST";
    case ErrorCode::IoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::SessionNotFound:
    case ErrorCode::DatasetNotFound:
    case ErrorCode::ProblemNotFound:
    case ErrorCode::RunNotFound:
    case ErrorCode::SolutionNotFound:
    case ErrorCode::CandidateNotFound:
    case ErrorCode::RouteNotFound:
      return 404;
    case ErrorCode::StaleCandidate:
      return 409;
    case ErrorCode::IoError:
      return 500;
    default:
      return 400;
  }
}

Json Error::to_json() const {
  Json j;
  j["code"] = std::string(error_code_name(code_));
  j["message"] = what();
  if (!details_.empty()) j["details"] = details_;
  return j;
}

}  // namespace hilml
