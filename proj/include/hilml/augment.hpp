#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hilml/table.hpp"

namespace hilml {

// ---------------------------------------------------------------------------
// Corpus

struct ColumnMeta {
  std::string name;
  DType dtype = DType::numeric;
  std::optional<Granularity> granularity;  // temporal columns only

  bool operator==(const ColumnMeta&) const = default;
};

/// One corpus dataset: <dir>/<name>.csv described by <dir>/<name>.meta.json.
struct CorpusEntry {
  std::filesystem::path path;
  std::string name;
  std::string description;
  std::vector<std::string> keywords;
  std::vector<ColumnMeta> columns;
  DatasetPtr dataset;
  std::string fingerprint;
};

/// Immutable once built; safe to search from several threads.
struct Corpus {
  std::filesystem::path directory;
  std::vector<CorpusEntry> entries;  // sorted by name
  std::vector<std::string> warnings;

  const CorpusEntry* find(std::string_view name) const;
};

/// Reads every *.meta.json in `directory`.  Entries whose CSV is missing or
/// disagrees with the metadata are skipped with a warning.  A missing
/// directory is a CorpusError.
Corpus index_corpus(const std::filesystem::path& directory);

Json to_json(const CorpusEntry& e);  // metadata only

// ---------------------------------------------------------------------------
// Candidates

enum class Aggregation { mean, mode };

std::string_view to_string(Aggregation a);

struct CarriedColumn {
  std::string source;  // candidate column
  std::string output;  // name in the joined dataset
  Aggregation aggregation = Aggregation::mean;

  bool operator==(const CarriedColumn&) const = default;
};

struct KeyPair {
  std::string query;
  std::string candidate;

  bool operator==(const KeyPair&) const = default;
};

/// Left join.  Candidate rows sharing a key are aggregated first (mean for
/// numeric columns, mode otherwise), so every query row matches at most one
/// group.  Temporal joins compare both keys truncated to `granularity`, the
/// coarser of the two sides.
struct JoinPlan {
  std::vector<KeyPair> keys;
  bool temporal = false;
  Granularity granularity = Granularity::day;
  std::vector<CarriedColumn> carried;

  bool operator==(const JoinPlan&) const = default;
};

/// Query column -> candidate column with the same name and dtype.
struct UnionPlan {
  std::vector<KeyPair> mapping;

  bool operator==(const UnionPlan&) const = default;
};

using AugmentOperation = std::variant<JoinPlan, UnionPlan>;

struct AugmentCandidate {
  std::string id;
  std::string corpus_name;
  AugmentOperation operation;
  double relevance = 0;
  std::size_t key_overlap = 0;  // distinct query keys found in the candidate
  std::string query_fingerprint;
  std::string corpus_fingerprint;

  bool operator==(const AugmentCandidate&) const = default;
};

/// Name x3, keywords x2, description x1, column names x2, summed over the
/// query terms (lower-cased alphanumeric tokens, counted by frequency).
double relevance_score(const CorpusEntry& entry, std::string_view keywords);

/// Candidates that can be joined to or unioned with `query`.  A schema-
/// compatible entry is offered as a union only.  With non-empty keywords only
/// entries of positive relevance are kept.  Ordered by relevance, then key
/// overlap, then corpus name.
std::vector<AugmentCandidate> search_augmentations(const Corpus& corpus, const Dataset& query,
                                                   std::string_view keywords);

/// Throws StaleCandidate when the query or the corpus entry no longer matches
/// the fingerprints recorded at search time.
Dataset apply_augmentation(const Dataset& query, const AugmentCandidate& candidate, const Corpus& corpus);

/// The join/union kernels, without the staleness check.
Dataset join_datasets(const Dataset& query, const Dataset& candidate, const JoinPlan& plan);
Dataset union_datasets(const Dataset& query, const Dataset& candidate, const UnionPlan& plan);

Json to_json(const AugmentOperation& op);
AugmentOperation augment_operation_from_json(const Json& j);
Json to_json(const AugmentCandidate& c);
AugmentCandidate augment_candidate_from_json(const Json& j);
/// First rows plus column profiles of the candidate's corpus dataset.
Json candidate_preview(const CorpusEntry& entry, std::size_t rows = 5);

}  // namespace hilml
