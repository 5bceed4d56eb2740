#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hilml/table.hpp"

namespace hilml {

/// Raw RFC-4180 records (header included).  Throws ParseError on ragged rows
/// or an unterminated quote, EmptyDataset when there is no header.
std::vector<std::vector<std::string>> parse_csv_records(std::string_view source);

/// Parse CSV and infer a dtype per column:
///   numeric      if >= 95% of present values parse as finite numbers
///   temporal     if >= 95% parse as dates/timestamps
///   categorical  if distinct count <= max(20, 5% of rows)
///   text         otherwise
/// Empty cells are missing; present cells that do not conform to the inferred
/// dtype also become missing.
Dataset ingest_csv(std::string_view source, std::string name);

std::string to_csv(const Table& table);

/// Sidecar document: {name, columns, dtypes, granularities, provenance}.
Json sidecar_json(const Dataset& d);

/// Rebuild a dataset from CSV text and its sidecar using the declared dtypes.
/// Throws TypeMismatch when a present cell does not conform to its declared
/// dtype and SchemaError when the header disagrees with the sidecar.
Dataset dataset_from_csv_and_sidecar(std::string_view csv, const Json& sidecar);

/// Writes <dir>/<stem>.csv and <dir>/<stem>.json atomically.
void save_dataset(const std::filesystem::path& dir, const std::string& stem, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& dir, const std::string& stem);

std::string read_file(const std::filesystem::path& path);
/// Write to a temporary sibling then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace hilml
