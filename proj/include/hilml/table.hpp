#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hilml/error.hpp"

namespace hilml {

enum class DType { numeric, categorical, temporal, text };

/// Temporal resolution, coarsest first so that `std::max` picks the finer unit.
enum class Granularity { year, month, day, hour, minute, second };

std::string_view to_string(DType dtype);
DType parse_dtype(std::string_view name);
std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view name);

/// Timezone-naive timestamp, whole seconds since 1970-01-01T00:00:00.
using Timestamp = std::int64_t;

struct CivilTime {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
};

CivilTime to_civil(Timestamp ts);
Timestamp from_civil(const CivilTime& c);

/// Accepts YYYY-MM-DD, YYYY/MM/DD, YYYY-MM, and date plus [T| ]HH:MM[:SS].
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts, Granularity g);
/// Finest unit in which `ts` is exact (e.g. midnight on Mar 3 -> day).
Granularity exact_granularity(Timestamp ts);
/// Floors `ts` to the start of its enclosing `g` period.
Timestamp truncate(Timestamp ts, Granularity g);
/// ISO weekday with Monday = 0.
int weekday(Timestamp ts);

/// One typed column.  Numeric and temporal cells live in `numbers` (temporal as
/// Timestamp seconds); categorical and text cells live in `strings`.  A missing
/// cell is an empty optional, never a sentinel.
class Column {
 public:
  static Column numeric(std::string name, std::vector<std::optional<double>> values);
  static Column temporal(std::string name, std::vector<std::optional<double>> values,
                         std::optional<Granularity> granularity = std::nullopt);
  static Column categorical(std::string name, std::vector<std::optional<std::string>> values);
  static Column text(std::string name, std::vector<std::optional<std::string>> values);

  const std::string& name() const { return name_; }
  DType dtype() const { return dtype_; }
  /// Only meaningful for temporal columns.
  Granularity granularity() const { return granularity_; }
  std::size_t size() const;
  bool is_numeric_storage() const { return dtype_ == DType::numeric || dtype_ == DType::temporal; }

  const std::vector<std::optional<double>>& numbers() const { return numbers_; }
  const std::vector<std::optional<std::string>>& strings() const { return strings_; }

  bool missing(std::size_t row) const;
  std::size_t missing_count() const;
  /// Cell rendered as CSV text ("" when missing).
  std::string cell_text(std::size_t row) const;
  /// Cell as JSON (number, string, or null); temporal cells are formatted strings.
  Json cell_json(std::size_t row) const;

  Column renamed(std::string name) const;
  Column take(const std::vector<std::size_t>& rows) const;

  bool operator==(const Column&) const = default;

 private:
  std::string name_;
  DType dtype_ = DType::numeric;
  Granularity granularity_ = Granularity::second;
  std::vector<std::optional<double>> numbers_;
  std::vector<std::optional<std::string>> strings_;
};

/// Granularity detected from values: finest unit in which all present timestamps are exact.
Granularity detect_granularity(const std::vector<std::optional<double>>& values);

/// Ordered set of equally long, uniquely named columns.
class Table {
 public:
  Table() = default;
  /// Throws InvalidDataset on ragged columns or duplicate names.
  explicit Table(std::vector<Column> columns);
  Table(std::vector<Column> columns, std::size_t row_count);

  std::size_t row_count() const { return row_count_; }
  std::size_t column_count() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  const Column& column(std::size_t i) const { return columns_.at(i); }

  const Column* find(std::string_view name) const;
  /// Throws ColumnNotFound.
  const Column& at(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  Table select(const std::vector<std::string>& names) const;
  Table take(const std::vector<std::size_t>& rows) const;

  bool operator==(const Table&) const = default;

 private:
  std::vector<Column> columns_;
  std::size_t row_count_ = 0;
};

struct Provenance {
  enum class Kind { uploaded, corpus, prepared, augmented };
  Kind kind = Kind::uploaded;
  std::vector<std::string> parents;
  Json operation = nullptr;

  bool operator==(const Provenance&) const = default;
};

std::string_view to_string(Provenance::Kind kind);
Json to_json(const Provenance& p);
Provenance provenance_from_json(const Json& j);

/// Named table plus where it came from.  Immutable once built; shared as
/// `std::shared_ptr<const Dataset>`.
struct Dataset {
  std::string name;
  Table table;
  Provenance provenance;

  std::size_t row_count() const { return table.row_count(); }
  const std::vector<Column>& columns() const { return table.columns(); }

  bool operator==(const Dataset&) const = default;
};

using DatasetPtr = std::shared_ptr<const Dataset>;

/// Content fingerprint (FNV-1a over schema and cells) used to detect stale references.
std::string fingerprint(const Dataset& d);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace hilml
