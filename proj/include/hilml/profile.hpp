#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hilml/table.hpp"

namespace hilml {

struct HistogramBin {
  double lower = 0;
  double upper = 0;
  std::size_t count = 0;

  bool operator==(const HistogramBin&) const = default;
};

/// Equal-width bins over [min, max].  Bin i covers [edge_i, edge_{i+1}); the
/// maximum lands in the last bin.  A single distinct value yields one bin.
/// Empty input yields no bins.
std::vector<HistogramBin> equal_width_histogram(std::span<const double> values, std::size_t bins = 10);

/// Index of the bin holding `value` under the same edge rule.
std::size_t histogram_bin_index(const std::vector<HistogramBin>& bins, double value);

struct NumericStats {
  double min = 0;
  double max = 0;
  double mean = 0;
  double std = 0;  // population

  bool operator==(const NumericStats&) const = default;
};

struct CategoryCount {
  std::string category;
  std::size_t count = 0;

  bool operator==(const CategoryCount&) const = default;
};

struct TemporalRange {
  Timestamp earliest = 0;
  Timestamp latest = 0;
  Granularity granularity = Granularity::day;

  bool operator==(const TemporalRange&) const = default;
};

struct ColumnProfile {
  std::string name;
  DType dtype = DType::numeric;
  std::size_t missing_count = 0;
  std::size_t distinct_count = 0;
  std::optional<NumericStats> stats;
  std::vector<HistogramBin> histogram;        // numeric (and temporal, over timestamps)
  std::vector<CategoryCount> top_categories;  // categorical / text, most frequent first
  std::size_t other_count = 0;                // present values outside top_categories
  std::optional<TemporalRange> temporal_range;

  bool operator==(const ColumnProfile&) const = default;
};

inline constexpr std::size_t kProfileBins = 10;
inline constexpr std::size_t kTopCategories = 20;

ColumnProfile profile_column(const Column& column);
std::vector<ColumnProfile> profile(const Dataset& dataset);

Json to_json(const ColumnProfile& p);
Json to_json(const std::vector<ColumnProfile>& profiles);

}  // namespace hilml
