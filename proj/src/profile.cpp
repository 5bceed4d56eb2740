#include "hilml/profile.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace hilml {

std::vector<HistogramBin> equal_width_histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty() || bins == 0) return {};
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (lo == hi) return {HistogramBin{lo, hi, values.size()}};

  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].lower = lo + width * static_cast<double>(i);
    out[i].upper = i + 1 == bins ? hi : lo + width * static_cast<double>(i + 1);
  }
  for (double v : values) ++out[histogram_bin_index(out, v)].count;
  return out;
}

std::size_t histogram_bin_index(const std::vector<HistogramBin>& bins, double value) {
  // Last bin whose lower edge is <= value; values below the range go to bin 0.
  std::size_t idx = 0;
  for (std::size_t i = 1; i < bins.size(); ++i) {
    if (bins[i].lower <= value) idx = i;
    else break;
  }
  return idx;
}

ColumnProfile profile_column(const Column& column) {
  ColumnProfile p;
  p.name = column.name();
  p.dtype = column.dtype();
  p.missing_count = column.missing_count();

  if (column.is_numeric_storage()) {
    std::vector<double> present;
    present.reserve(column.size());
    for (const auto& v : column.numbers()) {
      if (v) present.push_back(*v);
    }
    p.distinct_count = std::set<double>(present.begin(), present.end()).size();
    if (!present.empty()) {
      NumericStats s;
      s.min = *std::min_element(present.begin(), present.end());
      s.max = *std::max_element(present.begin(), present.end());
      double sum = 0;
      for (double v : present) sum += v;
      s.mean = sum / static_cast<double>(present.size());
      double ss = 0;
      for (double v : present) ss += (v - s.mean) * (v - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(present.size()));
      if (column.dtype() == DType::numeric) {
        p.stats = s;
      } else {
        p.temporal_range = TemporalRange{static_cast<Timestamp>(s.min),
                                         static_cast<Timestamp>(s.max), column.granularity()};
      }
      p.histogram = equal_width_histogram(present, kProfileBins);
    }
    return p;
  }

  std::map<std::string, std::size_t> counts;
  for (const auto& v : column.strings()) {
    if (v) ++counts[*v];
  }
  p.distinct_count = counts.size();
  std::vector<CategoryCount> all;
  all.reserve(counts.size());
  for (const auto& [k, n] : counts) all.push_back({k, n});
  std::stable_sort(all.begin(), all.end(),
                   [](const CategoryCount& a, const CategoryCount& b) { return a.count > b.count; });
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i < kTopCategories) p.top_categories.push_back(all[i]);
    else p.other_count += all[i].count;
  }
  return p;
}

std::vector<ColumnProfile> profile(const Dataset& dataset) {
  std::vector<ColumnProfile> out;
  out.reserve(dataset.columns().size());
  for (const auto& c : dataset.columns()) out.push_back(profile_column(c));
  return out;
}

Json to_json(const ColumnProfile& p) {
  Json j{{"name", p.name},
         {"dtype", std::string(to_string(p.dtype))},
         {"missing_count", p.missing_count},
         {"distinct_count", p.distinct_count}};
  if (p.stats) {
    j["stats"] = Json{{"min", p.stats->min}, {"max", p.stats->max}, {"mean", p.stats->mean},
                      {"std", p.stats->std}};
  } else {
    j["stats"] = nullptr;
  }
  if (p.dtype == DType::numeric || p.dtype == DType::temporal) {
    Json bins = Json::array();
    for (const auto& b : p.histogram) {
      bins.push_back(Json{{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
    }
    j["histogram"] = bins;
  } else {
    Json cats = Json::array();
    for (const auto& c : p.top_categories) cats.push_back(Json{{"category", c.category}, {"count", c.count}});
    j["categories"] = cats;
    j["other_count"] = p.other_count;
  }
  if (p.temporal_range) {
    j["temporal_range"] = Json{
        {"earliest", format_timestamp(p.temporal_range->earliest, p.temporal_range->granularity)},
        {"latest", format_timestamp(p.temporal_range->latest, p.temporal_range->granularity)},
        {"granularity", std::string(to_string(p.temporal_range->granularity))}};
  }
  return j;
}

Json to_json(const std::vector<ColumnProfile>& profiles) {
  Json arr = Json::array();
  for (const auto& p : profiles) arr.push_back(to_json(p));
  return arr;
}

}  // namespace hilml
