#pragma once

#include <cstdint>
#include <filesystem>

#include "hilml/table.hpp"

namespace hilml {

/// Synthetic city-traffic scenario: a daily collisions table whose target is
/// driven partly by rainfall that only the hourly weather corpus dataset
/// carries, plus an unrelated census table that shares no key.
struct DemoData {
  Dataset collisions;  // date, trips, collisions
  Dataset weather;     // hourly: time, temperature_c, precipitation_mm, wind_kph, humidity_pct
  Dataset census;      // state, population, median_income
  Json problem;        // regression on collisions from date and trips
  Json weather_meta;
  Json census_meta;
};

inline constexpr std::uint64_t kDemoSeed = 2018;

DemoData generate_demo(std::uint64_t seed = kDemoSeed);

/// Writes collisions.csv, problem.json and corpus/<name>.{csv,meta.json}.
void write_demo(const std::filesystem::path& dir, std::uint64_t seed = kDemoSeed);

}  // namespace hilml
