#include "hilml/demo.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "hilml/csv.hpp"

namespace hilml {

namespace {

double round2(double v) { return std::round(v * 100) / 100; }

Json meta_for(const Dataset& d, const std::string& description, const std::vector<std::string>& keywords) {
  Json cols = Json::array();
  for (const auto& c : d.columns()) {
    Json cj{{"name", c.name()}, {"dtype", std::string(to_string(c.dtype()))}};
    if (c.dtype() == DType::temporal) cj["granularity"] = std::string(to_string(c.granularity()));
    cols.push_back(cj);
  }
  return Json{{"name", d.name}, {"description", description}, {"keywords", keywords}, {"columns", cols}};
}

}  // namespace

DemoData generate_demo(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0, 1);
  std::uniform_real_distribution<double> unit(0, 1);
  std::exponential_distribution<double> shower(1 / 1.5);

  const Timestamp start = from_civil({2018, 1, 1});
  constexpr int days = 365;

  std::vector<std::optional<double>> hour_ts, temp, precip, wind, humidity;
  std::vector<double> daily_rain(days, 0.0);
  for (int d = 0; d < days; ++d) {
    const double season = std::sin(2 * std::numbers::pi * (d - 105) / 365.0);
    const bool wet = unit(rng) < 0.35;
    for (int h = 0; h < 24; ++h) {
      const double p = wet && unit(rng) < 0.6 ? round2(shower(rng)) : 0.0;
      const double t = round2(12 + 12 * season + 4 * std::sin(2 * std::numbers::pi * (h - 9) / 24.0) + 1.5 * gauss(rng) - 2 * p);
      hour_ts.push_back(static_cast<double>(start + (d * 24 + h) * 3600));
      temp.push_back(t);
      precip.push_back(p);
      wind.push_back(round2(std::max(0.0, 14 + 6 * gauss(rng) + 3 * p)));
      humidity.push_back(round2(std::clamp(60 + 10 * gauss(rng) + 8 * p, 5.0, 100.0)));
      daily_rain[static_cast<std::size_t>(d)] += p / 24;
    }
  }

  std::vector<std::optional<double>> dates, trips, collisions;
  for (int d = 0; d < days; ++d) {
    const Timestamp ts = start + d * 86400;
    const int wd = weekday(ts);
    const double season = std::sin(2 * std::numbers::pi * (d - 105) / 365.0);
    const double t = std::round(30000 + 6000 * season + (wd >= 5 ? -5000 : 0) + 1500 * gauss(rng));
    const double rain = daily_rain[static_cast<std::size_t>(d)];
    const double c = std::round(60 + 0.004 * t + 90 * rain + 6 * gauss(rng));
    dates.push_back(static_cast<double>(ts));
    trips.push_back(t);
    collisions.push_back(c);
  }

  DemoData out;
  out.collisions.name = "collisions";
  out.collisions.table = Table({Column::temporal("date", dates), Column::numeric("trips", trips),
                                Column::numeric("collisions", collisions)});
  out.weather.name = "weather";
  out.weather.provenance.kind = Provenance::Kind::corpus;
  out.weather.table = Table({Column::temporal("time", hour_ts), Column::numeric("temperature_c", temp),
                             Column::numeric("precipitation_mm", precip), Column::numeric("wind_kph", wind),
                             Column::numeric("humidity_pct", humidity)});

  const std::vector<std::optional<std::string>> states{"CA", "FL", "IL", "MA", "NY", "PA", "TX", "WA"};
  std::vector<std::optional<double>> population, income;
  for (std::size_t i = 0; i < states.size(); ++i) {
    population.push_back(std::round(std::exp(15.5 + 0.8 * gauss(rng))));
    income.push_back(std::round(60000 + 9000 * gauss(rng)));
  }
  out.census.name = "census-by-state";
  out.census.provenance.kind = Provenance::Kind::corpus;
  out.census.table = Table({Column::categorical("state", states), Column::numeric("population", population),
                            Column::numeric("median_income", income)});

  out.problem = Json{{"task_type", "regression"},
                     {"target", "collisions"},
                     {"features", {"date", "trips"}},
                     {"primary_metric", "mae"},
                     {"report_metrics", {"mae", "mse", "r2"}},
                     {"eval_method", {{"kind", "kfold"}, {"k", 5}}},
                     {"budget", {{"max_pipelines", 40}, {"time_limit_seconds", 120}}}};
  out.weather_meta = meta_for(out.weather, "Hourly weather observations for the city in 2018: temperature, rain, wind and humidity",
                              {"weather", "rain", "precipitation", "temperature", "hourly"});
  out.census_meta = meta_for(out.census, "Population and median household income by US state",
                             {"census", "population", "income", "state"});
  return out;
}

void write_demo(const std::filesystem::path& dir, std::uint64_t seed) {
  const DemoData d = generate_demo(seed);
  write_file_atomic(dir / "collisions.csv", to_csv(d.collisions.table));
  write_file_atomic(dir / "problem.json", d.problem.dump(2) + "\n");
  write_file_atomic(dir / "corpus" / "weather.csv", to_csv(d.weather.table));
  write_file_atomic(dir / "corpus" / "weather.meta.json", d.weather_meta.dump(2) + "\n");
  write_file_atomic(dir / "corpus" / "census-by-state.csv", to_csv(d.census.table));
  write_file_atomic(dir / "corpus" / "census-by-state.meta.json", d.census_meta.dump(2) + "\n");
}

}  // namespace hilml
