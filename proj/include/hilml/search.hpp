#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "hilml/evaluation.hpp"
#include "hilml/profile.hpp"

namespace hilml {

enum class SolutionStatus { scored, failed };

struct Solution {
  std::string solution_id;
  std::uint64_t seq = 0;  // 1-based emission order
  Pipeline pipeline;
  SolutionStatus status = SolutionStatus::scored;
  std::optional<ScoreReport> report;  // scored only
  std::optional<ErrorCode> failure_code;
  std::string failure_message;

  std::optional<double> score(Metric m) const;
  bool operator==(const Solution&) const = default;
};

/// Summary form used by the event stream and solution table (no per-row predictions).
Json solution_summary_json(const Solution& s);
/// Complete form, report included.
Json to_json(const Solution& s);
Solution solution_from_json(const Json& j, TaskType task);

enum class FinishReason { budget_pipelines, exhausted, budget_time, cancelled };

std::string_view to_string(FinishReason r);
FinishReason parse_finish_reason(std::string_view s);

/// One preprocessor chain plus estimator; the search tunes only estimator
/// hyperparameters.
struct SearchTemplate {
  std::vector<std::string> preprocessors;
  std::string estimator;

  /// Cartesian grid over the estimator's hyperparameters; point 0 is the default.
  std::vector<std::map<std::string, double>> grid() const;
  Pipeline pipeline(const std::map<std::string, double>& hyperparams) const;
};

/// Templates for the spec's features in canonical order (estimator catalog
/// order, then imputer variant, then scaler variant).  Baselines are excluded.
std::vector<SearchTemplate> search_templates(const Dataset& dataset, const ValidatedSpec& spec);
/// The single baseline compatible with the task.
Pipeline baseline_pipeline(TaskType task);

struct SearchOptions {
  std::string run_id = "r";
  /// Concurrent candidate evaluations; 0 means hardware concurrency.
  unsigned workers = 0;
  /// Called from the search thread after each emission (under no lock).
  std::function<void(const Solution&)> on_event;
  /// Called once when the run finishes, before waiters are released.  The
  /// elapsed time passed here is the one the run reports afterwards.
  std::function<void(FinishReason, std::chrono::duration<double>)> on_finish;
};

/// Fraction of the time limit after which in-flight evaluations are aborted.
inline constexpr double kTimeGrace = 1.05;

class SearchRun {
 public:
  ~SearchRun();
  SearchRun(const SearchRun&) = delete;
  SearchRun& operator=(const SearchRun&) = delete;

  const std::string& id() const { return id_; }
  const ValidatedSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  /// Solutions with seq > cursor, in seq order.
  std::vector<Solution> events_after(std::uint64_t cursor) const;
  std::vector<Solution> solutions() const;
  std::optional<Solution> find(const std::string& solution_id) const;
  bool finished() const;
  std::optional<FinishReason> finish_reason() const;
  /// Wall time from start to finish (or to now while running).
  std::chrono::duration<double> elapsed() const;

  /// Idempotent.
  void cancel();
  void wait() const;
  bool wait_for(std::chrono::milliseconds timeout) const;

  /// A finished run rebuilt from storage.
  static std::shared_ptr<SearchRun> restore(std::string id, ValidatedSpec spec, std::uint64_t seed,
                                            std::vector<Solution> solutions, FinishReason reason,
                                            double elapsed_seconds);

 private:
  friend std::shared_ptr<SearchRun> start_search(DatasetPtr dataset, const ValidatedSpec& spec, std::uint64_t seed,
                                                  SearchOptions options);
  SearchRun(std::string id, ValidatedSpec spec, std::uint64_t seed,
            std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now());

  void run(DatasetPtr dataset, SearchOptions options);
  void emit(Solution s, const SearchOptions& options);
  void finish(FinishReason r, const SearchOptions& options);

  std::string id_;
  ValidatedSpec spec_;
  std::uint64_t seed_;
  std::chrono::steady_clock::time_point started_;

  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::vector<Solution> solutions_;
  std::optional<FinishReason> reason_;
  std::chrono::duration<double> elapsed_{0};
  bool cancel_requested_ = false;
  std::stop_source stop_;
  std::jthread thread_;
};

using SearchRunPtr = std::shared_ptr<SearchRun>;

/// Starts the search on a background thread and returns immediately.  The
/// spec must be validated against `dataset`.
SearchRunPtr start_search(DatasetPtr dataset, const ValidatedSpec& spec, std::uint64_t seed,
                          SearchOptions options = {});

/// Ordered ids: scored solutions by `metric` (direction from the metric, ties by
/// seq), then scored solutions lacking the metric, then failed ones.
/// Throws UnknownMetric when `metric` is not reported by the spec.
std::vector<std::string> rank_solutions(const std::vector<Solution>& solutions, const ProblemSpec& spec, Metric metric);

struct ScoreHistogram {
  Metric metric = Metric::mae;
  std::vector<HistogramBin> bins;
  std::vector<std::pair<std::string, std::size_t>> solution_bins;  // id -> bin index
};

/// Throws NoScoredSolutions.
ScoreHistogram summarize_scores(const std::vector<Solution>& solutions, Metric metric);
Json to_json(const ScoreHistogram& h);

/// {metrics:[...], ranges:{m:{min,max}}, rows:[{solution_id, values:[...]}]}.
/// Throws NoScoredSolutions.
Json parallel_coordinates(const std::vector<Solution>& solutions, const ProblemSpec& spec);

}  // namespace hilml
