#include "hilml/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>

namespace hilml {

// ---------------------------------------------------------------------------
// Solutions

std::optional<double> Solution::score(Metric m) const {
  if (status != SolutionStatus::scored || !report) return std::nullopt;
  return report->metric(m);
}

namespace {

Json metrics_json(const Solution& s) {
  if (!s.report) return nullptr;
  return to_json(*s.report).at("metrics");
}

}  // namespace

Json solution_summary_json(const Solution& s) {
  Json j{{"solution_id", s.solution_id},
         {"seq", s.seq},
         {"status", s.status == SolutionStatus::scored ? "scored" : "failed"},
         {"pipeline", to_json(s.pipeline)},
         {"metrics", metrics_json(s)}};
  if (s.status == SolutionStatus::failed) {
    j["failure"] = Json{{"code", s.failure_code ? Json(std::string(error_code_name(*s.failure_code))) : Json(nullptr)},
                        {"message", s.failure_message}};
  }
  return j;
}

Json to_json(const Solution& s) {
  Json j = solution_summary_json(s);
  j["report"] = s.report ? to_json(*s.report) : Json(nullptr);
  return j;
}

Solution solution_from_json(const Json& j, TaskType task) {
  Solution s;
  try {
    s.solution_id = j.at("solution_id").get<std::string>();
    s.seq = j.at("seq").get<std::uint64_t>();
    s.pipeline = pipeline_from_json(j.at("pipeline"));
    s.status = j.at("status").get<std::string>() == "scored" ? SolutionStatus::scored : SolutionStatus::failed;
    if (!j.at("report").is_null()) s.report = score_report_from_json(j.at("report"), task);
    if (j.contains("failure")) {
      const Json& f = j.at("failure");
      s.failure_message = f.at("message").get<std::string>();
      if (!f.at("code").is_null()) {
        const std::string code = f.at("code").get<std::string>();
        for (int c = 0; c <= static_cast<int>(ErrorCode::IoError); ++c) {
          if (error_code_name(static_cast<ErrorCode>(c)) == code) s.failure_code = static_cast<ErrorCode>(c);
        }
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed solution: ") + e.what());
  }
  return s;
}

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::budget_pipelines: return "budget_pipelines";
    case FinishReason::exhausted: return "exhausted";
    case FinishReason::budget_time: return "budget_time";
    case FinishReason::cancelled: return "cancelled";
  }
  return "exhausted";
}

FinishReason parse_finish_reason(std::string_view s) {
  for (auto r : {FinishReason::budget_pipelines, FinishReason::exhausted, FinishReason::budget_time,
                 FinishReason::cancelled}) {
    if (to_string(r) == s) return r;
  }
  throw Error(ErrorCode::SchemaError, "unknown finish reason '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Templates

std::vector<std::map<std::string, double>> SearchTemplate::grid() const {
  const auto& d = descriptor(estimator);
  std::vector<std::map<std::string, double>> out{{}};
  for (const auto& h : d.hyperparams) {
    std::vector<std::map<std::string, double>> next;
    for (const auto& partial : out) {
      for (double v : h.grid) {
        auto p = partial;
        p[h.name] = v;
        next.push_back(std::move(p));
      }
    }
    out = std::move(next);
  }
  // Move the default point to the front, keeping the rest in grid order.
  std::map<std::string, double> defaults;
  for (const auto& h : d.hyperparams) defaults[h.name] = h.default_value;
  auto it = std::find(out.begin(), out.end(), defaults);
  if (it != out.end()) std::rotate(out.begin(), it, it + 1);
  return out;
}

Pipeline SearchTemplate::pipeline(const std::map<std::string, double>& hyperparams) const {
  std::vector<PrimitiveSpec> steps;
  for (const auto& p : preprocessors) steps.push_back(make_primitive(p));
  steps.push_back(make_primitive(estimator, hyperparams));
  return make_pipeline(std::move(steps));
}

std::vector<SearchTemplate> search_templates(const Dataset& dataset, const ValidatedSpec& spec) {
  bool missing = false;
  bool categorical = false;
  bool temporal = false;
  for (const auto& f : spec.spec.features) {
    const Column& c = dataset.table.at(f);
    if (c.dtype() == DType::categorical || c.dtype() == DType::text) categorical = true;
    if (c.dtype() == DType::temporal) temporal = true;
    if (c.is_numeric_storage()) {
      for (auto r : spec.usable_rows) missing = missing || c.missing(r);
    }
  }
  std::vector<std::vector<std::string>> imputers{{}};
  if (missing) imputers = {{"mean_imputer"}, {"constant_imputer"}};

  std::vector<SearchTemplate> out;
  for (const auto& d : registry()) {
    if (d.role != PrimitiveRole::estimator || !d.numeric_only) continue;
    if (std::find(d.tasks.begin(), d.tasks.end(), spec.spec.task_type) == d.tasks.end()) continue;
    const std::vector<std::string> scalers =
        d.scale_sensitive ? std::vector<std::string>{"standard_scaler", "minmax_scaler"} : std::vector<std::string>{""};
    for (const auto& imp : imputers) {
      for (const auto& scaler : scalers) {
        SearchTemplate t;
        t.preprocessors = imp;
        if (categorical) t.preprocessors.push_back("one_hot_encoder");
        if (temporal) t.preprocessors.push_back("datetime_expander");
        if (!scaler.empty()) t.preprocessors.push_back(scaler);
        t.estimator = d.name;
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

Pipeline baseline_pipeline(TaskType task) {
  return make_pipeline({make_primitive(task == TaskType::regression ? "mean_baseline" : "majority_class_baseline")});
}

// ---------------------------------------------------------------------------
// SearchRun

SearchRun::SearchRun(std::string id, ValidatedSpec spec, std::uint64_t seed, std::chrono::steady_clock::time_point started)
    : id_(std::move(id)), spec_(std::move(spec)), seed_(seed), started_(started) {}

SearchRun::~SearchRun() {
  stop_.request_stop();
  if (thread_.joinable()) thread_.join();
}

std::vector<Solution> SearchRun::events_after(std::uint64_t cursor) const {
  std::lock_guard lock(mutex_);
  std::vector<Solution> out;
  for (const auto& s : solutions_) {
    if (s.seq > cursor) out.push_back(s);
  }
  return out;
}

std::vector<Solution> SearchRun::solutions() const {
  std::lock_guard lock(mutex_);
  return solutions_;
}

std::optional<Solution> SearchRun::find(const std::string& solution_id) const {
  std::lock_guard lock(mutex_);
  for (const auto& s : solutions_) {
    if (s.solution_id == solution_id) return s;
  }
  return std::nullopt;
}

bool SearchRun::finished() const {
  std::lock_guard lock(mutex_);
  return reason_.has_value();
}

std::optional<FinishReason> SearchRun::finish_reason() const {
  std::lock_guard lock(mutex_);
  return reason_;
}

std::chrono::duration<double> SearchRun::elapsed() const {
  std::lock_guard lock(mutex_);
  if (reason_) return elapsed_;
  return std::chrono::steady_clock::now() - started_;
}

void SearchRun::cancel() {
  {
    std::lock_guard lock(mutex_);
    if (reason_) return;
    cancel_requested_ = true;
  }
  stop_.request_stop();
}

void SearchRun::wait() const {
  std::unique_lock lock(mutex_);
  changed_.wait(lock, [&] { return reason_.has_value(); });
}

bool SearchRun::wait_for(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return changed_.wait_for(lock, timeout, [&] { return reason_.has_value(); });
}

std::shared_ptr<SearchRun> SearchRun::restore(std::string id, ValidatedSpec spec, std::uint64_t seed,
                                              std::vector<Solution> solutions, FinishReason reason,
                                              double elapsed_seconds) {
  std::shared_ptr<SearchRun> run(new SearchRun(std::move(id), std::move(spec), seed));
  run->solutions_ = std::move(solutions);
  run->reason_ = reason;
  run->elapsed_ = std::chrono::duration<double>(elapsed_seconds);
  return run;
}

void SearchRun::emit(Solution s, const SearchOptions& options) {
  {
    std::lock_guard lock(mutex_);
    s.seq = solutions_.size() + 1;
    s.solution_id = id_ + "-" + std::to_string(s.seq);
    solutions_.push_back(s);
  }
  changed_.notify_all();
  if (options.on_event) options.on_event(s);
}

void SearchRun::finish(FinishReason r, const SearchOptions& options) {
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started_;
  if (options.on_finish) options.on_finish(r, elapsed);
  {
    std::lock_guard lock(mutex_);
    reason_ = r;
    elapsed_ = elapsed;
  }
  changed_.notify_all();
}

namespace {

struct Candidate {
  Pipeline pipeline;
  int template_index = -1;  // -1 for the baseline
};

struct Outcome {
  enum class Kind { scored, failed, aborted } kind = Kind::aborted;
  std::optional<ScoreReport> report;
  std::optional<ErrorCode> code;
  std::string message;
};

bool better(Metric m, double a, double b) { return higher_is_better(m) ? a > b : a < b; }

}  // namespace

void SearchRun::run(DatasetPtr dataset, SearchOptions options) {
  using Clock = std::chrono::steady_clock;
  const Budget budget = spec_.spec.budget;
  const Metric primary = spec_.spec.primary_metric;
  const auto limit = std::chrono::duration<double>(budget.time_limit_seconds);
  const auto schedule_deadline = started_ + std::chrono::duration_cast<Clock::duration>(limit);
  const auto abort_deadline = started_ + std::chrono::duration_cast<Clock::duration>(limit * kTimeGrace);
  const unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());

  const auto templates = search_templates(*dataset, spec_);
  std::vector<std::vector<std::map<std::string, double>>> grids;
  std::vector<std::vector<std::size_t>> orders;  // seeded visiting order per template (after the default)
  std::vector<std::size_t> cursor(templates.size(), 0);
  std::vector<std::optional<double>> best(templates.size());
  for (std::size_t t = 0; t < templates.size(); ++t) {
    grids.push_back(templates[t].grid());
    const auto perm = shuffled_order(grids[t].size() - 1, seed_ ^ (0x9E3779B97F4A7C15ULL * (t + 1)));
    std::vector<std::size_t> order;
    for (auto i : perm) order.push_back(i + 1);
    orders.push_back(order);
  }

  std::set<std::string> seen;
  std::size_t emitted = 0;
  const auto max = static_cast<std::size_t>(budget.max_pipelines);
  bool timed_out = false;

  // Evaluates a batch concurrently and emits results in candidate order.
  auto process = [&](const std::vector<Candidate>& batch) {
    std::vector<Outcome> outcomes(batch.size());
    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::mutex m;
    std::condition_variable cv;
    auto work = [&] {
      for (;;) {
        const std::size_t i = next++;
        if (i >= batch.size()) return;
        Outcome o;
        if (!stop_.stop_requested() && Clock::now() < schedule_deadline) {
          try {
            o.report = evaluate(batch[i].pipeline, *dataset, spec_, seed_, stop_.get_token());
            o.kind = Outcome::Kind::scored;
          } catch (const Error& e) {
            if (e.code() != ErrorCode::Cancelled) {
              o.kind = Outcome::Kind::failed;
              o.code = e.code();
              o.message = e.what();
            }
          } catch (const std::exception& e) {
            o.kind = Outcome::Kind::failed;
            o.message = e.what();
          }
        }
        std::lock_guard lock(m);
        outcomes[i] = std::move(o);
        ++done;
        cv.notify_all();
      }
    };
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, batch.size()); ++w) pool.emplace_back(work);
    {
      std::unique_lock lock(m);
      if (!cv.wait_until(lock, abort_deadline, [&] { return done == batch.size(); })) {
        stop_.request_stop();
        cv.wait(lock, [&] { return done == batch.size(); });
      }
    }
    pool.clear();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Outcome& o = outcomes[i];
      if (o.kind == Outcome::Kind::aborted) continue;
      Solution s;
      s.pipeline = batch[i].pipeline;
      if (o.kind == Outcome::Kind::scored) {
        s.status = SolutionStatus::scored;
        s.report = std::move(o.report);
        const int t = batch[i].template_index;
        const auto v = s.report->metric(primary);
        if (t >= 0 && v && (!best[static_cast<std::size_t>(t)] || better(primary, *v, *best[static_cast<std::size_t>(t)]))) {
          best[static_cast<std::size_t>(t)] = v;
        }
      } else {
        s.status = SolutionStatus::failed;
        s.failure_code = o.code;
        s.failure_message = o.message;
      }
      emit(std::move(s), options);
      ++emitted;
    }
    if (Clock::now() >= schedule_deadline) timed_out = true;
  };

  auto stopped = [&] { return stop_.stop_requested() || timed_out; };
  auto unseen = [&](std::size_t t) {
    std::size_t n = 0;
    for (const auto& g : grids[t]) n += !seen.count(templates[t].pipeline(g).id);
    return n;
  };
  auto take = [&](std::vector<Candidate>& batch, Candidate c) {
    if (emitted + batch.size() >= max || seen.count(c.pipeline.id)) return;
    seen.insert(c.pipeline.id);
    batch.push_back(std::move(c));
  };

  // Phase 1: baseline, then every template at its defaults.
  std::vector<Candidate> first;
  take(first, {baseline_pipeline(spec_.spec.task_type), -1});
  for (std::size_t t = 0; t < templates.size(); ++t) {
    take(first, {templates[t].pipeline(grids[t][0]), static_cast<int>(t)});
  }
  process(first);

  auto more_left = [&] {
    if (!seen.count(baseline_pipeline(spec_.spec.task_type).id)) return true;
    for (std::size_t t = 0; t < templates.size(); ++t) {
      if (unseen(t)) return true;
    }
    return false;
  };

  // Phase 2: the whole grid when it fits the budget, else rounds over the
  // better half of the templates.
  if (!stopped() && emitted < max) {
    std::size_t remaining_grid = 0;
    for (std::size_t t = 0; t < templates.size(); ++t) remaining_grid += unseen(t);
    if (remaining_grid <= max - emitted) {
      std::vector<Candidate> all;
      for (std::size_t t = 0; t < templates.size(); ++t) {
        for (const auto& g : grids[t]) take(all, {templates[t].pipeline(g), static_cast<int>(t)});
      }
      process(all);
    } else {
      while (!stopped() && emitted < max) {
        std::vector<std::size_t> ranked(templates.size());
        for (std::size_t t = 0; t < ranked.size(); ++t) ranked[t] = t;
        std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
          if (!best[a] || !best[b]) return best[a].has_value() && !best[b].has_value();
          return better(primary, *best[a], *best[b]);
        });
        auto draw = [&](std::size_t t, std::vector<Candidate>& batch) {
          while (cursor[t] < orders[t].size()) {
            const auto& g = grids[t][orders[t][cursor[t]++]];
            Pipeline p = templates[t].pipeline(g);
            if (seen.count(p.id)) continue;
            take(batch, {std::move(p), static_cast<int>(t)});
            return;
          }
        };
        std::vector<Candidate> round;
        const std::size_t top = (ranked.size() + 1) / 2;
        for (std::size_t i = 0; i < top; ++i) draw(ranked[i], round);
        if (round.empty()) {
          for (std::size_t i = top; i < ranked.size() && round.empty(); ++i) draw(ranked[i], round);
        }
        if (round.empty()) break;
        process(round);
      }
    }
  }

  FinishReason reason = FinishReason::exhausted;
  bool cancelled;
  {
    std::lock_guard lock(mutex_);
    cancelled = cancel_requested_;
  }
  if (cancelled) reason = FinishReason::cancelled;
  else if (timed_out || stop_.stop_requested()) reason = more_left() ? FinishReason::budget_time : FinishReason::exhausted;
  else if (emitted >= max && more_left()) reason = FinishReason::budget_pipelines;
  finish(reason, options);
}

SearchRunPtr start_search(DatasetPtr dataset, const ValidatedSpec& spec, std::uint64_t seed, SearchOptions options) {
  // The time budget covers validation too.
  const auto started = std::chrono::steady_clock::now();
  validate(spec, *dataset);
  SearchRunPtr run(new SearchRun(options.run_id, spec, seed, started));
  run->thread_ = std::jthread([raw = run.get(), dataset = std::move(dataset), options = std::move(options)] {
    raw->run(dataset, options);
  });
  return run;
}

// ---------------------------------------------------------------------------
// Summaries

std::vector<std::string> rank_solutions(const std::vector<Solution>& solutions, const ProblemSpec& spec, Metric metric) {
  if (std::find(spec.report_metrics.begin(), spec.report_metrics.end(), metric) == spec.report_metrics.end()) {
    throw Error(ErrorCode::UnknownMetric, std::string(to_string(metric)) + " is not reported by this problem",
                Json{{"metric", std::string(to_string(metric))}});
  }
  std::vector<const Solution*> order;
  for (const auto& s : solutions) order.push_back(&s);
  auto tier = [&](const Solution* s) { return s->status == SolutionStatus::failed ? 2 : s->score(metric) ? 0 : 1; };
  std::stable_sort(order.begin(), order.end(), [&](const Solution* a, const Solution* b) {
    const int ta = tier(a), tb = tier(b);
    if (ta != tb) return ta < tb;
    if (ta == 0 && *a->score(metric) != *b->score(metric)) return better(metric, *a->score(metric), *b->score(metric));
    return a->seq < b->seq;
  });
  std::vector<std::string> ids;
  for (const auto* s : order) ids.push_back(s->solution_id);
  return ids;
}

ScoreHistogram summarize_scores(const std::vector<Solution>& solutions, Metric metric) {
  std::vector<double> values;
  std::vector<std::string> ids;
  for (const auto& s : solutions) {
    if (auto v = s.score(metric)) {
      values.push_back(*v);
      ids.push_back(s.solution_id);
    }
  }
  if (values.empty()) {
    throw Error(ErrorCode::NoScoredSolutions, "no solution has a " + std::string(to_string(metric)) + " score");
  }
  ScoreHistogram h;
  h.metric = metric;
  h.bins = equal_width_histogram(values, 10);
  for (std::size_t i = 0; i < values.size(); ++i) h.solution_bins.emplace_back(ids[i], histogram_bin_index(h.bins, values[i]));
  return h;
}

Json to_json(const ScoreHistogram& h) {
  Json bins = Json::array();
  for (const auto& b : h.bins) bins.push_back(Json{{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
  Json sb = Json::object();
  for (const auto& [id, bin] : h.solution_bins) sb[id] = bin;
  return Json{{"metric", std::string(to_string(h.metric))}, {"bins", bins}, {"solution_bins", sb}};
}

Json parallel_coordinates(const std::vector<Solution>& solutions, const ProblemSpec& spec) {
  Json metrics = Json::array();
  for (Metric m : spec.report_metrics) metrics.push_back(std::string(to_string(m)));
  std::vector<std::optional<double>> lo(spec.report_metrics.size()), hi(spec.report_metrics.size());
  Json rows = Json::array();
  for (const auto& s : solutions) {
    if (s.status != SolutionStatus::scored) continue;
    Json values = Json::array();
    for (std::size_t i = 0; i < spec.report_metrics.size(); ++i) {
      const auto v = s.score(spec.report_metrics[i]);
      values.push_back(v ? Json(*v) : Json(nullptr));
      if (v) {
        lo[i] = lo[i] ? std::min(*lo[i], *v) : *v;
        hi[i] = hi[i] ? std::max(*hi[i], *v) : *v;
      }
    }
    rows.push_back(Json{{"solution_id", s.solution_id}, {"values", values}});
  }
  if (rows.empty()) throw Error(ErrorCode::NoScoredSolutions, "run has no scored solutions");
  Json ranges = Json::object();
  for (std::size_t i = 0; i < spec.report_metrics.size(); ++i) {
    ranges[std::string(to_string(spec.report_metrics[i]))] =
        Json{{"min", lo[i] ? Json(*lo[i]) : Json(nullptr)}, {"max", hi[i] ? Json(*hi[i]) : Json(nullptr)}};
  }
  return Json{{"metrics", metrics}, {"ranges", ranges}, {"rows", rows}};
}

}  // namespace hilml
