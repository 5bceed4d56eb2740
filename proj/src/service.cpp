#include "hilml/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <random>

#include "hilml/csv.hpp"
#include "hilml/explain.hpp"
#include "hilml/prepare.hpp"

namespace hilml {

namespace fs = std::filesystem;

ServiceConfig config_from_env(ServiceConfig base) {
  if (const char* v = std::getenv("HILML_SESSION_ROOT"); v && *v) base.session_root = v;
  if (const char* v = std::getenv("HILML_CORPUS"); v && *v) base.corpus_dir = fs::path(v);
  if (const char* v = std::getenv("HILML_SEED"); v && *v) base.seed = std::strtoull(v, nullptr, 10);
  return base;
}

std::pair<std::string, int> parse_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  std::string host = colon == std::string::npos ? listen : listen.substr(0, colon);
  const std::string port = colon == std::string::npos ? "" : listen.substr(colon + 1);
  if (host.empty()) host = "127.0.0.1";
  int p = 0;
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
  if (port.empty() || ec != std::errc{} || ptr != port.data() + port.size() || p <= 0 || p > 65535) {
    throw Error(ErrorCode::BadRequest, "listen address must look like host:port, got '" + listen + "'");
  }
  return {host, p};
}

// ---------------------------------------------------------------------------
// Session state

struct ProblemRecord {
  std::string id;
  std::string dataset;
  ValidatedSpec spec;
};

struct RunRecord {
  std::string id;
  std::string problem;
  std::string dataset;
  std::uint64_t seed = 0;
  SearchRunPtr run;
};

struct CandidateRecord {
  std::string dataset;
  AugmentCandidate candidate;
};

struct Session {
  std::mutex mutex;
  std::string id;
  fs::path dir;
  std::string created;
  std::string updated;
  std::map<std::string, DatasetPtr> datasets;
  std::map<std::string, std::string> stems;
  std::map<std::string, ProblemRecord> problems;
  std::map<std::string, RunRecord> runs;
  std::map<std::string, CandidateRecord> candidates;
  std::map<std::string, std::shared_ptr<const FittedPipeline>> models;  // refit per solution, not persisted
  std::uint64_t next_problem = 1;
  std::uint64_t next_run = 1;
};

namespace {

std::string now_text() {
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch());
  return format_timestamp(secs.count(), Granularity::second);
}

bool safe_id(std::string_view id) {
  return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

// Numeric-aware ordering so that p2 sorts before p10.
bool natural_less(const std::string& a, const std::string& b) {
  return a.size() != b.size() ? a.size() < b.size() : a < b;
}

template <class Map>
std::vector<std::string> ordered_keys(const Map& m) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : m) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), natural_less);
  return keys;
}

Json columns_json(const Dataset& d) {
  Json cols = Json::array();
  for (const auto& c : d.columns()) {
    Json cj{{"name", c.name()}, {"dtype", std::string(to_string(c.dtype()))}};
    if (c.dtype() == DType::temporal) cj["granularity"] = std::string(to_string(c.granularity()));
    cols.push_back(cj);
  }
  return cols;
}

Json dataset_json(const Dataset& d) {
  return Json{{"name", d.name},
              {"row_count", d.row_count()},
              {"columns", columns_json(d)},
              {"provenance", to_json(d.provenance)},
              {"fingerprint", fingerprint(d)}};
}

Json problem_json(const ProblemRecord& p) {
  return Json{{"problem_id", p.id},
              {"dataset", p.dataset},
              {"spec", to_json(p.spec.spec)},
              {"usable_rows", p.spec.usable_rows.size()},
              {"dataset_fingerprint", p.spec.dataset_fingerprint}};
}

Json run_json(const RunRecord& r) {
  const bool finished = r.run->finished();
  const auto reason = r.run->finish_reason();
  return Json{{"run_id", r.id},
              {"problem_id", r.problem},
              {"dataset", r.dataset},
              {"seed", r.seed},
              {"finished", finished},
              {"finish_reason", reason ? Json(std::string(to_string(*reason))) : Json(nullptr)},
              {"elapsed_seconds", r.run->elapsed().count()},
              {"solution_count", r.run->solutions().size()}};
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  try {
    return Json::parse(body);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::BadRequest, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::optional<std::string> param(const Request& r, const std::string& name) {
  auto it = r.query.find(name);
  if (it == r.query.end()) return std::nullopt;
  return it->second;
}

std::uint64_t uint_param(const Request& r, const std::string& name, std::uint64_t fallback) {
  const auto v = param(r, name);
  if (!v || v->empty()) return fallback;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size()) {
    throw Error(ErrorCode::BadRequest, "query parameter '" + name + "' must be a non-negative integer",
                Json{{"parameter", name}, {"value", *v}});
  }
  return out;
}

std::string unique_name(const Session& s, const std::string& base) {
  std::string name = base;
  for (int i = 2; s.datasets.count(name); ++i) name = base + "-" + std::to_string(i);
  return name;
}

// --- persistence -----------------------------------------------------------

void persist(Session& s) {
  s.updated = now_text();
  Json datasets = Json::array();
  for (const auto& [name, stem] : s.stems) datasets.push_back(Json{{"name", name}, {"stem", stem}});
  Json problems = Json::array();
  for (const auto& id : ordered_keys(s.problems)) {
    const auto& p = s.problems.at(id);
    problems.push_back(Json{{"id", p.id}, {"dataset", p.dataset}, {"spec", to_json(p.spec.spec)}});
  }
  Json runs = Json::array();
  for (const auto& id : ordered_keys(s.runs)) {
    const auto& r = s.runs.at(id);
    runs.push_back(Json{{"id", r.id}, {"problem", r.problem}, {"dataset", r.dataset}, {"seed", r.seed}});
  }
  Json candidates = Json::array();
  for (const auto& [id, c] : s.candidates) candidates.push_back(Json{{"dataset", c.dataset}, {"candidate", to_json(c.candidate)}});
  const Json doc{{"id", s.id},
                 {"created", s.created},
                 {"updated", s.updated},
                 {"next_problem", s.next_problem},
                 {"next_run", s.next_run},
                 {"datasets", datasets},
                 {"problems", problems},
                 {"runs", runs},
                 {"candidates", candidates}};
  write_file_atomic(s.dir / "session.json", doc.dump(1) + "\n");
}

void add_dataset(Session& s, Dataset d) {
  const std::string stem = "ds-" + fnv1a_hex(d.name);
  save_dataset(s.dir / "datasets", stem, d);
  s.stems[d.name] = stem;
  const std::string name = d.name;
  s.datasets[name] = std::make_shared<const Dataset>(std::move(d));
}

std::shared_ptr<Session> load_session(const fs::path& dir) {
  const Json doc = Json::parse(read_file(dir / "session.json"));
  auto s = std::make_shared<Session>();
  s->dir = dir;
  s->id = doc.at("id").get<std::string>();
  s->created = doc.at("created").get<std::string>();
  s->updated = doc.at("updated").get<std::string>();
  s->next_problem = doc.at("next_problem").get<std::uint64_t>();
  s->next_run = doc.at("next_run").get<std::uint64_t>();
  for (const auto& d : doc.at("datasets")) {
    const std::string name = d.at("name").get<std::string>();
    const std::string stem = d.at("stem").get<std::string>();
    Dataset ds = load_dataset(dir / "datasets", stem);
    ds.name = name;
    s->stems[name] = stem;
    s->datasets[name] = std::make_shared<const Dataset>(std::move(ds));
  }
  for (const auto& p : doc.at("problems")) {
    ProblemRecord rec;
    rec.id = p.at("id").get<std::string>();
    rec.dataset = p.at("dataset").get<std::string>();
    rec.spec = validate(problem_spec_from_json(p.at("spec")), *s->datasets.at(rec.dataset));
    s->problems[rec.id] = std::move(rec);
  }
  for (const auto& r : doc.at("runs")) {
    RunRecord rec;
    rec.id = r.at("id").get<std::string>();
    rec.problem = r.at("problem").get<std::string>();
    rec.dataset = r.at("dataset").get<std::string>();
    rec.seed = r.at("seed").get<std::uint64_t>();
    const ValidatedSpec& spec = s->problems.at(rec.problem).spec;
    const fs::path file = dir / "runs" / (rec.id + ".json");
    std::vector<Solution> solutions;
    FinishReason reason = FinishReason::cancelled;  // interrupted by a restart
    double elapsed = 0;
    if (fs::exists(file)) {
      const Json rj = Json::parse(read_file(file));
      for (const auto& sj : rj.at("solutions")) solutions.push_back(solution_from_json(sj, spec.spec.task_type));
      reason = parse_finish_reason(rj.at("finish_reason").get<std::string>());
      elapsed = rj.at("elapsed_seconds").get<double>();
    }
    rec.run = SearchRun::restore(rec.id, spec, rec.seed, std::move(solutions), reason, elapsed);
    s->runs[rec.id] = std::move(rec);
  }
  for (const auto& c : doc.at("candidates")) {
    CandidateRecord rec{c.at("dataset").get<std::string>(), augment_candidate_from_json(c.at("candidate"))};
    s->candidates[rec.candidate.id] = std::move(rec);
  }
  return s;
}

// --- lookups ---------------------------------------------------------------

DatasetPtr dataset_of(const Session& s, const std::string& name) {
  auto it = s.datasets.find(name);
  if (it == s.datasets.end()) {
    throw Error(ErrorCode::DatasetNotFound, "no dataset '" + name + "' in session " + s.id, Json{{"dataset", name}});
  }
  return it->second;
}

ProblemRecord& problem_of(Session& s, const std::string& id) {
  auto it = s.problems.find(id);
  if (it == s.problems.end()) {
    throw Error(ErrorCode::ProblemNotFound, "no problem '" + id + "' in session " + s.id, Json{{"problem_id", id}});
  }
  return it->second;
}

RunRecord& run_of(Session& s, const std::string& id) {
  auto it = s.runs.find(id);
  if (it == s.runs.end()) throw Error(ErrorCode::RunNotFound, "no run '" + id + "' in session " + s.id, Json{{"run_id", id}});
  return it->second;
}

Solution solution_of(const RunRecord& r, const std::string& id) {
  auto sol = r.run->find(id);
  if (!sol) throw Error(ErrorCode::SolutionNotFound, "no solution '" + id + "' in run " + r.id, Json{{"solution_id", id}});
  return *sol;
}

std::pair<const RunRecord*, Solution> any_solution(Session& s, const std::string& id) {
  for (const auto& [rid, r] : s.runs) {
    if (auto sol = r.run->find(id)) return {&r, *sol};
  }
  throw Error(ErrorCode::SolutionNotFound, "no solution '" + id + "' in session " + s.id, Json{{"solution_id", id}});
}

Metric metric_param(const Request& r, const ProblemSpec& spec) {
  const auto m = param(r, "metric");
  if (!m) {
    const auto sort = param(r, "sort");
    return sort ? parse_metric(*sort) : spec.primary_metric;
  }
  return parse_metric(*m);
}

// --- handlers --------------------------------------------------------------

Json explain(Session& s, const RunRecord& run, const Solution& sol, const std::string& kind, const Request& req) {
  if (sol.status != SolutionStatus::scored || !sol.report) {
    throw Error(ErrorCode::BadRequest, "solution " + sol.solution_id + " failed and cannot be explained",
                Json{{"solution_id", sol.solution_id}});
  }
  const ScoreReport& report = *sol.report;
  const ValidatedSpec& spec = run.run->spec();
  const DatasetPtr data = dataset_of(s, run.dataset);
  auto model = [&]() -> const FittedPipeline& {
    auto& slot = s.models[sol.solution_id];
    if (!slot) slot = std::make_shared<const FittedPipeline>(fit_pipeline(sol.pipeline, *data, spec, spec.usable_rows));
    return *slot;
  };
  Json payload;
  if (kind == "confusion_matrix") {
    payload = to_json(confusion_matrix(report));
  } else if (kind == "scatter") {
    payload = to_json(confusion_scatter(report));
  } else if (kind == "rules") {
    if (spec.spec.task_type != TaskType::classification) {
      throw Error(ErrorCode::WrongTaskType, "rules explain classification models only");
    }
    payload = to_json(extract_rules(model(), *data, spec, report.rows, uint_param(req, "max_rules", 10)));
  } else if (kind == "pdp") {
    const auto feature = param(req, "feature");
    if (!feature || feature->empty()) throw Error(ErrorCode::BadRequest, "pdp needs a feature query parameter");
    payload = to_json(partial_dependence(model(), *data, spec, report.rows, *feature));
  } else {
    throw Error(ErrorCode::BadRequest, "unknown explanation kind '" + kind + "'",
                Json{{"kind", kind}, {"allowed", {"confusion_matrix", "rules", "pdp", "scatter"}}});
  }
  return Json{{"solution_id", sol.solution_id}, {"kind", kind}, {"explanation", payload}};
}

Json events(const RunRecord& r, std::uint64_t cursor) {
  // Read the finish flag first so a finished page is always complete.
  const auto reason = r.run->finish_reason();
  Json list = Json::array();
  for (const auto& sol : r.run->events_after(cursor)) {
    list.push_back(solution_summary_json(sol));
    cursor = sol.seq;
  }
  return Json{{"run_id", r.id},
              {"events", list},
              {"cursor", cursor},
              {"finished", reason.has_value()},
              {"finish_reason", reason ? Json(std::string(to_string(*reason))) : Json(nullptr)}};
}

Json start_run(Session& s, ProblemRecord& p, const Json& body, const ServiceConfig& config) {
  const DatasetPtr data = dataset_of(s, p.dataset);
  p.spec = validate(p.spec, *data);
  RunRecord rec;
  rec.id = "r" + std::to_string(s.next_run++);
  rec.problem = p.id;
  rec.dataset = p.dataset;
  rec.seed = body.contains("seed") ? body.at("seed").get<std::uint64_t>() : config.seed;

  struct Collected {
    std::mutex mutex;
    std::vector<Solution> solutions;
  };
  auto collected = std::make_shared<Collected>();
  const fs::path file = s.dir / "runs" / (rec.id + ".json");
  SearchOptions o;
  o.run_id = rec.id;
  o.workers = body.contains("workers") ? body.at("workers").get<unsigned>() : config.workers;
  o.on_event = [collected](const Solution& sol) {
    std::lock_guard lock(collected->mutex);
    collected->solutions.push_back(sol);
  };
  o.on_finish = [collected, file, id = rec.id](FinishReason reason, std::chrono::duration<double> elapsed) {
    Json list = Json::array();
    {
      std::lock_guard lock(collected->mutex);
      for (const auto& sol : collected->solutions) list.push_back(to_json(sol));
    }
    try {
      write_file_atomic(file, Json{{"id", id},
                                   {"finish_reason", std::string(to_string(reason))},
                                   {"elapsed_seconds", elapsed.count()},
                                   {"solutions", list}}
                                  .dump() +
                                  "\n");
    } catch (const std::exception&) {
      // The run stays usable in memory; a reload reports it as interrupted.
    }
  };
  rec.run = start_search(data, p.spec, rec.seed, std::move(o));
  const Json out{{"run_id", rec.id}, {"problem_id", p.id}, {"seed", rec.seed}};
  s.runs[rec.id] = std::move(rec);
  persist(s);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Service

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (config_.corpus_dir) corpus_ = index_corpus(*config_.corpus_dir);
  fs::create_directories(config_.session_root);
}

Service::~Service() {
  std::lock_guard lock(mutex_);
  for (auto& [id, s] : sessions_) {
    std::lock_guard slock(s->mutex);
    for (auto& [rid, r] : s->runs) r.run->cancel();
    for (auto& [rid, r] : s->runs) r.run->wait();
  }
}

void Service::wait_idle() {
  std::vector<SearchRunPtr> runs;
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, s] : sessions_) {
      std::lock_guard slock(s->mutex);
      for (auto& [rid, r] : s->runs) runs.push_back(r.run);
    }
  }
  for (const auto& r : runs) r->wait();
}

std::shared_ptr<Session> Service::session(const std::string& id) {
  std::lock_guard lock(mutex_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
  const fs::path dir = config_.session_root / id;
  if (!safe_id(id) || !fs::exists(dir / "session.json")) {
    throw Error(ErrorCode::SessionNotFound, "no session '" + id + "'", Json{{"session_id", id}});
  }
  auto s = load_session(dir);
  sessions_[id] = s;
  return s;
}

Response Service::handle(const Request& request) {
  Response res;
  try {
    res.body = route(request, res.status);
  } catch (const Error& e) {
    res.status = http_status(e.code());
    res.body = Json{{"error", e.to_json()}};
  } catch (const Json::exception& e) {
    res.status = 400;
    res.body = Json{{"error", Error(ErrorCode::BadRequest, std::string("malformed request: ") + e.what()).to_json()}};
  } catch (const std::exception& e) {
    res.status = 500;
    res.body = Json{{"error", {{"code", "INTERNAL_ERROR"}, {"message", e.what()}}}};
  }
  return res;
}

Json Service::route(const Request& req, int& status) {
  std::vector<std::string> seg;
  {
    std::string cur;
    for (char c : req.path) {
      if (c == '/') {
        if (!cur.empty()) seg.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) seg.push_back(std::move(cur));
  }
  const std::string& m = req.method;
  auto not_found = [&] {
    return Error(ErrorCode::RouteNotFound, "no route for " + m + " " + req.path, Json{{"method", m}, {"path", req.path}});
  };
  const auto n = seg.size();

  if (n == 1 && seg[0] == "corpus" && m == "GET") {
    Json entries = Json::array();
    for (const auto& e : corpus_.entries) entries.push_back(to_json(e));
    return Json{{"entries", entries}, {"warnings", corpus_.warnings}};
  }
  if (n == 0 || seg[0] != "sessions") throw not_found();

  if (n == 1) {
    if (m != "POST") throw not_found();
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mutex_);
    std::string id;
    do {
      id = "s-" + fnv1a_hex(std::to_string(rng()) + now_text()).substr(0, 12);
    } while (sessions_.count(id) || fs::exists(config_.session_root / id));
    auto s = std::make_shared<Session>();
    s->id = id;
    s->dir = config_.session_root / id;
    s->created = now_text();
    persist(*s);
    sessions_[id] = s;
    status = 201;
    return Json{{"session_id", id}, {"created", s->created}};
  }

  auto s = session(seg[1]);
  std::lock_guard lock(s->mutex);

  if (n == 2) {
    if (m != "GET") throw not_found();
    Json problems = Json::array();
    for (const auto& id : ordered_keys(s->problems)) problems.push_back(problem_json(s->problems.at(id)));
    Json runs = Json::array();
    for (const auto& id : ordered_keys(s->runs)) runs.push_back(run_json(s->runs.at(id)));
    Json datasets = Json::array();
    for (const auto& [name, d] : s->datasets) datasets.push_back(dataset_json(*d));
    return Json{{"session_id", s->id}, {"created", s->created}, {"updated", s->updated},
                {"datasets", datasets}, {"problems", problems}, {"runs", runs}};
  }

  const std::string& area = seg[2];

  if (area == "datasets") {
    if (n == 3 && m == "GET") {
      Json list = Json::array();
      for (const auto& [name, d] : s->datasets) list.push_back(dataset_json(*d));
      return Json{{"datasets", list}};
    }
    if (n == 3 && m == "POST") {
      const std::string name = param(req, "name").value_or("dataset-" + std::to_string(s->datasets.size() + 1));
      if (name.empty()) throw Error(ErrorCode::BadRequest, "dataset name must not be empty");
      if (s->datasets.count(name)) {
        throw Error(ErrorCode::BadRequest, "dataset '" + name + "' already exists", Json{{"dataset", name}});
      }
      Dataset d = ingest_csv(req.body, name);
      Json out = dataset_json(d);
      out["profiles"] = to_json(profile(d));
      add_dataset(*s, std::move(d));
      persist(*s);
      status = 201;
      return out;
    }
    if (n < 4) throw not_found();
    const DatasetPtr d = dataset_of(*s, seg[3]);
    if (n == 4 && m == "GET") return dataset_json(*d);
    if (n == 5 && seg[4] == "profile" && m == "GET") return Json{{"dataset", d->name}, {"profiles", to_json(profile(*d))}};
    if (n == 5 && seg[4] == "prepare" && m == "POST") {
      const Json body = parse_body(req.body);
      std::vector<PrepAction> actions;
      for (const auto& a : body.at("actions")) actions.push_back(prep_action_from_json(a));
      Dataset out = prepare(*d, actions);
      out.name = unique_name(*s, body.value("name", d->name + "-prepared"));
      if (body.contains("name") && out.name != body.at("name").get<std::string>()) {
        throw Error(ErrorCode::BadRequest, "dataset '" + body.at("name").get<std::string>() + "' already exists");
      }
      Json j = dataset_json(out);
      j["profiles"] = to_json(profile(out));
      add_dataset(*s, std::move(out));
      persist(*s);
      status = 201;
      return j;
    }
    if (n == 5 && seg[4] == "augment" && m == "GET") {
      const std::string keywords = param(req, "keywords").value_or("");
      Json list = Json::array();
      for (const auto& c : search_augmentations(corpus_, *d, keywords)) {
        Json cj = to_json(c);
        cj["preview"] = candidate_preview(*corpus_.find(c.corpus_name));
        list.push_back(cj);
        s->candidates[c.id] = CandidateRecord{d->name, c};
      }
      persist(*s);
      return Json{{"dataset", d->name}, {"keywords", keywords}, {"candidates", list}, {"corpus_warnings", corpus_.warnings}};
    }
    if (n == 6 && seg[4] == "augment" && seg[5] == "apply" && m == "POST") {
      const Json body = parse_body(req.body);
      const std::string cid = body.at("candidate_id").get<std::string>();
      auto it = s->candidates.find(cid);
      if (it == s->candidates.end() || it->second.dataset != d->name) {
        throw Error(ErrorCode::CandidateNotFound, "no augmentation candidate '" + cid + "' for dataset " + d->name,
                    Json{{"candidate_id", cid}});
      }
      Dataset out = apply_augmentation(*d, it->second.candidate, corpus_);
      out.name = unique_name(*s, body.value("name", out.name));
      Json added = Json::array();
      for (const auto& c : out.columns()) {
        if (!d->table.find(c.name())) added.push_back(c.name());
      }
      Json j = dataset_json(out);
      j["added_columns"] = added;
      j["profiles"] = to_json(profile(out));
      add_dataset(*s, std::move(out));
      persist(*s);
      status = 201;
      return j;
    }
    throw not_found();
  }

  if (area == "problems") {
    if (n == 3 && m == "GET") {
      Json list = Json::array();
      for (const auto& id : ordered_keys(s->problems)) list.push_back(problem_json(s->problems.at(id)));
      return Json{{"problems", list}};
    }
    if (n == 3 && m == "POST") {
      const Json body = parse_body(req.body);
      if (!body.contains("dataset") || !body.at("dataset").is_string()) {
        throw Error(ErrorCode::SchemaError, "problem needs the name of its dataset", Json{{"path", "$.dataset"}});
      }
      const DatasetPtr d = dataset_of(*s, body.at("dataset").get<std::string>());
      ProblemRecord rec;
      rec.dataset = d->name;
      rec.spec = validate(problem_spec_from_json(body), *d);
      rec.id = "p" + std::to_string(s->next_problem++);
      const Json out = problem_json(rec);
      s->problems[rec.id] = std::move(rec);
      persist(*s);
      status = 201;
      return out;
    }
    if (n < 4) throw not_found();
    ProblemRecord& p = problem_of(*s, seg[3]);
    if (n == 4 && m == "GET") return problem_json(p);
    if (n == 5 && seg[4] == "search" && m == "POST") {
      status = 201;
      return start_run(*s, p, parse_body(req.body), config_);
    }
    // Run endpoints nested under their problem.
    if (n >= 6 && seg[4] == "search") {
      RunRecord& r = run_of(*s, seg[5]);
      if (r.problem != p.id) throw Error(ErrorCode::RunNotFound, "run " + r.id + " belongs to problem " + r.problem);
      if (n == 6 && m == "GET") return run_json(r);
      if (n == 6 && m == "DELETE") {
        r.run->cancel();
        return run_json(r);
      }
      if (n == 7 && seg[6] == "events" && m == "GET") return events(r, uint_param(req, "cursor", 0));
    }
    throw not_found();
  }

  if (area == "runs") {
    if (n < 4) throw not_found();
    RunRecord& r = run_of(*s, seg[3]);
    if (n == 4 && m == "GET") return run_json(r);
    if (n == 4 && m == "DELETE") {
      r.run->cancel();
      return run_json(r);
    }
    if (n == 5 && seg[4] == "events" && m == "GET") return events(r, uint_param(req, "cursor", 0));
    if (n == 5 && seg[4] == "solutions" && m == "GET") {
      const Metric metric = metric_param(req, r.run->spec().spec);
      const auto all = r.run->solutions();
      Json list = Json::array();
      std::size_t rank = 1;
      for (const auto& id : rank_solutions(all, r.run->spec().spec, metric)) {
        const auto sol = std::find_if(all.begin(), all.end(), [&](const Solution& x) { return x.solution_id == id; });
        Json j = solution_summary_json(*sol);
        j["rank"] = rank++;
        list.push_back(j);
      }
      return Json{{"run_id", r.id}, {"metric", std::string(to_string(metric))}, {"solutions", list}};
    }
    if (n == 5 && seg[4] == "summary" && m == "GET") {
      const Metric metric = metric_param(req, r.run->spec().spec);
      return to_json(summarize_scores(r.run->solutions(), metric));
    }
    if (n == 5 && seg[4] == "parallel" && m == "GET") return parallel_coordinates(r.run->solutions(), r.run->spec().spec);
    if (n == 6 && seg[4] == "solutions" && m == "GET") return to_json(solution_of(r, seg[5]));
    if (n == 8 && seg[4] == "solutions" && seg[6] == "explain" && m == "GET") {
      return explain(*s, r, solution_of(r, seg[5]), seg[7], req);
    }
    throw not_found();
  }

  if (area == "solutions" && n == 4 && seg[3] == "compare" && m == "GET") {
    const auto a = param(req, "a");
    const auto b = param(req, "b");
    if (!a || !b) throw Error(ErrorCode::BadRequest, "compare needs solution ids a and b");
    const auto [ra, sa] = any_solution(*s, *a);
    const auto [rb, sb] = any_solution(*s, *b);
    return Json{{"a", to_json(sa)}, {"b", to_json(sb)}, {"diff", to_json(diff(sa.pipeline, sb.pipeline))}};
  }
  throw not_found();
}

}  // namespace hilml
