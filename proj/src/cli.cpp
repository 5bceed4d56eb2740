#include "hilml/cli.hpp"

#include <cstdio>
#include <ostream>

#include "hilml/augment.hpp"
#include "hilml/csv.hpp"
#include "hilml/explain.hpp"
#include "hilml/search.hpp"

namespace hilml {

namespace fs = std::filesystem;

namespace {

std::string fixed(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

std::string ranking_table(const std::vector<Solution>& solutions, const std::vector<std::string>& order,
                          const ProblemSpec& spec) {
  std::string out = "rank  solution";
  for (auto m : spec.report_metrics) out += "  " + std::string(to_string(m));
  out += "  pipeline\n";
  std::size_t rank = 1;
  for (const auto& id : order) {
    const Solution* s = nullptr;
    for (const auto& x : solutions) {
      if (x.solution_id == id) s = &x;
    }
    out += std::to_string(rank++) + "  " + id;
    for (auto m : spec.report_metrics) out += "  " + (s->status == SolutionStatus::scored ? fixed(s->score(m)) : "failed");
    out += " ";
    for (std::size_t i = 0; i < s->pipeline.steps.size(); ++i) out += (i ? " > " : " ") + s->pipeline.steps[i].name;
    out += "\n";
  }
  return out;
}

void write_explanations(const fs::path& dir, const Solution& s, const Dataset& data, const ValidatedSpec& spec) {
  const ScoreReport& report = *s.report;
  auto put = [&](const std::string& kind, const Json& j) {
    write_file_atomic(dir / (s.solution_id + "-" + kind + ".json"), j.dump(1) + "\n");
  };
  const FittedPipeline model = fit_pipeline(s.pipeline, data, spec, spec.usable_rows);
  if (spec.spec.task_type == TaskType::classification) {
    put("confusion_matrix", to_json(confusion_matrix(report)));
    put("rules", to_json(extract_rules(model, data, spec, report.rows, 10)));
  } else {
    put("scatter", to_json(confusion_scatter(report)));
  }
  for (const auto& f : spec.spec.features) {
    if (data.table.at(f).is_numeric_storage()) put("pdp-" + f, to_json(partial_dependence(model, data, spec, report.rows, f)));
  }
}

}  // namespace

int run_headless(const RunOptions& o, std::ostream& err) {
  DatasetPtr data;
  ValidatedSpec spec;
  try {
    data = std::make_shared<const Dataset>(ingest_csv(read_file(o.data), o.data.stem().string()));
    spec = validate(problem_spec_from_json(Json::parse(read_file(o.problem))), *data);
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Json::exception& e) {
    err << "error: " << o.problem.string() << " is not valid JSON: " << e.what() << "\n";
    return kExitInvalid;
  }

  SearchOptions so;
  so.run_id = "r1";
  so.workers = o.workers;
  auto run = start_search(data, spec, o.seed, so);
  run->wait();
  const auto solutions = run->solutions();

  Json list = Json::array();
  for (const auto& s : solutions) list.push_back(to_json(s));
  write_file_atomic(o.out / "solutions.json", Json{{"dataset", data->name},
                                                   {"problem", to_json(spec.spec)},
                                                   {"seed", o.seed},
                                                   {"finish_reason", std::string(to_string(*run->finish_reason()))},
                                                   {"solutions", list}}
                                                      .dump(1) +
                                                  "\n");
  const auto order = rank_solutions(solutions, spec.spec, spec.spec.primary_metric);
  write_file_atomic(o.out / "ranking.txt", ranking_table(solutions, order, spec.spec));

  std::size_t scored = 0;
  for (const auto& s : solutions) {
    if (s.status != SolutionStatus::scored) continue;
    ++scored;
    try {
      write_explanations(o.out / "explanations", s, *data, spec);
    } catch (const Error& e) {
      err << "warning: no explanations for " << s.solution_id << ": " << e.what() << "\n";
    }
  }

  if (o.corpus) {
    try {
      const Corpus corpus = index_corpus(*o.corpus);
      for (const auto& w : corpus.warnings) err << "warning: corpus: " << w << "\n";
      Json cands = Json::array();
      for (const auto& c : search_augmentations(corpus, *data, o.keywords)) cands.push_back(to_json(c));
      write_file_atomic(o.out / "augment_candidates.json", Json{{"keywords", o.keywords}, {"candidates", cands}}.dump(1) + "\n");
    } catch (const Error& e) {
      err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
      return kExitInvalid;
    }
  }

  if (scored == 0) {
    err << "error: no pipeline could be scored\n";
    return kExitNothingScored;
  }
  return kExitOk;
}

}  // namespace hilml
