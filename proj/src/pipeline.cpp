#include "hilml/pipeline.hpp"

#include <algorithm>

namespace hilml {

std::string pipeline_id(const std::vector<PrimitiveSpec>& steps) {
  Json j = Json::array();
  for (const auto& s : steps) j.push_back(to_json(s));
  return "pl-" + fnv1a_hex(j.dump());
}

void check_structure(const Pipeline& p) {
  if (p.steps.empty()) throw Error(ErrorCode::InvalidPipelineStructure, "pipeline has no steps");
  for (std::size_t i = 0; i < p.steps.size(); ++i) {
    const auto& d = descriptor(p.steps[i].name);
    const bool last = i + 1 == p.steps.size();
    if ((d.role == PrimitiveRole::estimator) != last) {
      throw Error(ErrorCode::InvalidPipelineStructure,
                  last ? "last step '" + d.name + "' is not an estimator"
                       : "estimator '" + d.name + "' must be the last step",
                  Json{{"step", i}, {"primitive", d.name}});
    }
    check_primitive(p.steps[i]);
  }
}

Pipeline make_pipeline(std::vector<PrimitiveSpec> steps) {
  Pipeline p{pipeline_id(steps), std::move(steps)};
  check_structure(p);
  return p;
}

void check_pipeline(const Pipeline& p, const ValidatedSpec& spec, const Dataset& dataset) {
  check_structure(p);
  const auto& est = descriptor(p.estimator().name);
  if (std::find(est.tasks.begin(), est.tasks.end(), spec.spec.task_type) == est.tasks.end()) {
    throw Error(ErrorCode::InvalidPipelineStructure,
                est.name + " does not support " + std::string(to_string(spec.spec.task_type)),
                Json{{"primitive", est.name}});
  }
  std::vector<DType> dtypes;
  for (const auto& f : spec.spec.features) dtypes.push_back(dataset.table.at(f).dtype());
  for (std::size_t i = 0; i + 1 < p.steps.size(); ++i) {
    const auto& d = descriptor(p.steps[i].name);
    if (d.name == "one_hot_encoder" || d.name == "datetime_expander") {
      for (auto& t : dtypes) {
        if (std::find(d.consumes.begin(), d.consumes.end(), t) != d.consumes.end()) t = DType::numeric;
      }
    }
  }
  if (est.numeric_only) {
    for (std::size_t j = 0; j < dtypes.size(); ++j) {
      if (dtypes[j] != DType::numeric) {
        throw Error(ErrorCode::InvalidPipelineStructure,
                    est.name + " would receive non-numeric feature '" + spec.spec.features[j] + "'",
                    Json{{"primitive", est.name}, {"feature", spec.spec.features[j]}});
      }
    }
  }
}

Json to_json(const Pipeline& p) {
  Json steps = Json::array();
  for (const auto& s : p.steps) steps.push_back(to_json(s));
  return Json{{"id", p.id}, {"steps", steps}};
}

Pipeline pipeline_from_json(const Json& j) {
  Pipeline p;
  try {
    p.id = j.at("id").get<std::string>();
    for (const auto& s : j.at("steps")) p.steps.push_back(primitive_spec_from_json(s));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed pipeline: ") + e.what());
  }
  if (p.id != pipeline_id(p.steps)) {
    throw Error(ErrorCode::SchemaError, "pipeline id does not match its steps", Json{{"path", "$.id"}});
  }
  check_structure(p);
  return p;
}

Table feature_table(const Dataset& dataset, const ValidatedSpec& spec, const std::vector<std::size_t>& rows) {
  return dataset.table.select(spec.spec.features).take(rows);
}

Target target_values(const Dataset& dataset, const ValidatedSpec& spec, const std::vector<std::size_t>& rows) {
  const Column& c = dataset.table.at(spec.spec.target);
  auto absent = [&](std::size_t r) {
    return Error(ErrorCode::MissingValues, "target is missing in row " + std::to_string(r), Json{{"row", r}});
  };
  if (spec.spec.task_type == TaskType::regression) {
    Values out;
    out.reserve(rows.size());
    for (auto r : rows) {
      if (!c.numbers().at(r)) throw absent(r);
      out.push_back(*c.numbers()[r]);
    }
    return out;
  }
  Labels out;
  out.reserve(rows.size());
  for (auto r : rows) {
    if (!c.strings().at(r)) throw absent(r);
    out.push_back(*c.strings()[r]);
  }
  return out;
}

FittedPipeline fit_pipeline(const Pipeline& p, const Dataset& dataset, const ValidatedSpec& spec,
                            const std::vector<std::size_t>& rows, std::stop_token stop) {
  check_pipeline(p, spec, dataset);
  Table x = feature_table(dataset, spec, rows);
  const Schema features = schema_of(x);
  const Target y = target_values(dataset, spec, rows);
  std::vector<FittedPrimitive> fitted;
  for (std::size_t i = 0; i < p.steps.size(); ++i) {
    if (stop.stop_requested()) throw Error(ErrorCode::Cancelled, "pipeline fit cancelled");
    try {
      fitted.push_back(fit_primitive(p.steps[i], x, &y, stop));
      if (i + 1 < p.steps.size()) x = fitted.back().transform(x);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Cancelled) throw;
      Json details = e.details().is_object() ? e.details() : Json::object();
      details["step"] = i;
      details["primitive"] = p.steps[i].name;
      throw Error(e.code(), "step " + std::to_string(i) + " (" + p.steps[i].name + "): " + e.what(), details);
    }
  }
  return FittedPipeline(p, std::move(fitted), features);
}

Table FittedPipeline::transform(const Table& rows) const {
  Table x = rows;
  for (std::size_t i = 0; i + 1 < steps_.size(); ++i) x = steps_[i].transform(x);
  return x;
}

Target FittedPipeline::predict(const Table& rows, std::stop_token stop) const {
  return steps_.back().predict(transform(rows), stop);
}

Json FittedPipeline::to_json() const {
  Json steps = Json::array();
  for (const auto& s : steps_) steps.push_back(s.to_json());
  Json features = Json::array();
  for (const auto& c : features_) features.push_back(Json{{"name", c.name}, {"dtype", std::string(hilml::to_string(c.dtype))}});
  return Json{{"pipeline", hilml::to_json(pipeline_)}, {"features", features}, {"steps", steps}};
}

FittedPipeline FittedPipeline::from_json(const Json& j) {
  try {
    Pipeline p = pipeline_from_json(j.at("pipeline"));
    std::vector<FittedPrimitive> steps;
    for (const auto& s : j.at("steps")) steps.push_back(FittedPrimitive::from_json(s));
    Schema features;
    for (const auto& c : j.at("features")) {
      features.push_back({c.at("name").get<std::string>(), parse_dtype(c.at("dtype").get<std::string>())});
    }
    return FittedPipeline(std::move(p), std::move(steps), std::move(features));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed fitted pipeline: ") + e.what());
  }
}

std::string_view to_string(StepStatus s) {
  switch (s) {
    case StepStatus::same: return "same";
    case StepStatus::changed_hyperparams: return "changed_hyperparams";
    case StepStatus::only_in_p1: return "only_in_p1";
    case StepStatus::only_in_p2: return "only_in_p2";
  }
  return "same";
}

StepDiff diff(const Pipeline& p1, const Pipeline& p2) {
  const auto& a = p1.steps;
  const auto& b = p2.steps;
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  // lcs[i][j]: LCS length of the suffixes a[i..], b[j..].
  std::vector<std::vector<std::size_t>> lcs(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      lcs[i][j] = a[i].name == b[j].name ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  StepDiff out;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && a[i].name == b[j].name) {
      out.push_back({a[i] == b[j] ? StepStatus::same : StepStatus::changed_hyperparams, a[i], b[j]});
      ++i;
      ++j;
      continue;
    }
    bool skip_left;
    if (i == n) skip_left = false;
    else if (j == m) skip_left = true;
    else if (lcs[i + 1][j] != lcs[i][j + 1]) skip_left = lcs[i + 1][j] > lcs[i][j + 1];
    else skip_left = a[i].name < b[j].name;  // symmetric tie rule
    if (skip_left) {
      out.push_back({StepStatus::only_in_p1, a[i], std::nullopt});
      ++i;
    } else {
      out.push_back({StepStatus::only_in_p2, std::nullopt, b[j]});
      ++j;
    }
  }
  return out;
}

Json to_json(const StepDiff& d) {
  Json out = Json::array();
  for (const auto& e : d) {
    out.push_back(Json{{"status", std::string(to_string(e.status))},
                       {"p1", e.left ? to_json(*e.left) : Json(nullptr)},
                       {"p2", e.right ? to_json(*e.right) : Json(nullptr)}});
  }
  return out;
}

}  // namespace hilml
