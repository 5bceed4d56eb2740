#include "hilml/augment.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "hilml/csv.hpp"
#include "hilml/detail/overloaded.hpp"
#include "hilml/profile.hpp"

namespace hilml {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Corpus

const CorpusEntry* Corpus::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

namespace {

constexpr std::string_view kMetaSuffix = ".meta.json";

CorpusEntry load_entry(const fs::path& meta_path) {
  const Json meta = Json::parse(read_file(meta_path));
  const std::string file = meta_path.filename().string();
  CorpusEntry e;
  e.path = meta_path.parent_path() / (file.substr(0, file.size() - kMetaSuffix.size()) + ".csv");
  e.name = meta.at("name").get<std::string>();
  e.description = meta.value("description", std::string{});
  e.keywords = meta.value("keywords", std::vector<std::string>{});

  Json names = Json::array();
  Json dtypes = Json::object();
  Json granularities = Json::object();
  for (const auto& c : meta.at("columns")) {
    ColumnMeta cm;
    cm.name = c.at("name").get<std::string>();
    cm.dtype = parse_dtype(c.at("dtype").get<std::string>());
    if (c.contains("granularity")) cm.granularity = parse_granularity(c.at("granularity").get<std::string>());
    names.push_back(cm.name);
    dtypes[cm.name] = std::string(to_string(cm.dtype));
    e.columns.push_back(cm);
  }
  Dataset d = dataset_from_csv_and_sidecar(read_file(e.path), Json{{"name", e.name}, {"columns", names}, {"dtypes", dtypes}});
  for (auto& cm : e.columns) {
    if (cm.dtype != DType::temporal) continue;
    const Granularity actual = d.table.at(cm.name).granularity();
    if (cm.granularity && *cm.granularity != actual) {
      throw Error(ErrorCode::CorpusError, "column '" + cm.name + "' is declared " + std::string(to_string(*cm.granularity)) +
                                              " but its values are " + std::string(to_string(actual)));
    }
    cm.granularity = actual;
  }
  d.provenance.kind = Provenance::Kind::corpus;
  e.fingerprint = fingerprint(d);
  e.dataset = std::make_shared<const Dataset>(std::move(d));
  return e;
}

}  // namespace

Corpus index_corpus(const fs::path& directory) {
  if (!fs::is_directory(directory)) {
    throw Error(ErrorCode::CorpusError, "corpus directory " + directory.string() + " does not exist");
  }
  std::vector<fs::path> metas;
  for (const auto& f : fs::directory_iterator(directory)) {
    const std::string file = f.path().filename().string();
    if (f.is_regular_file() && file.size() > kMetaSuffix.size() && file.ends_with(kMetaSuffix)) metas.push_back(f.path());
  }
  std::sort(metas.begin(), metas.end());

  Corpus corpus;
  corpus.directory = directory;
  for (const auto& m : metas) {
    try {
      CorpusEntry e = load_entry(m);
      if (corpus.find(e.name)) {
        corpus.warnings.push_back(m.filename().string() + ": duplicate corpus name '" + e.name + "', skipped");
        continue;
      }
      corpus.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      corpus.warnings.push_back(m.filename().string() + ": " + ex.what() + ", skipped");
    }
  }
  std::sort(corpus.entries.begin(), corpus.entries.end(),
            [](const CorpusEntry& a, const CorpusEntry& b) { return a.name < b.name; });
  return corpus;
}

Json to_json(const CorpusEntry& e) {
  Json cols = Json::array();
  for (const auto& c : e.columns) {
    Json cj{{"name", c.name}, {"dtype", std::string(to_string(c.dtype))}};
    if (c.granularity) cj["granularity"] = std::string(to_string(*c.granularity));
    cols.push_back(cj);
  }
  return Json{{"name", e.name},
              {"description", e.description},
              {"keywords", e.keywords},
              {"columns", cols},
              {"row_count", e.dataset->row_count()}};
}

// ---------------------------------------------------------------------------
// Relevance

std::string_view to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "mode"; }

namespace {

std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t occurrences(const std::vector<std::string>& haystack, const std::string& term) {
  return static_cast<std::size_t>(std::count(haystack.begin(), haystack.end(), term));
}

}  // namespace

double relevance_score(const CorpusEntry& entry, std::string_view keywords) {
  const auto name = tokens(entry.name);
  const auto description = tokens(entry.description);
  std::vector<std::string> kw;
  for (const auto& k : entry.keywords) {
    for (auto& t : tokens(k)) kw.push_back(std::move(t));
  }
  std::vector<std::string> cols;
  for (const auto& c : entry.columns) {
    for (auto& t : tokens(c.name)) cols.push_back(std::move(t));
  }
  double score = 0;
  for (const auto& term : tokens(keywords)) {
    score += 3.0 * static_cast<double>(occurrences(name, term)) + 2.0 * static_cast<double>(occurrences(kw, term)) +
             1.0 * static_cast<double>(occurrences(description, term)) + 2.0 * static_cast<double>(occurrences(cols, term));
  }
  return score;
}

// ---------------------------------------------------------------------------
// Join / union

namespace {

std::optional<UnionPlan> union_plan(const Dataset& query, const Dataset& candidate) {
  UnionPlan plan;
  for (const auto& q : query.columns()) {
    const Column* c = candidate.table.find(q.name());
    if (!c || c->dtype() != q.dtype()) return std::nullopt;
    plan.mapping.push_back({q.name(), c->name()});
  }
  return plan;
}

std::optional<JoinPlan> join_plan(const Dataset& query, const Dataset& candidate) {
  JoinPlan plan;
  const Column* qt = nullptr;
  const Column* ct = nullptr;
  for (const auto& c : query.columns()) {
    if (c.dtype() == DType::temporal) {
      qt = &c;
      break;
    }
  }
  for (const auto& c : candidate.columns()) {
    if (c.dtype() == DType::temporal) {
      ct = &c;
      break;
    }
  }
  if (qt && ct) {
    plan.temporal = true;
    plan.granularity = std::min(qt->granularity(), ct->granularity());
    plan.keys.push_back({qt->name(), ct->name()});
  }
  for (const auto& q : query.columns()) {
    if (q.dtype() == DType::temporal) continue;
    const Column* c = candidate.table.find(q.name());
    if (c && c->dtype() == q.dtype()) plan.keys.push_back({q.name(), c->name()});
  }
  if (plan.keys.empty()) return std::nullopt;

  std::set<std::string> taken;
  for (const auto& q : query.columns()) taken.insert(q.name());
  for (const auto& c : candidate.columns()) {
    const bool is_key = std::any_of(plan.keys.begin(), plan.keys.end(), [&](const KeyPair& k) { return k.candidate == c.name(); });
    if (is_key) continue;
    std::string out = c.name();
    while (taken.count(out)) out += "_aug";
    taken.insert(out);
    plan.carried.push_back({c.name(), out, c.dtype() == DType::numeric ? Aggregation::mean : Aggregation::mode});
  }
  return plan;
}

// Group key of row `r`, or nullopt when any key cell is missing.
std::optional<std::string> row_key(const std::vector<const Column*>& keys, const JoinPlan& plan, std::size_t r) {
  std::string k;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const Column& c = *keys[i];
    if (c.missing(r)) return std::nullopt;
    if (i == 0 && plan.temporal) {
      k += std::to_string(truncate(static_cast<Timestamp>(*c.numbers()[r]), plan.granularity));
    } else {
      k += c.cell_json(r).dump();
    }
    k += '\x1f';
  }
  return k;
}

std::vector<const Column*> key_columns(const Table& t, const JoinPlan& plan, bool query_side) {
  std::vector<const Column*> out;
  for (const auto& k : plan.keys) out.push_back(&t.at(query_side ? k.query : k.candidate));
  return out;
}

std::optional<double> mean_of(const Column& c, const std::vector<std::size_t>& rows) {
  double s = 0;
  std::size_t n = 0;
  for (auto r : rows) {
    if (c.numbers()[r]) {
      s += *c.numbers()[r];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

// Most frequent present value; ties go to the smallest.
template <class T>
std::optional<T> mode_of(const std::vector<std::optional<T>>& cells, const std::vector<std::size_t>& rows) {
  std::map<T, std::size_t> counts;
  for (auto r : rows) {
    if (cells[r]) ++counts[*cells[r]];
  }
  std::optional<T> best;
  std::size_t best_count = 0;
  for (const auto& [v, n] : counts) {
    if (n > best_count) {
      best = v;
      best_count = n;
    }
  }
  return best;
}

std::size_t overlap(const Dataset& query, const Dataset& candidate, const JoinPlan& plan) {
  const auto qk = key_columns(query.table, plan, true);
  const auto ck = key_columns(candidate.table, plan, false);
  std::set<std::string> cand;
  for (std::size_t r = 0; r < candidate.row_count(); ++r) {
    if (auto k = row_key(ck, plan, r)) cand.insert(*k);
  }
  std::set<std::string> hit;
  for (std::size_t r = 0; r < query.row_count(); ++r) {
    auto k = row_key(qk, plan, r);
    if (k && cand.count(*k)) hit.insert(*k);
  }
  return hit.size();
}

}  // namespace

Dataset join_datasets(const Dataset& query, const Dataset& candidate, const JoinPlan& plan) {
  const auto qk = key_columns(query.table, plan, true);
  const auto ck = key_columns(candidate.table, plan, false);
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < candidate.row_count(); ++r) {
    if (auto k = row_key(ck, plan, r)) groups[*k].push_back(r);
  }
  std::vector<const std::vector<std::size_t>*> match(query.row_count(), nullptr);
  for (std::size_t r = 0; r < query.row_count(); ++r) {
    if (auto k = row_key(qk, plan, r)) {
      auto it = groups.find(*k);
      if (it != groups.end()) match[r] = &it->second;
    }
  }

  std::vector<Column> cols = query.columns();
  for (const auto& carried : plan.carried) {
    const Column& src = candidate.table.at(carried.source);
    if (src.is_numeric_storage()) {
      std::vector<std::optional<double>> v(query.row_count());
      for (std::size_t r = 0; r < v.size(); ++r) {
        if (!match[r]) continue;
        v[r] = carried.aggregation == Aggregation::mean ? mean_of(src, *match[r]) : mode_of(src.numbers(), *match[r]);
      }
      cols.push_back(src.dtype() == DType::temporal ? Column::temporal(carried.output, std::move(v))
                                                    : Column::numeric(carried.output, std::move(v)));
    } else {
      std::vector<std::optional<std::string>> v(query.row_count());
      for (std::size_t r = 0; r < v.size(); ++r) {
        if (match[r]) v[r] = mode_of(src.strings(), *match[r]);
      }
      cols.push_back(src.dtype() == DType::text ? Column::text(carried.output, std::move(v))
                                                : Column::categorical(carried.output, std::move(v)));
    }
  }
  Dataset out;
  out.name = query.name + "+" + candidate.name;
  out.table = Table(std::move(cols), query.row_count());
  out.provenance.kind = Provenance::Kind::augmented;
  out.provenance.parents = {query.name, candidate.name};
  out.provenance.operation = to_json(AugmentOperation{plan});
  return out;
}

Dataset union_datasets(const Dataset& query, const Dataset& candidate, const UnionPlan& plan) {
  std::vector<Column> cols;
  for (const auto& m : plan.mapping) {
    const Column& q = query.table.at(m.query);
    const Column& c = candidate.table.at(m.candidate);
    if (q.is_numeric_storage()) {
      auto v = q.numbers();
      v.insert(v.end(), c.numbers().begin(), c.numbers().end());
      cols.push_back(q.dtype() == DType::temporal ? Column::temporal(q.name(), std::move(v))
                                                  : Column::numeric(q.name(), std::move(v)));
    } else {
      auto v = q.strings();
      v.insert(v.end(), c.strings().begin(), c.strings().end());
      cols.push_back(q.dtype() == DType::text ? Column::text(q.name(), std::move(v))
                                              : Column::categorical(q.name(), std::move(v)));
    }
  }
  Dataset out;
  out.name = query.name + "+" + candidate.name;
  out.table = Table(std::move(cols), query.row_count() + candidate.row_count());
  out.provenance.kind = Provenance::Kind::augmented;
  out.provenance.parents = {query.name, candidate.name};
  out.provenance.operation = to_json(AugmentOperation{plan});
  return out;
}

// ---------------------------------------------------------------------------
// Search and apply

std::vector<AugmentCandidate> search_augmentations(const Corpus& corpus, const Dataset& query, std::string_view keywords) {
  const bool filtered = !tokens(keywords).empty();
  const std::string query_fp = fingerprint(query);
  std::vector<AugmentCandidate> out;
  for (const auto& e : corpus.entries) {
    AugmentCandidate c;
    c.corpus_name = e.name;
    c.relevance = relevance_score(e, keywords);
    if (filtered && c.relevance <= 0) continue;
    if (auto u = union_plan(query, *e.dataset)) {
      c.operation = *u;
    } else if (auto j = join_plan(query, *e.dataset)) {
      c.key_overlap = overlap(query, *e.dataset, *j);
      if (c.key_overlap == 0) continue;
      c.operation = *j;
    } else {
      continue;
    }
    c.query_fingerprint = query_fp;
    c.corpus_fingerprint = e.fingerprint;
    c.id = "aug-" + fnv1a_hex(e.name + "\n" + to_json(c.operation).dump() + "\n" + query_fp);
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const AugmentCandidate& a, const AugmentCandidate& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    if (a.key_overlap != b.key_overlap) return a.key_overlap > b.key_overlap;
    return a.corpus_name < b.corpus_name;
  });
  return out;
}

Dataset apply_augmentation(const Dataset& query, const AugmentCandidate& candidate, const Corpus& corpus) {
  const CorpusEntry* e = corpus.find(candidate.corpus_name);
  const std::string query_fp = fingerprint(query);
  if (!e || e->fingerprint != candidate.corpus_fingerprint || query_fp != candidate.query_fingerprint) {
    throw Error(ErrorCode::StaleCandidate, "candidate " + candidate.id + " no longer matches its datasets; search again",
                Json{{"candidate", candidate.id},
                     {"query_changed", query_fp != candidate.query_fingerprint},
                     {"corpus_changed", !e || e->fingerprint != candidate.corpus_fingerprint}});
  }
  return std::visit(detail::Overloaded{[&](const JoinPlan& p) { return join_datasets(query, *e->dataset, p); },
                                       [&](const UnionPlan& p) { return union_datasets(query, *e->dataset, p); }},
                    candidate.operation);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Json pairs_json(const std::vector<KeyPair>& pairs) {
  Json a = Json::array();
  for (const auto& p : pairs) a.push_back(Json{{"query", p.query}, {"candidate", p.candidate}});
  return a;
}

std::vector<KeyPair> pairs_from_json(const Json& j) {
  std::vector<KeyPair> out;
  for (const auto& p : j) out.push_back({p.at("query").get<std::string>(), p.at("candidate").get<std::string>()});
  return out;
}

}  // namespace

Json to_json(const AugmentOperation& op) {
  return std::visit(
      detail::Overloaded{
          [](const JoinPlan& p) {
            Json carried = Json::array();
            for (const auto& c : p.carried) {
              carried.push_back(Json{{"column", c.source}, {"as", c.output}, {"aggregation", std::string(to_string(c.aggregation))}});
            }
            Json j{{"operation", "join"},
                   {"kind", p.temporal ? "temporal" : "exact"},
                   {"keys", pairs_json(p.keys)},
                   {"carried", carried}};
            if (p.temporal) j["granularity"] = std::string(to_string(p.granularity));
            return j;
          },
          [](const UnionPlan& p) { return Json{{"operation", "union"}, {"mapping", pairs_json(p.mapping)}}; }},
      op);
}

AugmentOperation augment_operation_from_json(const Json& j) {
  try {
    const std::string op = j.at("operation").get<std::string>();
    if (op == "union") return UnionPlan{pairs_from_json(j.at("mapping"))};
    if (op != "join") throw Error(ErrorCode::SchemaError, "unknown augmentation operation '" + op + "'");
    JoinPlan p;
    p.temporal = j.at("kind").get<std::string>() == "temporal";
    if (p.temporal) p.granularity = parse_granularity(j.at("granularity").get<std::string>());
    p.keys = pairs_from_json(j.at("keys"));
    for (const auto& c : j.at("carried")) {
      p.carried.push_back({c.at("column").get<std::string>(), c.at("as").get<std::string>(),
                           c.at("aggregation").get<std::string>() == "mean" ? Aggregation::mean : Aggregation::mode});
    }
    return p;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed augmentation plan: ") + e.what());
  }
}

Json to_json(const AugmentCandidate& c) {
  return Json{{"id", c.id},
              {"corpus", c.corpus_name},
              {"plan", to_json(c.operation)},
              {"relevance", c.relevance},
              {"key_overlap", c.key_overlap},
              {"query_fingerprint", c.query_fingerprint},
              {"corpus_fingerprint", c.corpus_fingerprint}};
}

AugmentCandidate augment_candidate_from_json(const Json& j) {
  try {
    AugmentCandidate c;
    c.id = j.at("id").get<std::string>();
    c.corpus_name = j.at("corpus").get<std::string>();
    c.operation = augment_operation_from_json(j.at("plan"));
    c.relevance = j.at("relevance").get<double>();
    c.key_overlap = j.at("key_overlap").get<std::size_t>();
    c.query_fingerprint = j.at("query_fingerprint").get<std::string>();
    c.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
    return c;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed augmentation candidate: ") + e.what());
  }
}

Json candidate_preview(const CorpusEntry& entry, std::size_t rows) {
  const Table& t = entry.dataset->table;
  Json out_rows = Json::array();
  for (std::size_t r = 0; r < std::min(rows, t.row_count()); ++r) {
    Json row = Json::array();
    for (const auto& c : t.columns()) row.push_back(c.cell_json(r));
    out_rows.push_back(row);
  }
  Json names = Json::array();
  for (const auto& c : t.columns()) names.push_back(c.name());
  return Json{{"entry", to_json(entry)}, {"columns", names}, {"rows", out_rows}, {"profiles", to_json(profile(*entry.dataset))}};
}

}  // namespace hilml
