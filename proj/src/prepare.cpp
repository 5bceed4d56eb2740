#include "hilml/prepare.hpp"

#include "hilml/detail/overloaded.hpp"

namespace hilml {

namespace {

Table exclude(const Table& t, const ExcludeColumn& a) {
  t.at(a.column);
  std::vector<Column> cols;
  for (const auto& c : t.columns()) {
    if (c.name() != a.column) cols.push_back(c);
  }
  return Table(std::move(cols), t.row_count());
}

Table fill(const Table& t, const FillMissing& a) {
  const Column& src = t.at(a.column);
  auto mismatch = [&](const char* want) {
    return Error(ErrorCode::TypeMismatch,
                 "fill_missing constant for '" + a.column + "' must be " + want,
                 Json{{"column", a.column}});
  };
  Column filled = src;
  switch (src.dtype()) {
    case DType::numeric: {
      if (!a.constant.is_number()) throw mismatch("a number");
      auto v = src.numbers();
      for (auto& x : v) if (!x) x = a.constant.get<double>();
      filled = Column::numeric(src.name(), std::move(v));
      break;
    }
    case DType::temporal: {
      if (!a.constant.is_string()) throw mismatch("a timestamp string");
      auto ts = parse_timestamp(a.constant.get<std::string>());
      if (!ts) throw mismatch("a timestamp string");
      auto v = src.numbers();
      for (auto& x : v) if (!x) x = static_cast<double>(*ts);
      filled = Column::temporal(src.name(), std::move(v));
      break;
    }
    case DType::categorical:
    case DType::text: {
      if (!a.constant.is_string() || a.constant.get<std::string>().empty()) {
        throw mismatch("a nonempty string");
      }
      auto v = src.strings();
      for (auto& x : v) if (!x) x = a.constant.get<std::string>();
      filled = src.dtype() == DType::text ? Column::text(src.name(), std::move(v))
                                          : Column::categorical(src.name(), std::move(v));
      break;
    }
  }
  std::vector<Column> cols = t.columns();
  cols[*t.index_of(a.column)] = std::move(filled);
  return Table(std::move(cols), t.row_count());
}

Table drop_outside(const Table& t, const DropRowsOutside& a) {
  const Column& c = t.at(a.column);
  if (!c.is_numeric_storage()) {
    throw Error(ErrorCode::TypeMismatch, "drop_rows_outside needs a numeric column, '" + a.column +
                                             "' is " + std::string(to_string(c.dtype())),
                Json{{"column", a.column}});
  }
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < c.size(); ++r) {
    const auto& v = c.numbers()[r];
    if (!v || (*v >= a.low && *v <= a.high)) keep.push_back(r);
  }
  return t.take(keep);
}

}  // namespace

Dataset prepare(const Dataset& input, const std::vector<PrepAction>& actions) {
  Table t = input.table;
  Json log = Json::array();
  for (const auto& action : actions) {
    t = std::visit(detail::Overloaded{[&](const ExcludeColumn& a) { return exclude(t, a); },
                              [&](const FillMissing& a) { return fill(t, a); },
                              [&](const DropRowsOutside& a) { return drop_outside(t, a); }},
                   action);
    log.push_back(to_json(action));
  }
  Dataset out;
  out.name = input.name;
  out.table = std::move(t);
  out.provenance.kind = Provenance::Kind::prepared;
  out.provenance.parents = {input.name};
  out.provenance.operation = Json{{"prepare", log}};
  return out;
}

Json to_json(const PrepAction& action) {
  return std::visit(
      detail::Overloaded{
          [](const ExcludeColumn& a) { return Json{{"action", "exclude_column"}, {"column", a.column}}; },
          [](const FillMissing& a) {
            return Json{{"action", "fill_missing"}, {"column", a.column}, {"constant", a.constant}};
          },
          [](const DropRowsOutside& a) {
            return Json{{"action", "drop_rows_outside"}, {"column", a.column}, {"low", a.low}, {"high", a.high}};
          }},
      action);
}

PrepAction prep_action_from_json(const Json& j) {
  try {
    const std::string kind = j.at("action").get<std::string>();
    const std::string column = j.at("column").get<std::string>();
    if (kind == "exclude_column") return ExcludeColumn{column};
    if (kind == "fill_missing") return FillMissing{column, j.at("constant")};
    if (kind == "drop_rows_outside") {
      return DropRowsOutside{column, j.at("low").get<double>(), j.at("high").get<double>()};
    }
    throw Error(ErrorCode::SchemaError, "unknown prep action '" + kind + "'");
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed prep action: ") + e.what());
  }
}

}  // namespace hilml
