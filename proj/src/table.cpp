#include "hilml/table.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

namespace hilml {

namespace {

constexpr Timestamp kSecondsPerDay = 86400;

Timestamp floor_div(Timestamp a, Timestamp b) {
  Timestamp q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool parse_uint(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::string_view to_string(DType dtype) {
  switch (dtype) {
    case DType::numeric: return "numeric";
    case DType::categorical: return "categorical";
    case DType::temporal: return "temporal";
    case DType::text: return "text";
  }
  return "numeric";
}

DType parse_dtype(std::string_view name) {
  if (name == "numeric") return DType::numeric;
  if (name == "categorical") return DType::categorical;
  if (name == "temporal") return DType::temporal;
  if (name == "text") return DType::text;
  throw Error(ErrorCode::SchemaError, "unknown dtype '" + std::string(name) + "'");
}

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::year: return "year";
    case Granularity::month: return "month";
    case Granularity::day: return "day";
    case Granularity::hour: return "hour";
    case Granularity::minute: return "minute";
    case Granularity::second: return "second";
  }
  return "second";
}

Granularity parse_granularity(std::string_view name) {
  if (name == "year") return Granularity::year;
  if (name == "month") return Granularity::month;
  if (name == "day") return Granularity::day;
  if (name == "hour") return Granularity::hour;
  if (name == "minute") return Granularity::minute;
  if (name == "second") return Granularity::second;
  throw Error(ErrorCode::SchemaError, "unknown granularity '" + std::string(name) + "'");
}

CivilTime to_civil(Timestamp ts) {
  using namespace std::chrono;
  const Timestamp days = floor_div(ts, kSecondsPerDay);
  const Timestamp secs = ts - days * kSecondsPerDay;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  CivilTime c;
  c.year = static_cast<int>(ymd.year());
  c.month = static_cast<unsigned>(ymd.month());
  c.day = static_cast<unsigned>(ymd.day());
  c.hour = static_cast<int>(secs / 3600);
  c.minute = static_cast<int>((secs % 3600) / 60);
  c.second = static_cast<int>(secs % 60);
  return c;
}

Timestamp from_civil(const CivilTime& c) {
  using namespace std::chrono;
  const year_month_day ymd{year{c.year}, month{c.month}, day{c.day}};
  const Timestamp days = sys_days{ymd}.time_since_epoch().count();
  return days * kSecondsPerDay + c.hour * 3600 + c.minute * 60 + c.second;
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  // Date part: YYYY-MM-DD, YYYY/MM/DD or YYYY-MM.
  if (text.size() < 7) return std::nullopt;
  const char sep = text[4];
  if (sep != '-' && sep != '/') return std::nullopt;
  CivilTime c;
  if (!parse_uint(text.substr(0, 4), c.year)) return std::nullopt;
  int month = 0;
  int day = 1;
  if (!parse_uint(text.substr(5, 2), month)) return std::nullopt;
  std::string_view rest;
  if (text.size() == 7) {
    if (sep != '-') return std::nullopt;
  } else {
    if (text.size() < 10 || text[7] != sep) return std::nullopt;
    if (!parse_uint(text.substr(8, 2), day)) return std::nullopt;
    rest = text.substr(10);
  }
  if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
  c.month = static_cast<unsigned>(month);
  c.day = static_cast<unsigned>(day);
  {
    using namespace std::chrono;
    if (!year_month_day{year{c.year}, std::chrono::month{c.month}, std::chrono::day{c.day}}.ok()) {
      return std::nullopt;
    }
  }
  if (!rest.empty()) {
    if (rest[0] != 'T' && rest[0] != ' ') return std::nullopt;
    rest.remove_prefix(1);
    if (rest.size() != 5 && rest.size() != 8) return std::nullopt;
    if (rest[2] != ':') return std::nullopt;
    if (!parse_uint(rest.substr(0, 2), c.hour) || !parse_uint(rest.substr(3, 2), c.minute)) {
      return std::nullopt;
    }
    if (rest.size() == 8) {
      if (rest[5] != ':' || !parse_uint(rest.substr(6, 2), c.second)) return std::nullopt;
    }
    if (c.hour > 23 || c.minute > 59 || c.second > 59) return std::nullopt;
  }
  return from_civil(c);
}

std::string format_timestamp(Timestamp ts, Granularity g) {
  const CivilTime c = to_civil(ts);
  char buf[32];
  switch (g) {
    case Granularity::year:
    case Granularity::month:
    case Granularity::day:
      // Year granularity still prints a full date so it re-parses as temporal.
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", c.year, c.month, c.day);
      break;
    case Granularity::hour:
    case Granularity::minute:
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d", c.year, c.month, c.day, c.hour,
                    c.minute);
      break;
    case Granularity::second:
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", c.year, c.month, c.day,
                    c.hour, c.minute, c.second);
      break;
  }
  return buf;
}

Granularity exact_granularity(Timestamp ts) {
  const CivilTime c = to_civil(ts);
  if (c.second != 0) return Granularity::second;
  if (c.minute != 0) return Granularity::minute;
  if (c.hour != 0) return Granularity::hour;
  if (c.day != 1) return Granularity::day;
  if (c.month != 1) return Granularity::month;
  return Granularity::year;
}

Timestamp truncate(Timestamp ts, Granularity g) {
  CivilTime c = to_civil(ts);
  switch (g) {
    case Granularity::year: c.month = 1; [[fallthrough]];
    case Granularity::month: c.day = 1; [[fallthrough]];
    case Granularity::day: c.hour = 0; [[fallthrough]];
    case Granularity::hour: c.minute = 0; [[fallthrough]];
    case Granularity::minute: c.second = 0; [[fallthrough]];
    case Granularity::second: break;
  }
  return from_civil(c);
}

int weekday(Timestamp ts) {
  using namespace std::chrono;
  const sys_days d{std::chrono::days{floor_div(ts, kSecondsPerDay)}};
  return static_cast<int>(std::chrono::weekday{d}.iso_encoding()) - 1;
}

Granularity detect_granularity(const std::vector<std::optional<double>>& values) {
  Granularity g = Granularity::year;
  for (const auto& v : values) {
    if (v) g = std::max(g, exact_granularity(static_cast<Timestamp>(*v)));
  }
  return g;
}

// ---------------------------------------------------------------------------

Column Column::numeric(std::string name, std::vector<std::optional<double>> values) {
  Column c;
  c.name_ = std::move(name);
  c.dtype_ = DType::numeric;
  for (const auto& v : values) {
    if (v && !std::isfinite(*v)) {
      throw Error(ErrorCode::InvalidDataset, "column '" + c.name_ + "' holds a non-finite number");
    }
  }
  c.numbers_ = std::move(values);
  return c;
}

Column Column::temporal(std::string name, std::vector<std::optional<double>> values,
                        std::optional<Granularity> granularity) {
  Column c;
  c.name_ = std::move(name);
  c.dtype_ = DType::temporal;
  for (auto& v : values) {
    if (v) v = std::floor(*v);
  }
  c.granularity_ = granularity ? *granularity : detect_granularity(values);
  c.numbers_ = std::move(values);
  return c;
}

Column Column::categorical(std::string name, std::vector<std::optional<std::string>> values) {
  Column c;
  c.name_ = std::move(name);
  c.dtype_ = DType::categorical;
  c.strings_ = std::move(values);
  return c;
}

Column Column::text(std::string name, std::vector<std::optional<std::string>> values) {
  Column c = categorical(std::move(name), std::move(values));
  c.dtype_ = DType::text;
  return c;
}

std::size_t Column::size() const {
  return is_numeric_storage() ? numbers_.size() : strings_.size();
}

bool Column::missing(std::size_t row) const {
  return is_numeric_storage() ? !numbers_.at(row).has_value() : !strings_.at(row).has_value();
}

std::size_t Column::missing_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) n += missing(i) ? 1 : 0;
  return n;
}

std::string Column::cell_text(std::size_t row) const {
  if (missing(row)) return {};
  switch (dtype_) {
    case DType::numeric: return format_number(*numbers_[row]);
    case DType::temporal:
      return format_timestamp(static_cast<Timestamp>(*numbers_[row]), granularity_);
    default: return *strings_[row];
  }
}

Json Column::cell_json(std::size_t row) const {
  if (missing(row)) return nullptr;
  switch (dtype_) {
    case DType::numeric: return *numbers_[row];
    case DType::temporal: return cell_text(row);
    default: return *strings_[row];
  }
}

Column Column::renamed(std::string name) const {
  Column c = *this;
  c.name_ = std::move(name);
  return c;
}

Column Column::take(const std::vector<std::size_t>& rows) const {
  Column c;
  c.name_ = name_;
  c.dtype_ = dtype_;
  c.granularity_ = granularity_;
  if (is_numeric_storage()) {
    c.numbers_.reserve(rows.size());
    for (auto r : rows) c.numbers_.push_back(numbers_.at(r));
  } else {
    c.strings_.reserve(rows.size());
    for (auto r : rows) c.strings_.push_back(strings_.at(r));
  }
  return c;
}

// ---------------------------------------------------------------------------

Table::Table(std::vector<Column> columns)
    : Table(std::move(columns), 0) {}

Table::Table(std::vector<Column> columns, std::size_t row_count)
    : columns_(std::move(columns)), row_count_(row_count) {
  if (!columns_.empty()) row_count_ = columns_.front().size();
  std::set<std::string> names;
  for (const auto& c : columns_) {
    if (c.size() != row_count_) {
      throw Error(ErrorCode::InvalidDataset,
                  "column '" + c.name() + "' has " + std::to_string(c.size()) + " values, expected " +
                      std::to_string(row_count_));
    }
    if (!names.insert(c.name()).second) {
      throw Error(ErrorCode::InvalidDataset, "duplicate column name '" + c.name() + "'");
    }
  }
}

const Column* Table::find(std::string_view name) const {
  for (const auto& c : columns_) {
    if (c.name() == name) return &c;
  }
  return nullptr;
}

const Column& Table::at(std::string_view name) const {
  if (const auto* c = find(name)) return *c;
  throw Error(ErrorCode::ColumnNotFound, "column '" + std::string(name) + "' not found",
              Json{{"column", std::string(name)}});
}

std::optional<std::size_t> Table::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name() == name) return i;
  }
  return std::nullopt;
}

Table Table::select(const std::vector<std::string>& names) const {
  std::vector<Column> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(at(n));
  return Table(std::move(out), row_count_);
}

Table Table::take(const std::vector<std::size_t>& rows) const {
  std::vector<Column> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.take(rows));
  return Table(std::move(out), rows.size());
}

// ---------------------------------------------------------------------------

std::string_view to_string(Provenance::Kind kind) {
  switch (kind) {
    case Provenance::Kind::uploaded: return "uploaded";
    case Provenance::Kind::corpus: return "corpus";
    case Provenance::Kind::prepared: return "prepared";
    case Provenance::Kind::augmented: return "augmented";
  }
  return "uploaded";
}

Json to_json(const Provenance& p) {
  return Json{{"kind", std::string(to_string(p.kind))},
              {"parents", p.parents},
              {"operation", p.operation}};
}

Provenance provenance_from_json(const Json& j) {
  Provenance p;
  const std::string kind = j.value("kind", "uploaded");
  if (kind == "uploaded") p.kind = Provenance::Kind::uploaded;
  else if (kind == "corpus") p.kind = Provenance::Kind::corpus;
  else if (kind == "prepared") p.kind = Provenance::Kind::prepared;
  else if (kind == "augmented") p.kind = Provenance::Kind::augmented;
  else throw Error(ErrorCode::SchemaError, "unknown provenance kind '" + kind + "'");
  if (j.contains("parents")) p.parents = j.at("parents").get<std::vector<std::string>>();
  if (j.contains("operation")) p.operation = j.at("operation");
  return p;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fingerprint(const Dataset& d) {
  std::string blob;
  for (const auto& c : d.columns()) {
    blob += c.name();
    blob += '\x1f';
    blob += to_string(c.dtype());
    blob += '\x1e';
    for (std::size_t r = 0; r < c.size(); ++r) {
      blob += c.missing(r) ? "\x01" : c.cell_text(r);
      blob += '\x1f';
    }
  }
  return fnv1a_hex(blob);
}

}  // namespace hilml
