#include "hilml/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hilml {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool needs_quotes(std::string_view s) {
  if (s.empty()) return false;
  if (s.front() == ' ' || s.back() == ' ') return true;
  return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

void append_field(std::string& out, std::string_view s) {
  if (!needs_quotes(s)) {
    out += s;
    return;
  }
  out += '"';
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

using Cells = std::vector<std::optional<std::string>>;

std::vector<Cells> split_columns(const std::vector<std::vector<std::string>>& records) {
  const std::size_t ncols = records.front().size();
  std::vector<Cells> cols(ncols);
  for (std::size_t r = 1; r < records.size(); ++r) {
    for (std::size_t c = 0; c < ncols; ++c) {
      const std::string& v = records[r][c];
      if (v.empty()) cols[c].emplace_back(std::nullopt);
      else cols[c].emplace_back(v);
    }
  }
  return cols;
}

Column infer_column(const std::string& name, const Cells& cells, std::size_t rows) {
  std::size_t present = 0;
  std::size_t numeric_ok = 0;
  std::size_t temporal_ok = 0;
  std::set<std::string_view> distinct;
  for (const auto& c : cells) {
    if (!c) continue;
    ++present;
    if (parse_number(*c)) ++numeric_ok;
    else if (parse_timestamp(trim(*c))) ++temporal_ok;
    distinct.insert(*c);
  }
  const auto at_least_95 = [present](std::size_t k) { return 100 * k >= 95 * present; };
  if (present == 0 || at_least_95(numeric_ok)) {
    std::vector<std::optional<double>> v;
    v.reserve(cells.size());
    for (const auto& c : cells) v.push_back(c ? parse_number(*c) : std::nullopt);
    return Column::numeric(name, std::move(v));
  }
  if (at_least_95(temporal_ok)) {
    std::vector<std::optional<double>> v;
    v.reserve(cells.size());
    for (const auto& c : cells) {
      std::optional<double> cell;
      if (c) {
        if (auto ts = parse_timestamp(trim(*c))) cell = static_cast<double>(*ts);
      }
      v.push_back(cell);
    }
    return Column::temporal(name, std::move(v));
  }
  const double cutoff = std::max(20.0, 0.05 * static_cast<double>(rows));
  if (static_cast<double>(distinct.size()) <= cutoff) return Column::categorical(name, cells);
  return Column::text(name, cells);
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv_records(std::string_view src) {
  if (src.size() >= 3 && static_cast<unsigned char>(src[0]) == 0xEF &&
      static_cast<unsigned char>(src[1]) == 0xBB && static_cast<unsigned char>(src[2]) == 0xBF) {
    src.remove_prefix(3);
  }
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;

  std::vector<bool> blank;
  auto end_record = [&] {
    blank.push_back(record.empty() && field.empty() && !field_started);
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    records.push_back(std::move(record));
    record.clear();
  };

  while (i < src.size()) {
    const char c = src[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < src.size() && src[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        in_quotes = false;
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started || field.empty()) in_quotes = true;
        else field += c;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field += c;
        field_started = true;
    }
    ++i;
  }
  if (in_quotes) {
    throw Error(ErrorCode::ParseError, "unterminated quoted field",
                Json{{"row", records.empty() ? 0 : records.size() - 1}});
  }
  if (field_started || !field.empty() || !record.empty()) end_record();

  // Blank lines: trailing ones are dropped always; interior ones only when the
  // file has more than one column (for a single column they are missing cells).
  while (!records.empty() && blank.back()) {
    records.pop_back();
    blank.pop_back();
  }
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "CSV source is empty");
  const std::size_t width = records.front().size();
  if (width > 1) {
    std::vector<std::vector<std::string>> kept;
    for (std::size_t r = 0; r < records.size(); ++r) {
      if (!blank[r]) kept.push_back(std::move(records[r]));
    }
    records = std::move(kept);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width) {
      throw Error(ErrorCode::ParseError,
                  "row " + std::to_string(r - 1) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(width),
                  Json{{"row", r - 1}});
    }
  }
  return records;
}

Dataset ingest_csv(std::string_view source, std::string name) {
  const auto records = parse_csv_records(source);
  const auto cells = split_columns(records);
  const std::size_t rows = records.size() - 1;
  std::vector<Column> columns;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    columns.push_back(infer_column(records.front()[c], cells[c], rows));
  }
  Dataset d;
  d.name = std::move(name);
  d.table = Table(std::move(columns), rows);
  d.provenance.kind = Provenance::Kind::uploaded;
  return d;
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (c) out += ',';
    append_field(out, table.column(c).name());
  }
  out += '\n';
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    for (std::size_t c = 0; c < table.column_count(); ++c) {
      if (c) out += ',';
      append_field(out, table.column(c).cell_text(r));
    }
    // A bare empty line would read back as a blank line, not a missing cell.
    if (table.column_count() == 1 && table.column(0).missing(r)) out += "\"\"";
    out += '\n';
  }
  return out;
}

Json sidecar_json(const Dataset& d) {
  Json columns = Json::array();
  Json dtypes = Json::object();
  Json granularities = Json::object();
  for (const auto& c : d.columns()) {
    columns.push_back(c.name());
    dtypes[c.name()] = std::string(to_string(c.dtype()));
    if (c.dtype() == DType::temporal) granularities[c.name()] = std::string(to_string(c.granularity()));
  }
  return Json{{"name", d.name},
              {"columns", columns},
              {"dtypes", dtypes},
              {"granularities", granularities},
              {"row_count", d.row_count()},
              {"provenance", to_json(d.provenance)}};
}

Dataset dataset_from_csv_and_sidecar(std::string_view csv, const Json& sidecar) {
  const auto records = parse_csv_records(csv);
  const auto& header = records.front();
  const Json& dtypes = sidecar.at("dtypes");
  const Json granularities = sidecar.value("granularities", Json::object());
  if (sidecar.contains("columns")) {
    const auto declared = sidecar.at("columns").get<std::vector<std::string>>();
    if (declared != header) {
      throw Error(ErrorCode::SchemaError, "CSV header does not match the sidecar column list");
    }
  }
  const auto cells = split_columns(records);
  std::vector<Column> columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (!dtypes.contains(name)) {
      throw Error(ErrorCode::SchemaError, "sidecar has no dtype for column '" + name + "'");
    }
    const DType dtype = parse_dtype(dtypes.at(name).get<std::string>());
    auto mismatch = [&](std::size_t row) {
      return Error(ErrorCode::TypeMismatch,
                   "column '" + name + "' row " + std::to_string(row) + " is not " +
                       std::string(to_string(dtype)),
                   Json{{"column", name}, {"row", row}});
    };
    switch (dtype) {
      case DType::numeric: {
        std::vector<std::optional<double>> v;
        for (std::size_t r = 0; r < cells[c].size(); ++r) {
          if (!cells[c][r]) { v.emplace_back(); continue; }
          auto x = parse_number(*cells[c][r]);
          if (!x) throw mismatch(r);
          v.push_back(x);
        }
        columns.push_back(Column::numeric(name, std::move(v)));
        break;
      }
      case DType::temporal: {
        std::vector<std::optional<double>> v;
        for (std::size_t r = 0; r < cells[c].size(); ++r) {
          if (!cells[c][r]) { v.emplace_back(); continue; }
          auto ts = parse_timestamp(trim(*cells[c][r]));
          if (!ts) throw mismatch(r);
          v.emplace_back(static_cast<double>(*ts));
        }
        std::optional<Granularity> g;
        if (granularities.contains(name)) g = parse_granularity(granularities.at(name).get<std::string>());
        columns.push_back(Column::temporal(name, std::move(v), g));
        break;
      }
      case DType::categorical: columns.push_back(Column::categorical(name, cells[c])); break;
      case DType::text: columns.push_back(Column::text(name, cells[c])); break;
    }
  }
  Dataset d;
  d.name = sidecar.value("name", std::string{});
  d.table = Table(std::move(columns), records.size() - 1);
  if (sidecar.contains("provenance")) d.provenance = provenance_from_json(sidecar.at("provenance"));
  return d;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_dataset(const std::filesystem::path& dir, const std::string& stem, const Dataset& d) {
  write_file_atomic(dir / (stem + ".csv"), to_csv(d.table));
  write_file_atomic(dir / (stem + ".json"), sidecar_json(d).dump(2));
}

Dataset load_dataset(const std::filesystem::path& dir, const std::string& stem) {
  const Json sidecar = Json::parse(read_file(dir / (stem + ".json")));
  return dataset_from_csv_and_sidecar(read_file(dir / (stem + ".csv")), sidecar);
}

}  // namespace hilml
