#include "tabsynth/table.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "tabsynth/error.h"

namespace tabsynth {

std::optional<double> parse_number(std::string_view token) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return std::nullopt;
  double value = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw NumericError("cannot format number");
  return std::string(buf.data(), ptr);
}

std::string trim(std::string_view text) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return std::string(text);
}

Column::Column(std::string name, std::vector<Cell> cells)
    : name_(std::move(name)), cells_(std::move(cells)), numbers_(cells_.size()) {
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (!cells_[i]) {
      ++missing_;
      continue;
    }
    numbers_[i] = parse_number(*cells_[i]);
    if (!numbers_[i]) ++non_numeric_;
  }
}

Column Column::from_numbers(std::string name, std::span<const std::optional<double>> values) {
  std::vector<Cell> cells;
  cells.reserve(values.size());
  for (const auto& v : values) {
    if (v) cells.emplace_back(format_number(*v));
    else cells.emplace_back(std::nullopt);
  }
  return Column(std::move(name), std::move(cells));
}

Table::Table(std::vector<Column> columns) : columns_(std::move(columns)) {
  std::unordered_set<std::string> seen;
  for (const auto& c : columns_) {
    if (!seen.insert(c.name()).second) throw InputError("duplicate column name '" + c.name() + "'");
  }
  if (!columns_.empty()) {
    rows_ = columns_.front().size();
    for (const auto& c : columns_) {
      if (c.size() != rows_) throw InputError("column '" + c.name() + "' has a different length");
    }
  }
}

const Column& Table::column(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw InputError("unknown column '" + std::string(name) + "'");
  return columns_[*idx];
}

std::optional<std::size_t> Table::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name() == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> Table::names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.name());
  return out;
}

Table Table::select_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) {
    std::vector<Cell> cells;
    cells.reserve(rows.size());
    for (auto r : rows) cells.push_back(c.cells().at(r));
    out.emplace_back(c.name(), std::move(cells));
  }
  return Table(std::move(out));
}

namespace {

// RFC-4180 record splitter. Returns false at end of input.
bool next_record(std::string_view text, std::size_t& pos, char delim,
                 std::vector<std::string>& fields, std::vector<bool>& quoted) {
  fields.clear();
  quoted.clear();
  if (pos >= text.size()) return false;
  std::string field;
  bool in_quotes = false;
  bool was_quoted = false;
  while (pos < text.size()) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
          continue;
        }
        in_quotes = false;
        ++pos;
        continue;
      }
      field.push_back(c);
      ++pos;
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      was_quoted = true;
      ++pos;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      quoted.push_back(was_quoted);
      field.clear();
      was_quoted = false;
      ++pos;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      break;
    } else {
      field.push_back(c);
      ++pos;
    }
  }
  if (in_quotes) throw InputError("unterminated quoted field");
  fields.push_back(std::move(field));
  quoted.push_back(was_quoted);
  return true;
}

bool blank_record(const std::vector<std::string>& fields, const std::vector<bool>& quoted) {
  return fields.size() == 1 && !quoted[0] && trim(fields[0]).empty();
}

}  // namespace

Table parse_csv(std::string_view text, const CsvOptions& options) {
  std::size_t pos = 0;
  std::vector<std::string> fields;
  std::vector<bool> quoted;
  std::vector<std::string> header;

  if (options.header) {
    while (next_record(text, pos, options.delimiter, fields, quoted) && blank_record(fields, quoted)) {
    }
    if (fields.empty() || blank_record(fields, quoted)) throw InputError("missing header row");
    for (auto& f : fields) header.push_back(trim(f));
  }

  std::vector<std::vector<Cell>> cells(header.size());
  std::size_t record = 0;
  while (next_record(text, pos, options.delimiter, fields, quoted)) {
    if (blank_record(fields, quoted)) continue;
    ++record;
    if (header.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) header.push_back("col_" + std::to_string(i));
      cells.resize(header.size());
    }
    if (fields.size() != header.size()) {
      throw InputError("ragged row at record " + std::to_string(record) + ": " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      std::string token = trim(fields[i]);
      if (token.empty()) cells[i].emplace_back(std::nullopt);
      else cells[i].emplace_back(std::move(token));
    }
  }

  std::vector<Column> columns;
  columns.reserve(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) columns.emplace_back(header[i], std::move(cells[i]));
  return Table(std::move(columns));
}

Table load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), options);
}

namespace {

void write_field(std::ostream& out, std::string_view token, char delim) {
  const bool needs_quotes = token.find_first_of(std::string{delim, '"', '\n', '\r'}) != std::string_view::npos ||
                            (!token.empty() && (token.front() == ' ' || token.back() == ' '));
  if (!needs_quotes) {
    out << token;
    return;
  }
  out << '"';
  for (char c : token) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

void write_csv(const Table& table, std::ostream& out, char delimiter) {
  for (std::size_t c = 0; c < table.cols(); ++c) {
    if (c) out << delimiter;
    write_field(out, table.column(c).name(), delimiter);
  }
  out << '\n';
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (std::size_t c = 0; c < table.cols(); ++c) {
      if (c) out << delimiter;
      const auto& col = table.column(c);
      if (!col.is_missing(r)) write_field(out, col.token(r), delimiter);
      else if (table.cols() == 1) out << "\"\"";
    }
    out << '\n';
  }
}

std::string to_csv(const Table& table, char delimiter) {
  std::ostringstream out;
  write_csv(table, out, delimiter);
  return out.str();
}

void save_csv(const Table& table, const std::filesystem::path& path, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  write_csv(table, out, delimiter);
}

}  // namespace tabsynth
