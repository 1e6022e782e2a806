#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tabsynth {

// Parses a whole token as a finite double; nullopt otherwise.
std::optional<double> parse_number(std::string_view token);

// Shortest text that parses back to exactly `value`.
std::string format_number(double value);

std::string trim(std::string_view text);

using Cell = std::optional<std::string>;  // nullopt == missing

class Column {
 public:
  Column() = default;
  Column(std::string name, std::vector<Cell> cells);

  static Column from_numbers(std::string name, std::span<const std::optional<double>> values);

  const std::string& name() const { return name_; }
  std::size_t size() const { return cells_.size(); }
  const std::vector<Cell>& cells() const { return cells_; }

  bool is_missing(std::size_t row) const { return !cells_[row].has_value(); }
  const std::string& token(std::size_t row) const { return *cells_[row]; }
  std::optional<double> number(std::size_t row) const { return numbers_[row]; }

  std::size_t missing_count() const { return missing_; }
  // True when every non-missing token parses as a number.
  bool all_numeric() const { return non_numeric_ == 0; }

 private:
  std::string name_;
  std::vector<Cell> cells_;
  std::vector<std::optional<double>> numbers_;
  std::size_t missing_ = 0;
  std::size_t non_numeric_ = 0;
};

// Column-major table with immutable columns of equal length.
class Table {
 public:
  Table() = default;
  explicit Table(std::vector<Column> columns);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return columns_.size(); }
  bool empty() const { return columns_.empty() || rows_ == 0; }

  const Column& column(std::size_t index) const { return columns_.at(index); }
  const Column& column(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  const std::vector<Column>& columns() const { return columns_; }
  std::vector<std::string> names() const;

  Table select_rows(std::span<const std::size_t> rows) const;

 private:
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

struct CsvOptions {
  char delimiter = ',';
  bool header = true;
};

Table parse_csv(std::string_view text, const CsvOptions& options = {});
Table load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
void write_csv(const Table& table, std::ostream& out, char delimiter = ',');
std::string to_csv(const Table& table, char delimiter = ',');
void save_csv(const Table& table, const std::filesystem::path& path, char delimiter = ',');

}  // namespace tabsynth
