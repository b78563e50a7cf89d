#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pdmr {

struct ColumnSpec {
  std::string name;
  std::string unit;  // "1" for dimensionless
};

/// Rectangular numeric table with '#'-prefixed "key: value" metadata.
///
///   # key: value
///   name[unit],name[unit]
///   1.23456789012e-05,...
class DataTable {
public:
  DataTable() = default;
  explicit DataTable(std::vector<ColumnSpec> columns);

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  const std::vector<std::pair<std::string, std::string>>& metadata() const { return meta_; }

  void add_row(std::vector<double> row);
  /// Replaces an existing key in place, otherwise appends.
  void set_meta(std::string key, std::string value);
  void set_meta(std::string key, double value);
  /// Empty string if absent.
  std::string meta(std::string_view key) const;
  bool has_meta(std::string_view key) const;

  /// Index of the column, or throws std::invalid_argument.
  std::size_t column_index(std::string_view name) const;
  bool has_column(std::string_view name) const;
  std::vector<double> column(std::string_view name) const;

  std::string to_text() const;
  static DataTable parse(std::string_view text);

  void write(const std::filesystem::path& path) const;
  static DataTable read(const std::filesystem::path& path);

private:
  std::vector<ColumnSpec> columns_;
  std::vector<std::vector<double>> rows_;
  std::vector<std::pair<std::string, std::string>> meta_;
};

/// 12 significant digits, the serialization used for every emitted number.
std::string format_number(double v);

}  // namespace pdmr
