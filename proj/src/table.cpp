#include "pdmr/table.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pdmr {

namespace {

bool valid_token(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c == ',' || c == '[' || c == ']' || c == '\n' || c == '\r' || c == '#') return false;
  }
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string at_line(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

DataTable::DataTable(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) throw std::invalid_argument("table: at least one column required");
  for (const auto& c : columns_) {
    if (!valid_token(c.name)) throw std::invalid_argument("table: invalid column name '" + c.name + "'");
    if (!valid_token(c.unit)) throw std::invalid_argument("table: column '" + c.name + "' needs a unit");
  }
}

void DataTable::add_row(std::vector<double> row) {
  if (row.size() != columns_.size()) {
    throw std::invalid_argument("table: row has " + std::to_string(row.size()) + " values, expected " +
                                std::to_string(columns_.size()));
  }
  rows_.push_back(std::move(row));
}

void DataTable::set_meta(std::string key, std::string value) {
  if (!valid_token(key) || key.find(':') != std::string::npos || trim(key) != key) {
    throw std::invalid_argument("table: invalid metadata key '" + key + "'");
  }
  if (value.find('\n') != std::string::npos || value.find('\r') != std::string::npos ||
      trim(value) != value) {
    throw std::invalid_argument("table: metadata value for '" + key + "' must be a single trimmed line");
  }
  for (auto& [k, v] : meta_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  meta_.emplace_back(std::move(key), std::move(value));
}

void DataTable::set_meta(std::string key, double value) { set_meta(std::move(key), format_number(value)); }

std::string DataTable::meta(std::string_view key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return v;
  return {};
}

bool DataTable::has_meta(std::string_view key) const {
  for (const auto& kv : meta_)
    if (kv.first == key) return true;
  return false;
}

bool DataTable::has_column(std::string_view name) const {
  for (const auto& c : columns_)
    if (c.name == name) return true;
  return false;
}

std::size_t DataTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return i;
  throw std::invalid_argument("table: no column named '" + std::string(name) + "'");
}

std::vector<double> DataTable::column(std::string_view name) const {
  const std::size_t k = column_index(name);
  std::vector<double> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) out.push_back(r[k]);
  return out;
}

std::string DataTable::to_text() const {
  std::string out;
  for (const auto& [k, v] : meta_) {
    out += "# ";
    out += k;
    out += ": ";
    out += v;
    out += '\n';
  }
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i) out += ',';
    out += columns_[i].name + "[" + columns_[i].unit + "]";
  }
  out += '\n';
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += format_number(r[i]);
    }
    out += '\n';
  }
  return out;
}

DataTable DataTable::parse(std::string_view text) {
  DataTable t;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    if (line.front() == '#') {
      if (have_header) throw std::invalid_argument("table: metadata after the header" + at_line(line_no));
      std::string_view body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) continue;  // free comment
      t.meta_.emplace_back(std::string(trim(body.substr(0, colon))), std::string(trim(body.substr(colon + 1))));
      continue;
    }

    if (!have_header) {
      std::vector<ColumnSpec> cols;
      std::size_t p = 0;
      while (p <= line.size()) {
        std::size_t q = line.find(',', p);
        if (q == std::string_view::npos) q = line.size();
        const std::string_view cell = trim(line.substr(p, q - p));
        const auto lb = cell.find('[');
        if (lb == std::string_view::npos || cell.back() != ']' || lb == 0) {
          throw std::invalid_argument("table: header cell '" + std::string(cell) + "' must be name[unit]" +
                                      at_line(line_no));
        }
        cols.push_back({std::string(cell.substr(0, lb)), std::string(cell.substr(lb + 1, cell.size() - lb - 2))});
        p = q + 1;
      }
      auto meta = std::move(t.meta_);
      try {
        t = DataTable(std::move(cols));
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(e.what() + at_line(line_no));
      }
      t.meta_ = std::move(meta);
      have_header = true;
      continue;
    }

    std::vector<double> row;
    std::size_t p = 0;
    while (p <= line.size()) {
      std::size_t q = line.find(',', p);
      if (q == std::string_view::npos) q = line.size();
      const std::string cell(trim(line.substr(p, q - p)));
      char* stop = nullptr;
      errno = 0;
      const double v = std::strtod(cell.c_str(), &stop);
      if (cell.empty() || stop != cell.c_str() + cell.size()) {
        throw std::invalid_argument("table: '" + cell + "' is not a number" + at_line(line_no));
      }
      row.push_back(v);
      p = q + 1;
    }
    if (row.size() != t.columns_.size()) {
      throw std::invalid_argument("table: expected " + std::to_string(t.columns_.size()) + " values, found " +
                                  std::to_string(row.size()) + at_line(line_no));
    }
    t.rows_.push_back(std::move(row));
  }
  if (!have_header) throw std::invalid_argument("table: missing column header");
  return t;
}

void DataTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot open '" + path.string() + "' for writing");
  const std::string text = to_text();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

DataTable DataTable::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace pdmr
