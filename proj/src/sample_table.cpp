#include "terc/sample_table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace terc {

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::size_t SampleTable::add_column(Column column) {
  if (column.name.empty()) {
    throw std::invalid_argument("column name must be non-empty");
  }
  if (find(column.name)) {
    throw std::invalid_argument("duplicate column name: " + column.name);
  }
  if (column.size() == 0) {
    throw std::invalid_argument("column " + column.name + " is empty");
  }
  if (!columns_.empty() && column.size() != rows_) {
    throw std::invalid_argument("column " + column.name + " has " + std::to_string(column.size()) +
                                " rows, expected " + std::to_string(rows_));
  }
  rows_ = column.size();

  std::vector<std::uint32_t> codes;
  std::uint32_t card = 0;
  if (column.kind == ColumnKind::discrete) {
    codes.resize(rows_);
    std::unordered_map<std::int64_t, std::uint32_t> seen;
    for (std::size_t r = 0; r < rows_; ++r) {
      auto [it, inserted] = seen.try_emplace(column.symbols[r], card);
      if (inserted) {
        ++card;
      }
      codes[r] = it->second;
    }
  } else {
    for (double v : column.values) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("column " + column.name + " contains a non-finite value");
      }
    }
  }
  columns_.push_back(std::move(column));
  codes_.push_back(std::move(codes));
  cardinality_.push_back(card);
  return columns_.size() - 1;
}

std::size_t SampleTable::add_discrete(std::string name, std::vector<std::int64_t> symbols) {
  Column c;
  c.name = std::move(name);
  c.kind = ColumnKind::discrete;
  c.symbols = std::move(symbols);
  return add_column(std::move(c));
}

std::size_t SampleTable::add_real(std::string name, std::vector<double> values) {
  Column c;
  c.name = std::move(name);
  c.kind = ColumnKind::real;
  c.values = std::move(values);
  return add_column(std::move(c));
}

void SampleTable::set_action(std::string_view name) { action_ = index_of(name); }

std::optional<std::size_t> SampleTable::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) {
      return i;
    }
  }
  return std::nullopt;
}

std::size_t SampleTable::index_of(std::string_view name) const {
  if (auto i = find(name)) {
    return *i;
  }
  throw std::invalid_argument("no column named " + std::string(name));
}

std::size_t SampleTable::action_index() const {
  if (!action_) {
    throw std::invalid_argument("table has no action column");
  }
  return *action_;
}

std::vector<std::size_t> SampleTable::variable_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (!action_ || i != *action_) {
      out.push_back(i);
    }
  }
  return out;
}

std::span<const std::uint32_t> SampleTable::codes(std::size_t index) const {
  if (columns_.at(index).kind != ColumnKind::discrete) {
    throw std::invalid_argument("column " + columns_[index].name +
                                " is real-valued; quantize the table before plug-in estimation");
  }
  return codes_[index];
}

std::uint32_t SampleTable::cardinality(std::size_t index) const {
  codes(index);
  return cardinality_[index];
}

SampleTable SampleTable::quantized(std::size_t bins) const {
  if (bins == 0) {
    throw std::invalid_argument("bin count must be positive");
  }
  SampleTable out;
  for (const Column& c : columns_) {
    if (c.kind == ColumnKind::discrete) {
      out.add_discrete(c.name, c.symbols);
      continue;
    }
    const auto [lo, hi] = std::minmax_element(c.values.begin(), c.values.end());
    const double width = (*hi - *lo) / static_cast<double>(bins);
    std::vector<std::int64_t> s(c.values.size(), 0);
    if (width > 0.0) {
      for (std::size_t r = 0; r < s.size(); ++r) {
        const auto b = static_cast<std::int64_t>((c.values[r] - *lo) / width);
        s[r] = std::min<std::int64_t>(b, static_cast<std::int64_t>(bins) - 1);
      }
    }
    out.add_discrete(c.name, std::move(s));
  }
  if (action_) {
    out.action_ = action_;
  }
  return out;
}

SampleTable SampleTable::take_rows(std::span<const std::size_t> rows) const {
  SampleTable out;
  for (const Column& c : columns_) {
    if (c.kind == ColumnKind::discrete) {
      std::vector<std::int64_t> s(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) s[i] = c.symbols.at(rows[i]);
      out.add_discrete(c.name, std::move(s));
    } else {
      std::vector<double> v(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) v[i] = c.values.at(rows[i]);
      out.add_real(c.name, std::move(v));
    }
  }
  out.action_ = action_;
  return out;
}

SampleTable SampleTable::take_columns(std::span<const std::size_t> columns) const {
  SampleTable out;
  for (std::size_t idx : columns) {
    const Column& c = columns_.at(idx);
    const std::size_t j = c.kind == ColumnKind::discrete ? out.add_discrete(c.name, c.symbols)
                                                         : out.add_real(c.name, c.values);
    if (action_ && idx == *action_) {
      out.action_ = j;
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    cells.emplace_back();
  }
  return cells;
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

double parse_real(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("line " + std::to_string(line) + ": cannot parse '" + s + "'");
  }
}

}  // namespace

SampleTable SampleTable::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("CSV input is empty");
  }
  const std::vector<std::string> header = split_csv_line(line);
  std::vector<std::vector<std::string>> cells(header.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto row = split_csv_line(line);
    if (row.size() != header.size()) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " cells, found " +
                                  std::to_string(row.size()));
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c].empty()) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": missing value");
      }
      cells[c].push_back(row[c]);
    }
  }
  SampleTable table;
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::vector<std::int64_t> ints(cells[c].size());
    bool all_int = true;
    for (std::size_t r = 0; r < cells[c].size() && all_int; ++r) {
      all_int = parse_int(cells[c][r], ints[r]);
    }
    if (all_int) {
      table.add_discrete(header[c], std::move(ints));
    } else {
      std::vector<double> reals(cells[c].size());
      for (std::size_t r = 0; r < reals.size(); ++r) reals[r] = parse_real(cells[c][r], r + 2);
      table.add_real(header[c], std::move(reals));
    }
  }
  if (table.find("action")) {
    table.set_action("action");
  }
  return table;
}

SampleTable SampleTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open " + path.string());
  }
  return read_csv(in);
}

void SampleTable::write_csv(std::ostream& out) const {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    out << (c ? "," : "") << columns_[c].name;
  }
  out << '\n';
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (c) out << ',';
      const Column& col = columns_[c];
      if (col.kind == ColumnKind::discrete) {
        out << col.symbols[r];
      } else {
        out << format_double(col.values[r]);
      }
    }
    out << '\n';
  }
}

}  // namespace terc
