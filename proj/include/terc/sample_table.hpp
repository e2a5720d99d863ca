#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace terc {

enum class ColumnKind { discrete, real };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::discrete;
  std::vector<std::int64_t> symbols;  // discrete columns
  std::vector<double> values;         // real columns

  std::size_t size() const { return kind == ColumnKind::discrete ? symbols.size() : values.size(); }
  // Numeric view of either kind.
  double numeric(std::size_t row) const {
    return kind == ColumnKind::discrete ? static_cast<double>(symbols[row]) : values[row];
  }
};

// Columnar samples with a designated action column. Columns are append-only;
// once built, a table is only read. Discrete columns also carry dense codes
// 0..k-1 (in order of first appearance) used by the plug-in estimators.
class SampleTable {
 public:
  SampleTable() = default;

  std::size_t add_discrete(std::string name, std::vector<std::int64_t> symbols);
  std::size_t add_real(std::string name, std::vector<double> values);
  void set_action(std::string_view name);

  std::size_t rows() const { return rows_; }
  std::size_t column_count() const { return columns_.size(); }
  const Column& column(std::size_t index) const { return columns_.at(index); }
  const std::string& name(std::size_t index) const { return columns_.at(index).name; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws if absent

  bool has_action() const { return action_.has_value(); }
  std::size_t action_index() const;
  // All non-action columns in column order.
  std::vector<std::size_t> variable_indices() const;

  // Dense codes of a discrete column and its alphabet size.
  std::span<const std::uint32_t> codes(std::size_t index) const;
  std::uint32_t cardinality(std::size_t index) const;

  // Copy in which every real column is replaced by its uniform-bin index
  // over the observed range.
  SampleTable quantized(std::size_t bins = 32) const;
  // Row subset in the given order.
  SampleTable take_rows(std::span<const std::size_t> rows) const;
  // Column subset (action is kept if present in the list).
  SampleTable take_columns(std::span<const std::size_t> columns) const;

  // CSV with a header row. A column is discrete when every cell parses as an
  // integer. The column named `action` (if any) becomes the action column.
  static SampleTable read_csv(std::istream& in);
  static SampleTable read_csv(const std::filesystem::path& path);
  void write_csv(std::ostream& out) const;

 private:
  std::size_t add_column(Column column);

  std::size_t rows_ = 0;
  std::vector<Column> columns_;
  std::vector<std::vector<std::uint32_t>> codes_;
  std::vector<std::uint32_t> cardinality_;
  std::optional<std::size_t> action_;
};

// "%.17g" rendering; round-trips every finite double.
std::string format_double(double value);

}  // namespace terc
