#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rfx {

/// Largest categorical cardinality accepted; masks live in one 32-bit word.
inline constexpr std::size_t kMaxCategoryLevels = 32;

struct ColumnKind {
  enum class Type : std::uint8_t { kNumeric, kCategorical };

  Type type = Type::kNumeric;
  std::vector<std::string> levels;  // categorical only; index == level code

  static ColumnKind numeric() { return {}; }
  static ColumnKind categorical(std::vector<std::string> level_names) {
    return {Type::kCategorical, std::move(level_names)};
  }

  bool is_categorical() const noexcept { return type == Type::kCategorical; }
  std::size_t level_count() const noexcept { return levels.size(); }

  bool operator==(const ColumnKind&) const = default;
};

/// One schema entry. `levels` is optional for categorical columns: when given
/// it fixes the codes, otherwise codes follow first appearance in the file.
struct ColumnSpec {
  std::string column;
  ColumnKind::Type type = ColumnKind::Type::kNumeric;
  std::optional<std::vector<std::string>> levels;
};

using Schema = std::vector<ColumnSpec>;

/// Parses the schema JSON: an array of {"column", "kind", "levels"?}.
Schema load_schema(const std::filesystem::path& path);
Schema parse_schema(const std::string& json_text);

/// Immutable column-major training matrix with dense class codes.
class Dataset {
 public:
  Dataset(std::vector<std::string> feature_names, std::vector<ColumnKind> columns,
          std::vector<double> values, std::vector<std::uint32_t> labels,
          std::vector<std::string> class_names);

  std::size_t n() const noexcept { return labels_.size(); }
  std::size_t p() const noexcept { return columns_.size(); }
  std::size_t class_count() const noexcept { return class_names_.size(); }

  double value(std::size_t sample, std::size_t feature) const noexcept {
    return values_[feature * n() + sample];
  }
  std::span<const double> column(std::size_t feature) const noexcept {
    return {values_.data() + feature * n(), n()};
  }
  std::uint32_t label(std::size_t sample) const noexcept { return labels_[sample]; }

  const std::vector<ColumnKind>& columns() const noexcept { return columns_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<std::string> feature_names_;
  std::vector<ColumnKind> columns_;
  std::vector<double> values_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::string> class_names_;
};

/// Reads a header-first CSV. Every non-label column must appear in the
/// schema; the label column may be omitted from it. Labels and categorical
/// levels are coded 0..K-1 in order of first appearance.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema,
                 const std::string& label_column);
Dataset parse_csv(const std::string& text, const Schema& schema, const std::string& label_column);

/// All-numeric schema for every header column except the label.
Schema numeric_schema_for(const std::filesystem::path& path, const std::string& label_column);

/// Header names of a CSV file.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

}  // namespace rfx
