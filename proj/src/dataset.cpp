#include "rfx/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "rfx/error.hpp"

namespace rfx {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && (s[begin] == ' ' || s[begin] == '\t')) ++begin;
  while (end > begin && (s[end - 1] == ' ' || s[end - 1] == '\t' || s[end - 1] == '\r')) --end;
  return std::string(s.substr(begin, end - begin));
}

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

// First-appearance coder for string tokens. A coder built from a fixed level
// list rejects tokens outside it.
class LevelCoder {
 public:
  LevelCoder() = default;
  explicit LevelCoder(const std::vector<std::string>& fixed) {
    for (const auto& name : fixed) code(name);
    frozen_ = true;
  }

  std::optional<std::uint32_t> code(const std::string& token) {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    if (frozen_) return std::nullopt;
    const auto next = static_cast<std::uint32_t>(names_.size());
    index_.emplace(token, next);
    names_.push_back(token);
    return next;
  }

  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::string> names_;
  bool frozen_ = false;
};

}  // namespace

Dataset::Dataset(std::vector<std::string> feature_names, std::vector<ColumnKind> columns,
                 std::vector<double> values, std::vector<std::uint32_t> labels,
                 std::vector<std::string> class_names)
    : feature_names_(std::move(feature_names)),
      columns_(std::move(columns)),
      values_(std::move(values)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)) {
  if (feature_names_.size() != columns_.size()) throw DataError("feature name count != column count");
  if (labels_.size() < 2) throw DataError("dataset needs at least 2 samples");
  if (class_names_.size() < 2) throw DataError("label column has a single class");
  if (values_.size() != labels_.size() * columns_.size()) throw DataError("value matrix has wrong size");
  for (auto label : labels_) {
    if (label >= class_names_.size()) throw DataError("label code out of range");
  }
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const auto& kind = columns_[j];
    if (!kind.is_categorical()) continue;
    const std::size_t k = kind.level_count();
    if (k < 2) throw DataError("categorical column '" + feature_names_[j] + "' needs at least 2 levels");
    if (k > kMaxCategoryLevels) {
      throw DataError("categorical column '" + feature_names_[j] + "' has " + std::to_string(k) +
                      " levels; at most 32 are supported");
    }
    for (double v : column(j)) {
      if (v < 0 || v >= static_cast<double>(k) || v != static_cast<double>(static_cast<std::uint32_t>(v))) {
        throw DataError("categorical code out of range in column '" + feature_names_[j] + "'");
      }
    }
  }
}

Schema parse_schema(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("schema is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("schema must be a JSON array");
  Schema schema;
  for (const auto& entry : doc) {
    if (!entry.contains("column") || !entry.contains("kind")) {
      throw DataError("schema entries need 'column' and 'kind'");
    }
    ColumnSpec spec;
    spec.column = entry.at("column").get<std::string>();
    const auto kind = entry.at("kind").get<std::string>();
    if (kind == "numeric") {
      spec.type = ColumnKind::Type::kNumeric;
    } else if (kind == "categorical") {
      spec.type = ColumnKind::Type::kCategorical;
      if (entry.contains("levels")) spec.levels = entry.at("levels").get<std::vector<std::string>>();
    } else if (kind == "label") {
      continue;  // the label column is named separately
    } else {
      throw DataError("unknown column kind '" + kind + "' for column '" + spec.column + "'");
    }
    schema.push_back(std::move(spec));
  }
  return schema;
}

Schema load_schema(const std::filesystem::path& path) { return parse_schema(read_file(path)); }

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty()) throw DataError(path.string() + ": empty file");
  return split_record(lines.front());
}

Schema numeric_schema_for(const std::filesystem::path& path, const std::string& label_column) {
  Schema schema;
  for (const auto& name : read_csv_header(path)) {
    if (name != label_column) schema.push_back({name, ColumnKind::Type::kNumeric, std::nullopt});
  }
  return schema;
}

Dataset parse_csv(const std::string& text, const Schema& schema, const std::string& label_column) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("CSV has no header row");
  const auto header = split_record(lines.front());

  std::map<std::string, std::size_t> header_index;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!header_index.emplace(header[c], c).second) throw DataError("duplicate column '" + header[c] + "'");
  }
  const auto label_it = header_index.find(label_column);
  if (label_it == header_index.end()) throw DataError("label column '" + label_column + "' not in header");

  std::map<std::string, const ColumnSpec*> by_name;
  for (const auto& spec : schema) {
    if (spec.column == label_column) continue;
    if (!header_index.contains(spec.column)) throw DataError("schema names unknown column '" + spec.column + "'");
    by_name[spec.column] = &spec;
  }

  // Features keep file order.
  std::vector<std::size_t> feature_cols;
  std::vector<const ColumnSpec*> feature_specs;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == label_it->second) continue;
    const auto it = by_name.find(header[c]);
    if (it == by_name.end()) throw DataError("schema does not cover column '" + header[c] + "'");
    feature_cols.push_back(c);
    feature_specs.push_back(it->second);
  }

  const std::size_t n = lines.size() - 1;
  const std::size_t p = feature_cols.size();
  std::vector<double> values(n * p);
  std::vector<std::uint32_t> labels(n);
  std::vector<LevelCoder> coders(p);
  for (std::size_t f = 0; f < p; ++f) {
    if (feature_specs[f]->levels) {
      coders[f] = LevelCoder(*feature_specs[f]->levels);
    }
  }
  LevelCoder label_coder;

  for (std::size_t r = 0; r < n; ++r) {
    const auto fields = split_record(lines[r + 1]);
    const std::string where = "row " + std::to_string(r + 1);
    if (fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    const auto& label_token = fields[label_it->second];
    if (label_token.empty()) throw DataError(where + ", column '" + label_column + "': missing value");
    labels[r] = *label_coder.code(label_token);

    for (std::size_t f = 0; f < p; ++f) {
      const auto& token = fields[feature_cols[f]];
      const auto& name = header[feature_cols[f]];
      if (token.empty()) throw DataError(where + ", column '" + name + "': missing value");
      double value = 0.0;
      if (feature_specs[f]->type == ColumnKind::Type::kNumeric) {
        const auto* end = token.data() + token.size();
        const auto [ptr, ec] = std::from_chars(token.data(), end, value);
        if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
          throw DataError(where + ", column '" + name + "': non-numeric token '" + token + "'");
        }
      } else {
        const auto code = coders[f].code(token);
        if (!code) throw DataError(where + ", column '" + name + "': undeclared level '" + token + "'");
        value = static_cast<double>(*code);
      }
      values[f * n + r] = value;
    }
  }

  std::vector<std::string> names;
  std::vector<ColumnKind> kinds;
  for (std::size_t f = 0; f < p; ++f) {
    names.push_back(header[feature_cols[f]]);
    if (feature_specs[f]->type == ColumnKind::Type::kNumeric) {
      kinds.push_back(ColumnKind::numeric());
    } else {
      kinds.push_back(ColumnKind::categorical(coders[f].names()));
    }
  }
  if (label_coder.names().size() < 2) throw DataError("label column '" + label_column + "' has a single class");
  return Dataset(std::move(names), std::move(kinds), std::move(values), std::move(labels), label_coder.names());
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema, const std::string& label_column) {
  return parse_csv(read_file(path), schema, label_column);
}

}  // namespace rfx
