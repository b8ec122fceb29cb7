#include <stdexcept>

#include "binary_io.hpp"
#include "rfx/forest.hpp"

namespace rfx {
namespace {

constexpr std::uint32_t kForestVersion = 1;

// Fixed-width on-disk node record; padding-free so the byte image is stable.
#pragma pack(push, 1)
struct NodeRecord {
  std::uint8_t status;
  std::uint8_t categorical;
  std::uint32_t split_var;
  double threshold;
  std::uint32_t category_mask;
  std::int32_t left;
  std::int32_t right;
  std::uint32_t node_class;
  double impurity_decrease;
  double weight;
  double tnodewt;
};
#pragma pack(pop)

}  // namespace

std::vector<std::uint8_t> serialize_forest(const Forest& forest) {
  io::ByteWriter w;
  w.magic("RFX1");
  w.put(kForestVersion);

  const auto& config = forest.config();
  w.put<std::uint64_t>(config.ntree);
  w.put<std::uint64_t>(config.mtry);
  w.put<std::uint64_t>(config.iseed);
  w.put<std::uint64_t>(config.min_node_size);
  w.put<std::uint64_t>(config.max_nodes);
  w.put<std::uint8_t>(config.casewise ? 1 : 0);

  w.put<std::uint64_t>(forest.n());
  w.put<std::uint64_t>(forest.class_count());
  w.put<std::uint64_t>(forest.p());
  for (const auto& column : forest.columns()) {
    w.put<std::uint8_t>(column.is_categorical() ? 1 : 0);
    w.put<std::uint64_t>(column.levels.size());
    for (const auto& level : column.levels) w.put_string(level);
  }

  w.put<std::uint64_t>(forest.tree_count());
  for (const auto& tree : forest.trees()) {
    std::vector<NodeRecord> records;
    records.reserve(tree.node_count());
    for (const auto& node : tree.nodes()) {
      records.push_back({static_cast<std::uint8_t>(node.status), static_cast<std::uint8_t>(node.categorical),
                         node.split_var, node.threshold, node.category_mask, node.left, node.right,
                         node.node_class, node.impurity_decrease, node.weight, node.tnodewt});
    }
    w.put_array<NodeRecord>(records);
    w.put_array<std::uint32_t>(tree.class_populations());
  }
  w.put_array<std::uint32_t>(forest.inbag());
  w.put_array<double>(forest.oob_votes());
  return w.take();
}

Forest deserialize_forest(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("RFX1");
  if (const auto version = r.get<std::uint32_t>(); version != kForestVersion) {
    throw FormatError("unsupported forest version " + std::to_string(version));
  }

  TrainConfig config;
  config.ntree = r.get<std::uint64_t>();
  config.mtry = r.get<std::uint64_t>();
  config.iseed = r.get<std::uint64_t>();
  config.min_node_size = r.get<std::uint64_t>();
  config.max_nodes = r.get<std::uint64_t>();
  config.casewise = r.get<std::uint8_t>() != 0;

  const auto n = r.get<std::uint64_t>();
  const auto classes = r.get<std::uint64_t>();
  const auto p = r.get<std::uint64_t>();
  std::vector<ColumnKind> columns;
  for (std::uint64_t j = 0; j < p; ++j) {
    ColumnKind kind;
    kind.type = r.get<std::uint8_t>() != 0 ? ColumnKind::Type::kCategorical : ColumnKind::Type::kNumeric;
    const auto levels = r.get<std::uint64_t>();
    if (levels > kMaxCategoryLevels) throw FormatError("categorical column with too many levels");
    for (std::uint64_t k = 0; k < levels; ++k) kind.levels.push_back(r.get_string());
    columns.push_back(std::move(kind));
  }

  const auto tree_count = r.get<std::uint64_t>();
  std::vector<Tree> trees;
  for (std::uint64_t b = 0; b < tree_count; ++b) {
    const auto records = r.get_array<NodeRecord>();
    auto populations = r.get_array<std::uint32_t>();
    std::vector<TreeNode> nodes;
    nodes.reserve(records.size());
    for (const auto& rec : records) {
      TreeNode node;
      node.status = rec.status != 0 ? NodeStatus::kInternal : NodeStatus::kTerminal;
      node.categorical = rec.categorical != 0;
      node.split_var = rec.split_var;
      node.threshold = rec.threshold;
      node.category_mask = rec.category_mask;
      node.left = rec.left;
      node.right = rec.right;
      node.node_class = rec.node_class;
      node.impurity_decrease = rec.impurity_decrease;
      node.weight = rec.weight;
      node.tnodewt = rec.tnodewt;
      const auto count = static_cast<std::int64_t>(records.size());
      if (!node.is_terminal() && (node.left <= 0 || node.right <= 0 || node.left >= count ||
                                  node.right >= count || node.split_var >= p)) {
        throw FormatError("corrupt node record in tree " + std::to_string(b));
      }
      nodes.push_back(node);
    }
    try {
      trees.emplace_back(std::move(nodes), std::move(populations), classes);
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
  }
  auto inbag = r.get_array<std::uint32_t>();
  auto votes = r.get_array<double>();
  if (!r.at_end()) throw FormatError("trailing bytes after forest payload");
  if (inbag.size() != n * tree_count) throw FormatError("in-bag table does not match n x ntree");
  try {
    return Forest(config, std::move(columns), classes, std::move(trees), std::move(inbag), std::move(votes));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  io::write_file(path, serialize_forest(forest));
}

Forest load_forest(const std::filesystem::path& path) { return deserialize_forest(io::read_file(path)); }

}  // namespace rfx
