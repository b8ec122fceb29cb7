#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rfx/dataset.hpp"

namespace rfx {

class Rng;

struct TrainConfig {
  std::size_t ntree = 500;
  std::size_t mtry = 0;           // 0 => floor(sqrt(p))
  std::uint64_t iseed = 1;        // tree b uses stream iseed + b
  std::size_t min_node_size = 1;  // nodes with this many distinct in-bag samples or fewer stay terminal
  std::size_t max_nodes = 0;      // 0 => 2n + 1
  bool casewise = false;

  std::size_t resolved_mtry(std::size_t p) const;
  std::size_t resolved_max_nodes(std::size_t n) const;
  /// Throws ConfigError on ntree == 0, mtry > p, min_node_size == 0.
  void validate(std::size_t n, std::size_t p) const;

  bool operator==(const TrainConfig&) const = default;
};

enum class NodeStatus : std::uint8_t { kTerminal = 0, kInternal = 1 };

struct TreeNode {
  NodeStatus status = NodeStatus::kTerminal;
  bool categorical = false;
  std::uint32_t split_var = 0;
  double threshold = 0.0;            // numeric split: left iff x <= threshold
  std::uint32_t category_mask = 0;   // categorical split: left iff bit(level) set
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t node_class = 0;      // majority in-bag class, ties to lowest code
  double impurity_decrease = 0.0;    // Gini decrease of this node's split
  double weight = 0.0;               // in-bag multiplicity summed over the node
  double tnodewt = 0.0;              // terminal: mean in-bag multiplicity per distinct sample

  bool is_terminal() const noexcept { return status == NodeStatus::kTerminal; }
  bool operator==(const TreeNode&) const = default;
};

/// Append-order binary tree; node 0 is the root and children follow parents.
class Tree {
 public:
  Tree() = default;
  Tree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> class_populations,
       std::size_t class_count);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaf_count_; }
  std::size_t class_count() const noexcept { return class_count_; }
  const TreeNode& node(std::size_t i) const noexcept { return nodes_[i]; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  /// Weighted in-bag class counts of node i.
  std::span<const std::uint32_t> class_population(std::size_t i) const noexcept {
    return {class_populations_.data() + i * class_count_, class_count_};
  }
  const std::vector<std::uint32_t>& class_populations() const noexcept { return class_populations_; }

  /// Dense 0-based ordinal of a terminal node among the tree's leaves.
  std::uint32_t leaf_ordinal(std::size_t terminal_node) const noexcept {
    return leaf_ordinal_[terminal_node];
  }

  bool operator==(const Tree& other) const {
    return nodes_ == other.nodes_ && class_populations_ == other.class_populations_ &&
           class_count_ == other.class_count_;
  }

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> class_populations_;
  std::vector<std::uint32_t> leaf_ordinal_;
  std::size_t class_count_ = 0;
  std::size_t leaf_count_ = 0;
};

/// Descends to a terminal node. `feature_value(j)` returns the sample's
/// value on feature j (level code for categorical features).
template <typename FeatureValue>
std::size_t classify_with(const Tree& tree, FeatureValue&& feature_value) {
  std::size_t current = 0;
  for (;;) {
    const TreeNode& node = tree.node(current);
    if (node.is_terminal()) return current;
    const double x = feature_value(node.split_var);
    bool go_left;
    if (node.categorical) {
      const auto level = static_cast<std::uint32_t>(x);
      go_left = level < 32 && ((node.category_mask >> level) & 1u) != 0;
    } else {
      go_left = x <= node.threshold;
    }
    current = static_cast<std::size_t>(go_left ? node.left : node.right);
  }
}

inline std::size_t classify(const Tree& tree, const Dataset& data, std::size_t sample) {
  return classify_with(tree, [&](std::size_t j) { return data.value(sample, j); });
}

inline std::size_t classify(const Tree& tree, std::span<const double> row) {
  return classify_with(tree, [&](std::size_t j) { return row[j]; });
}

/// Grows one tree on the bootstrap described by `inbag_counts`, drawing mtry
/// features per node from `rng`. Throws std::runtime_error naming `tree_id`
/// if the node budget is exceeded.
Tree grow_tree(const Dataset& data, std::span<const std::uint32_t> inbag_counts,
               const TrainConfig& config, Rng& rng, std::size_t tree_id = 0);

/// Same, with a fresh stream seeded by `tree_seed`.
Tree grow_tree(const Dataset& data, std::span<const std::uint32_t> inbag_counts,
               const TrainConfig& config, std::uint64_t tree_seed, std::size_t tree_id = 0);

}  // namespace rfx
