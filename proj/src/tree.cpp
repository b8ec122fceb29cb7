#include "rfx/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "rfx/error.hpp"
#include "rfx/rng.hpp"
#include "rfx/split.hpp"

namespace rfx {

std::size_t TrainConfig::resolved_mtry(std::size_t p) const {
  if (mtry != 0) return mtry;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p)))));
}

std::size_t TrainConfig::resolved_max_nodes(std::size_t n) const {
  return max_nodes != 0 ? max_nodes : 2 * n + 1;
}

void TrainConfig::validate(std::size_t n, std::size_t p) const {
  if (ntree == 0) throw ConfigError("ntree must be at least 1");
  if (p == 0) throw ConfigError("dataset has no features");
  if (resolved_mtry(p) > p) {
    throw ConfigError("mtry " + std::to_string(mtry) + " exceeds feature count " + std::to_string(p));
  }
  if (min_node_size == 0) throw ConfigError("min_node_size must be at least 1");
  if (resolved_max_nodes(n) < 1) throw ConfigError("max_nodes must be at least 1");
}

Tree::Tree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> class_populations,
           std::size_t class_count)
    : nodes_(std::move(nodes)),
      class_populations_(std::move(class_populations)),
      leaf_ordinal_(nodes_.size(), 0),
      class_count_(class_count) {
  if (class_populations_.size() != nodes_.size() * class_count_) {
    throw std::invalid_argument("Tree: class population table has wrong size");
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_terminal()) leaf_ordinal_[i] = static_cast<std::uint32_t>(leaf_count_++);
  }
}

namespace {

// One node awaiting a split decision; [begin, end) indexes the tree's
// distinct in-bag sample list.
struct PendingNode {
  std::size_t node;
  std::size_t begin;
  std::size_t end;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, std::span<const std::uint32_t> inbag, const TrainConfig& config,
              Rng& rng, std::size_t tree_id)
      : data_(data),
        inbag_(inbag),
        rng_(rng),
        tree_id_(tree_id),
        classes_(data.class_count()),
        mtry_(config.resolved_mtry(data.p())),
        min_node_size_(config.min_node_size),
        max_nodes_(config.resolved_max_nodes(data.n())) {
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (inbag[i] > 0) samples_.push_back(static_cast<std::uint32_t>(i));
    }
    features_.resize(data.p());
  }

  Tree build() {
    if (samples_.empty()) throw std::invalid_argument("grow_tree: bootstrap has no in-bag samples");
    add_node(0, samples_.size());
    std::vector<PendingNode> stack{{0, 0, samples_.size()}};
    while (!stack.empty()) {
      const PendingNode pending = stack.back();
      stack.pop_back();
      if (auto children = try_split(pending)) {
        // Push right first so the left subtree is expanded next.
        stack.push_back(children->second);
        stack.push_back(children->first);
      } else {
        finalize_terminal(pending);
      }
    }
    return Tree(std::move(nodes_), std::move(populations_), classes_);
  }

 private:
  std::size_t add_node(std::size_t begin, std::size_t end) {
    if (nodes_.size() >= max_nodes_) {
      throw ConfigError("tree " + std::to_string(tree_id_) + ": exceeded max_nodes " +
                               std::to_string(max_nodes_));
    }
    TreeNode node;
    populations_.resize(populations_.size() + classes_, 0);
    auto* counts = populations_.data() + nodes_.size() * classes_;
    for (std::size_t k = begin; k < end; ++k) {
      const auto s = samples_[k];
      counts[data_.label(s)] += inbag_[s];
      node.weight += inbag_[s];
    }
    node.node_class = static_cast<std::uint32_t>(std::max_element(counts, counts + classes_) - counts);
    nodes_.push_back(node);
    return nodes_.size() - 1;
  }

  bool is_pure(std::size_t node) const {
    const auto* counts = populations_.data() + node * classes_;
    return std::count_if(counts, counts + classes_, [](std::uint32_t c) { return c > 0; }) <= 1;
  }

  void finalize_terminal(const PendingNode& pending) {
    TreeNode& node = nodes_[pending.node];
    node.status = NodeStatus::kTerminal;
    node.tnodewt = node.weight / static_cast<double>(pending.end - pending.begin);
  }

  struct Candidate {
    std::uint32_t feature;
    bool categorical;
    double threshold;
    std::uint32_t mask;
    double decrease;
  };

  std::optional<std::pair<PendingNode, PendingNode>> try_split(const PendingNode& pending) {
    const std::size_t count = pending.end - pending.begin;
    if (count <= min_node_size_ || count < 2 || is_pure(pending.node)) return std::nullopt;

    // Partial Fisher-Yates: the first mtry slots become the candidate features.
    std::iota(features_.begin(), features_.end(), 0u);
    for (std::size_t k = 0; k < mtry_; ++k) {
      const auto pick = k + static_cast<std::size_t>(rng_.uniform_index(features_.size() - k));
      std::swap(features_[k], features_[pick]);
    }

    values_.resize(count);
    labels_.resize(count);
    weights_.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      const auto s = samples_[pending.begin + k];
      labels_[k] = data_.label(s);
      weights_[k] = inbag_[s];
    }

    std::optional<Candidate> best;
    for (std::size_t k = 0; k < mtry_; ++k) {
      const std::uint32_t j = features_[k];
      const auto column = data_.column(j);
      for (std::size_t t = 0; t < count; ++t) values_[t] = column[samples_[pending.begin + t]];

      std::optional<Candidate> found;
      const auto& kind = data_.columns()[j];
      if (kind.is_categorical()) {
        const auto scan = best_garside_split(values_, labels_, weights_, classes_, kind.level_count());
        if (scan.best) found = Candidate{j, true, 0.0, scan.best->left_mask, scan.best->decrease};
      } else if (auto split = best_threshold_split(values_, labels_, weights_, classes_)) {
        found = Candidate{j, false, split->threshold, 0, split->decrease};
      }
      if (!found) continue;
      if (!best || found->decrease > best->decrease + kTieTolerance ||
          (found->decrease >= best->decrease - kTieTolerance && found->feature < best->feature)) {
        best = found;
      }
    }
    if (!best) return std::nullopt;

    const auto column = data_.column(best->feature);
    const auto goes_left = [&](std::uint32_t s) {
      if (best->categorical) return ((best->mask >> static_cast<std::uint32_t>(column[s])) & 1u) != 0;
      return column[s] <= best->threshold;
    };
    const auto first = samples_.begin() + static_cast<std::ptrdiff_t>(pending.begin);
    const auto last = samples_.begin() + static_cast<std::ptrdiff_t>(pending.end);
    const auto middle = std::stable_partition(first, last, goes_left);
    const auto mid = pending.begin + static_cast<std::size_t>(middle - first);

    const std::size_t left = add_node(pending.begin, mid);
    const std::size_t right = add_node(mid, pending.end);
    TreeNode& node = nodes_[pending.node];
    node.status = NodeStatus::kInternal;
    node.categorical = best->categorical;
    node.split_var = best->feature;
    node.threshold = best->threshold;
    node.category_mask = best->mask;
    node.impurity_decrease = best->decrease;
    node.left = static_cast<std::int32_t>(left);
    node.right = static_cast<std::int32_t>(right);
    return std::pair{PendingNode{left, pending.begin, mid}, PendingNode{right, mid, pending.end}};
  }

  const Dataset& data_;
  std::span<const std::uint32_t> inbag_;
  Rng& rng_;
  std::size_t tree_id_;
  std::size_t classes_;
  std::size_t mtry_;
  std::size_t min_node_size_;
  std::size_t max_nodes_;

  std::vector<std::uint32_t> samples_;
  std::vector<std::uint32_t> features_;
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> populations_;
  std::vector<double> values_;
  std::vector<std::uint32_t> labels_;
  std::vector<double> weights_;
};

}  // namespace

Tree grow_tree(const Dataset& data, std::span<const std::uint32_t> inbag_counts,
               const TrainConfig& config, Rng& rng, std::size_t tree_id) {
  if (inbag_counts.size() != data.n()) throw std::invalid_argument("grow_tree: in-bag vector size != n");
  config.validate(data.n(), data.p());
  return TreeBuilder(data, inbag_counts, config, rng, tree_id).build();
}

Tree grow_tree(const Dataset& data, std::span<const std::uint32_t> inbag_counts,
               const TrainConfig& config, std::uint64_t tree_seed, std::size_t tree_id) {
  Rng rng(tree_seed);
  return grow_tree(data, inbag_counts, config, rng, tree_id);
}

}  // namespace rfx
