#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "rfx/dataset.hpp"
#include "rfx/forest.hpp"
#include "rfx/memory_plan.hpp"
#include "rfx/quantize.hpp"

namespace rfx {

/// Terminal-node ordinal of every sample in every tree.
class LeafMembership {
 public:
  LeafMembership(std::size_t n, std::vector<std::uint32_t> leaf_counts, std::vector<std::uint32_t> codes);

  std::size_t n() const noexcept { return n_; }
  std::size_t tree_count() const noexcept { return leaf_counts_.size(); }
  std::uint32_t leaf_count(std::size_t b) const noexcept { return leaf_counts_[b]; }
  std::uint64_t total_leaves() const noexcept { return leaf_offsets_.back(); }
  /// First column of tree b in the one-hot expansion M.
  std::uint64_t leaf_offset(std::size_t b) const noexcept { return leaf_offsets_[b]; }
  std::uint32_t code(std::size_t b, std::size_t i) const noexcept { return codes_[b * n_ + i]; }
  std::span<const std::uint32_t> tree_codes(std::size_t b) const noexcept { return {codes_.data() + b * n_, n_}; }

  bool operator==(const LeafMembership&) const = default;

 private:
  std::size_t n_;
  std::vector<std::uint32_t> leaf_counts_;
  std::vector<std::uint64_t> leaf_offsets_;
  std::vector<std::uint32_t> codes_;  // tree-major
};

LeafMembership leaf_membership(const Forest& forest, const Dataset& data);

/// Budget in bytes; 0 means unlimited.
struct ProximityBudget {
  std::uint64_t bytes = 0;
};

class FullTriangle {
 public:
  FullTriangle(std::size_t n, std::size_t trees, std::vector<double> packed);

  std::size_t n() const noexcept { return n_; }
  std::size_t tree_count() const noexcept { return trees_; }
  double entry(std::size_t i, std::size_t j) const;
  const std::vector<double>& packed() const noexcept { return packed_; }
  std::uint64_t stored_bytes() const noexcept { return packed_.size() * sizeof(double); }
  /// Position of (i, j), i < j, in the row-major packed upper triangle.
  static std::size_t index(std::size_t n, std::size_t i, std::size_t j) noexcept {
    return i * n - i * (i + 1) / 2 + (j - i - 1);
  }

  bool operator==(const FullTriangle&) const = default;

 private:
  std::size_t n_;
  std::size_t trees_;
  std::vector<double> packed_;
};

FullTriangle full_proximity(const LeafMembership& membership, ProximityBudget budget = {});

inline constexpr double kTriBlockZero = 1e-6;
inline constexpr double kDefaultTriBlockTau = 1e-4;

struct TriBlockEntry {
  std::uint32_t i;
  std::uint32_t j;
  double value;
  bool operator==(const TriBlockEntry&) const = default;
};

class TriBlock {
 public:
  TriBlock(std::size_t n, std::size_t trees, double tau, std::vector<TriBlockEntry> dense,
           std::vector<TriBlockEntry> sparse);

  std::size_t n() const noexcept { return n_; }
  std::size_t tree_count() const noexcept { return trees_; }
  double tau() const noexcept { return tau_; }
  double entry(std::size_t i, std::size_t j) const;
  std::size_t dense_count() const noexcept { return dense_.size(); }
  std::size_t sparse_count() const noexcept { return sparse_.size(); }
  /// Dense tier entries sorted by (i, j).
  std::vector<TriBlockEntry> dense_entries() const;
  const std::vector<TriBlockEntry>& sparse_entries() const noexcept { return sparse_; }
  /// Value bytes plus index bytes for both tiers.
  std::uint64_t stored_bytes() const noexcept;
  /// n(n-1)/2 pairs over stored pairs.
  double compression_ratio() const noexcept;

  bool operator==(const TriBlock& other) const;

 private:
  static std::uint64_t key(std::size_t i, std::size_t j) noexcept { return (std::uint64_t{i} << 32) | j; }

  std::size_t n_;
  std::size_t trees_;
  double tau_;
  std::unordered_map<std::uint64_t, double> dense_;
  std::vector<TriBlockEntry> sparse_;  // sorted by (i, j)
};

TriBlock triblock_proximity(const LeafMembership& membership, double tau = kDefaultTriBlockTau,
                            ProximityBudget budget = {});

class LowRankQuantized {
 public:
  LowRankQuantized(std::size_t trees, double pmax, QuantizedMatrix factor, std::string notice = {});

  std::size_t n() const noexcept { return factor_.rows; }
  std::size_t rank() const noexcept { return factor_.cols; }
  std::size_t tree_count() const noexcept { return trees_; }
  QuantMode mode() const noexcept { return factor_.mode; }
  double pmax() const noexcept { return pmax_; }
  const QuantizedMatrix& factor() const noexcept { return factor_; }
  /// Dequantized factor, row-major n x r.
  std::span<const double> row(std::size_t i) const noexcept { return {dense_.data() + i * rank(), rank()}; }
  const std::vector<double>& dequantized() const noexcept { return dense_; }
  double entry(std::size_t i, std::size_t j) const;
  /// Empty unless the requested rank had to be reduced.
  const std::string& notice() const noexcept { return notice_; }

  bool operator==(const LowRankQuantized& other) const {
    return trees_ == other.trees_ && pmax_ == other.pmax_ && factor_ == other.factor_;
  }

 private:
  std::size_t trees_;
  double pmax_;
  QuantizedMatrix factor_;
  std::vector<double> dense_;
  std::string notice_;
};

struct LowRankOptions {
  std::size_t rank = 32;
  QuantMode mode = QuantMode::kI8;
  std::size_t oversampling = 8;
  std::size_t power_iterations = 2;
  std::uint64_t seed = 1;
};

/// Randomized range finder over the implicit one-hot membership matrix.
LowRankQuantized lowrank_proximity(const LeafMembership& membership, const LowRankOptions& options = {});

/// Unquantized rank-r factor F (row-major n x r) with F F^T ~ P.
std::vector<double> lowrank_factor(const LeafMembership& membership, std::size_t rank, std::size_t oversampling,
                                   std::size_t power_iterations, std::uint64_t seed);

using ProximityRepr = std::variant<FullTriangle, TriBlock, LowRankQuantized>;

std::size_t repr_n(const ProximityRepr& repr);
std::size_t repr_trees(const ProximityRepr& repr);
/// Symmetric accessor with unit diagonal; throws std::out_of_range.
double entry(const ProximityRepr& repr, std::size_t i, std::size_t j);

/// mean over j != i of 1 / max(p(i,j), floor)^2; floor defaults to 1/B.
std::vector<double> outlier_scores(const ProximityRepr& repr, std::optional<double> clamp_floor = std::nullopt);

/// Throws BudgetError if the plan for this n exceeds the budget.
void check_budget(std::size_t n, std::size_t trees, ProximityBackend backend, ProximityBudget budget);

// Files.
std::vector<std::uint8_t> serialize_full(const FullTriangle& full);
FullTriangle deserialize_full(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_lowrank(const LowRankQuantized& lowrank);
LowRankQuantized deserialize_lowrank(std::span<const std::uint8_t> bytes);
/// i,j,value for the dense tier.
std::string triblock_csv(const TriBlock& tri);
std::string triblock_summary_json(const TriBlock& tri);

}  // namespace rfx
