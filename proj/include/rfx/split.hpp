#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

namespace rfx {

/// Splits must beat this impurity decrease to be accepted; guards against
/// round-off "improvements" on splits that are exactly neutral.
inline constexpr double kMinImpurityDecrease = 1e-12;
// Decreases closer than this count as tied (summation order noise).
inline constexpr double kTieTolerance = 1e-12;

/// Gini impurity 1 - sum (c_k / total)^2. Throws std::invalid_argument when
/// the counts sum to zero.
double gini(std::span<const double> counts);

struct ThresholdSplit {
  double threshold = 0.0;  // left = {x <= threshold}
  double decrease = 0.0;
};

struct CategorySplit {
  std::uint32_t left_mask = 0;  // bit k set => level k goes left
  double decrease = 0.0;
};

/// Result of an exhaustive categorical scan; `best` is empty when no
/// partition improves impurity.
struct GarsideScan {
  std::optional<CategorySplit> best;
  std::size_t partitions_examined = 0;
};

/// Best "x <= tau" split of one node on one numeric feature. Candidate
/// thresholds are the node's unique values (all but the largest); ties in
/// decrease keep the smallest threshold. `weights` are in-bag multiplicities.
std::optional<ThresholdSplit> best_threshold_split(std::span<const double> values,
                                                   std::span<const std::uint32_t> labels,
                                                   std::span<const double> weights,
                                                   std::size_t class_count);

/// Exhaustive scan over the 2^(m-1) - 1 binary partitions of the m levels
/// present in the node. The lowest present level always goes left and levels
/// absent from the node are routed left, so bit 0 of every mask is set.
/// Ties keep the numerically smallest mask. Throws std::invalid_argument when
/// level_count exceeds 32.
GarsideScan best_garside_split(std::span<const double> level_codes,
                               std::span<const std::uint32_t> labels,
                               std::span<const double> weights, std::size_t class_count,
                               std::size_t level_count);

/// 2^(K-1) - 1.
constexpr std::uint64_t garside_partition_count(std::size_t levels) {
  return levels < 2 ? 0 : (std::uint64_t{1} << (levels - 1)) - 1;
}

}  // namespace rfx
