#include "rfx/split.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "rfx/dataset.hpp"

namespace rfx {
namespace {

constexpr std::size_t kInsertionSortCutoff = 64;

struct ScanEntry {
  double value;
  std::uint32_t label;
  double weight;
};

void sort_by_value(std::vector<ScanEntry>& entries) {
  const auto by_value = [](const ScanEntry& a, const ScanEntry& b) { return a.value < b.value; };
  if (entries.size() >= kInsertionSortCutoff) {
    std::sort(entries.begin(), entries.end(), by_value);
    return;
  }
  for (std::size_t i = 1; i < entries.size(); ++i) {
    const ScanEntry key = entries[i];
    std::size_t j = i;
    while (j > 0 && by_value(key, entries[j - 1])) {
      entries[j] = entries[j - 1];
      --j;
    }
    entries[j] = key;
  }
}

double gini_of(const std::vector<double>& counts, double total) {
  double sum_sq = 0.0;
  for (double c : counts) sum_sq += c * c;
  return 1.0 - sum_sq / (total * total);
}

double split_decrease(double parent_impurity, const std::vector<double>& left, double left_total,
                      const std::vector<double>& right, double right_total) {
  const double total = left_total + right_total;
  return parent_impurity - (left_total / total) * gini_of(left, left_total) -
         (right_total / total) * gini_of(right, right_total);
}

}  // namespace

double gini(std::span<const double> counts) {
  double total = 0.0;
  double sum_sq = 0.0;
  for (double c : counts) {
    if (c < 0) throw std::invalid_argument("gini: negative class count");
    total += c;
    sum_sq += c * c;
  }
  if (total <= 0) throw std::invalid_argument("gini: empty node");
  return 1.0 - sum_sq / (total * total);
}

std::optional<ThresholdSplit> best_threshold_split(std::span<const double> values,
                                                   std::span<const std::uint32_t> labels,
                                                   std::span<const double> weights,
                                                   std::size_t class_count) {
  const std::size_t m = values.size();
  if (m < 2) return std::nullopt;

  std::vector<ScanEntry> entries(m);
  std::vector<double> right(class_count, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    entries[i] = {values[i], labels[i], weights[i]};
    right[labels[i]] += weights[i];
    total += weights[i];
  }
  sort_by_value(entries);
  if (entries.front().value == entries.back().value) return std::nullopt;

  const double parent = gini_of(right, total);
  std::vector<double> left(class_count, 0.0);
  double left_total = 0.0;
  std::optional<ThresholdSplit> best;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const auto& e = entries[i];
    left[e.label] += e.weight;
    right[e.label] -= e.weight;
    left_total += e.weight;
    if (e.value == entries[i + 1].value) continue;
    const double decrease = split_decrease(parent, left, left_total, right, total - left_total);
    if (decrease > kMinImpurityDecrease && (!best || decrease > best->decrease + kTieTolerance)) {
      best = ThresholdSplit{e.value, decrease};
    }
  }
  return best;
}

GarsideScan best_garside_split(std::span<const double> level_codes,
                               std::span<const std::uint32_t> labels,
                               std::span<const double> weights, std::size_t class_count,
                               std::size_t level_count) {
  if (level_count > kMaxCategoryLevels) {
    throw std::invalid_argument("categorical split: " + std::to_string(level_count) +
                                " levels exceeds the exact-enumeration bound of 32");
  }

  // Class counts per level, laid out level-major.
  std::vector<double> per_level(level_count * class_count, 0.0);
  std::vector<double> level_weight(level_count, 0.0);
  std::vector<double> parent_counts(class_count, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < level_codes.size(); ++i) {
    const auto level = static_cast<std::size_t>(level_codes[i]);
    per_level[level * class_count + labels[i]] += weights[i];
    level_weight[level] += weights[i];
    parent_counts[labels[i]] += weights[i];
    total += weights[i];
  }

  std::vector<std::size_t> present;
  std::uint32_t absent_bits = 0;
  for (std::size_t k = 0; k < level_count; ++k) {
    if (level_weight[k] > 0) {
      present.push_back(k);
    } else {
      absent_bits |= std::uint32_t{1} << k;
    }
  }

  GarsideScan scan;
  if (present.size() < 2) return scan;

  // Walk the free levels (all present levels except the first, which stays
  // left) in Gray-code order so each step moves exactly one level.
  const std::size_t free_count = present.size() - 1;
  const std::uint64_t subsets = std::uint64_t{1} << free_count;
  const std::uint64_t all_free = subsets - 1;
  const double parent = gini_of(parent_counts, total);

  std::vector<double> left(class_count, 0.0);
  std::vector<double> right = parent_counts;
  double left_total = 0.0;
  const auto move_level = [&](std::size_t level, bool to_left) {
    const double sign = to_left ? 1.0 : -1.0;
    for (std::size_t c = 0; c < class_count; ++c) {
      const double w = per_level[level * class_count + c];
      left[c] += sign * w;
      right[c] -= sign * w;
    }
    left_total += sign * level_weight[level];
  };
  move_level(present[0], true);

  std::uint64_t gray = 0;
  for (std::uint64_t step = 0; step < subsets; ++step) {
    if (step > 0) {
      const std::uint64_t next = step ^ (step >> 1);
      const std::uint64_t flipped = next ^ gray;
      const auto bit = static_cast<std::size_t>(__builtin_ctzll(flipped));
      move_level(present[bit + 1], (next & flipped) != 0);
      gray = next;
    }
    if (gray == all_free) continue;  // right side would be empty
    ++scan.partitions_examined;

    const double decrease = split_decrease(parent, left, left_total, right, total - left_total);
    std::uint32_t mask = absent_bits | (std::uint32_t{1} << present[0]);
    for (std::size_t b = 0; b < free_count; ++b) {
      if (gray & (std::uint64_t{1} << b)) mask |= std::uint32_t{1} << present[b + 1];
    }
    if (decrease <= kMinImpurityDecrease) continue;
    if (!scan.best || decrease > scan.best->decrease + kTieTolerance ||
        (decrease >= scan.best->decrease - kTieTolerance && mask < scan.best->left_mask)) {
      scan.best = CategorySplit{mask, decrease};
    }
  }
  return scan;
}

}  // namespace rfx
