#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rfx/dataset.hpp"
#include "rfx/forest.hpp"

namespace rfx {

struct GiniImportance {
  std::vector<double> values;   // sums to 1
  bool uniform_fallback = false;  // no split ever reduced impurity
};

/// Impurity decrease summed over every internal node (weighted by the node's
/// in-bag weight), averaged over trees and normalized.
GiniImportance gini_importance(const Forest& forest);

/// Reorders `order` (OOB sample indices of tree `tree`) in place before it is
/// used as the donor list for feature `feature`.
using Permuter = std::function<void(std::size_t tree, std::size_t feature, std::vector<std::uint32_t>& order)>;

/// Default permuter: Fisher-Yates with stream iseed + B + tree * p + feature.
Permuter seeded_permuter(const Forest& forest);

struct PermutationImportance {
  std::vector<double> mean;   // p, per-tree (correct - correct_permuted) averaged
  std::vector<double> sd;     // p, sample sd over the same trees
  std::vector<double> local;  // n x p row-major, permuted loss - original loss
  std::size_t trees_used = 0; // trees with at least two OOB samples
  bool casewise = false;
};

/// One pass computes the overall scores and the local matrix from shared
/// permutations. Casewise weights each OOB term by the tnodewt of the leaf
/// the sample lands in.
PermutationImportance permutation_importance(const Forest& forest, const Dataset& data, bool casewise,
                                             const Permuter& permuter = {});

/// The local matrix alone. The case-level overall importance is the same
/// quantity, so `case_importance` is an alias.
std::vector<double> local_importance(const Forest& forest, const Dataset& data, bool casewise);
inline std::vector<double> case_importance(const Forest& forest, const Dataset& data, bool casewise) {
  return local_importance(forest, data, casewise);
}

struct ImportanceReport {
  std::vector<std::string> feature_names;
  std::vector<double> overall_perm;
  std::vector<double> overall_perm_sd;
  std::vector<double> overall_gini;
  bool gini_uniform_fallback = false;
  std::vector<double> local;  // n x p row-major
  std::size_t n = 0;
  bool casewise = false;
  std::size_t trees_used = 0;
  std::size_t tree_count = 0;
};

ImportanceReport importance_report(const Forest& forest, const Dataset& data, bool casewise);

/// feature,gini,perm_mean,perm_sd
std::string importance_csv(const ImportanceReport& report);
std::string importance_json(const ImportanceReport& report);

}  // namespace rfx
