#include "rfx/importance.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "rfx/parallel.hpp"
#include "rfx/rng.hpp"

namespace rfx {
namespace {

constexpr std::size_t kTreesPerBatch = 256;

// Per-tree output: raw score per feature, plus local terms for each OOB
// sample (row-major |OOB| x p).
struct TreeTerms {
  std::vector<std::uint32_t> oob;
  std::vector<double> raw;
  std::vector<double> local;
};

TreeTerms score_tree(const Forest& forest, const Dataset& data, std::size_t b, bool casewise,
                     const Permuter& permuter) {
  const Tree& tree = forest.tree(b);
  const std::size_t p = data.p();
  TreeTerms out;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (forest.is_oob(b, i)) out.oob.push_back(static_cast<std::uint32_t>(i));
  }
  const std::size_t m = out.oob.size();
  out.raw.assign(p, 0.0);
  out.local.assign(m * p, 0.0);

  std::vector<double> weight(m);
  std::vector<std::uint8_t> correct(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto& leaf = tree.node(classify(tree, data, out.oob[k]));
    weight[k] = casewise ? leaf.tnodewt : 1.0;
    correct[k] = leaf.node_class == data.label(out.oob[k]) ? 1 : 0;
  }

  std::vector<std::uint32_t> donors;
  for (std::size_t j = 0; j < p; ++j) {
    donors = out.oob;
    permuter(b, j, donors);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = out.oob[k];
      const std::size_t donor = donors[k];
      const auto leaf = classify_with(tree, [&](std::size_t f) {
        return data.value(f == j ? donor : i, f);
      });
      const int permuted_correct = tree.node(leaf).node_class == data.label(i) ? 1 : 0;
      const double term = weight[k] * (correct[k] - permuted_correct);
      out.raw[j] += term;
      out.local[k * p + j] = term;
    }
  }
  return out;
}

}  // namespace

GiniImportance gini_importance(const Forest& forest) {
  const std::size_t p = forest.p();
  GiniImportance out;
  out.values.assign(p, 0.0);
  for (const auto& tree : forest.trees()) {
    for (const auto& node : tree.nodes()) {
      if (!node.is_terminal()) out.values[node.split_var] += node.impurity_decrease * node.weight;
    }
  }
  double total = 0.0;
  for (auto& v : out.values) {
    v /= static_cast<double>(forest.tree_count());
    total += v;
  }
  if (total <= 0.0) {
    out.values.assign(p, 1.0 / static_cast<double>(p));
    out.uniform_fallback = true;
    return out;
  }
  for (auto& v : out.values) v /= total;
  return out;
}

Permuter seeded_permuter(const Forest& forest) {
  const std::uint64_t base = forest.config().iseed + forest.tree_count();
  const std::uint64_t p = forest.p();
  return [base, p](std::size_t b, std::size_t j, std::vector<std::uint32_t>& order) {
    Rng rng(base + b * p + j);
    rng.shuffle(std::span<std::uint32_t>(order));
  };
}

PermutationImportance permutation_importance(const Forest& forest, const Dataset& data, bool casewise,
                                             const Permuter& permuter) {
  forest.check_compatible(data);
  const Permuter permute = permuter ? permuter : seeded_permuter(forest);
  const std::size_t n = data.n();
  const std::size_t p = data.p();
  const std::size_t trees = forest.tree_count();

  PermutationImportance out;
  out.casewise = casewise;
  out.local.assign(n * p, 0.0);
  std::vector<std::uint32_t> oob_count(n, 0);
  std::vector<std::vector<double>> raw_scores;  // kept for a two-pass sd

  std::vector<TreeTerms> slots;
  for (std::size_t start = 0; start < trees; start += kTreesPerBatch) {
    const std::size_t count = std::min(kTreesPerBatch, trees - start);
    slots.assign(count, {});
    parallel_for(count, [&](std::size_t k) { slots[k] = score_tree(forest, data, start + k, casewise, permute); });
    for (auto& t : slots) {
      for (std::size_t k = 0; k < t.oob.size(); ++k) {
        const std::size_t i = t.oob[k];
        ++oob_count[i];
        for (std::size_t j = 0; j < p; ++j) out.local[i * p + j] += t.local[k * p + j];
      }
      if (t.oob.size() >= 2) raw_scores.push_back(std::move(t.raw));
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (oob_count[i] == 0) continue;
    for (std::size_t j = 0; j < p; ++j) out.local[i * p + j] /= static_cast<double>(oob_count[i]);
  }

  out.trees_used = raw_scores.size();
  out.mean.assign(p, 0.0);
  out.sd.assign(p, 0.0);
  if (raw_scores.empty()) return out;
  for (const auto& r : raw_scores) {
    for (std::size_t j = 0; j < p; ++j) out.mean[j] += r[j];
  }
  for (auto& m : out.mean) m /= static_cast<double>(raw_scores.size());
  if (raw_scores.size() >= 2) {
    for (const auto& r : raw_scores) {
      for (std::size_t j = 0; j < p; ++j) out.sd[j] += (r[j] - out.mean[j]) * (r[j] - out.mean[j]);
    }
    for (auto& s : out.sd) s = std::sqrt(s / static_cast<double>(raw_scores.size() - 1));
  }
  return out;
}

std::vector<double> local_importance(const Forest& forest, const Dataset& data, bool casewise) {
  return permutation_importance(forest, data, casewise).local;
}

ImportanceReport importance_report(const Forest& forest, const Dataset& data, bool casewise) {
  auto perm = permutation_importance(forest, data, casewise);
  auto gini = gini_importance(forest);
  ImportanceReport report;
  report.feature_names = data.feature_names();
  report.overall_perm = std::move(perm.mean);
  report.overall_perm_sd = std::move(perm.sd);
  report.overall_gini = std::move(gini.values);
  report.gini_uniform_fallback = gini.uniform_fallback;
  report.local = std::move(perm.local);
  report.n = data.n();
  report.casewise = casewise;
  report.trees_used = perm.trees_used;
  report.tree_count = forest.tree_count();
  return report;
}

std::string importance_csv(const ImportanceReport& report) {
  std::ostringstream out;
  out << std::setprecision(17) << "feature,gini,perm_mean,perm_sd\n";
  for (std::size_t j = 0; j < report.feature_names.size(); ++j) {
    out << report.feature_names[j] << ',' << report.overall_gini[j] << ',' << report.overall_perm[j] << ','
        << report.overall_perm_sd[j] << '\n';
  }
  return out.str();
}

std::string importance_json(const ImportanceReport& report) {
  const std::size_t p = report.feature_names.size();
  nlohmann::json local = nlohmann::json::array();
  for (std::size_t i = 0; i < report.n; ++i) {
    local.push_back(std::vector<double>(report.local.begin() + i * p, report.local.begin() + (i + 1) * p));
  }
  nlohmann::json j{
      {"features", report.feature_names},
      {"casewise", report.casewise},
      {"trees", report.tree_count},
      {"trees_used", report.trees_used},
      {"gini", report.overall_gini},
      {"gini_uniform_fallback", report.gini_uniform_fallback},
      {"perm_mean", report.overall_perm},
      {"perm_sd", report.overall_perm_sd},
      {"local", std::move(local)},
  };
  return j.dump(2);
}

}  // namespace rfx
