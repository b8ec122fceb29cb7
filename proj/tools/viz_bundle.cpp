#include "viz_bundle.hpp"

#include <algorithm>
#include <numeric>

#include "rfx/importance.hpp"
#include "rfx/mds.hpp"
#include "rfx/proximity.hpp"
#include "rfx/rng.hpp"

namespace rfx::cli {
namespace {

LeafMembership restrict(const LeafMembership& m, const std::vector<std::size_t>& rows) {
  std::vector<std::uint32_t> counts(m.tree_count()), codes(m.tree_count() * rows.size());
  for (std::size_t b = 0; b < m.tree_count(); ++b) {
    counts[b] = m.leaf_count(b);
    for (std::size_t k = 0; k < rows.size(); ++k) codes[b * rows.size() + k] = m.code(b, rows[k]);
  }
  return LeafMembership(rows.size(), std::move(counts), std::move(codes));
}

}  // namespace

std::vector<std::size_t> choose_samples(const Dataset& data, std::size_t count, SampleMode mode, std::uint64_t seed) {
  const std::size_t n = data.n();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (count == 0 || count >= n) return all;
  Rng rng(seed);
  std::vector<std::size_t> picked;
  if (mode == SampleMode::kUniform) {
    rng.shuffle(std::span<std::size_t>(all));
    picked.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    // Proportional allocation per class, largest remainder for the rest.
    const std::size_t classes = data.class_count();
    std::vector<std::vector<std::size_t>> members(classes);
    for (std::size_t i = 0; i < n; ++i) members[data.label(i)].push_back(i);
    std::vector<std::size_t> quota(classes);
    std::vector<std::pair<double, std::size_t>> remainder;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double exact = static_cast<double>(count) * members[c].size() / static_cast<double>(n);
      quota[c] = static_cast<std::size_t>(exact);
      assigned += quota[c];
      remainder.push_back({exact - quota[c], c});
    }
    std::stable_sort(remainder.begin(), remainder.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < count; ++k, ++assigned) ++quota[remainder[k % classes].second];
    for (std::size_t c = 0; c < classes; ++c) {
      rng.shuffle(std::span<std::size_t>(members[c]));
      const std::size_t take = std::min(quota[c], members[c].size());
      picked.insert(picked.end(), members[c].begin(), members[c].begin() + static_cast<std::ptrdiff_t>(take));
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

nlohmann::json build_viz_bundle(const Forest& forest, const Dataset& data, const VizOptions& options) {
  using nlohmann::json;
  const auto rows = choose_samples(data, options.sample, options.sample_mode, options.seed);
  const std::size_t p = data.p();
  const std::size_t classes = data.class_count();

  const auto oob = oob_report(forest, data);
  const auto perm = permutation_importance(forest, data, options.casewise);
  const auto membership = restrict(leaf_membership(forest, data), rows);

  ProximityRepr repr = [&]() -> ProximityRepr {
    switch (options.backend) {
      case ProximityBackend::kFull: return full_proximity(membership);
      case ProximityBackend::kTriBlock: return triblock_proximity(membership, options.tau);
      case ProximityBackend::kLowRank: {
        LowRankOptions lo;
        lo.rank = options.rank;
        lo.mode = options.quant;
        lo.seed = options.seed;
        return lowrank_proximity(membership, lo);
      }
    }
    throw std::logic_error("unknown backend");
  }();
  const MdsEmbedding emb = options.backend == ProximityBackend::kLowRank
                               ? mds_lowrank(std::get<LowRankQuantized>(repr))
                               : mds_full(densify(repr));
  const auto outliers = outlier_scores(repr);

  json names = data.feature_names();
  json kinds = json::array(), levels = json::array();
  for (const auto& col : data.columns()) {
    kinds.push_back(col.is_categorical() ? "categorical" : "numeric");
    levels.push_back(col.is_categorical() ? json(col.levels) : json(nullptr));
  }
  json values = json::array(), codes = json::array(), predictions = json::array(), fractions = json::array(),
       local = json::array(), coords = json::array(), source = json::array();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = rows[k];
    std::vector<double> row(p);
    for (std::size_t j = 0; j < p; ++j) row[j] = data.value(i, j);
    values.push_back(row);
    codes.push_back(data.label(i));
    predictions.push_back(oob.predictions[i]);
    fractions.push_back(std::vector<double>(oob.vote_fractions.begin() + static_cast<std::ptrdiff_t>(i * classes),
                                            oob.vote_fractions.begin() + static_cast<std::ptrdiff_t>((i + 1) * classes)));
    local.push_back(std::vector<double>(perm.local.begin() + static_cast<std::ptrdiff_t>(i * p),
                                        perm.local.begin() + static_cast<std::ptrdiff_t>((i + 1) * p)));
    std::vector<double> xyz(3, 0.0);
    for (std::size_t c = 0; c < std::min<std::size_t>(3, emb.k); ++c) xyz[c] = emb.coord(k, c);
    coords.push_back(xyz);
    source.push_back(i);
  }

  json bundle{
      {"schema_version", kVizBundleVersion},
      {"metadata",
       {{"trees", forest.tree_count()},
        {"seed", forest.config().iseed},
        {"backend", backend_name(options.backend)},
        {"casewise", options.casewise},
        {"samples", rows.size()},
        {"total_samples", data.n()},
        {"sampling", options.sample == 0 || options.sample >= data.n()
                         ? "none"
                         : (options.sample_mode == SampleMode::kUniform ? "uniform" : "stratified")},
        {"oob_error", oob.error_rate}}},
      {"sample_ids", std::move(source)},
      {"features", {{"names", std::move(names)}, {"kinds", std::move(kinds)}, {"levels", std::move(levels)},
                    {"values", std::move(values)}}},
      {"labels", {{"class_names", data.class_names()}, {"codes", std::move(codes)}}},
      {"oob", {{"predictions", std::move(predictions)}, {"vote_fractions", std::move(fractions)}}},
      {"local_importance", std::move(local)},
      {"mds", {{"coordinates", std::move(coords)}, {"eigenvalues", emb.eigenvalues}}},
      {"outliers", std::vector<double>()},
  };
  auto& out_scores = bundle["outliers"];
  for (double s : outliers) out_scores.push_back(s);

  if (forest.tree_count() <= kPerTreeVoteLimit) {
    // Predicted class of each sample by each tree where it was out-of-bag, -1 otherwise.
    json per_tree = json::array();
    for (std::size_t b = 0; b < forest.tree_count(); ++b) {
      const Tree& tree = forest.tree(b);
      std::vector<int> votes(rows.size(), -1);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (forest.is_oob(b, rows[k])) votes[k] = static_cast<int>(tree.node(classify(tree, data, rows[k])).node_class);
      }
      per_tree.push_back(std::move(votes));
    }
    bundle["oob"]["per_tree"] = std::move(per_tree);
  }
  return bundle;
}

}  // namespace rfx::cli
