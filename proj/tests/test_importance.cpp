#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "rfx/importance.hpp"
#include "rfx/rng.hpp"
#include "rfx/stats.hpp"

using namespace rfx;
using rfx::testing::load_wine;
using rfx::testing::make_dataset;

namespace {

Forest wine_forest(std::size_t ntree, std::uint64_t seed) {
  TrainConfig config;
  config.ntree = ntree;
  config.iseed = seed;
  return train(load_wine(), config);
}

// Independent Gini oracle: push each tree's in-bag samples down again and
// recompute weight * decrease from class tallies.
std::vector<double> gini_oracle(const Forest& forest, const Dataset& data) {
  std::vector<double> out(data.p(), 0.0);
  for (std::size_t b = 0; b < forest.tree_count(); ++b) {
    const Tree& tree = forest.tree(b);
    std::vector<std::vector<double>> tally(tree.node_count(), std::vector<double>(data.class_count(), 0.0));
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double w = forest.inbag_count(b, i);
      if (w == 0) continue;
      std::size_t node = 0;
      for (;;) {
        tally[node][data.label(i)] += w;
        const auto& nd = tree.node(node);
        if (nd.is_terminal()) break;
        const double x = data.value(i, nd.split_var);
        const bool left = nd.categorical ? ((nd.category_mask >> static_cast<unsigned>(x)) & 1u) : x <= nd.threshold;
        node = static_cast<std::size_t>(left ? nd.left : nd.right);
      }
    }
    auto impurity = [](const std::vector<double>& t) {
      const double s = std::accumulate(t.begin(), t.end(), 0.0);
      double g = 1.0;
      for (double c : t) g -= (c / s) * (c / s);
      return std::make_pair(g, s);
    };
    for (std::size_t k = 0; k < tree.node_count(); ++k) {
      const auto& nd = tree.node(k);
      if (nd.is_terminal()) continue;
      const auto [gp, sp] = impurity(tally[k]);
      const auto [gl, sl] = impurity(tally[static_cast<std::size_t>(nd.left)]);
      const auto [gr, sr] = impurity(tally[static_cast<std::size_t>(nd.right)]);
      out[nd.split_var] += sp * (gp - (sl / sp) * gl - (sr / sp) * gr);
    }
  }
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (auto& v : out) v /= total;
  return out;
}

// Independent permutation oracle: per tree and feature, build the permuted
// design row by row and count correct votes.
std::vector<double> perm_oracle(const Forest& forest, const Dataset& data) {
  const std::size_t p = data.p();
  const std::size_t B = forest.tree_count();
  std::vector<std::vector<double>> scores;
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::uint32_t> oob;
    for (std::size_t i = 0; i < data.n(); ++i)
      if (forest.inbag_count(b, i) == 0) oob.push_back(static_cast<std::uint32_t>(i));
    if (oob.size() < 2) continue;
    std::vector<double> s(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
      std::vector<std::uint32_t> perm = oob;
      Rng rng(forest.config().iseed + B + b * p + j);
      for (std::size_t k = perm.size() - 1; k > 0; --k) std::swap(perm[k], perm[rng.uniform_index(k + 1)]);
      double correct = 0, permuted = 0;
      for (std::size_t k = 0; k < oob.size(); ++k) {
        std::vector<double> row(p);
        for (std::size_t f = 0; f < p; ++f) row[f] = data.value(oob[k], f);
        const Tree& tree = forest.tree(b);
        correct += tree.node(classify(tree, row)).node_class == data.label(oob[k]);
        row[j] = data.value(perm[k], j);
        permuted += tree.node(classify(tree, row)).node_class == data.label(oob[k]);
      }
      s[j] = correct - permuted;
    }
    scores.push_back(s);
  }
  std::vector<double> mean(p, 0.0);
  for (const auto& s : scores)
    for (std::size_t j = 0; j < p; ++j) mean[j] += s[j] / static_cast<double>(scores.size());
  return mean;
}

}  // namespace

TEST_CASE("gini importance matches a re-tallied oracle and sums to one") {
  const Dataset wine = load_wine();
  const Forest forest = wine_forest(40, 3);
  const auto gini = gini_importance(forest);
  CHECK_FALSE(gini.uniform_fallback);
  CHECK(std::accumulate(gini.values.begin(), gini.values.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  const auto oracle = gini_oracle(forest, wine);
  for (std::size_t j = 0; j < wine.p(); ++j) {
    CHECK(gini.values[j] >= 0.0);
    CHECK(gini.values[j] == doctest::Approx(oracle[j]).epsilon(1e-9));
  }
}

TEST_CASE("gini importance falls back to uniform when nothing splits") {
  const auto data = make_dataset(6, 2, {1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2}, {0, 1, 0, 1, 0, 1}, 2);
  TrainConfig config;
  config.ntree = 5;
  const auto gini = gini_importance(train(data, config));
  CHECK(gini.uniform_fallback);
  CHECK(gini.values == std::vector<double>{0.5, 0.5});
}

TEST_CASE("permutation importance agrees with the brute-force oracle") {
  const Dataset wine = load_wine();
  const Forest forest = wine_forest(30, 8);
  const auto perm = permutation_importance(forest, wine, false);
  const auto oracle = perm_oracle(forest, wine);
  for (std::size_t j = 0; j < wine.p(); ++j) CHECK(perm.mean[j] == doctest::Approx(oracle[j]).epsilon(1e-12));
  CHECK(perm.trees_used == 30);
}

TEST_CASE("identity permutation gives zero importance") {
  const Dataset wine = load_wine();
  const Forest forest = wine_forest(20, 5);
  for (bool casewise : {false, true}) {
    const auto perm = permutation_importance(forest, wine, casewise, [](auto, auto, auto&) {});
    for (double v : perm.mean) CHECK(v == 0.0);
    for (double v : perm.sd) CHECK(v == 0.0);
    for (double v : perm.local) CHECK(v == 0.0);
  }
}

TEST_CASE("local matrix reconciles with the overall scores") {
  const Dataset wine = load_wine();
  const Forest forest = wine_forest(60, 12);
  for (bool casewise : {false, true}) {
    const auto perm = permutation_importance(forest, wine, casewise);
    for (std::size_t j = 0; j < wine.p(); ++j) {
      double total = 0;
      for (std::size_t i = 0; i < wine.n(); ++i) {
        std::size_t oob = 0;
        for (std::size_t b = 0; b < forest.tree_count(); ++b) oob += forest.is_oob(b, i);
        total += perm.local[i * wine.p() + j] * static_cast<double>(oob);
      }
      CHECK(total == doctest::Approx(perm.mean[j] * static_cast<double>(perm.trees_used)).epsilon(1e-9));
    }
  }
}

TEST_CASE("unit bootstrap weights make casewise a no-op") {
  const Dataset wine = load_wine();
  TrainConfig config;
  config.ntree = 25;
  std::vector<Tree> trees;
  std::vector<std::uint32_t> inbag;
  for (std::size_t b = 0; b < config.ntree; ++b) {
    Rng rng(100 + b);
    std::vector<std::uint32_t> counts(wine.n());
    for (auto& c : counts) c = rng.uniform01() < 0.63 ? 1 : 0;
    trees.push_back(grow_tree(wine, counts, config, rng, b));
    inbag.insert(inbag.end(), counts.begin(), counts.end());
  }
  const Forest forest(config, wine.columns(), wine.class_count(), trees, inbag,
                      std::vector<double>(wine.n() * wine.class_count(), 0.0));
  const auto a = permutation_importance(forest, wine, false);
  const auto b = permutation_importance(forest, wine, true);
  CHECK(a.local == b.local);
  CHECK(a.mean == b.mean);
}

TEST_CASE("samples never out of bag keep a zero local row") {
  const Dataset wine = load_wine();
  const Forest forest = wine_forest(1, 4);
  const auto perm = permutation_importance(forest, wine, false);
  for (std::size_t i = 0; i < wine.n(); ++i) {
    if (!forest.is_oob(0, i)) {
      for (std::size_t j = 0; j < wine.p(); ++j) CHECK(perm.local[i * wine.p() + j] == 0.0);
    }
  }
}

TEST_CASE("a pure-noise feature scores near zero") {
  const Dataset data = rfx::testing::wine_with_noise(77);
  TrainConfig config;
  config.ntree = 200;
  const auto perm = permutation_importance(train(data, config), data, false);
  const std::size_t noise = data.p() - 1;
  CHECK(std::abs(perm.mean[noise]) <= 2.0 * perm.sd[noise]);
  CHECK(perm.mean[noise] < *std::max_element(perm.mean.begin(), perm.mean.end()) / 4);
}

TEST_CASE("wine B = 500: local column means track overall importance") {
  const Dataset wine = load_wine();
  const Forest forest = wine_forest(500, 1);
  const auto perm = permutation_importance(forest, wine, false);
  std::vector<double> column_mean(wine.p(), 0.0);
  for (std::size_t i = 0; i < wine.n(); ++i)
    for (std::size_t j = 0; j < wine.p(); ++j) column_mean[j] += perm.local[i * wine.p() + j] / wine.n();
  CHECK(spearman(column_mean, perm.mean) >= 0.6);
}

TEST_CASE("wine B = 100: top local importance column mean is in the reported band") {
  const Dataset wine = load_wine();
  const auto local = local_importance(wine_forest(100, 1), wine, false);
  std::vector<double> column_mean(wine.p(), 0.0);
  for (std::size_t i = 0; i < wine.n(); ++i)
    for (std::size_t j = 0; j < wine.p(); ++j) column_mean[j] += local[i * wine.p() + j] / wine.n();
  const double top = *std::max_element(column_mean.begin(), column_mean.end());
  CHECK(top >= 0.005);
  CHECK(top <= 0.05);
}

TEST_CASE("gini ranking is stable when B doubles") {
  const auto a = gini_importance(wine_forest(250, 6)).values;
  const auto b = gini_importance(wine_forest(500, 6)).values;
  CHECK(kendall_distance(a, b) <= 0.3);
}

TEST_CASE("report exports") {
  const Dataset wine = load_wine();
  const auto report = importance_report(wine_forest(10, 2), wine, true);
  const auto csv = importance_csv(report);
  CHECK(csv.rfind("feature,gini,perm_mean,perm_sd\nalcohol,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 14);
  const auto j = nlohmann::json::parse(importance_json(report));
  CHECK(j["casewise"] == true);
  CHECK(j["local"].size() == 178);
  CHECK(j["local"][0].size() == 13);
  CHECK(j["perm_mean"].size() == 13);
}

TEST_CASE("stats helpers") {
  const std::vector<double> a{1, 2, 3, 4}, b{10, 20, 30, 45}, c{4, 3, 2, 1};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, c) == doctest::Approx(-1.0));
  CHECK(kendall_distance(a, c) == 1.0);
  CHECK(average_ranks(std::vector<double>{5, 1, 5}) == std::vector<double>{2.5, 1, 2.5});
  CHECK(top_k(std::vector<double>{0.1, 0.9, 0.5, 0.9}, 3) == std::vector<std::size_t>{1, 3, 2});
}
