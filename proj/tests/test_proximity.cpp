#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "rfx/error.hpp"
#include "rfx/proximity.hpp"
#include "rfx/rng.hpp"
#include "rfx/stats.hpp"

using namespace rfx;
using rfx::testing::load_wine;
using rfx::testing::make_blobs;
using rfx::testing::make_dataset;

namespace {

struct ThreadsGuard {
  explicit ThreadsGuard(const char* value) { setenv("RFX_THREADS", value, 1); }
  ~ThreadsGuard() { unsetenv("RFX_THREADS"); }
};

// O(n^2 B) double loop straight from the definition.
std::vector<std::vector<double>> brute_force(const LeafMembership& m) {
  const std::size_t n = m.n();
  std::vector<std::vector<double>> p(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t same = 0;
      for (std::size_t b = 0; b < m.tree_count(); ++b) same += m.code(b, i) == m.code(b, j);
      p[i][j] = static_cast<double>(same) / static_cast<double>(m.tree_count());
    }
  }
  return p;
}

LeafMembership random_membership(Rng& rng, std::size_t n, std::size_t trees) {
  std::vector<std::uint32_t> counts(trees), codes(n * trees);
  for (std::size_t b = 0; b < trees; ++b) {
    counts[b] = static_cast<std::uint32_t>(1 + rng.uniform_index(std::min<std::size_t>(n, 8)));
    for (std::size_t i = 0; i < n; ++i) codes[b * n + i] = static_cast<std::uint32_t>(rng.uniform_index(counts[b]));
  }
  return LeafMembership(n, counts, codes);
}

Forest train_on(const Dataset& data, std::size_t trees, std::uint64_t seed) {
  TrainConfig config;
  config.ntree = trees;
  config.iseed = seed;
  return train(data, config);
}

}  // namespace

TEST_CASE("leaf membership") {
  SUBCASE("single-node trees put everyone in leaf 0") {
    const auto data = make_dataset(5, 1, {3, 3, 3, 3, 3}, {0, 1, 0, 1, 0}, 2);
    const auto forest = train_on(data, 4, 1);
    const auto m = leaf_membership(forest, data);
    for (std::size_t b = 0; b < 4; ++b) {
      CHECK(m.leaf_count(b) == 1);
      for (std::size_t i = 0; i < 5; ++i) CHECK(m.code(b, i) == 0);
    }
  }
  SUBCASE("hand-traced n = 4 fixture") {
    // root: x <= 2.5 ? node1 : node2; node1: x <= 1.5 ? leaf3 : leaf4.
    std::vector<TreeNode> nodes(5);
    nodes[0] = {NodeStatus::kInternal, false, 0, 2.5, 0, 1, 2, 0, 0.1, 4, 0};
    nodes[1] = {NodeStatus::kInternal, false, 0, 1.5, 0, 3, 4, 0, 0.1, 2, 0};
    nodes[2].tnodewt = nodes[3].tnodewt = nodes[4].tnodewt = 1;
    const Tree tree(nodes, std::vector<std::uint32_t>(10, 0), 2);
    const auto data = make_dataset(4, 1, {1, 2, 3, 4}, {0, 0, 1, 1}, 2);
    TrainConfig config;
    config.ntree = 1;
    const Forest forest(config, data.columns(), 2, {tree}, {1, 1, 1, 1}, std::vector<double>(8, 0.0));
    const auto m = leaf_membership(forest, data);
    // Leaf ordinals follow node order: node 2 -> 0, node 3 -> 1, node 4 -> 2.
    CHECK(m.code(0, 0) == 1);
    CHECK(m.code(0, 1) == 2);
    CHECK(m.code(0, 2) == 0);
    CHECK(m.code(0, 3) == 0);
    CHECK(m.leaf_count(0) == 3);
  }
  SUBCASE("codes below leaf counts on wine") {
    const auto wine = load_wine();
    const auto m = leaf_membership(train_on(wine, 30, 2), wine);
    for (std::size_t b = 0; b < 30; ++b)
      for (std::size_t i = 0; i < wine.n(); ++i) CHECK(m.code(b, i) < m.leaf_count(b));
  }
  CHECK_THROWS_AS(LeafMembership(2, {1}, {0, 1}), std::invalid_argument);
}

TEST_CASE("full proximity small cases") {
  const LeafMembership one_tree(2, {1}, {0, 0});
  CHECK(full_proximity(one_tree).entry(0, 1) == 1.0);
  const LeafMembership two_trees(2, {1, 2}, {0, 0, 0, 1});
  CHECK(full_proximity(two_trees).entry(0, 1) == 0.5);
}

TEST_CASE("full proximity equals the brute-force double loop") {
  Rng rng(7);
  for (int fixture = 0; fixture < 20; ++fixture) {
    const std::size_t n = 2 + rng.uniform_index(140);  // crosses row-chunk boundaries
    const std::size_t trees = 1 + rng.uniform_index(20);
    const auto m = random_membership(rng, n, trees);
    const auto full = full_proximity(m);
    const auto oracle = brute_force(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) REQUIRE(full.entry(i, j) == oracle[i][j]);
  }
}

TEST_CASE("one-tree row sums count leaf sizes") {
  const auto wine = load_wine();
  const auto m = leaf_membership(train_on(wine, 1, 9), wine);
  const auto full = full_proximity(m);
  std::vector<std::size_t> leaf_size(m.leaf_count(0), 0);
  for (std::size_t i = 0; i < wine.n(); ++i) ++leaf_size[m.code(0, i)];
  for (std::size_t i = 0; i < wine.n(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < wine.n(); ++j) s += full.entry(i, j);
    CHECK(s == static_cast<double>(leaf_size[m.code(0, i)]));
  }
}

TEST_CASE("entry accessor contract for every backend") {
  const auto wine = load_wine();
  const auto m = leaf_membership(train_on(wine, 50, 3), wine);
  LowRankOptions opt;
  opt.rank = 20;
  const std::vector<ProximityRepr> reprs{full_proximity(m), triblock_proximity(m), lowrank_proximity(m, opt)};
  for (const auto& repr : reprs) {
    CHECK(repr_n(repr) == wine.n());
    CHECK(repr_trees(repr) == 50);
    for (std::size_t i = 0; i < wine.n(); i += 7) {
      CHECK(entry(repr, i, i) == 1.0);
      for (std::size_t j = 0; j < wine.n(); j += 5) {
        CHECK(entry(repr, i, j) == entry(repr, j, i));
        CHECK(entry(repr, i, j) >= 0.0);
        CHECK(entry(repr, i, j) <= 1.0);
      }
    }
    CHECK_THROWS_AS(entry(repr, wine.n(), 0), std::out_of_range);
  }
}

TEST_CASE("TriBlock reproduces the full triangle above the zero floor") {
  Rng rng(8);
  for (int fixture = 0; fixture < 10; ++fixture) {
    const auto m = random_membership(rng, 3 + rng.uniform_index(100), 1 + rng.uniform_index(30));
    const auto full = full_proximity(m);
    const auto tri = triblock_proximity(m, 0.2);
    for (std::size_t i = 0; i < m.n(); ++i) {
      for (std::size_t j = i + 1; j < m.n(); ++j) {
        const double p = full.entry(i, j);
        CHECK(tri.entry(i, j) == (p >= kTriBlockZero ? p : 0.0));
      }
    }
    // tiers are disjoint and respect the threshold
    for (const auto& e : tri.dense_entries()) CHECK(e.value >= 0.2);
    for (const auto& e : tri.sparse_entries()) CHECK(e.value < 0.2);
  }
  const auto wine = load_wine();
  const auto m = leaf_membership(train_on(wine, 200, 5), wine);
  const auto full = full_proximity(m);
  const auto tri = triblock_proximity(m);
  for (std::size_t i = 0; i < wine.n(); ++i)
    for (std::size_t j = 0; j < wine.n(); ++j) REQUIRE(tri.entry(i, j) == full.entry(i, j));
  CHECK_THROWS_AS(triblock_proximity(m, 1e-7), ConfigError);
}

TEST_CASE("TriBlock: one shared leaf puts every pair in the dense tier") {
  const LeafMembership m(6, {1, 1}, std::vector<std::uint32_t>(12, 0));
  const auto tri = triblock_proximity(m);
  CHECK(tri.dense_count() == 15);
  CHECK(tri.sparse_count() == 0);
}

TEST_CASE("TriBlock compresses well-separated clusters") {
  const auto data = make_blobs(300, 4, 10, 12.0, 21);
  const auto m = leaf_membership(train_on(data, 100, 4), data);
  const auto tri = triblock_proximity(m);
  const double pairs = 300.0 * 299.0 / 2.0;
  CHECK(pairs / static_cast<double>(tri.dense_count() + tri.sparse_count()) >= 2.0);
  CHECK(tri.compression_ratio() >= 2.0);
}

TEST_CASE("full-rank F32 low-rank factor reproduces the matrix") {
  Rng rng(10);
  const auto m = random_membership(rng, 50, 15);
  const auto full = full_proximity(m);
  LowRankOptions opt;
  opt.rank = 50;
  opt.mode = QuantMode::kF32;
  const auto low = lowrank_proximity(m, opt);
  CHECK(low.notice().empty());
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 50; ++j) CHECK(std::abs(low.entry(i, j) - full.entry(i, j)) <= 1e-4);
  CHECK(low.pmax() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("low-rank rank above the membership bound degrades with a notice") {
  const LeafMembership m(10, {2, 3}, {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2});
  LowRankOptions opt;
  opt.rank = 8;
  opt.mode = QuantMode::kF32;
  const auto low = lowrank_proximity(m, opt);
  CHECK(low.rank() == 5);
  CHECK(low.notice().find("using rank 5") != std::string::npos);
  const auto full = full_proximity(m);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) CHECK(std::abs(low.entry(i, j) - full.entry(i, j)) <= 1e-6);
}

TEST_CASE("quantized factors keep their byte counts") {
  Rng rng(11);
  const auto m = random_membership(rng, 40, 10);
  for (auto [mode, bytes] : {std::pair{QuantMode::kF32, 40 * 8 * 4}, std::pair{QuantMode::kF16, 40 * 8 * 2},
                             std::pair{QuantMode::kI8, 40 * 8}, std::pair{QuantMode::kNF4, 40 * 8 / 2}}) {
    LowRankOptions opt;
    opt.rank = 8;
    opt.mode = mode;
    CHECK(lowrank_proximity(m, opt).factor().payload_bytes() == static_cast<std::size_t>(bytes));
  }
}

TEST_CASE("outlier scores") {
  const ProximityRepr half = FullTriangle(3, 2, {0.5, 0.5, 0.5});
  for (double s : outlier_scores(half)) CHECK(s == 4.0);

  // Sample 3 shares a leaf with nobody in any of the 4 trees.
  const LeafMembership m(4, {2, 2, 2, 2}, {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto scores = outlier_scores(full_proximity(m));
  CHECK(scores[3] == 16.0);
  CHECK(scores[0] == doctest::Approx((1.0 + 1.0 + 16.0) / 3.0));
  CHECK_THROWS_AS(outlier_scores(FullTriangle(1, 1, {})), DataError);

  const auto wine = load_wine();
  const auto wm = leaf_membership(train_on(wine, 500, 1), wine);
  const auto full_scores = outlier_scores(full_proximity(wm));
  const auto tri_scores = outlier_scores(triblock_proximity(wm));
  CHECK(top_k(full_scores, 3) == top_k(tri_scores, 3));
  for (double s : full_scores) CHECK(std::isfinite(s));
}

TEST_CASE("budget guard refuses oversized matrices") {
  Rng rng(12);
  const auto m = random_membership(rng, 100, 3);
  CHECK_NOTHROW(full_proximity(m, {8 * 100 * 100}));
  try {
    full_proximity(m, {1000});
    FAIL("expected a budget refusal");
  } catch (const BudgetError& e) {
    CHECK(std::string(e.what()).find("lowrank") != std::string::npos);
    CHECK(e.planner_report().find("recommended") != std::string::npos);
  }
  CHECK_THROWS_AS(triblock_proximity(m, 1e-4, {1000}), BudgetError);
  CHECK_THROWS_AS(check_budget(50000, 100, ProximityBackend::kFull, {1ull << 30}), BudgetError);
}

TEST_CASE("representations are independent of the worker count") {
  const auto wine = load_wine();
  const auto forest = train_on(wine, 120, 6);
  auto build = [&] {
    const auto m = leaf_membership(forest, wine);
    LowRankOptions opt;
    opt.rank = 16;
    return std::tuple{m, full_proximity(m), triblock_proximity(m), serialize_lowrank(lowrank_proximity(m, opt))};
  };
  const auto one = [&] { ThreadsGuard g("1"); return build(); }();
  const auto four = [&] { ThreadsGuard g("4"); return build(); }();
  CHECK(std::get<0>(one) == std::get<0>(four));
  CHECK(std::get<1>(one) == std::get<1>(four));
  CHECK(std::get<2>(one) == std::get<2>(four));
  CHECK(std::get<3>(one) == std::get<3>(four));
}

TEST_CASE("file round trips") {
  Rng rng(13);
  const auto m = random_membership(rng, 30, 6);
  const auto full = full_proximity(m);
  const auto bytes = serialize_full(full);
  CHECK(deserialize_full(bytes) == full);
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS_AS(deserialize_full(cut), FormatError);

  for (auto mode : {QuantMode::kF32, QuantMode::kF16, QuantMode::kI8, QuantMode::kNF4}) {
    LowRankOptions opt;
    opt.rank = 7;
    opt.mode = mode;
    const auto low = lowrank_proximity(m, opt);
    const auto q = serialize_lowrank(low);
    CHECK(std::string(q.begin(), q.begin() + 4) == "RFXQ");
    const auto back = deserialize_lowrank(q);
    CHECK(back == low);
    CHECK(back.dequantized() == low.dequantized());
    CHECK(serialize_lowrank(back) == q);
  }
  auto bad = serialize_lowrank(lowrank_proximity(m));
  bad[0] = 'Z';
  CHECK_THROWS_AS(deserialize_lowrank(bad), FormatError);

  const auto tri = triblock_proximity(m, 0.3);
  const auto csv = triblock_csv(tri);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == tri.dense_count() + 1);
  const auto summary = nlohmann::json::parse(triblock_summary_json(tri));
  CHECK(summary["dense_entries"] == tri.dense_count());
  CHECK(summary["sparse"].size() == tri.sparse_count());
}
