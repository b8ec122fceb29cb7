#include <stdexcept>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "doctest.h"
#include "rfx/rng.hpp"
#include "rfx/split.hpp"

using namespace rfx;

namespace {

// Reference Gini straight from the definition, used by the brute-force oracles.
double gini_ref(const std::vector<double>& labels_w, std::size_t classes, const std::vector<std::uint32_t>& labels,
                const std::vector<bool>& member) {
  std::vector<double> counts(classes, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!member[i]) continue;
    counts[labels[i]] += labels_w[i];
    total += labels_w[i];
  }
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

double decrease_ref(const std::vector<double>& w, std::size_t classes, const std::vector<std::uint32_t>& labels,
                    const std::vector<bool>& left) {
  std::vector<bool> all(labels.size(), true);
  std::vector<bool> right(labels.size());
  double nl = 0, nr = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    right[i] = !left[i];
    (left[i] ? nl : nr) += w[i];
  }
  const double n = nl + nr;
  return gini_ref(w, classes, labels, all) - nl / n * gini_ref(w, classes, labels, left) -
         nr / n * gini_ref(w, classes, labels, right);
}

}  // namespace

TEST_CASE("gini") {
  CHECK(gini(std::vector<double>{5, 5}) == doctest::Approx(0.5));
  CHECK(gini(std::vector<double>{10, 0}) == 0.0);
  CHECK(gini(std::vector<double>{2, 1, 1}) == doctest::Approx(0.625));
  CHECK_THROWS_AS(gini(std::vector<double>{0, 0}), std::invalid_argument);
}

TEST_CASE("threshold split on a perfectly separable feature") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<std::uint32_t> y{0, 0, 1, 1};
  const std::vector<double> w(4, 1.0);
  const auto split = best_threshold_split(x, y, w, 2);
  REQUIRE(split);
  CHECK(split->threshold >= 2.0);
  CHECK(split->threshold < 3.0);
  CHECK(split->decrease == doctest::Approx(0.5));
}

TEST_CASE("constant feature yields no split") {
  const std::vector<double> x{7, 7, 7};
  const std::vector<std::uint32_t> y{0, 1, 0};
  CHECK_FALSE(best_threshold_split(x, y, std::vector<double>(3, 1.0), 2));
}

TEST_CASE("threshold tie keeps the smallest candidate") {
  // Both thresholds give decrease 4/9 - 1/3 = 1/9 (hand computation).
  const std::vector<double> x{1, 2, 3};
  const std::vector<std::uint32_t> y{0, 1, 0};
  const auto split = best_threshold_split(x, y, std::vector<double>(3, 1.0), 2);
  REQUIRE(split);
  CHECK(split->threshold == 1.0);
  CHECK(split->decrease == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("threshold split matches brute force on random weighted nodes") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 2 + rng.uniform_index(90);  // crosses the insertion-sort cutoff
    const std::size_t classes = 2 + rng.uniform_index(3);
    std::vector<double> x(m), w(m);
    std::vector<std::uint32_t> y(m);
    for (std::size_t i = 0; i < m; ++i) {
      x[i] = static_cast<double>(rng.uniform_index(12));
      y[i] = static_cast<std::uint32_t>(rng.uniform_index(classes));
      w[i] = static_cast<double>(1 + rng.uniform_index(3));
    }
    std::set<double> unique(x.begin(), x.end());
    double best = -1;
    double best_tau = std::numeric_limits<double>::quiet_NaN();
    for (double tau : unique) {
      if (tau == *unique.rbegin()) break;
      std::vector<bool> left(m);
      for (std::size_t i = 0; i < m; ++i) left[i] = x[i] <= tau;
      const double d = decrease_ref(w, classes, y, left);
      if (d > best + 1e-12) {
        best = d;
        best_tau = tau;
      }
    }
    const auto split = best_threshold_split(x, y, w, classes);
    if (best <= kMinImpurityDecrease) {
      CHECK_FALSE(split);
      continue;
    }
    REQUIRE(split);
    CHECK(split->decrease == doctest::Approx(best).epsilon(1e-12));
    CHECK(split->threshold == best_tau);
  }
}

TEST_CASE("garside examines 2^(K-1)-1 partitions") {
  for (std::size_t k = 2; k <= 6; ++k) {
    std::vector<double> codes;
    std::vector<std::uint32_t> labels;
    for (std::size_t level = 0; level < k; ++level) {
      codes.push_back(static_cast<double>(level));
      labels.push_back(static_cast<std::uint32_t>(level % 2));
    }
    const auto scan = best_garside_split(codes, labels, std::vector<double>(k, 1.0), 2, k);
    CHECK(scan.partitions_examined == garside_partition_count(k));
    REQUIRE(scan.best);
    CHECK((scan.best->left_mask & 1u) == 1u);
    CHECK(scan.best->left_mask != (1u << k) - 1);
  }
  CHECK(garside_partition_count(3) == 3);
}

TEST_CASE("garside with a single level present has no split") {
  const std::vector<double> codes{2, 2, 2};
  const std::vector<std::uint32_t> labels{0, 1, 0};
  const auto scan = best_garside_split(codes, labels, std::vector<double>(3, 1.0), 2, 4);
  CHECK_FALSE(scan.best);
}

TEST_CASE("garside rejects more than 32 levels") {
  const std::vector<double> codes{0, 1};
  const std::vector<std::uint32_t> labels{0, 1};
  CHECK_THROWS_AS(best_garside_split(codes, labels, std::vector<double>(2, 1.0), 2, 33), std::invalid_argument);
}

TEST_CASE("garside K=4 agrees with brute force over all 7 partitions") {
  // Crafted counts: levels 0 and 3 lean class 0, level 1 leans class 1,
  // level 2 is mixed with three classes.
  std::vector<double> codes;
  std::vector<std::uint32_t> labels;
  std::vector<double> weights;
  const auto add = [&](double level, std::uint32_t label, double w, int times) {
    for (int t = 0; t < times; ++t) {
      codes.push_back(level);
      labels.push_back(label);
      weights.push_back(w);
    }
  };
  add(0, 0, 1, 5);
  add(0, 1, 2, 1);
  add(1, 1, 1, 6);
  add(1, 2, 1, 1);
  add(2, 2, 3, 2);
  add(2, 0, 1, 2);
  add(3, 0, 1, 4);
  add(3, 2, 1, 1);

  double best = -1;
  std::uint32_t best_mask = 0;
  int enumerated = 0;
  for (std::uint32_t mask = 1; mask < 15; mask += 2) {  // bit 0 set, not all four
    ++enumerated;
    std::vector<bool> left(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) left[i] = (mask >> static_cast<int>(codes[i])) & 1u;
    const double d = decrease_ref(weights, 3, labels, left);
    if (d > best + 1e-15) {
      best = d;
      best_mask = mask;
    }
  }
  CHECK(enumerated == 7);
  const auto scan = best_garside_split(codes, labels, weights, 3, 4);
  CHECK(scan.partitions_examined == 7);
  REQUIRE(scan.best);
  CHECK(scan.best->left_mask == best_mask);
  CHECK(scan.best->decrease == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("garside matches brute force on random nodes with absent levels") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(6);
    const std::size_t m = 2 + rng.uniform_index(30);
    std::vector<double> codes(m), w(m);
    std::vector<std::uint32_t> y(m);
    for (std::size_t i = 0; i < m; ++i) {
      codes[i] = static_cast<double>(rng.uniform_index(k));
      y[i] = static_cast<std::uint32_t>(rng.uniform_index(3));
      w[i] = static_cast<double>(1 + rng.uniform_index(2));
    }
    std::uint32_t present = 0;
    for (double c : codes) present |= 1u << static_cast<int>(c);
    double best = -1;
    for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
      // Only partitions that split the present levels into two non-empty sides.
      if ((mask & present) == 0 || (mask & present) == present) continue;
      std::vector<bool> left(m);
      for (std::size_t i = 0; i < m; ++i) left[i] = (mask >> static_cast<int>(codes[i])) & 1u;
      best = std::max(best, decrease_ref(w, 3, y, left));
    }
    const auto scan = best_garside_split(codes, y, w, 3, k);
    if (best <= kMinImpurityDecrease) {
      CHECK_FALSE(scan.best);
      continue;
    }
    REQUIRE(scan.best);
    CHECK(scan.best->decrease == doctest::Approx(best).epsilon(1e-12));
    CHECK((scan.best->left_mask & 1u) == 1u);
    const std::uint32_t left_present = scan.best->left_mask & present;
    CHECK(left_present != 0);
    CHECK(left_present != present);
  }
}
