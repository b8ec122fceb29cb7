#include <cmath>
#include <numeric>

#include "dense_oracle.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "rfx/error.hpp"
#include "rfx/mds.hpp"
#include "rfx/rng.hpp"

using namespace rfx;
using namespace rfx::testing;

namespace {

Dense dense_of(const FullTriangle& full) {
  Dense p(full.n(), std::vector<double>(full.n()));
  for (std::size_t i = 0; i < full.n(); ++i)
    for (std::size_t j = 0; j < full.n(); ++j) p[i][j] = full.entry(i, j);
  return p;
}

// P = F F^T exactly as the low-rank operator sees it (no clamping, no unit diagonal).
Dense dense_of_factor(const LowRankQuantized& low) {
  Dense p(low.n(), std::vector<double>(low.n()));
  for (std::size_t i = 0; i < low.n(); ++i)
    for (std::size_t j = 0; j < low.n(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < low.rank(); ++k) s += low.row(i)[k] * low.row(j)[k];
      p[i][j] = s;
    }
  return p;
}

LeafMembership forest_membership(const Dataset& data, std::size_t trees, std::uint64_t seed) {
  TrainConfig config;
  config.ntree = trees;
  config.iseed = seed;
  return leaf_membership(train(data, config), data);
}

MdsEmbedding rotate(const MdsEmbedding& e, double angle) {
  MdsEmbedding out = e;
  for (std::size_t i = 0; i < e.n; ++i) {
    const double x = e.coord(i, 0), y = e.coord(i, 1);
    out.coordinates[i * e.k] = std::cos(angle) * x - std::sin(angle) * y + 3.0;
    out.coordinates[i * e.k + 1] = std::sin(angle) * x + std::cos(angle) * y - 1.0;
  }
  return out;
}

}  // namespace

TEST_CASE("constant off-diagonal proximity gives an equilateral triangle") {
  const double c = 0.3;
  const auto emb = mds_full(FullTriangle(3, 10, {c, c, c}));
  REQUIRE(emb.k == 2);
  CHECK(emb.notice.find("2 positive") != std::string::npos);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      const double d = std::hypot(emb.coord(i, 0) - emb.coord(j, 0), emb.coord(i, 1) - emb.coord(j, 1));
      CHECK(d == doctest::Approx(1.0 - c));
    }
  }
}

TEST_CASE("dense MDS eigenvalues match an independent Jacobi solver") {
  const auto data = make_uneven_clusters(20, 3);
  const auto full = full_proximity(forest_membership(data, 40, 2));
  const auto emb = mds_full(full, 3);
  const auto jacobi = jacobi_eigenvalues(gram_from_proximity(dense_of(full), 1.0));
  REQUIRE(emb.k == 3);
  for (std::size_t c = 0; c < 3; ++c) CHECK(emb.eigenvalues[c] == doctest::Approx(jacobi[c]).epsilon(1e-8));
}

TEST_CASE("embedding invariants") {
  const auto wine = load_wine();
  const auto full = full_proximity(forest_membership(wine, 100, 4));
  const auto emb = mds_full(full, 3);
  REQUIRE(emb.k == 3);
  CHECK(emb.eigenvalues[0] >= emb.eigenvalues[1]);
  CHECK(emb.eigenvalues[1] >= emb.eigenvalues[2]);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < emb.n; ++i) {
      sum += emb.coord(i, c);
      sq += emb.coord(i, c) * emb.coord(i, c);
    }
    CHECK(std::abs(sum) <= 1e-8 * emb.n);
    CHECK(sq == doctest::Approx(emb.eigenvalues[c]).epsilon(1e-6));
    CHECK(emb.residuals[c] <= 1e-6);
    for (std::size_t d = c + 1; d < 3; ++d) {
      double cross = 0;
      for (std::size_t i = 0; i < emb.n; ++i) cross += emb.coord(i, c) * emb.coord(i, d);
      CHECK(std::abs(cross) <= 1e-6 * std::sqrt(emb.eigenvalues[c] * emb.eigenvalues[d]));
    }
  }
  CHECK_THROWS_AS(mds_full(full, 3, 100), ConfigError);
  CHECK_THROWS_AS(mds_full(full, 9), ConfigError);
}

TEST_CASE("gram_matvec agrees with the dense construction") {
  const auto data = make_uneven_clusters(30, 5);
  const auto m = forest_membership(data, 50, 3);
  const auto full = full_proximity(m);
  Rng rng(6);
  std::vector<double> v(30);
  for (auto& x : v) x = rng.normal();

  SUBCASE("full-rank F32 factor against the exact matrix") {
    LowRankOptions opt;
    opt.rank = 30;
    opt.mode = QuantMode::kF32;
    const auto low = lowrank_proximity(m, opt);
    const auto expect = multiply(gram_from_proximity(dense_of(full), low.pmax()), v);
    const auto got = gram_matvec(low, v);
    for (std::size_t i = 0; i < 30; ++i) CHECK(std::abs(got[i] - expect[i]) <= 1e-6);
  }
  SUBCASE("every mode against its own dense operator, both Hadamard paths") {
    const std::pair<QuantMode, double> modes[] = {
        {QuantMode::kF32, 1e-6}, {QuantMode::kF16, 1e-3}, {QuantMode::kI8, 1e-3}, {QuantMode::kNF4, 5e-3}};
    for (auto [mode, tol] : modes) {
      for (std::size_t rank : {5u, 30u}) {
        LowRankOptions opt;
        opt.rank = rank;
        opt.mode = mode;
        const auto low = lowrank_proximity(m, opt);
        const auto expect = multiply(gram_from_proximity(dense_of_factor(low), low.pmax()), v);
        const auto kr = gram_matvec(low, v, HadamardPath::kImplicitKhatriRao);
        const auto stream = gram_matvec(low, v, HadamardPath::kRowStreaming);
        for (std::size_t i = 0; i < 30; ++i) {
          CHECK(std::abs(kr[i] - expect[i]) <= tol);
          CHECK(std::abs(stream[i] - kr[i]) <= 1e-10);
        }
      }
    }
  }
  SUBCASE("constant vectors vanish and the map is linear") {
    LowRankOptions opt;
    opt.rank = 12;
    const auto low = lowrank_proximity(m, opt);
    for (double x : gram_matvec(low, std::vector<double>(30, 2.5))) CHECK(std::abs(x) <= 1e-12);
    std::vector<double> scaled(v);
    for (auto& x : scaled) x *= -3.0;
    const auto a = gram_matvec(low, v);
    const auto b = gram_matvec(low, scaled);
    for (std::size_t i = 0; i < 30; ++i) CHECK(b[i] == doctest::Approx(-3.0 * a[i]).epsilon(1e-12));
  }
}

TEST_CASE("gram_matvec crosses row chunk and stream block boundaries") {
  Rng rng(9);
  const std::size_t n = 1100, r = 6;
  std::vector<double> f(n * r), v(n);
  for (auto& x : f) x = rng.normal() * 0.3;
  for (auto& x : v) x = rng.normal();
  const auto a = gram_matvec(f, n, r, 1.0, v, HadamardPath::kImplicitKhatriRao);
  const auto b = gram_matvec(f, n, r, 1.0, v, HadamardPath::kRowStreaming);
  for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
}

TEST_CASE("power iteration matches the dense embedding") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto data = make_uneven_clusters(30 + 40 * seed, seed);
    const auto m = forest_membership(data, 60, seed);
    LowRankOptions opt;
    opt.rank = data.n();
    opt.mode = QuantMode::kF32;
    const auto low = lowrank_proximity(m, opt);
    PowerIterConfig config;
    config.max_iterations = 20000;
    const auto power = mds_lowrank(low, config);
    const auto dense = mds_full(full_proximity(m));
    REQUIRE(power.k == 3);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(power.converged[c]);
      CHECK(power.residuals[c] <= 1e-6);
      CHECK(power.eigenvalues[c] == doctest::Approx(dense.eigenvalues[c]).epsilon(1e-5));
    }
    CHECK(procrustes_residual(power, dense) <= 1e-4);
  }
}

TEST_CASE("identical leaf patterns collapse the embedding") {
  const LeafMembership m(12, {1, 1, 1}, std::vector<std::uint32_t>(36, 0));
  LowRankOptions opt;
  opt.rank = 1;
  opt.mode = QuantMode::kF32;
  const auto emb = mds_lowrank(lowrank_proximity(m, opt));
  CHECK(emb.k <= 1);
  CHECK_FALSE(emb.notice.empty());
}

TEST_CASE("iteration cap is not fatal") {
  const auto data = make_uneven_clusters(40, 8);
  LowRankOptions opt;
  opt.rank = 10;
  PowerIterConfig config;
  config.max_iterations = 2;
  const auto emb = mds_lowrank(lowrank_proximity(forest_membership(data, 30, 8), opt), config);
  CHECK(emb.k == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(emb.iterations[c] == 2);
    CHECK(emb.residuals[c] >= 0.0);
  }
}

TEST_CASE("mds_correlation") {
  const auto wine = load_wine();
  const auto m = forest_membership(wine, 100, 2);
  const auto emb = mds_full(full_proximity(m));
  CHECK(mds_correlation(emb, emb) == doctest::Approx(1.0));
  CHECK(mds_correlation(emb, rotate(emb, 0.7)) == doctest::Approx(1.0));
  LowRankOptions opt;
  opt.rank = 8;
  const auto low = mds_lowrank(lowrank_proximity(m, opt));
  CHECK(mds_correlation(emb, low) == mds_correlation(low, emb));
  MdsEmbedding flat = emb;
  std::fill(flat.coordinates.begin(), flat.coordinates.end(), 0.0);
  CHECK_THROWS_AS(mds_correlation(emb, flat), DataError);
  CHECK(procrustes_residual(emb, rotate(emb, 1.1)) <= 1e-12);
}

TEST_CASE("TriBlock and full embeddings agree on wine") {
  const auto wine = load_wine();
  const auto m = forest_membership(wine, 300, 7);
  const auto a = mds_full(full_proximity(m));
  const auto b = mds_full(densify(triblock_proximity(m)));
  CHECK(mds_correlation(a, b) >= 0.999);
}

TEST_CASE("embedding exports") {
  const auto emb = mds_full(FullTriangle(4, 2, {0.5, 0.0, 0.0, 0.0, 0.0, 0.5}));
  const std::vector<std::string> labels{"a", "a", "b", "b"};
  const auto csv = embedding_csv(emb, labels);
  CHECK(csv.rfind("sample_id,x,y,z,label\n0,", 0) == 0);
  CHECK(csv.find(",b\n") != std::string::npos);
  const auto back = embedding_from_json(embedding_json(emb));
  CHECK(back.n == emb.n);
  CHECK(back.k == emb.k);
  CHECK(back.coordinates == emb.coordinates);
  CHECK_THROWS_AS(embedding_from_json("{\"n\": 2}"), DataError);
}
