#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rfx/proximity.hpp"

namespace rfx {

struct MdsEmbedding {
  std::size_t n = 0;
  std::size_t k = 0;                    // columns actually returned
  std::vector<double> coordinates;      // n x k row-major
  std::vector<double> eigenvalues;      // descending
  std::vector<double> residuals;        // ||G v - lambda v|| / ||lambda v||
  std::vector<std::size_t> iterations;  // 0 for the dense solver
  std::vector<bool> converged;
  std::string notice;                   // set when fewer than the requested columns

  double coord(std::size_t i, std::size_t c) const { return coordinates[i * k + c]; }
};

inline constexpr std::size_t kMdsMaxComponents = 8;
inline constexpr std::size_t kDenseMdsLimit = 5000;

/// Classical MDS from the dense matrix, via a full symmetric eigendecomposition.
MdsEmbedding mds_full(const FullTriangle& prox, std::size_t k = 3, std::size_t max_n = kDenseMdsLimit);

/// Dense copy of any representation (TriBlock and low-rank through entry()).
FullTriangle densify(const ProximityRepr& repr);

enum class HadamardPath { kImplicitKhatriRao, kRowStreaming };

/// G v for P = F F^T with F row-major n x r, never forming an n x n matrix.
std::vector<double> gram_matvec(std::span<const double> factor, std::size_t n, std::size_t r, double pmax,
                                std::span<const double> v, HadamardPath path = HadamardPath::kImplicitKhatriRao);
std::vector<double> gram_matvec(const LowRankQuantized& lowrank, std::span<const double> v,
                                HadamardPath path = HadamardPath::kImplicitKhatriRao);

struct PowerIterConfig {
  std::size_t max_iterations = 300;
  double tol = 1e-8;
  std::size_t k = 3;
  std::uint64_t seed = 1;
  HadamardPath path = HadamardPath::kImplicitKhatriRao;
};

/// Power iteration with implicit deflation on the low-rank Gram operator.
MdsEmbedding mds_lowrank(const LowRankQuantized& lowrank, const PowerIterConfig& config = {});
MdsEmbedding mds_lowrank(std::span<const double> factor, std::size_t n, std::size_t r, double pmax,
                         const PowerIterConfig& config = {});

/// Pearson correlation of the two pairwise-distance vectors.
double mds_correlation(const MdsEmbedding& a, const MdsEmbedding& b);

/// ||A R - B||_F / ||B||_F for the best orthogonal R, over the shared columns.
double procrustes_residual(const MdsEmbedding& a, const MdsEmbedding& b);

/// sample_id,x,y,z,label
std::string embedding_csv(const MdsEmbedding& emb, std::span<const std::string> labels = {});
std::string embedding_json(const MdsEmbedding& emb);
MdsEmbedding embedding_from_json(const std::string& text);

}  // namespace rfx
