#include "rfx/mds.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "rfx/error.hpp"
#include "rfx/parallel.hpp"
#include "rfx/rng.hpp"
#include "rfx/stats.hpp"

namespace rfx {
namespace {

constexpr std::size_t kStreamBlock = 1024;
constexpr std::size_t kRowChunk = 256;

void check_k(std::size_t k) {
  if (k == 0 || k > kMdsMaxComponents) throw ConfigError("MDS needs between 1 and 8 components");
}

// Largest-magnitude component made positive.
void fix_sign(std::span<double> v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  if (v[arg] < 0)
    for (auto& x : v) x = -x;
}

void center(std::span<double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (auto& x : v) x -= mean;
}

double norm2(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void fill_coordinates(MdsEmbedding& emb, const std::vector<std::vector<double>>& vectors) {
  emb.k = vectors.size();
  emb.coordinates.assign(emb.n * emb.k, 0.0);
  for (std::size_t c = 0; c < emb.k; ++c) {
    const double s = std::sqrt(emb.eigenvalues[c]);
    for (std::size_t i = 0; i < emb.n; ++i) emb.coordinates[i * emb.k + c] = s * vectors[c][i];
  }
}

std::vector<double> pairwise_distances(const MdsEmbedding& e) {
  std::vector<double> d;
  d.reserve(e.n * (e.n - 1) / 2);
  for (std::size_t i = 0; i < e.n; ++i) {
    for (std::size_t j = i + 1; j < e.n; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < e.k; ++c) {
        const double diff = e.coord(i, c) - e.coord(j, c);
        s += diff * diff;
      }
      d.push_back(std::sqrt(s));
    }
  }
  return d;
}

}  // namespace

MdsEmbedding mds_full(const FullTriangle& prox, std::size_t k, std::size_t max_n) {
  check_k(k);
  const std::size_t n = prox.n();
  if (n > max_n) {
    throw ConfigError("dense MDS is limited to " + std::to_string(max_n) + " samples (got " + std::to_string(n) +
                      "); use the low-rank path");
  }
  if (n < 2) throw DataError("MDS needs at least two samples");
  const auto& packed = prox.packed();
  const double pmax = std::max(1.0, *std::max_element(packed.begin(), packed.end()));

  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd g(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    g(i, i) = (pmax - 1.0) * (pmax - 1.0);
    for (Eigen::Index j = i + 1; j < N; ++j) {
      const double d = pmax - packed[FullTriangle::index(n, static_cast<std::size_t>(i), static_cast<std::size_t>(j))];
      g(i, j) = g(j, i) = d * d;
    }
  }
  // G = -1/2 H D2 H
  const Eigen::VectorXd row_mean = g.rowwise().mean();
  const double grand = row_mean.mean();
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j) g(i, j) = -0.5 * (g(i, j) - row_mean(i) - row_mean(j) + grand);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  if (eig.info() != Eigen::Success) throw std::runtime_error("dense eigendecomposition failed");
  const double top = std::abs(eig.eigenvalues()(N - 1));
  const double floor = 1e-12 * std::max(top, 1e-300);

  MdsEmbedding emb;
  emb.n = n;
  std::vector<std::vector<double>> vectors;
  for (std::size_t c = 0; c < std::min(k, n); ++c) {
    const Eigen::Index src = N - 1 - static_cast<Eigen::Index>(c);
    const double lambda = eig.eigenvalues()(src);
    if (!(lambda > floor)) break;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = eig.eigenvectors()(static_cast<Eigen::Index>(i), src);
    fix_sign(v);
    const Eigen::Map<const Eigen::VectorXd> ev(v.data(), N);
    emb.residuals.push_back((g * ev - lambda * ev).norm() / std::abs(lambda));
    emb.eigenvalues.push_back(lambda);
    emb.iterations.push_back(0);
    emb.converged.push_back(true);
    vectors.push_back(std::move(v));
  }
  if (vectors.size() < k) {
    emb.notice = "only " + std::to_string(vectors.size()) + " positive eigenvalues; returning that many columns";
  }
  fill_coordinates(emb, vectors);
  return emb;
}

FullTriangle densify(const ProximityRepr& repr) {
  if (const auto* full = std::get_if<FullTriangle>(&repr)) return *full;
  const std::size_t n = repr_n(repr);
  std::vector<double> packed(n * (n - 1) / 2);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) packed[k++] = entry(repr, i, j);
  return FullTriangle(n, repr_trees(repr), std::move(packed));
}

std::vector<double> gram_matvec(std::span<const double> f, std::size_t n, std::size_t r, double pmax,
                                std::span<const double> v, HadamardPath path) {
  if (f.size() != n * r || v.size() != n) throw std::invalid_argument("gram_matvec: dimension mismatch");
  auto row = [&](std::size_t i) { return f.subspan(i * r, r); };

  std::vector<double> u(v.begin(), v.end());
  center(u);
  const double sum_u = std::accumulate(u.begin(), u.end(), 0.0);

  const std::size_t chunks = (n + kRowChunk - 1) / kRowChunk;
  // F^T u and F^T diag(u) F, per chunk then merged in order.
  std::vector<std::vector<double>> ft_u(chunks, std::vector<double>(r, 0.0));
  std::vector<std::vector<double>> w(chunks);
  const bool implicit = path == HadamardPath::kImplicitKhatriRao;
  parallel_for(chunks, [&](std::size_t c) {
    if (implicit) w[c].assign(r * r, 0.0);
    const std::size_t end = std::min(n, (c + 1) * kRowChunk);
    for (std::size_t i = c * kRowChunk; i < end; ++i) {
      const auto fi = row(i);
      for (std::size_t a = 0; a < r; ++a) {
        ft_u[c][a] += fi[a] * u[i];
        if (!implicit) continue;
        const double s = fi[a] * u[i];
        for (std::size_t b = 0; b < r; ++b) w[c][a * r + b] += s * fi[b];
      }
    }
  });
  std::vector<double> ftu(r, 0.0), wm(implicit ? r * r : 0, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t a = 0; a < r; ++a) ftu[a] += ft_u[c][a];
    for (std::size_t a = 0; a < wm.size(); ++a) wm[a] += w[c][a];
  }

  std::vector<double> z(n);
  if (implicit) {
    // (P o P) u at row i = F_i W F_i^T with W = F^T diag(u) F.
    parallel_for(chunks, [&](std::size_t c) {
      const std::size_t end = std::min(n, (c + 1) * kRowChunk);
      std::vector<double> tmp(r);
      for (std::size_t i = c * kRowChunk; i < end; ++i) {
        const auto fi = row(i);
        for (std::size_t b = 0; b < r; ++b) {
          double s = 0;
          for (std::size_t a = 0; a < r; ++a) s += fi[a] * wm[a * r + b];
          tmp[b] = s;
        }
        z[i] = pmax * pmax * sum_u - 2.0 * pmax * dot(fi, ftu) + dot(tmp, fi);
      }
    });
  } else {
    const std::size_t blocks = (n + kStreamBlock - 1) / kStreamBlock;
    parallel_for(blocks, [&](std::size_t blk) {
      const std::size_t end = std::min(n, (blk + 1) * kStreamBlock);
      for (std::size_t i = blk * kStreamBlock; i < end; ++i) {
        const auto fi = row(i);
        double had = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const double p = dot(fi, row(j));
          had += p * p * u[j];
        }
        z[i] = pmax * pmax * sum_u - 2.0 * pmax * dot(fi, ftu) + had;
      }
    });
  }
  center(z);
  for (auto& x : z) x *= -0.5;
  return z;
}

std::vector<double> gram_matvec(const LowRankQuantized& lowrank, std::span<const double> v, HadamardPath path) {
  return gram_matvec(lowrank.dequantized(), lowrank.n(), lowrank.rank(), lowrank.pmax(), v, path);
}

MdsEmbedding mds_lowrank(std::span<const double> factor, std::size_t n, std::size_t r, double pmax,
                         const PowerIterConfig& config) {
  check_k(config.k);
  if (!(config.tol > 0.0)) throw ConfigError("power iteration tolerance must be positive");
  if (config.max_iterations == 0) throw ConfigError("power iteration needs at least one iteration");
  if (n < 2) throw DataError("MDS needs at least two samples");

  MdsEmbedding emb;
  emb.n = n;
  std::vector<std::vector<double>> vectors;
  auto op = [&](std::span<const double> x) { return gram_matvec(factor, n, r, pmax, x, config.path); };

  for (std::size_t c = 0; c < std::min(config.k, n - 1); ++c) {
    Rng rng(config.seed + c);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    center(v);
    for (const auto& prev : vectors) {
      const double proj = dot(prev, v);
      for (std::size_t i = 0; i < n; ++i) v[i] -= proj * prev[i];
    }
    double nv = norm2(v);
    for (auto& x : v) x /= nv;

    auto deflated = [&](std::span<const double> x) {
      auto y = op(x);
      for (std::size_t p = 0; p < vectors.size(); ++p) {
        const double s = emb.eigenvalues[p] * dot(vectors[p], x);
        for (std::size_t i = 0; i < n; ++i) y[i] -= s * vectors[p][i];
      }
      return y;
    };

    double lambda = 0.0;
    std::size_t it = 0;
    bool converged = false;
    while (it < config.max_iterations) {
      ++it;
      auto w = deflated(v);
      lambda = dot(v, w);
      const double nw = norm2(w);
      if (nw == 0.0) {
        lambda = 0.0;
        converged = true;
        break;
      }
      for (auto& x : w) x /= nw;
      const double sign = dot(w, v) < 0 ? -1.0 : 1.0;
      double change = 0;
      for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(w[i] - sign * v[i]));
      v = std::move(w);
      if (change < config.tol) {
        converged = true;
        break;
      }
    }
    lambda = dot(v, deflated(v));
    if (!(lambda > 0.0)) {
      emb.notice = "eigenvalue " + std::to_string(c + 1) + " is not positive; returning " + std::to_string(c) +
                   " columns";
      break;
    }
    fix_sign(v);
    // Residual against the undeflated operator.
    const auto gv = op(v);
    double res = 0;
    for (std::size_t i = 0; i < n; ++i) res += (gv[i] - lambda * v[i]) * (gv[i] - lambda * v[i]);
    emb.residuals.push_back(std::sqrt(res) / std::abs(lambda));
    emb.eigenvalues.push_back(lambda);
    emb.iterations.push_back(it);
    emb.converged.push_back(converged);
    vectors.push_back(std::move(v));
  }
  if (vectors.size() < config.k && emb.notice.empty()) {
    emb.notice = "only " + std::to_string(vectors.size()) + " components available";
  }
  fill_coordinates(emb, vectors);
  return emb;
}

MdsEmbedding mds_lowrank(const LowRankQuantized& lowrank, const PowerIterConfig& config) {
  return mds_lowrank(lowrank.dequantized(), lowrank.n(), lowrank.rank(), lowrank.pmax(), config);
}

double mds_correlation(const MdsEmbedding& a, const MdsEmbedding& b) {
  if (a.n != b.n) throw DataError("embeddings differ in sample count");
  if (a.n < 3) throw DataError("correlation needs at least three samples");
  const auto da = pairwise_distances(a);
  const auto db = pairwise_distances(b);
  auto flat = [](const std::vector<double>& d) {
    return std::all_of(d.begin(), d.end(), [&](double x) { return x == d.front(); });
  };
  if (flat(da) || flat(db)) throw DataError("an embedding has zero-variance pairwise distances");
  return pearson(da, db);
}

double procrustes_residual(const MdsEmbedding& a, const MdsEmbedding& b) {
  if (a.n != b.n) throw DataError("embeddings differ in sample count");
  const std::size_t k = std::min(a.k, b.k);
  const auto n = static_cast<Eigen::Index>(a.n);
  Eigen::MatrixXd A(n, static_cast<Eigen::Index>(k)), B(n, static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      A(i, static_cast<Eigen::Index>(c)) = a.coord(static_cast<std::size_t>(i), c);
      B(i, static_cast<Eigen::Index>(c)) = b.coord(static_cast<std::size_t>(i), c);
    }
  }
  A.rowwise() -= A.colwise().mean();
  B.rowwise() -= B.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A.transpose() * B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd rot = svd.matrixU() * svd.matrixV().transpose();
  const double denom = B.norm();
  return denom == 0.0 ? (A * rot - B).norm() : (A * rot - B).norm() / denom;
}

std::string embedding_csv(const MdsEmbedding& emb, std::span<const std::string> labels) {
  std::ostringstream out;
  out.precision(17);
  out << "sample_id,x,y,z,label\n";
  for (std::size_t i = 0; i < emb.n; ++i) {
    out << i;
    for (std::size_t c = 0; c < 3; ++c) {
      out << ',';
      if (c < emb.k) out << emb.coord(i, c);
      else out << 0;
    }
    out << ',' << (i < labels.size() ? labels[i] : std::string()) << '\n';
  }
  return out.str();
}

std::string embedding_json(const MdsEmbedding& emb) {
  nlohmann::json coords = nlohmann::json::array();
  for (std::size_t i = 0; i < emb.n; ++i) {
    coords.push_back(std::vector<double>(emb.coordinates.begin() + static_cast<std::ptrdiff_t>(i * emb.k),
                                         emb.coordinates.begin() + static_cast<std::ptrdiff_t>((i + 1) * emb.k)));
  }
  std::vector<bool> conv(emb.converged.begin(), emb.converged.end());
  nlohmann::json j{{"n", emb.n},
                   {"k", emb.k},
                   {"coordinates", std::move(coords)},
                   {"eigenvalues", emb.eigenvalues},
                   {"residuals", emb.residuals},
                   {"iterations", emb.iterations},
                   {"converged", conv}};
  if (!emb.notice.empty()) j["notice"] = emb.notice;
  return j.dump(2);
}

MdsEmbedding embedding_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MdsEmbedding emb;
    emb.n = j.at("n").get<std::size_t>();
    emb.k = j.at("k").get<std::size_t>();
    const auto& coords = j.at("coordinates");
    if (coords.size() != emb.n) throw DataError("embedding JSON: coordinate rows do not match n");
    for (const auto& row : coords) {
      if (row.size() != emb.k) throw DataError("embedding JSON: coordinate row width does not match k");
      for (const auto& x : row) emb.coordinates.push_back(x.get<double>());
    }
    emb.eigenvalues = j.value("eigenvalues", std::vector<double>{});
    emb.residuals = j.value("residuals", std::vector<double>{});
    return emb;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("embedding JSON: ") + e.what());
  }
}

}  // namespace rfx
