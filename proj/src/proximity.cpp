#include "rfx/proximity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "json.hpp"
#include "rfx/error.hpp"
#include "rfx/parallel.hpp"
#include "rfx/rng.hpp"

namespace rfx {
namespace {

constexpr std::size_t kRowsPerChunk = 64;
constexpr std::size_t kPmaxSamples = 1024;

void check_index(std::size_t n, std::size_t i, std::size_t j) {
  if (i >= n || j >= n) {
    throw std::out_of_range("proximity index (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") out of range for n = " + std::to_string(n));
  }
}

// Members of every leaf, per tree, as CSR over sample indices (ascending).
struct LeafMembers {
  std::vector<std::vector<std::uint32_t>> starts;   // per tree, leaf_count + 1
  std::vector<std::vector<std::uint32_t>> samples;  // per tree, n

  explicit LeafMembers(const LeafMembership& m) : starts(m.tree_count()), samples(m.tree_count()) {
    parallel_for(m.tree_count(), [&](std::size_t b) {
      auto& start = starts[b];
      auto& list = samples[b];
      start.assign(m.leaf_count(b) + 1, 0);
      for (auto code : m.tree_codes(b)) ++start[code + 1];
      std::partial_sum(start.begin(), start.end(), start.begin());
      list.resize(m.n());
      auto cursor = start;
      for (std::size_t i = 0; i < m.n(); ++i) list[cursor[m.code(b, i)]++] = static_cast<std::uint32_t>(i);
    });
  }
};

// Calls emit(i, counts) for each row in the chunk; counts[j] for j > i holds
// the number of trees co-locating i and j.
template <typename Emit>
void count_rows(const LeafMembership& m, const LeafMembers& members, std::size_t chunk, Emit&& emit) {
  const std::size_t n = m.n();
  std::vector<std::uint32_t> counts(n);
  const std::size_t begin = chunk * kRowsPerChunk;
  const std::size_t end = std::min(n, begin + kRowsPerChunk);
  for (std::size_t i = begin; i < end; ++i) {
    std::fill(counts.begin() + static_cast<std::ptrdiff_t>(i), counts.end(), 0u);
    for (std::size_t b = 0; b < m.tree_count(); ++b) {
      const auto leaf = m.code(b, i);
      const auto& list = members.samples[b];
      auto first = list.begin() + members.starts[b][leaf];
      const auto last = list.begin() + members.starts[b][leaf + 1];
      first = std::upper_bound(first, last, static_cast<std::uint32_t>(i));
      for (; first != last; ++first) ++counts[*first];
    }
    emit(i, std::span<const std::uint32_t>(counts));
  }
}

std::size_t chunk_count(std::size_t n) { return (n + kRowsPerChunk - 1) / kRowsPerChunk; }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

std::vector<double> row_major(const std::vector<double>& column_major, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = column_major[c * rows + r];
  return out;
}

// Implicit products with M / sqrt(B), M the n x L one-hot leaf matrix.
Eigen::MatrixXd times_m(const LeafMembership& m, const Eigen::MatrixXd& x) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.tree_count()));
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.n()), x.cols());
  parallel_for(static_cast<std::size_t>(x.cols()), [&](std::size_t c) {
    for (std::size_t b = 0; b < m.tree_count(); ++b) {
      const auto offset = static_cast<Eigen::Index>(m.leaf_offset(b));
      for (std::size_t i = 0; i < m.n(); ++i) y(static_cast<Eigen::Index>(i), c) += x(offset + m.code(b, i), c);
    }
  });
  return y * scale;
}

Eigen::MatrixXd times_mt(const LeafMembership& m, const Eigen::MatrixXd& y) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.tree_count()));
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.total_leaves()), y.cols());
  parallel_for(static_cast<std::size_t>(y.cols()), [&](std::size_t c) {
    for (std::size_t b = 0; b < m.tree_count(); ++b) {
      const auto offset = static_cast<Eigen::Index>(m.leaf_offset(b));
      for (std::size_t i = 0; i < m.n(); ++i) x(offset + m.code(b, i), c) += y(static_cast<Eigen::Index>(i), c);
    }
  });
  return x * scale;
}

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
}

}  // namespace

// ---- LeafMembership --------------------------------------------------------

LeafMembership::LeafMembership(std::size_t n, std::vector<std::uint32_t> leaf_counts, std::vector<std::uint32_t> codes)
    : n_(n), leaf_counts_(std::move(leaf_counts)), codes_(std::move(codes)) {
  if (codes_.size() != n_ * leaf_counts_.size()) throw std::invalid_argument("LeafMembership: code table size mismatch");
  leaf_offsets_.assign(leaf_counts_.size() + 1, 0);
  for (std::size_t b = 0; b < leaf_counts_.size(); ++b) {
    leaf_offsets_[b + 1] = leaf_offsets_[b] + leaf_counts_[b];
    for (std::size_t i = 0; i < n_; ++i) {
      if (codes_[b * n_ + i] >= leaf_counts_[b]) throw std::invalid_argument("LeafMembership: code out of range");
    }
  }
}

LeafMembership leaf_membership(const Forest& forest, const Dataset& data) {
  forest.check_compatible(data);
  const std::size_t n = data.n();
  const std::size_t trees = forest.tree_count();
  std::vector<std::uint32_t> leaf_counts(trees);
  std::vector<std::uint32_t> codes(trees * n);
  parallel_for(trees, [&](std::size_t b) {
    const Tree& tree = forest.tree(b);
    leaf_counts[b] = static_cast<std::uint32_t>(tree.leaf_count());
    for (std::size_t i = 0; i < n; ++i) {
      codes[b * n + i] = static_cast<std::uint32_t>(tree.leaf_ordinal(classify(tree, data, i)));
    }
  });
  return LeafMembership(n, std::move(leaf_counts), std::move(codes));
}

// ---- budget ----------------------------------------------------------------

void check_budget(std::size_t n, std::size_t trees, ProximityBackend backend, ProximityBudget budget) {
  if (budget.bytes == 0) return;
  PlanInput input;
  input.samples = n;
  input.trees = trees;
  input.backend = backend;
  const MemoryPlan plan = memory_plan(input);
  if (plan.selected_bytes <= budget.bytes) return;
  std::ostringstream msg;
  msg << backend_name(backend) << " proximity for n = " << n << " needs about " << plan.selected_bytes
      << " bytes, over the budget of " << budget.bytes << " bytes; use "
      << (backend == ProximityBackend::kFull ? "--backend triblock or --backend lowrank" : "--backend lowrank");
  throw BudgetError(msg.str(), plan_text(plan));
}

// ---- FullTriangle ----------------------------------------------------------

FullTriangle::FullTriangle(std::size_t n, std::size_t trees, std::vector<double> packed)
    : n_(n), trees_(trees), packed_(std::move(packed)) {
  if (packed_.size() != n_ * (n_ - (n_ > 0 ? 1 : 0)) / 2) throw std::invalid_argument("FullTriangle: packed size mismatch");
}

double FullTriangle::entry(std::size_t i, std::size_t j) const {
  check_index(n_, i, j);
  if (i == j) return 1.0;
  if (i > j) std::swap(i, j);
  return packed_[index(n_, i, j)];
}

FullTriangle full_proximity(const LeafMembership& membership, ProximityBudget budget) {
  const std::size_t n = membership.n();
  check_budget(n, membership.tree_count(), ProximityBackend::kFull, budget);
  const LeafMembers members(membership);
  const double trees = static_cast<double>(membership.tree_count());
  std::vector<double> packed(n * (n - 1) / 2);
  parallel_for(chunk_count(n), [&](std::size_t chunk) {
    count_rows(membership, members, chunk, [&](std::size_t i, std::span<const std::uint32_t> counts) {
      double* out = packed.data() + FullTriangle::index(n, i, i + 1);
      for (std::size_t j = i + 1; j < n; ++j) *out++ = counts[j] / trees;
    });
  });
  return FullTriangle(n, membership.tree_count(), std::move(packed));
}

// ---- TriBlock --------------------------------------------------------------

TriBlock::TriBlock(std::size_t n, std::size_t trees, double tau, std::vector<TriBlockEntry> dense,
                   std::vector<TriBlockEntry> sparse)
    : n_(n), trees_(trees), tau_(tau), sparse_(std::move(sparse)) {
  dense_.reserve(dense.size());
  for (const auto& e : dense) dense_.emplace(key(e.i, e.j), e.value);
  std::sort(sparse_.begin(), sparse_.end(),
            [](const auto& a, const auto& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
}

double TriBlock::entry(std::size_t i, std::size_t j) const {
  check_index(n_, i, j);
  if (i == j) return 1.0;
  if (i > j) std::swap(i, j);
  if (const auto it = dense_.find(key(i, j)); it != dense_.end()) return it->second;
  const TriBlockEntry probe{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), 0.0};
  const auto it = std::lower_bound(sparse_.begin(), sparse_.end(), probe, [](const auto& a, const auto& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  if (it != sparse_.end() && it->i == i && it->j == j) return it->value;
  return 0.0;
}

std::vector<TriBlockEntry> TriBlock::dense_entries() const {
  std::vector<TriBlockEntry> out;
  out.reserve(dense_.size());
  for (const auto& [k, v] : dense_) {
    out.push_back({static_cast<std::uint32_t>(k >> 32), static_cast<std::uint32_t>(k & 0xffffffffu), v});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });
  return out;
}

std::uint64_t TriBlock::stored_bytes() const noexcept {
  return (dense_.size() + sparse_.size()) * (sizeof(std::uint64_t) + sizeof(double));
}

double TriBlock::compression_ratio() const noexcept {
  const double pairs = static_cast<double>(n_) * static_cast<double>(n_ - 1) / 2.0;
  const double stored = static_cast<double>(dense_.size() + sparse_.size());
  return stored == 0.0 ? pairs : pairs / stored;
}

bool TriBlock::operator==(const TriBlock& other) const {
  return n_ == other.n_ && trees_ == other.trees_ && tau_ == other.tau_ && sparse_ == other.sparse_ &&
         dense_entries() == other.dense_entries();
}

TriBlock triblock_proximity(const LeafMembership& membership, double tau, ProximityBudget budget) {
  if (!(tau > kTriBlockZero && tau < 1.0)) throw ConfigError("TriBlock threshold must lie in (1e-6, 1)");
  const std::size_t n = membership.n();
  check_budget(n, membership.tree_count(), ProximityBackend::kTriBlock, budget);
  const LeafMembers members(membership);
  const double trees = static_cast<double>(membership.tree_count());
  const std::size_t chunks = chunk_count(n);
  std::vector<std::vector<TriBlockEntry>> dense(chunks), sparse(chunks);
  parallel_for(chunks, [&](std::size_t chunk) {
    count_rows(membership, members, chunk, [&](std::size_t i, std::span<const std::uint32_t> counts) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double p = counts[j] / trees;
        if (p >= tau) dense[chunk].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), p});
        else if (p >= kTriBlockZero) sparse[chunk].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), p});
      }
    });
  });
  std::vector<TriBlockEntry> all_dense, all_sparse;
  for (std::size_t c = 0; c < chunks; ++c) {
    all_dense.insert(all_dense.end(), dense[c].begin(), dense[c].end());
    all_sparse.insert(all_sparse.end(), sparse[c].begin(), sparse[c].end());
  }
  return TriBlock(n, membership.tree_count(), tau, std::move(all_dense), std::move(all_sparse));
}

// ---- LowRankQuantized ------------------------------------------------------

LowRankQuantized::LowRankQuantized(std::size_t trees, double pmax, QuantizedMatrix factor, std::string notice)
    : trees_(trees), pmax_(pmax), factor_(std::move(factor)), notice_(std::move(notice)) {
  dense_ = row_major(factor_.dequantize(), factor_.rows, factor_.cols);
}

double LowRankQuantized::entry(std::size_t i, std::size_t j) const {
  check_index(n(), i, j);
  if (i == j) return 1.0;
  return std::clamp(dot(row(i), row(j)), 0.0, 1.0);
}

std::vector<double> lowrank_factor(const LeafMembership& m, std::size_t rank, std::size_t oversampling,
                                   std::size_t power_iterations, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(m.n());
  const auto leaves = static_cast<Eigen::Index>(m.total_leaves());
  const auto r = static_cast<Eigen::Index>(rank);
  const Eigen::Index width = std::min({r + static_cast<Eigen::Index>(oversampling), n, leaves});

  Rng rng(seed);
  Eigen::MatrixXd omega(leaves, width);
  for (Eigen::Index c = 0; c < width; ++c)
    for (Eigen::Index k = 0; k < leaves; ++k) omega(k, c) = rng.normal();

  Eigen::MatrixXd basis = orthonormal_basis(times_m(m, omega));
  for (std::size_t q = 0; q < power_iterations; ++q) {
    const Eigen::MatrixXd z = orthonormal_basis(times_mt(m, basis));
    basis = orthonormal_basis(times_m(m, z));
  }
  // Small problem: (basis^T M)(basis^T M)^T = U S^2 U^T.
  const Eigen::MatrixXd c = times_mt(m, basis);
  const Eigen::MatrixXd small = c.transpose() * c;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(small);
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, r);
  for (Eigen::Index k = 0; k < r; ++k) {
    const Eigen::Index src = width - 1 - k;  // eigenvalues ascending
    const double lambda = std::max(0.0, eig.eigenvalues()(src));
    Eigen::VectorXd col = basis * eig.eigenvectors().col(src) * std::sqrt(lambda);
    Eigen::Index arg;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0) col = -col;
    f.col(k) = col;
  }
  std::vector<double> out(static_cast<std::size_t>(n * r));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < r; ++k) out[static_cast<std::size_t>(i * r + k)] = f(i, k);
  return out;
}

LowRankQuantized lowrank_proximity(const LeafMembership& m, const LowRankOptions& options) {
  if (options.rank == 0) throw ConfigError("low-rank proximity needs rank >= 1");
  const std::size_t limit = std::min<std::uint64_t>(m.n(), m.total_leaves());
  std::size_t rank = options.rank;
  std::string notice;
  if (rank > limit) {
    notice = "rank " + std::to_string(rank) + " exceeds the membership rank bound " + std::to_string(limit) +
             "; using rank " + std::to_string(limit);
    rank = limit;
  }
  const auto factor = lowrank_factor(m, rank, options.oversampling, options.power_iterations, options.seed);
  std::vector<double> column_major(factor.size());
  for (std::size_t i = 0; i < m.n(); ++i)
    for (std::size_t k = 0; k < rank; ++k) column_major[k * m.n() + i] = factor[i * rank + k];
  QuantizedMatrix q = quantize(column_major, m.n(), rank, options.mode);

  // pmax from the stored (dequantized) factor: diagonal plus sampled pairs.
  const auto dense = row_major(q.dequantize(), m.n(), rank);
  auto row = [&](std::size_t i) { return std::span<const double>(dense.data() + i * rank, rank); };
  double pmax = 0.0;
  for (std::size_t i = 0; i < m.n(); ++i) pmax = std::max(pmax, dot(row(i), row(i)));
  if (m.n() >= 2) {
    Rng rng(options.seed + 0x9e3779b97f4a7c15ull);
    for (std::size_t s = 0; s < kPmaxSamples; ++s) {
      const auto i = rng.uniform_index(m.n());
      auto j = rng.uniform_index(m.n() - 1);
      if (j >= i) ++j;
      pmax = std::max(pmax, dot(row(i), row(j)));
    }
  }
  return LowRankQuantized(m.tree_count(), pmax, std::move(q), std::move(notice));
}

// ---- generic access --------------------------------------------------------

std::size_t repr_n(const ProximityRepr& repr) {
  return std::visit([](const auto& r) { return r.n(); }, repr);
}

std::size_t repr_trees(const ProximityRepr& repr) {
  return std::visit([](const auto& r) { return r.tree_count(); }, repr);
}

double entry(const ProximityRepr& repr, std::size_t i, std::size_t j) {
  return std::visit([&](const auto& r) { return r.entry(i, j); }, repr);
}

std::vector<double> outlier_scores(const ProximityRepr& repr, std::optional<double> clamp_floor) {
  const std::size_t n = repr_n(repr);
  if (n < 2) throw DataError("outlier scores need at least two samples");
  const double floor = clamp_floor.value_or(1.0 / static_cast<double>(repr_trees(repr)));
  if (!(floor > 0.0)) throw ConfigError("outlier clamp floor must be positive");
  std::vector<double> scores(n);
  std::visit(
      [&](const auto& r) {
        parallel_for(chunk_count(n), [&](std::size_t chunk) {
          const std::size_t end = std::min(n, (chunk + 1) * kRowsPerChunk);
          for (std::size_t i = chunk * kRowsPerChunk; i < end; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              if (j == i) continue;
              const double p = std::max(r.entry(i, j), floor);
              s += 1.0 / (p * p);
            }
            scores[i] = s / static_cast<double>(n - 1);
          }
        });
      },
      repr);
  return scores;
}

// ---- files -----------------------------------------------------------------

namespace {
constexpr std::uint32_t kFormatVersion = 1;
}

std::vector<std::uint8_t> serialize_full(const FullTriangle& full) {
  io::ByteWriter w;
  w.magic("RFXF");
  w.put(kFormatVersion);
  w.put<std::uint64_t>(full.n());
  w.put<std::uint64_t>(full.tree_count());
  w.put_array<double>(full.packed());
  return w.take();
}

FullTriangle deserialize_full(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("RFXF");
  if (r.get<std::uint32_t>() != kFormatVersion) throw FormatError("unsupported RFXF version");
  const auto n = r.get<std::uint64_t>();
  const auto trees = r.get<std::uint64_t>();
  auto packed = r.get_array<double>();
  if (!r.at_end()) throw FormatError("trailing bytes after RFXF payload");
  if (n < 1 || packed.size() != n * (n - 1) / 2) throw FormatError("RFXF payload size does not match n");
  return FullTriangle(n, trees, std::move(packed));
}

std::vector<std::uint8_t> serialize_lowrank(const LowRankQuantized& lowrank) {
  const auto& q = lowrank.factor();
  io::ByteWriter w;
  w.magic("RFXQ");
  w.put(kFormatVersion);
  w.put<std::uint64_t>(q.rows);
  w.put<std::uint64_t>(q.cols);
  w.put(static_cast<std::uint8_t>(q.mode));
  w.put<std::uint64_t>(lowrank.tree_count());
  w.put(lowrank.pmax());
  w.put_array<double>(q.scales);
  w.put_array<std::uint8_t>(q.payload);
  return w.take();
}

LowRankQuantized deserialize_lowrank(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("RFXQ");
  if (r.get<std::uint32_t>() != kFormatVersion) throw FormatError("unsupported RFXQ version");
  QuantizedMatrix q;
  q.rows = r.get<std::uint64_t>();
  q.cols = r.get<std::uint64_t>();
  const auto mode = r.get<std::uint8_t>();
  if (mode > static_cast<std::uint8_t>(QuantMode::kNF4)) throw FormatError("unknown quantization mode code");
  q.mode = static_cast<QuantMode>(mode);
  const auto trees = r.get<std::uint64_t>();
  const auto pmax = r.get<double>();
  q.scales = r.get_array<double>();
  q.payload = r.get_array<std::uint8_t>();
  if (!r.at_end()) throw FormatError("trailing bytes after RFXQ payload");
  const std::uint64_t count = q.rows * q.cols;
  const std::uint64_t expect_payload = (count * quant_bits(q.mode) + 7) / 8;
  const std::uint64_t expect_scales = q.mode == QuantMode::kI8    ? q.cols
                                      : q.mode == QuantMode::kNF4 ? (count + kNf4BlockSize - 1) / kNf4BlockSize
                                                                  : 0;
  if (q.payload.size() != expect_payload || q.scales.size() != expect_scales) {
    throw FormatError("RFXQ payload does not match its header");
  }
  return LowRankQuantized(trees, pmax, std::move(q));
}

std::string triblock_csv(const TriBlock& tri) {
  std::ostringstream out;
  out.precision(17);
  out << "i,j,value\n";
  for (const auto& e : tri.dense_entries()) out << e.i << ',' << e.j << ',' << e.value << '\n';
  return out.str();
}

std::string triblock_summary_json(const TriBlock& tri) {
  const double pairs = static_cast<double>(tri.n()) * static_cast<double>(tri.n() - 1) / 2.0;
  nlohmann::json j{
      {"n", tri.n()},
      {"trees", tri.tree_count()},
      {"tau", tri.tau()},
      {"zero_threshold", kTriBlockZero},
      {"pairs", pairs},
      {"dense_entries", tri.dense_count()},
      {"sparse_entries", tri.sparse_count()},
      {"zero_entries", pairs - static_cast<double>(tri.dense_count() + tri.sparse_count())},
      {"stored_bytes", tri.stored_bytes()},
      {"full_packed_bytes", 8.0 * pairs},
      {"compression_ratio", tri.compression_ratio()},
  };
  j["sparse"] = nlohmann::json::array();
  for (const auto& e : tri.sparse_entries()) j["sparse"].push_back({e.i, e.j, e.value});
  return j.dump(2);
}

}  // namespace rfx
