#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rfx/dataset.hpp"
#include "rfx/tree.hpp"

namespace rfx {

class Rng;

/// n draws with replacement; returns the per-sample multiplicities.
std::vector<std::uint32_t> bootstrap_sample(std::size_t n, Rng& rng);

/// Immutable trained ensemble plus the bootstrap record it was grown from.
class Forest {
 public:
  Forest(TrainConfig config, std::vector<ColumnKind> columns, std::size_t class_count,
         std::vector<Tree> trees, std::vector<std::uint32_t> inbag, std::vector<double> oob_votes);

  const TrainConfig& config() const noexcept { return config_; }
  std::size_t tree_count() const noexcept { return trees_.size(); }
  std::size_t n() const noexcept { return n_; }
  std::size_t p() const noexcept { return columns_.size(); }
  std::size_t class_count() const noexcept { return class_count_; }
  const std::vector<ColumnKind>& columns() const noexcept { return columns_; }

  const Tree& tree(std::size_t b) const noexcept { return trees_[b]; }
  const std::vector<Tree>& trees() const noexcept { return trees_; }

  /// How many times sample i was drawn into tree b's bootstrap.
  std::uint32_t inbag_count(std::size_t b, std::size_t i) const noexcept { return inbag_[b * n_ + i]; }
  std::span<const std::uint32_t> inbag_counts(std::size_t b) const noexcept {
    return {inbag_.data() + b * n_, n_};
  }
  bool is_oob(std::size_t b, std::size_t i) const noexcept { return inbag_count(b, i) == 0; }
  const std::vector<std::uint32_t>& inbag() const noexcept { return inbag_; }

  /// OOB vote tallies, n x C row-major. Casewise forests weight each vote by
  /// the tnodewt of the terminal node that produced it.
  std::span<const double> oob_votes(std::size_t i) const noexcept {
    return {oob_votes_.data() + i * class_count_, class_count_};
  }
  const std::vector<double>& oob_votes() const noexcept { return oob_votes_; }

  /// Throws DataError when `data` cannot have trained this forest.
  void check_compatible(const Dataset& data) const;

  bool operator==(const Forest&) const = default;

 private:
  TrainConfig config_;
  std::vector<ColumnKind> columns_;
  std::size_t class_count_;
  std::size_t n_;
  std::vector<Tree> trees_;
  std::vector<std::uint32_t> inbag_;
  std::vector<double> oob_votes_;
};

/// Grows config.ntree trees in batches of up to 256. Tree b draws its
/// bootstrap and split features from the stream seeded iseed + b; outputs are
/// merged in tree order, so the forest does not depend on the worker count.
Forest train(const Dataset& data, const TrainConfig& config);

struct OobReport {
  std::vector<std::int32_t> predictions;   // -1 for samples never out-of-bag
  std::vector<double> vote_fractions;      // n x C; zero rows for uncovered samples
  std::vector<std::uint32_t> oob_tree_counts;
  std::vector<std::size_t> uncovered;
  std::vector<std::uint64_t> confusion;    // C x C, rows true, cols predicted
  std::vector<double> class_accuracy;      // per true class over covered samples
  std::size_t covered = 0;
  double error_rate = 0.0;
  std::size_t class_count = 0;
};

/// Majority OOB vote per sample (ties to the lowest class code) and the error
/// rate over samples that were out-of-bag at least once.
OobReport oob_report(const Forest& forest, const Dataset& data);

/// RFX1 binary format. Round-trips bit-exactly.
std::vector<std::uint8_t> serialize_forest(const Forest& forest);
Forest deserialize_forest(std::span<const std::uint8_t> bytes);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

}  // namespace rfx
