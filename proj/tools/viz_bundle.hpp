#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfx/dataset.hpp"
#include "rfx/forest.hpp"
#include "rfx/memory_plan.hpp"
#include "rfx/quantize.hpp"

namespace rfx::cli {

inline constexpr const char* kVizBundleVersion = "1.0.0";
// Per-tree predictions are only written for forests up to this size.
inline constexpr std::size_t kPerTreeVoteLimit = 500;

enum class SampleMode { kUniform, kStratified };

/// Picks `count` sample indices (sorted). count >= n returns every index.
std::vector<std::size_t> choose_samples(const Dataset& data, std::size_t count, SampleMode mode, std::uint64_t seed);

struct VizOptions {
  ProximityBackend backend = ProximityBackend::kFull;
  std::size_t rank = 32;
  QuantMode quant = QuantMode::kI8;
  double tau = 1e-4;
  bool casewise = false;
  std::size_t sample = 0;  // 0 = all
  SampleMode sample_mode = SampleMode::kUniform;
  std::uint64_t seed = 1;
};

nlohmann::json build_viz_bundle(const Forest& forest, const Dataset& data, const VizOptions& options);

}  // namespace rfx::cli
