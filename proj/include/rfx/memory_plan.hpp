#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "rfx/quantize.hpp"

namespace rfx {

enum class ProximityBackend : std::uint8_t { kFull = 0, kTriBlock = 1, kLowRank = 2 };

std::string_view backend_name(ProximityBackend backend);
/// full | triblock | lowrank. Throws ConfigError.
ProximityBackend parse_backend(std::string_view text);

inline constexpr double kDefaultTriBlockRetention = 0.4;
inline constexpr std::uint64_t kGiB = 1ull << 30;
inline constexpr std::uint64_t kMiB = 1ull << 20;

struct PlanInput {
  std::uint64_t samples = 0;
  std::uint64_t trees = 500;
  std::uint64_t rank = 32;
  QuantMode mode = QuantMode::kI8;
  ProximityBackend backend = ProximityBackend::kFull;
  double retention = kDefaultTriBlockRetention;  // TriBlock stored fraction of the full matrix
  // Model-storage assumptions (4-byte elements throughout).
  std::uint64_t features = 50;
  std::uint64_t classes = 3;
  std::uint64_t max_nodes = 1000;
  // Feasibility targets; a job fits if it uses at most headroom * capacity.
  std::uint64_t ram_bytes = 32 * kGiB;
  std::uint64_t vram_bytes = 12 * kGiB;
  double headroom = 0.5;
};

struct ModelStorage {
  std::uint64_t training_data, treemap, node_status, split_values, split_vars, node_classes, class_populations,
      oob_tracking, model_subtotal;
  std::uint64_t overall_importance, local_importance_per_sample, local_importance_matrix, importance_sd,
      importance_subtotal;
  std::uint64_t total;
};

struct MemoryPlan {
  PlanInput input;
  std::uint64_t full_headline_bytes;   // 8 n^2
  std::uint64_t full_packed_bytes;     // 8 n(n-1)/2
  std::uint64_t triblock_bytes;        // headline x retention
  std::uint64_t lowrank_two_factor_bytes;  // 2 n r bits/8 (headline)
  std::uint64_t lowrank_one_factor_bytes;  // n r bits/8 (what a symmetric factor stores)
  std::uint64_t selected_bytes;        // for input.backend, headline convention
  double compression_ratio;            // full headline / selected
  bool full_fits_ram, triblock_fits_ram, lowrank_fits_vram;
  bool selected_fits;
  std::string recommended;  // "CPU Full/TriBlock" | "CPU TriBlock" | "GPU INT8/NF4"
  ModelStorage model;
};

MemoryPlan memory_plan(const PlanInput& input);

/// Scalability row: samples, cpu_full_gb, cpu_triblock_gb (GiB), gpu_int8_32_mb,
/// gpu_nf4_32_mb (MiB, rank 32 two-factor), recommended.
std::string table_row_json(const MemoryPlan& plan);
/// Whole plan as JSON, including the table row and model storage.
std::string plan_json(const MemoryPlan& plan);
/// Human-readable summary.
std::string plan_text(const MemoryPlan& plan);

}  // namespace rfx
