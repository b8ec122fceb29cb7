#include "rfx/memory_plan.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "rfx/error.hpp"

namespace rfx {
namespace {

constexpr std::uint64_t kSmallDataset = 5000;

std::uint64_t factor_bytes(std::uint64_t n, std::uint64_t r, QuantMode mode) {
  return (n * r * quant_bits(mode) + 7) / 8;
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

nlohmann::json row(const MemoryPlan& plan) {
  const auto n = plan.input.samples;
  return {
      {"samples", n},
      {"cpu_full_gb", round1(static_cast<double>(plan.full_headline_bytes) / kGiB)},
      {"cpu_triblock_gb", round1(static_cast<double>(plan.triblock_bytes) / kGiB)},
      {"gpu_int8_32_mb", round1(2.0 * static_cast<double>(factor_bytes(n, 32, QuantMode::kI8)) / kMiB)},
      {"gpu_nf4_32_mb", round1(2.0 * static_cast<double>(factor_bytes(n, 32, QuantMode::kNF4)) / kMiB)},
      {"recommended", plan.recommended},
  };
}

std::string human(double bytes) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  if (bytes >= 1e9) out << bytes / 1e9 << " GB";
  else if (bytes >= 1e6) out << bytes / 1e6 << " MB";
  else if (bytes >= 1e3) out << bytes / 1e3 << " KB";
  else out << std::setprecision(0) << bytes << " B";
  return out.str();
}

}  // namespace

std::string_view backend_name(ProximityBackend backend) {
  switch (backend) {
    case ProximityBackend::kFull: return "full";
    case ProximityBackend::kTriBlock: return "triblock";
    case ProximityBackend::kLowRank: return "lowrank";
  }
  return "?";
}

ProximityBackend parse_backend(std::string_view text) {
  if (text == "full") return ProximityBackend::kFull;
  if (text == "triblock") return ProximityBackend::kTriBlock;
  if (text == "lowrank") return ProximityBackend::kLowRank;
  throw ConfigError("unknown proximity backend '" + std::string(text) + "' (expected full, triblock or lowrank)");
}

MemoryPlan memory_plan(const PlanInput& in) {
  if (in.samples == 0 || in.trees == 0 || in.rank == 0) throw ConfigError("memory plan: sizes must be positive");
  if (!(in.retention > 0.0 && in.retention <= 1.0)) throw ConfigError("memory plan: retention must be in (0, 1]");
  const std::uint64_t n = in.samples;
  MemoryPlan plan{};
  plan.input = in;
  plan.full_headline_bytes = 8 * n * n;
  plan.full_packed_bytes = 8 * (n * (n - 1) / 2);
  plan.triblock_bytes = static_cast<std::uint64_t>(std::llround(static_cast<double>(plan.full_headline_bytes) * in.retention));
  plan.lowrank_one_factor_bytes = factor_bytes(n, in.rank, in.mode);
  plan.lowrank_two_factor_bytes = 2 * plan.lowrank_one_factor_bytes;

  switch (in.backend) {
    case ProximityBackend::kFull: plan.selected_bytes = plan.full_headline_bytes; break;
    case ProximityBackend::kTriBlock: plan.selected_bytes = plan.triblock_bytes; break;
    case ProximityBackend::kLowRank: plan.selected_bytes = plan.lowrank_two_factor_bytes; break;
  }
  plan.compression_ratio = static_cast<double>(plan.full_headline_bytes) / static_cast<double>(plan.selected_bytes);

  const double ram = in.headroom * static_cast<double>(in.ram_bytes);
  const double vram = in.headroom * static_cast<double>(in.vram_bytes);
  plan.full_fits_ram = static_cast<double>(plan.full_headline_bytes) <= ram;
  plan.triblock_fits_ram = static_cast<double>(plan.triblock_bytes) <= ram;
  plan.lowrank_fits_vram = static_cast<double>(plan.lowrank_two_factor_bytes) <= vram;
  plan.selected_fits = in.backend == ProximityBackend::kFull       ? plan.full_fits_ram
                       : in.backend == ProximityBackend::kTriBlock ? plan.triblock_fits_ram
                                                                   : plan.lowrank_fits_vram;
  if (n <= kSmallDataset) plan.recommended = "CPU Full/TriBlock";
  else if (plan.triblock_fits_ram) plan.recommended = "CPU TriBlock";
  else plan.recommended = "GPU INT8/NF4";

  // Model storage, 4 bytes per element.
  auto& m = plan.model;
  const std::uint64_t nodes = in.max_nodes * in.trees;
  m.training_data = 4 * n * in.features;
  m.treemap = 4 * 2 * nodes;
  m.node_status = 4 * nodes;
  m.split_values = 4 * nodes;
  m.split_vars = 4 * nodes;
  m.node_classes = 4 * nodes;
  m.class_populations = 4 * in.classes * nodes;
  m.oob_tracking = 4 * n * in.classes;
  m.model_subtotal = m.training_data + m.treemap + m.node_status + m.split_values + m.split_vars + m.node_classes +
                     m.class_populations + m.oob_tracking;
  m.overall_importance = 4 * in.features;
  m.local_importance_per_sample = 4 * n;
  m.local_importance_matrix = 4 * n * in.features;
  m.importance_sd = 4 * in.features;
  m.importance_subtotal =
      m.overall_importance + m.local_importance_per_sample + m.local_importance_matrix + m.importance_sd;
  m.total = m.model_subtotal + m.importance_subtotal;
  return plan;
}

std::string table_row_json(const MemoryPlan& plan) { return row(plan).dump(); }

std::string plan_json(const MemoryPlan& plan) {
  const auto& in = plan.input;
  const auto& m = plan.model;
  nlohmann::json j{
      {"input",
       {{"samples", in.samples},
        {"trees", in.trees},
        {"rank", in.rank},
        {"quant", quant_mode_name(in.mode)},
        {"backend", backend_name(in.backend)},
        {"retention", in.retention},
        {"features", in.features},
        {"classes", in.classes},
        {"max_nodes", in.max_nodes}}},
      {"proximity_bytes",
       {{"full_headline", plan.full_headline_bytes},
        {"full_packed", plan.full_packed_bytes},
        {"triblock", plan.triblock_bytes},
        {"lowrank_two_factor", plan.lowrank_two_factor_bytes},
        {"lowrank_one_factor", plan.lowrank_one_factor_bytes},
        {"selected", plan.selected_bytes}}},
      {"compression_ratio", plan.compression_ratio},
      {"feasible",
       {{"full_ram", plan.full_fits_ram},
        {"triblock_ram", plan.triblock_fits_ram},
        {"lowrank_vram", plan.lowrank_fits_vram},
        {"selected", plan.selected_fits}}},
      {"recommended", plan.recommended},
      {"table_row", row(plan)},
      {"model_bytes",
       {{"training_data", m.training_data},
        {"treemap", m.treemap},
        {"node_status", m.node_status},
        {"split_values", m.split_values},
        {"split_vars", m.split_vars},
        {"node_classes", m.node_classes},
        {"class_populations", m.class_populations},
        {"oob_tracking", m.oob_tracking},
        {"model_subtotal", m.model_subtotal},
        {"overall_importance", m.overall_importance},
        {"local_importance_per_sample", m.local_importance_per_sample},
        {"local_importance_matrix", m.local_importance_matrix},
        {"importance_sd", m.importance_sd},
        {"importance_subtotal", m.importance_subtotal},
        {"total", m.total}}},
  };
  return j.dump(2);
}

std::string plan_text(const MemoryPlan& plan) {
  const auto& in = plan.input;
  const auto& m = plan.model;
  std::ostringstream out;
  out << "samples " << in.samples << ", trees " << in.trees << ", backend " << backend_name(in.backend);
  if (in.backend == ProximityBackend::kLowRank) out << " (rank " << in.rank << ", " << quant_mode_name(in.mode) << ")";
  out << "\n\nproximity\n";
  out << "  full (fp64, n^2)         " << human(static_cast<double>(plan.full_headline_bytes))
      << (plan.full_fits_ram ? "" : "  exceeds RAM budget") << "\n";
  out << "  full packed triangle     " << human(static_cast<double>(plan.full_packed_bytes)) << "\n";
  out << "  triblock (retention " << in.retention << ")  " << human(static_cast<double>(plan.triblock_bytes))
      << (plan.triblock_fits_ram ? "" : "  exceeds RAM budget") << "\n";
  out << "  low-rank two factors     " << human(static_cast<double>(plan.lowrank_two_factor_bytes))
      << "  (single symmetric factor " << human(static_cast<double>(plan.lowrank_one_factor_bytes)) << ")\n";
  out << "  selected                 " << human(static_cast<double>(plan.selected_bytes)) << ", "
      << std::setprecision(4) << plan.compression_ratio << "x vs full, "
      << (plan.selected_fits ? "feasible" : "not feasible") << "\n";
  out << "  recommended              " << plan.recommended << "\n\n";
  out << "model\n";
  out << "  training data            " << human(static_cast<double>(m.training_data)) << "\n";
  out << "  tree structures          " << human(static_cast<double>(m.treemap)) << "\n";
  out << "  node status              " << human(static_cast<double>(m.node_status)) << "\n";
  out << "  split values             " << human(static_cast<double>(m.split_values)) << "\n";
  out << "  split variables          " << human(static_cast<double>(m.split_vars)) << "\n";
  out << "  node classes             " << human(static_cast<double>(m.node_classes)) << "\n";
  out << "  class populations        " << human(static_cast<double>(m.class_populations)) << "\n";
  out << "  OOB tracking             " << human(static_cast<double>(m.oob_tracking)) << "\n";
  out << "  subtotal (model)         " << human(static_cast<double>(m.model_subtotal)) << "\n";
  out << "  subtotal (importance)    " << human(static_cast<double>(m.importance_subtotal)) << "\n";
  out << "  total                    " << human(static_cast<double>(m.total)) << "\n";
  return out.str();
}

}  // namespace rfx
