#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rfx/error.hpp"
#include "rfx/importance.hpp"
#include "rfx/mds.hpp"
#include "rfx/memory_plan.hpp"
#include "rfx/parallel.hpp"
#include "rfx/proximity.hpp"
#include "viz_bundle.hpp"

namespace rfx::cli {
namespace {

struct Options {
  // data
  std::string data, schema, label, forest;
  // train
  std::size_t trees = 500, mtry = 0, min_node_size = 1, max_nodes = 0;
  std::uint64_t seed = 1;
  bool casewise = false;
  // proximity / mds
  std::string backend = "full", quant = "int8", budget;
  std::size_t rank = 32;
  double tau = kDefaultTriBlockTau;
  bool verify = false;
  std::size_t k = 3, max_iter = 300;
  double tol = 1e-8;
  std::string reference;
  // outputs
  std::string out, csv, json_out, local_csv;
  // mem-estimate
  std::uint64_t samples = 0, features = 50, classes = 3, plan_max_nodes = 1000;
  std::string ram = "32GiB", vram = "12GiB";
  double retention = kDefaultTriBlockRetention, headroom = 0.5;
  bool as_json = false;
  // viz-export
  std::size_t sample = 0;
  std::string sample_mode = "uniform";
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t parse_size(const std::string& text) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse size '" + text + "'");
  }
  std::string unit = text.substr(pos);
  unit.erase(std::remove_if(unit.begin(), unit.end(), [](unsigned char c) { return std::isspace(c); }), unit.end());
  std::transform(unit.begin(), unit.end(), unit.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::map<std::string, double> units{
      {"", 1.0},      {"b", 1.0},           {"kb", 1e3},          {"mb", 1e6},
      {"gb", 1e9},    {"tb", 1e12},         {"k", 1e3},           {"m", 1e6},
      {"g", 1e9},     {"kib", 1024.0},      {"mib", 1048576.0},   {"gib", 1073741824.0},
      {"tib", 1099511627776.0}};
  const auto it = units.find(unit);
  if (it == units.end() || value < 0) throw ConfigError("cannot parse size '" + text + "'");
  return static_cast<std::uint64_t>(value * it->second);
}

// Appends "--key value" for every config-file entry not already on the
// command line, so explicit flags win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  std::set<std::string> given;
  for (std::size_t a = 0; a < args.size(); ++a) {
    const std::string& s = args[a];
    if (s.rfind("--", 0) != 0) continue;
    const std::string name = s.substr(0, s.find('='));
    given.insert(name);
    if (name == "--config") path = s.find('=') != std::string::npos ? s.substr(s.find('=') + 1)
                                   : (a + 1 < args.size() ? args[a + 1] : "");
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json config;
  try {
    in >> config;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!config.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : config.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (given.count(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(value.dump());
    } else {
      throw ConfigError("config key '" + key + "' must be a string, number or boolean");
    }
  }
  return args;
}

Dataset load_data(const Options& o) {
  if (o.data.empty()) throw UsageError("--data is required");
  std::string label = o.label;
  if (label.empty()) {
    const auto header = read_csv_header(o.data);
    if (header.empty()) throw DataError(o.data + ": empty header");
    label = header.back();
  }
  const Schema schema = o.schema.empty() ? numeric_schema_for(o.data, label) : load_schema(o.schema);
  return load_csv(o.data, schema, label);
}

Forest load_checked_forest(const Options& o, const Dataset& data) {
  if (o.forest.empty()) throw UsageError("--forest is required");
  Forest forest = load_forest(o.forest);
  forest.check_compatible(data);
  return forest;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f || !f.write(text.data(), static_cast<std::streamsize>(text.size()))) throw DataError("cannot write " + path);
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  write_file(path, std::string(bytes.begin(), bytes.end()));
}

std::string percent(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * x << "%";
  return s.str();
}

ProximityRepr build_repr(const Options& o, const LeafMembership& m, std::ostream& out) {
  const ProximityBackend backend = parse_backend(o.backend);
  const ProximityBudget budget{o.budget.empty() ? 0 : parse_size(o.budget)};
  check_budget(m.n(), m.tree_count(), backend, budget);
  switch (backend) {
    case ProximityBackend::kFull: return full_proximity(m);
    case ProximityBackend::kTriBlock: return triblock_proximity(m, o.tau);
    case ProximityBackend::kLowRank: {
      LowRankOptions lo;
      lo.rank = o.rank;
      lo.mode = parse_quant_mode(o.quant);
      lo.seed = o.seed;
      LowRankQuantized lr = lowrank_proximity(m, lo);
      if (!lr.notice().empty()) out << "notice: " << lr.notice() << "\n";
      return lr;
    }
  }
  throw std::logic_error("unreachable");
}

PlanInput plan_for(const Options& o, std::uint64_t n, std::uint64_t trees) {
  PlanInput in;
  in.samples = n;
  in.trees = trees;
  in.rank = o.rank;
  in.mode = parse_quant_mode(o.quant);
  in.backend = parse_backend(o.backend);
  in.retention = o.retention;
  in.features = o.features;
  in.classes = o.classes;
  in.max_nodes = o.plan_max_nodes;
  in.ram_bytes = parse_size(o.ram);
  in.vram_bytes = parse_size(o.vram);
  in.headroom = o.headroom;
  return in;
}

MdsEmbedding embed(const Options& o, const ProximityRepr& repr) {
  if (const auto* lr = std::get_if<LowRankQuantized>(&repr)) {
    PowerIterConfig pc;
    pc.k = o.k;
    pc.max_iterations = o.max_iter;
    pc.tol = o.tol;
    pc.seed = o.seed;
    return mds_lowrank(*lr, pc);
  }
  if (const auto* full = std::get_if<FullTriangle>(&repr)) return mds_full(*full, o.k);
  return mds_full(densify(repr), o.k);
}

// ---- subcommands -----------------------------------------------------------

int cmd_train(const Options& o, std::ostream& out) {
  const Dataset data = load_data(o);
  TrainConfig config;
  config.ntree = o.trees;
  config.mtry = o.mtry;
  config.iseed = o.seed;
  config.min_node_size = o.min_node_size;
  config.max_nodes = o.max_nodes;
  config.casewise = o.casewise;
  const Forest forest = train(data, config);
  const OobReport r = oob_report(forest, data);

  out << "trees " << forest.tree_count() << ", mtry " << config.resolved_mtry(data.p()) << ", seed " << o.seed
      << (o.casewise ? ", casewise" : "") << "\n";
  out << "OOB error: " << percent(r.error_rate) << " (" << r.covered << " of " << data.n() << " samples covered)\n";
  out << "OOB accuracy: " << percent(1.0 - r.error_rate) << "\n";
  const auto& names = data.class_names();
  out << "per-class accuracy:";
  for (std::size_t c = 0; c < names.size(); ++c) out << "  " << names[c] << " " << percent(r.class_accuracy[c]);
  out << "\nconfusion matrix (rows true, columns predicted):\n";
  out << std::setw(12) << "";
  for (const auto& name : names) out << std::setw(10) << name;
  out << "\n";
  for (std::size_t t = 0; t < names.size(); ++t) {
    out << std::setw(12) << names[t];
    for (std::size_t p = 0; p < names.size(); ++p) out << std::setw(10) << r.confusion[t * names.size() + p];
    out << "\n";
  }
  const std::string path = o.out.empty() ? "forest.rfx" : o.out;
  save_forest(forest, path);
  out << "forest written to " << path << "\n";
  return kOk;
}

int cmd_importance(const Options& o, std::ostream& out) {
  const Dataset data = load_data(o);
  const Forest forest = load_checked_forest(o, data);
  const bool casewise = o.casewise || forest.config().casewise;
  const ImportanceReport r = importance_report(forest, data, casewise);
  std::vector<std::size_t> order(data.p());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.overall_perm[a] > r.overall_perm[b]; });
  out << (casewise ? "casewise" : "non-casewise") << " permutation importance over " << r.trees_used << " of "
      << r.tree_count << " trees\n";
  out << std::left << std::setw(24) << "feature" << std::right << std::setw(14) << "perm_mean" << std::setw(14)
      << "perm_sd" << std::setw(12) << "gini\n";
  for (std::size_t j : order) {
    out << std::left << std::setw(24) << r.feature_names[j] << std::right << std::fixed << std::setprecision(4)
        << std::setw(14) << r.overall_perm[j] << std::setw(14) << r.overall_perm_sd[j] << std::setw(12)
        << r.overall_gini[j] << "\n";
  }
  out.unsetf(std::ios::fixed);
  if (r.gini_uniform_fallback) out << "note: no impurity decrease recorded, Gini importance is uniform\n";
  if (!o.csv.empty()) write_file(o.csv, importance_csv(r));
  if (!o.json_out.empty()) write_file(o.json_out, importance_json(r));
  if (!o.local_csv.empty()) {
    std::ostringstream s;
    s.precision(17);
    s << "sample_id";
    for (const auto& name : r.feature_names) s << ',' << name;
    s << '\n';
    for (std::size_t i = 0; i < r.n; ++i) {
      s << i;
      for (std::size_t j = 0; j < data.p(); ++j) s << ',' << r.local[i * data.p() + j];
      s << '\n';
    }
    write_file(o.local_csv, s.str());
  }
  return kOk;
}

int cmd_proximity(const Options& o, std::ostream& out) {
  const Dataset data = load_data(o);
  const Forest forest = load_checked_forest(o, data);
  out << plan_text(memory_plan(plan_for(o, data.n(), forest.tree_count()))) << "\n";
  const LeafMembership m = leaf_membership(forest, data);
  const ProximityRepr repr = build_repr(o, m, out);
  const double full_bytes = 8.0 * data.n() * (data.n() - 1) / 2.0;

  if (const auto* full = std::get_if<FullTriangle>(&repr)) {
    out << "full packed triangle: " << full->stored_bytes() << " bytes\n";
    if (!o.out.empty()) write_file(o.out, serialize_full(*full));
  } else if (const auto* tri = std::get_if<TriBlock>(&repr)) {
    out << "triblock tau " << tri->tau() << ": " << tri->dense_count() << " dense, " << tri->sparse_count()
        << " sparse entries, " << tri->stored_bytes() << " bytes, compression " << std::setprecision(4)
        << tri->compression_ratio() << "x\n";
    if (!o.out.empty()) {
      write_file(o.out, triblock_csv(*tri));
      write_file(o.out + ".summary.json", triblock_summary_json(*tri));
    }
  } else {
    const auto& lr = std::get<LowRankQuantized>(repr);
    const double bytes = static_cast<double>(lr.factor().payload.size() + lr.factor().scales.size() * 4);
    out << "lowrank rank " << lr.rank() << " " << quant_mode_name(lr.factor().mode) << ": " << bytes
        << " bytes, compression " << std::setprecision(4) << full_bytes / bytes << "x vs packed triangle, pmax "
        << lr.pmax() << "\n";
    if (!o.out.empty()) write_file(o.out, serialize_lowrank(lr));
  }

  if (o.verify) {
    const FullTriangle reference = full_proximity(m);
    std::size_t mismatches = 0, checked = 0;
    double max_err = 0.0;
    const std::size_t n = data.n();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double want = reference.entry(i, j), got = entry(repr, i, j);
        max_err = std::max(max_err, std::abs(want - got));
        if (want > kTriBlockZero) {
          ++checked;
          if (want != got) ++mismatches;
        }
      }
    }
    if (std::holds_alternative<LowRankQuantized>(repr)) {
      out << "reconstruction max |error| vs full: " << max_err << "\n";
    } else {
      out << "reconstruction check: " << (mismatches == 0 ? "passed" : "FAILED") << " (" << checked
          << " entries above " << kTriBlockZero << ", " << mismatches << " mismatches)\n";
      if (mismatches != 0) return kInternal;
    }
  }
  return kOk;
}

int cmd_mds(const Options& o, std::ostream& out) {
  const Dataset data = load_data(o);
  const Forest forest = load_checked_forest(o, data);
  const ProximityRepr repr = build_repr(o, leaf_membership(forest, data), out);
  const MdsEmbedding emb = embed(o, repr);
  out << "mds (" << o.backend << "): " << emb.k << " components, eigenvalues";
  for (double l : emb.eigenvalues) out << ' ' << l;
  out << "\n";
  if (!emb.residuals.empty()) {
    out << "residuals";
    for (double r : emb.residuals) out << ' ' << r;
    out << "\n";
  }
  if (!emb.notice.empty()) out << "notice: " << emb.notice << "\n";
  std::vector<std::string> labels(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) labels[i] = data.class_names()[data.label(i)];
  if (!o.csv.empty()) write_file(o.csv, embedding_csv(emb, labels));
  if (!o.json_out.empty()) write_file(o.json_out, embedding_json(emb));
  if (!o.reference.empty()) {
    std::ifstream in(o.reference);
    if (!in) throw DataError("cannot open " + o.reference);
    std::stringstream text;
    text << in.rdbuf();
    const MdsEmbedding ref = embedding_from_json(text.str());
    if (ref.n != emb.n) throw DataError("reference embedding has " + std::to_string(ref.n) + " samples, expected " +
                                        std::to_string(emb.n));
    out << "correlation with reference: " << std::fixed << std::setprecision(6) << mds_correlation(emb, ref) << "\n";
    out.unsetf(std::ios::fixed);
  }
  return kOk;
}

int cmd_outliers(const Options& o, std::ostream& out) {
  const Dataset data = load_data(o);
  const Forest forest = load_checked_forest(o, data);
  const ProximityRepr repr = build_repr(o, leaf_membership(forest, data), out);
  const auto scores = outlier_scores(repr);
  std::ostringstream csv;
  csv.precision(17);
  csv << "sample_id,label,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) csv << i << ',' << data.class_names()[data.label(i)] << ',' << scores[i] << '\n';
  write_file(o.out.empty() ? "outliers.csv" : o.out, csv.str());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  out << "top outliers:\n";
  for (std::size_t k = 0; k < std::min<std::size_t>(10, order.size()); ++k) {
    out << "  sample " << order[k] << " (" << data.class_names()[data.label(order[k])] << ")  " << scores[order[k]]
        << "\n";
  }
  return kOk;
}

int cmd_mem_estimate(const Options& o, std::ostream& out) {
  if (o.samples == 0) throw UsageError("--samples is required");
  const MemoryPlan plan = memory_plan(plan_for(o, o.samples, o.trees));
  out << (o.as_json ? plan_json(plan) + "\n" : plan_text(plan));
  return kOk;
}

int cmd_viz_export(const Options& o, std::ostream& out) {
  const Dataset data = load_data(o);
  const Forest forest = load_checked_forest(o, data);
  VizOptions vo;
  vo.backend = parse_backend(o.backend);
  vo.rank = o.rank;
  vo.quant = parse_quant_mode(o.quant);
  vo.tau = o.tau;
  vo.casewise = o.casewise || forest.config().casewise;
  vo.sample = o.sample;
  vo.seed = o.seed;
  if (o.sample_mode == "uniform") vo.sample_mode = SampleMode::kUniform;
  else if (o.sample_mode == "stratified") vo.sample_mode = SampleMode::kStratified;
  else throw ConfigError("--sample-mode must be uniform or stratified");
  const std::size_t kept = vo.sample == 0 ? data.n() : std::min(vo.sample, data.n());
  check_budget(kept, forest.tree_count(), vo.backend,
               ProximityBudget{o.budget.empty() ? 0 : parse_size(o.budget)});
  const auto bundle = build_viz_bundle(forest, data, vo);
  const std::string path = o.out.empty() ? "bundle.json" : o.out;
  write_file(path, bundle.dump() + "\n");
  out << "viz bundle with " << bundle["sample_ids"].size() << " samples written to " << path << "\n";
  return kOk;
}

int cmd_bench(const Options& o, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  const Dataset data = load_data(o);
  TrainConfig config;
  config.ntree = o.trees;
  config.iseed = o.seed;
  config.casewise = o.casewise;
  out << "n " << data.n() << ", p " << data.p() << ", trees " << o.trees << ", workers " << worker_count() << "\n";
  auto t0 = clock::now();
  auto lap = [&](const char* stage) {
    const auto t1 = clock::now();
    out << std::left << std::setw(22) << stage << std::right << std::fixed << std::setprecision(3)
        << std::chrono::duration<double>(t1 - t0).count() << " s\n";
    out.unsetf(std::ios::fixed);
    t0 = clock::now();
  };
  const Forest forest = train(data, config);
  lap("train");
  (void)oob_report(forest, data);
  lap("oob report");
  (void)permutation_importance(forest, data, o.casewise);
  lap("permutation importance");
  const LeafMembership m = leaf_membership(forest, data);
  lap("leaf membership");
  const FullTriangle full = full_proximity(m);
  lap("proximity full");
  (void)triblock_proximity(m, o.tau);
  lap("proximity triblock");
  LowRankOptions lo;
  lo.rank = o.rank;
  lo.mode = parse_quant_mode(o.quant);
  lo.seed = o.seed;
  const LowRankQuantized lr = lowrank_proximity(m, lo);
  lap("proximity lowrank");
  if (data.n() <= kDenseMdsLimit) {
    (void)mds_full(full);
    lap("mds full");
  }
  (void)mds_lowrank(lr);
  lap("mds lowrank");
  return kOk;
}

void add_data_flags(CLI::App* sub, Options& o, bool with_forest) {
  sub->add_option("--data", o.data, "training CSV with a header row")->required();
  sub->add_option("--schema", o.schema, "schema JSON (default: every column numeric)");
  sub->add_option("--label", o.label, "label column (default: last column)");
  if (with_forest) sub->add_option("--forest", o.forest, "forest file written by train")->required();
}

void add_proximity_flags(CLI::App* sub, Options& o) {
  sub->add_option("--backend", o.backend, "full | triblock | lowrank")->capture_default_str();
  sub->add_option("--rank", o.rank, "low-rank factor rank")->capture_default_str();
  sub->add_option("--quant", o.quant, "f32 | f16 | int8 | nf4")->capture_default_str();
  sub->add_option("--tau", o.tau, "TriBlock dense-tier threshold")->capture_default_str();
  sub->add_option("--budget", o.budget, "memory budget, e.g. 1GB or 512MiB (default: unlimited)");
  sub->add_option("--seed", o.seed, "seed for the randomized factorization")->capture_default_str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  std::string command, config_path;
  CLI::App app{"Random forest classification, proximity and MDS toolkit", "rfx"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", config_path, "JSON file of flag values; explicit flags take precedence");

  auto* train_cmd = app.add_subcommand("train", "grow a forest and print the OOB report");
  add_data_flags(train_cmd, o, false);
  train_cmd->add_option("--trees", o.trees, "number of trees")->capture_default_str();
  train_cmd->add_option("--mtry", o.mtry, "features tried per split (0: floor(sqrt(p)))");
  train_cmd->add_option("--seed", o.seed, "base seed; tree b uses seed + b")->capture_default_str();
  train_cmd->add_option("--min-node-size", o.min_node_size, "terminal node size")->capture_default_str();
  train_cmd->add_option("--max-nodes", o.max_nodes, "node cap per tree (0: 2n + 1)");
  train_cmd->add_flag("--casewise", o.casewise, "weight OOB votes by terminal node weights");
  train_cmd->add_option("--out", o.out, "forest file (default forest.rfx)");

  auto* imp_cmd = app.add_subcommand("importance", "Gini, permutation and local importance");
  add_data_flags(imp_cmd, o, true);
  imp_cmd->add_flag("--casewise", o.casewise, "casewise weighting (default: as trained)");
  imp_cmd->add_option("--csv", o.csv, "overall importance CSV");
  imp_cmd->add_option("--json", o.json_out, "overall and local importance JSON");
  imp_cmd->add_option("--local", o.local_csv, "local importance CSV (n x p)");

  auto* prox_cmd = app.add_subcommand("proximity", "compute a proximity representation");
  add_data_flags(prox_cmd, o, true);
  add_proximity_flags(prox_cmd, o);
  prox_cmd->add_option("--out", o.out, "representation file");
  prox_cmd->add_flag("--verify", o.verify, "compare against the full matrix");

  auto* mds_cmd = app.add_subcommand("mds", "classical MDS of proximity distances");
  add_data_flags(mds_cmd, o, true);
  add_proximity_flags(mds_cmd, o);
  mds_cmd->add_option("--k", o.k, "components")->capture_default_str();
  mds_cmd->add_option("--max-iter", o.max_iter, "power-iteration cap (lowrank)")->capture_default_str();
  mds_cmd->add_option("--tol", o.tol, "power-iteration tolerance (lowrank)")->capture_default_str();
  mds_cmd->add_option("--csv", o.csv, "embedding CSV");
  mds_cmd->add_option("--json", o.json_out, "embedding JSON");
  mds_cmd->add_option("--reference", o.reference, "embedding JSON to correlate against");

  auto* out_cmd = app.add_subcommand("outliers", "proximity-based outlier scores");
  add_data_flags(out_cmd, o, true);
  add_proximity_flags(out_cmd, o);
  out_cmd->add_option("--out", o.out, "scores CSV (default outliers.csv)");

  auto* mem_cmd = app.add_subcommand("mem-estimate", "memory plan from sizes alone");
  mem_cmd->add_option("--samples", o.samples, "number of samples")->required();
  mem_cmd->add_option("--trees", o.trees, "number of trees")->capture_default_str();
  mem_cmd->add_option("--backend", o.backend, "full | triblock | lowrank")->capture_default_str();
  mem_cmd->add_option("--rank", o.rank, "low-rank factor rank")->capture_default_str();
  mem_cmd->add_option("--quant", o.quant, "f32 | f16 | int8 | nf4")->capture_default_str();
  mem_cmd->add_option("--features", o.features, "features (model storage)")->capture_default_str();
  mem_cmd->add_option("--classes", o.classes, "classes (model storage)")->capture_default_str();
  mem_cmd->add_option("--max-nodes", o.plan_max_nodes, "nodes per tree (model storage)")->capture_default_str();
  mem_cmd->add_option("--retention", o.retention, "TriBlock stored fraction")->capture_default_str();
  mem_cmd->add_option("--ram", o.ram, "RAM capacity")->capture_default_str();
  mem_cmd->add_option("--vram", o.vram, "GPU memory capacity")->capture_default_str();
  mem_cmd->add_option("--headroom", o.headroom, "usable fraction of capacity")->capture_default_str();
  mem_cmd->add_flag("--json", o.as_json, "print JSON");

  auto* viz_cmd = app.add_subcommand("viz-export", "write the visualization bundle");
  add_data_flags(viz_cmd, o, true);
  add_proximity_flags(viz_cmd, o);
  viz_cmd->add_flag("--casewise", o.casewise, "casewise local importance (default: as trained)");
  viz_cmd->add_option("--sample", o.sample, "keep at most this many samples (0: all)");
  viz_cmd->add_option("--sample-mode", o.sample_mode, "uniform | stratified")->capture_default_str();
  viz_cmd->add_option("--out", o.out, "bundle path (default bundle.json)");

  auto* bench_cmd = app.add_subcommand("bench", "time each pipeline stage");
  add_data_flags(bench_cmd, o, false);
  bench_cmd->add_option("--trees", o.trees, "number of trees")->capture_default_str();
  bench_cmd->add_option("--seed", o.seed, "seed")->capture_default_str();
  bench_cmd->add_option("--rank", o.rank, "low-rank factor rank")->capture_default_str();
  bench_cmd->add_option("--quant", o.quant, "quantization mode")->capture_default_str();
  bench_cmd->add_option("--tau", o.tau, "TriBlock threshold")->capture_default_str();
  bench_cmd->add_flag("--casewise", o.casewise, "casewise mode");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kUsage;
    }
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "train") return cmd_train(o, out);
    if (name == "importance") return cmd_importance(o, out);
    if (name == "proximity") return cmd_proximity(o, out);
    if (name == "mds") return cmd_mds(o, out);
    if (name == "outliers") return cmd_outliers(o, out);
    if (name == "mem-estimate") return cmd_mem_estimate(o, out);
    if (name == "viz-export") return cmd_viz_export(o, out);
    if (name == "bench") return cmd_bench(o, out);
    err << "unknown command " << name << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const BudgetError& e) {
    err << "budget refusal: " << e.what() << "\n\n" << e.planner_report();
    return kBudget;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace rfx::cli
