#include "rfx/forest.hpp"

#include <algorithm>

#include "rfx/error.hpp"
#include "rfx/parallel.hpp"
#include "rfx/rng.hpp"

namespace rfx {
namespace {

constexpr std::size_t kMaxTreesPerBatch = 256;

struct OobVote {
  std::uint32_t sample;
  std::uint32_t predicted;
  double weight;
};

struct GrownTree {
  Tree tree;
  std::vector<std::uint32_t> inbag;
  std::vector<OobVote> votes;
};

GrownTree grow_one(const Dataset& data, const TrainConfig& config, std::size_t b) {
  Rng rng(config.iseed + b);
  GrownTree out;
  out.inbag = bootstrap_sample(data.n(), rng);
  out.tree = grow_tree(data, out.inbag, config, rng, b);
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (out.inbag[i] != 0) continue;
    const auto leaf = classify(out.tree, data, i);
    const auto& node = out.tree.node(leaf);
    out.votes.push_back({static_cast<std::uint32_t>(i), node.node_class,
                         config.casewise ? node.tnodewt : 1.0});
  }
  return out;
}

}  // namespace

std::vector<std::uint32_t> bootstrap_sample(std::size_t n, Rng& rng) {
  std::vector<std::uint32_t> counts(n, 0);
  for (std::size_t draw = 0; draw < n; ++draw) ++counts[rng.uniform_index(n)];
  return counts;
}

Forest::Forest(TrainConfig config, std::vector<ColumnKind> columns, std::size_t class_count,
               std::vector<Tree> trees, std::vector<std::uint32_t> inbag, std::vector<double> oob_votes)
    : config_(config),
      columns_(std::move(columns)),
      class_count_(class_count),
      n_(trees.empty() ? 0 : inbag.size() / trees.size()),
      trees_(std::move(trees)),
      inbag_(std::move(inbag)),
      oob_votes_(std::move(oob_votes)) {
  if (trees_.empty()) throw std::invalid_argument("Forest: no trees");
  if (inbag_.size() != n_ * trees_.size()) throw std::invalid_argument("Forest: in-bag table size mismatch");
  if (oob_votes_.size() != n_ * class_count_) throw std::invalid_argument("Forest: OOB tally size mismatch");
}

void Forest::check_compatible(const Dataset& data) const {
  if (data.n() != n_) {
    throw DataError("forest was trained on " + std::to_string(n_) + " samples, dataset has " +
                    std::to_string(data.n()));
  }
  if (data.p() != p()) {
    throw DataError("forest was trained on " + std::to_string(p()) + " features, dataset has " +
                    std::to_string(data.p()));
  }
  if (data.class_count() != class_count_) throw DataError("class count differs between forest and dataset");
  for (std::size_t j = 0; j < p(); ++j) {
    if (data.columns()[j].type != columns_[j].type ||
        data.columns()[j].level_count() != columns_[j].level_count()) {
      throw DataError("column kind of feature " + std::to_string(j) + " differs from the forest's");
    }
  }
}

Forest train(const Dataset& data, const TrainConfig& config) {
  config.validate(data.n(), data.p());
  const std::size_t n = data.n();
  const std::size_t classes = data.class_count();
  const std::size_t batch = std::min(kMaxTreesPerBatch, config.ntree);

  std::vector<Tree> trees;
  trees.reserve(config.ntree);
  std::vector<std::uint32_t> inbag;
  inbag.reserve(config.ntree * n);
  std::vector<double> votes(n * classes, 0.0);

  std::vector<GrownTree> slots;
  for (std::size_t start = 0; start < config.ntree; start += batch) {
    const std::size_t count = std::min(batch, config.ntree - start);
    slots.assign(count, {});
    parallel_for(count, [&](std::size_t k) { slots[k] = grow_one(data, config, start + k); });
    for (auto& grown : slots) {
      for (const auto& v : grown.votes) votes[v.sample * classes + v.predicted] += v.weight;
      inbag.insert(inbag.end(), grown.inbag.begin(), grown.inbag.end());
      trees.push_back(std::move(grown.tree));
    }
  }
  return Forest(config, data.columns(), classes, std::move(trees), std::move(inbag), std::move(votes));
}

OobReport oob_report(const Forest& forest, const Dataset& data) {
  forest.check_compatible(data);
  const std::size_t n = data.n();
  const std::size_t classes = forest.class_count();
  OobReport report;
  report.class_count = classes;
  report.predictions.assign(n, -1);
  report.vote_fractions.assign(n * classes, 0.0);
  report.oob_tree_counts.assign(n, 0);
  report.confusion.assign(classes * classes, 0);

  for (std::size_t b = 0; b < forest.tree_count(); ++b) {
    for (std::size_t i = 0; i < n; ++i) report.oob_tree_counts[i] += forest.is_oob(b, i) ? 1 : 0;
  }

  std::size_t errors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (report.oob_tree_counts[i] == 0) {
      report.uncovered.push_back(i);
      continue;
    }
    const auto votes = forest.oob_votes(i);
    double total = 0.0;
    for (double v : votes) total += v;
    const auto predicted = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    for (std::size_t c = 0; c < classes; ++c) report.vote_fractions[i * classes + c] = votes[c] / total;
    report.predictions[i] = static_cast<std::int32_t>(predicted);
    ++report.confusion[data.label(i) * classes + predicted];
    ++report.covered;
    if (predicted != data.label(i)) ++errors;
  }
  report.error_rate = report.covered == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(report.covered);

  report.class_accuracy.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::uint64_t row = 0;
    for (std::size_t k = 0; k < classes; ++k) row += report.confusion[c * classes + k];
    report.class_accuracy[c] = row == 0 ? 0.0 : static_cast<double>(report.confusion[c * classes + c]) / static_cast<double>(row);
  }
  return report;
}

}  // namespace rfx
