#pragma once

#include <span>
#include <vector>

namespace rfx {

double pearson(std::span<const double> a, std::span<const double> b);

/// Ranks with ties averaged, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

double spearman(std::span<const double> a, std::span<const double> b);

/// Normalized Kendall tau distance: discordant pairs / all pairs, in [0, 1].
double kendall_distance(std::span<const double> a, std::span<const double> b);

/// Indices of the k largest values, largest first; ties keep lower index first.
std::vector<std::size_t> top_k(std::span<const double> values, std::size_t k);

}  // namespace rfx
