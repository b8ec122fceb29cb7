#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rfx/dataset.hpp"
#include "rfx/rng.hpp"

namespace rfx::testing {

inline Dataset load_wine() {
  const std::string dir = RFX_DATA_DIR;
  return load_csv(dir + "/wine.csv", load_schema(dir + "/wine.schema.json"), "class");
}

inline Dataset make_dataset(std::size_t n, std::size_t p, const std::vector<double>& column_major,
                            const std::vector<std::uint32_t>& labels, std::size_t classes) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) names.push_back("f" + std::to_string(j));
  std::vector<std::string> class_names;
  for (std::size_t c = 0; c < classes; ++c) class_names.push_back("c" + std::to_string(c));
  (void)n;
  return Dataset(names, std::vector<ColumnKind>(p, ColumnKind::numeric()), column_major, labels, class_names);
}

/// Gaussian blobs: class c centred at c * spacing on every axis, unit noise.
inline Dataset make_blobs(std::size_t n, std::size_t p, std::size_t classes, double spacing, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> values(n * p);
  std::vector<std::uint32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::uint32_t>(i % classes);
    for (std::size_t j = 0; j < p; ++j) {
      const double centre = spacing * static_cast<double>(labels[i]) * ((j % 2 == 0) ? 1.0 : -0.5);
      values[j * n + i] = centre + rng.normal();
    }
  }
  return make_dataset(n, p, values, labels, classes);
}

/// Wine with one extra pure-noise feature appended.
inline Dataset wine_with_noise(std::uint64_t seed) {
  const Dataset wine = load_wine();
  Rng rng(seed);
  auto values = wine.values();
  for (std::size_t i = 0; i < wine.n(); ++i) values.push_back(rng.normal());
  auto names = wine.feature_names();
  names.push_back("noise");
  auto kinds = wine.columns();
  kinds.push_back(ColumnKind::numeric());
  return Dataset(names, kinds, values, wine.labels(), wine.class_names());
}

}  // namespace rfx::testing

namespace rfx::testing {

/// Three 2-D clusters of unequal size and spread, so MDS eigenvalues are well separated.
inline Dataset make_uneven_clusters(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t sizes[3] = {n / 2, n / 3, n - n / 2 - n / 3};
  const double cx[3] = {0.0, 6.0, 1.5}, cy[3] = {0.0, 1.0, 4.0}, sd[3] = {1.0, 0.7, 0.4};
  std::vector<double> values(2 * n);
  std::vector<std::uint32_t> labels(n);
  std::size_t i = 0;
  for (std::uint32_t c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < sizes[c]; ++k, ++i) {
      labels[i] = c;
      values[i] = cx[c] + sd[c] * rng.normal();
      values[n + i] = cy[c] + sd[c] * rng.normal();
    }
  }
  return make_dataset(n, 2, values, labels, 3);
}

}  // namespace rfx::testing
