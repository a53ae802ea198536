#include "spdl/control/dataset.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/numcore/rng.hpp"

namespace spdl::control {

namespace {

Tensor moon_point(Rng& rng, bool upper) {
  const double t = rng.uniform(0.0, std::numbers::pi);
  if (upper) return Tensor::vector({std::cos(t), std::sin(t)});
  return Tensor::vector({1.0 - std::cos(t), 0.5 - std::sin(t)});
}

Tensor shell_point(Rng& rng, std::size_t dim, double rmin, double rmax) {
  std::vector<double> dir;
  double len = 0.0;
  do {
    dir = rng.normal_vector(dim);
    len = norm2(dir);
  } while (len == 0.0);
  // Radius drawn with density proportional to r^(dim-1).
  const double d = static_cast<double>(dim);
  const double lo = std::pow(rmin, d), hi = std::pow(rmax, d);
  const double r = std::pow(rng.uniform(lo, hi), 1.0 / d);
  for (double& v : dir) v *= r / len;
  return Tensor::vector(std::move(dir));
}

}  // namespace

Dataset make_dataset(std::string_view name, std::size_t n, double noise, std::uint64_t seed) {
  if (noise < 0.0) throw PreconditionError("make_dataset: noise must be >= 0");
  Dataset d;
  d.name = std::string(name);
  d.seed = seed;
  Rng rng(seed);
  const bool moons = name == "halfmoon2d" || name == "two_halfmoons_density";
  const bool donut = name == "donut2d" || name == "donut3d";
  if (!moons && !donut) throw PreconditionError("make_dataset: unknown dataset '" + d.name + "'");
  const std::size_t dim = name == "donut3d" ? 3 : 2;
  const bool labeled = name != "two_halfmoons_density";
  for (std::size_t i = 0; i < n; ++i) {
    const bool first = i % 2 == 0;
    Tensor x = moons ? moon_point(rng, first)
                     : (first ? shell_point(rng, dim, 1.0, 1.5) : shell_point(rng, dim, 0.0, 0.5));
    if (noise > 0.0)
      for (double& v : x.data()) v += noise * rng.normal();
    d.features.push_back(std::move(x));
    if (labeled) d.labels.push_back(Tensor::vector({first ? 1.0 : -1.0}));
  }
  return d;
}

Tensor feature_matrix(const Dataset& d) {
  const std::size_t n = d.size(), m = d.feature_dim();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = d.features[i][j];
  return out;
}

void write_dataset(std::ostream& os, const Dataset& d) {
  std::vector<std::string> header;
  for (std::size_t j = 0; j < d.feature_dim(); ++j) header.push_back("x_" + std::to_string(j));
  if (d.is_labeled()) header.push_back("label");
  CsvWriter w(os, header);
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<double> row(d.features[i].data().begin(), d.features[i].data().end());
    if (d.is_labeled()) row.push_back(d.labels[i][0]);
    w.row(row);
  }
}

}  // namespace spdl::control
