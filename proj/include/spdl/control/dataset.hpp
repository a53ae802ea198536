#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "spdl/numcore/tensor.hpp"

namespace spdl::control {

struct Dataset {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<Tensor> features;
  std::vector<Tensor> labels;  // empty for unlabeled data

  std::size_t size() const noexcept { return features.size(); }
  bool is_labeled() const noexcept { return !labels.empty(); }
  std::size_t feature_dim() const { return features.empty() ? 0 : features.front().size(); }
};

// halfmoon2d: point i lies on the upper unit arc (cos t, sin t) with label
//   +1 when i is even, on the lower arc (1 - cos t, 0.5 - sin t) with label
//   -1 otherwise; t ~ U[0, pi].
// donut2d / donut3d: even i in the ring/shell 1 <= r <= 1.5 (label +1), odd i
//   in the core r <= 0.5 (label -1), uniform direction.
// two_halfmoons_density: halfmoon2d geometry without labels.
// Every coordinate gets N(0, noise^2) jitter.
Dataset make_dataset(std::string_view name, std::size_t n, double noise, std::uint64_t seed);

// N x d matrix of the features.
Tensor feature_matrix(const Dataset& d);

// CSV with columns x_0..x_{d-1}[,label].
void write_dataset(std::ostream& os, const Dataset& d);

}  // namespace spdl::control
