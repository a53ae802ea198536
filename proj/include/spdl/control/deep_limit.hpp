#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "spdl/blocks/activation.hpp"
#include "spdl/blocks/network.hpp"
#include "spdl/control/dataset.hpp"
#include "spdl/control/loss.hpp"
#include "spdl/optim/optimizer.hpp"

namespace spdl::control {

struct DeepLimitConfig {
  std::vector<std::size_t> ks;
  double lambda = 1e-3;
  double horizon = 1.0;  // T; every K uses h = T / K
  optim::OptimizerConfig opt = optim::OptimizerConfig::adam(0.01);
  std::size_t steps = 500;
  std::size_t restarts = 3;
  std::size_t batch = 0;  // 0 means full batch
  std::size_t plateau_patience = 0;
  blocks::Activation act = blocks::Activation::tanh;
  LossKind loss = LossKind::squared;
  std::uint64_t seed = 0;
};

struct DeepLimitRow {
  std::size_t k;
  double best_loss;  // smallest regularized objective over the restarts
  std::size_t restarts;
};

// K euler blocks of width d (the feature dimension) with step T/K followed
// by a linear head. Every block starts from the same parameters, so the
// initial network discretizes a time-constant control.
blocks::Network deep_limit_network(std::size_t dim, std::size_t out, std::size_t k, double horizon,
                                   blocks::Activation act, Rng& rng);

// Trains with the H1 regularizer (l2 on the head) for every K and reports the
// best objective found. Requires lambda > 0 and an increasing K list.
std::vector<DeepLimitRow> deep_limit_experiment(const Dataset& data, const DeepLimitConfig& cfg);

// CSV: K,best_loss,restarts.
void write_deep_limit(std::ostream& os, const std::vector<DeepLimitRow>& rows);

}  // namespace spdl::control
