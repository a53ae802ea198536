#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "spdl/blocks/network.hpp"

namespace spdl::control {

enum class RegKind { none, l2, l1, h1_discrete, timestep_simplex };

std::string_view to_string(RegKind k);
RegKind parse_regularizer(std::string_view name);

struct Regularizer {
  RegKind kind = RegKind::none;
  double lambda = 0.0;
  double horizon = 1.0;  // T, used by timestep_simplex
};

struct Penalty {
  double value = 0.0;
  std::vector<double> grad;
};

// lambda |theta|^2
Penalty l2_penalty(std::span<const double> theta, double lambda);
// lambda |theta|_1 with subgradient sign(theta), 0 at 0.
Penalty l1_penalty(std::span<const double> theta, double lambda);
// lambda (|theta^0|^2 + K sum_k |theta^{k+1} - theta^k|^2) for K equally
// sized layers; the gradient is laid out layer after layer.
Penalty h1_penalty(const std::vector<std::span<const double>>& layers, double lambda);

// Projection of step sizes onto {h >= 0, sum h = T}.
std::vector<double> prox_timestep(std::span<const double> h, double horizon);

// Penalty over a network's flattened parameters. h1_discrete applies the H1
// form to the ODE blocks in order and plain l2 to all other blocks;
// timestep_simplex is an indicator handled by prox_timestep and contributes
// nothing here.
Penalty network_penalty(const blocks::Network& net, const Regularizer& reg);

}  // namespace spdl::control
