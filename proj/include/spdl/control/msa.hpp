#pragma once

#include <vector>

#include "spdl/blocks/network.hpp"
#include "spdl/control/dataset.hpp"
#include "spdl/control/loss.hpp"

namespace spdl::control {

struct MsaConfig {
  std::size_t sweeps = 1;
  std::size_t inner_steps = 10;
  double inner_lr = 0.1;
  LossKind loss = LossKind::squared;
};

struct MsaResult {
  std::vector<double> theta;
  std::vector<double> loss;  // mean data loss before each sweep and after the last
};

// Method of successive approximation. Each sweep runs the forward states,
// the discrete costates with p^K = -dL/dz^K, and then for every layer k
// gradient ascent on H_k(theta) = (1/N) sum_n <p_n^{k+1}, f_k(z_n^k; theta)>
// with states and costates frozen. For ODE blocks f_k is the vector field
// (block(z) - z) / h; for other blocks it is the block map itself. Throws
// DiagnosticsError with the layer index if the ascent becomes non-finite.
MsaResult msa_iterate(blocks::Network& net, const Dataset& data, const MsaConfig& cfg);

// Gradient of H_k with respect to the parameters of block k.
std::vector<double> hamiltonian_gradient(const blocks::Block& b, const std::vector<Tensor>& states,
                                         const std::vector<Tensor>& costates);

}  // namespace spdl::control
