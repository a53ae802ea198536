#pragma once

#include <functional>
#include <vector>

#include "spdl/blocks/network.hpp"

namespace spdl::control {

using LossGradFn = std::function<Tensor(const Tensor&)>;

// Parameter gradient of L(z(T)) for the ODE dz/dt = f_k(z) on the k-th
// interval of length h_k, where f_k is the vector field of block k (euler or
// gradflow blocks only). States and costates are integrated with RK4 using
// `substeps` steps per interval, and the layer gradient is the integral of
// (df_k/dtheta)^T p over the interval.
std::vector<double> continuous_gradient(const blocks::Network& net, const Tensor& x,
                                        const LossGradFn& loss_grad, std::size_t substeps);

struct CommutationResult {
  std::vector<double> discrete;
  std::vector<double> continuous;
  double rel_err;  // |discrete - continuous| / |continuous|
};

// Compares the backpropagated gradient of 0.5 |z^K - target|^2 with the
// continuous-time gradient of the same piecewise-constant control.
CommutationResult commutation_check(const blocks::Network& net, const Tensor& x,
                                    const Tensor& target, std::size_t substeps = 32);

}  // namespace spdl::control
