#pragma once

#include <optional>
#include <span>
#include <vector>

#include "spdl/numcore/tensor.hpp"

namespace spdl::optim {

// G = (1/N) sum_n J_n^T J_n for Jacobians J_n of shape (out x P).
Tensor fisher_matrix(const std::vector<Tensor>& jacobians);

// theta' = theta - h (G + lambda I)^{-1} grad via Cholesky. Without an
// explicit damping, lambda = 1e-6 trace(G) / P. Throws SingularError when
// G + lambda I is not numerically positive definite.
std::vector<double> natural_gradient_step(std::span<const double> theta,
                                          const std::vector<Tensor>& jacobians,
                                          std::span<const double> grad,
                                          std::optional<double> damping = std::nullopt,
                                          double h = 1.0);

}  // namespace spdl::optim
