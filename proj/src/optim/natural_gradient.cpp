#include "spdl/optim/natural_gradient.hpp"

#include "spdl/numcore/error.hpp"
#include "spdl/numcore/linalg.hpp"

namespace spdl::optim {

Tensor fisher_matrix(const std::vector<Tensor>& jacobians) {
  if (jacobians.empty()) throw PreconditionError("fisher_matrix: no Jacobians");
  const std::size_t p = jacobians.front().cols();
  Tensor g({p, p});
  for (const Tensor& j : jacobians) {
    if (j.rank() != 2 || j.cols() != p) throw ShapeError("fisher_matrix: Jacobian widths differ");
    for (std::size_t r = 0; r < j.rows(); ++r)
      for (std::size_t a = 0; a < p; ++a) {
        const double ja = j(r, a);
        if (ja == 0.0) continue;
        for (std::size_t b = 0; b < p; ++b) g(a, b) += ja * j(r, b);
      }
  }
  const double inv = 1.0 / static_cast<double>(jacobians.size());
  for (double& v : g.data()) v *= inv;
  return g;
}

std::vector<double> natural_gradient_step(std::span<const double> theta,
                                          const std::vector<Tensor>& jacobians,
                                          std::span<const double> grad,
                                          std::optional<double> damping, double h) {
  Tensor g = fisher_matrix(jacobians);
  const std::size_t p = g.rows();
  if (theta.size() != p || grad.size() != p) {
    throw ShapeError("natural_gradient_step: parameter, gradient and Jacobian sizes differ");
  }
  double lambda = 0.0;
  if (damping) {
    if (*damping < 0.0) throw PreconditionError("natural_gradient_step: damping must be >= 0");
    lambda = *damping;
  } else {
    double tr = 0.0;
    for (std::size_t i = 0; i < p; ++i) tr += g(i, i);
    lambda = 1e-6 * tr / static_cast<double>(p);
  }
  for (std::size_t i = 0; i < p; ++i) g(i, i) += lambda;
  std::vector<double> dir;
  try {
    dir = cholesky_solve(g, grad);
  } catch (const SingularError&) {
    throw SingularError("natural_gradient_step: G + lambda I is not positive definite; "
                        "increase the damping lambda");
  }
  std::vector<double> out(theta.begin(), theta.end());
  for (std::size_t i = 0; i < p; ++i) out[i] -= h * dir[i];
  return out;
}

}  // namespace spdl::optim
