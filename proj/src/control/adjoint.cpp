#include "spdl/control/adjoint.hpp"

#include <algorithm>
#include <cmath>

#include "spdl/numcore/error.hpp"

namespace spdl::control {

using blocks::Block;
using blocks::BlockKind;

namespace {

using Vec = std::vector<double>;

Vec field(const Block& b, const Vec& z) { return block_vector_field(b, Tensor::vector(z)).values(); }

// Adjoint right-hand side: returns -J^T p and writes -(df/dtheta)^T p to dg.
Vec adjoint_rhs(const Block& b, const Vec& z, const Vec& p, Vec& dg) {
  Vec gin(z.size());
  dg.assign(b.num_params(), 0.0);
  b.backward(z, p, gin, dg);
  const double h = b.step();
  for (std::size_t i = 0; i < gin.size(); ++i) gin[i] = -(gin[i] - p[i]) / h;
  for (double& v : dg) v = -v / h;
  return gin;
}

Vec combo(const Vec& y, double a, const Vec& k) {
  Vec out = y;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * k[i];
  return out;
}

}  // namespace

std::vector<double> continuous_gradient(const blocks::Network& net, const Tensor& x,
                                        const LossGradFn& loss_grad, std::size_t substeps) {
  if (substeps < 1) throw PreconditionError("continuous_gradient: substeps must be >= 1");
  for (const auto& b : net.blocks()) {
    if (b.kind() != BlockKind::euler_residual && b.kind() != BlockKind::gradient_flow) {
      throw PreconditionError("continuous_gradient: only euler and gradflow blocks are supported");
    }
  }
  Vec z(x.data().begin(), x.data().end());
  for (const auto& b : net.blocks()) {
    const double dt = b.step() / static_cast<double>(substeps);
    for (std::size_t s = 0; s < substeps; ++s) {
      const Vec k1 = field(b, z);
      const Vec k2 = field(b, combo(z, dt / 2, k1));
      const Vec k3 = field(b, combo(z, dt / 2, k2));
      const Vec k4 = field(b, combo(z, dt, k3));
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
  }
  Vec p = loss_grad(Tensor::vector(z)).values();
  if (p.size() != z.size()) throw ShapeError("continuous_gradient: loss gradient has wrong size");

  const auto offsets = net.offsets();
  Vec grad(net.num_params(), 0.0);
  for (std::size_t k = net.size(); k-- > 0;) {
    const Block& b = net.blocks()[k];
    const double dt = -b.step() / static_cast<double>(substeps);
    Vec g(b.num_params(), 0.0);
    Vec g1, g2, g3, g4;
    for (std::size_t s = 0; s < substeps; ++s) {
      const Vec z1 = field(b, z);
      const Vec p1 = adjoint_rhs(b, z, p, g1);
      const Vec za = combo(z, dt / 2, z1), pa = combo(p, dt / 2, p1);
      const Vec z2 = field(b, za);
      const Vec p2 = adjoint_rhs(b, za, pa, g2);
      const Vec zb = combo(z, dt / 2, z2), pb = combo(p, dt / 2, p2);
      const Vec z3 = field(b, zb);
      const Vec p3 = adjoint_rhs(b, zb, pb, g3);
      const Vec zc = combo(z, dt, z3), pc = combo(p, dt, p3);
      const Vec z4 = field(b, zc);
      const Vec p4 = adjoint_rhs(b, zc, pc, g4);
      for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] += dt / 6 * (z1[i] + 2 * z2[i] + 2 * z3[i] + z4[i]);
        p[i] += dt / 6 * (p1[i] + 2 * p2[i] + 2 * p3[i] + p4[i]);
      }
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dt / 6 * (g1[i] + 2 * g2[i] + 2 * g3[i] + g4[i]);
    }
    std::copy(g.begin(), g.end(), grad.begin() + static_cast<std::ptrdiff_t>(offsets[k]));
  }
  return grad;
}

CommutationResult commutation_check(const blocks::Network& net, const Tensor& x, const Tensor& target,
                                    std::size_t substeps) {
  if (target.size() != x.size()) throw ShapeError("commutation_check: target dimension mismatch");
  auto lg = [&](const Tensor& z) {
    Tensor g = z;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= target[i];
    return g;
  };
  CommutationResult r;
  const auto trace = blocks::network_forward(net, x);
  r.discrete = blocks::network_backprop(net, trace, lg(trace.output())).param_grad.values;
  r.continuous = continuous_gradient(net, x, lg, substeps);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < r.discrete.size(); ++i) {
    num += (r.discrete[i] - r.continuous[i]) * (r.discrete[i] - r.continuous[i]);
    den += r.continuous[i] * r.continuous[i];
  }
  r.rel_err = std::sqrt(num / den);
  return r;
}

}  // namespace spdl::control
