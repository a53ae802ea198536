#include "spdl/invertible/iresnet.hpp"

#include <cmath>

#include "spdl/numcore/error.hpp"
#include "spdl/numcore/linalg.hpp"

namespace spdl::invertible {

using blocks::Activation;
using blocks::Block;
using blocks::BlockKind;
using blocks::Network;

namespace {

struct ChainCache {
  std::vector<std::vector<double>> y;  // y_0 = x, ..., y_L
  std::vector<std::vector<double>> u;  // pre-activations of layer l at u[l]
};

ChainCache chain_forward(const Network& net, const Tensor& x) {
  ChainCache c;
  c.y.emplace_back(x.data().begin(), x.data().end());
  for (const auto& b : net.blocks()) {
    const auto p = b.params();
    const std::size_t in = b.in_dim(), out = b.out_dim();
    std::vector<double> u(out), y(out);
    matvec(p.first(out * in), out, in, c.y.back(), u);
    for (std::size_t i = 0; i < out; ++i) {
      u[i] += p[out * in + i];
      y[i] = blocks::activate(b.activation(), u[i]);
    }
    c.u.push_back(std::move(u));
    c.y.push_back(std::move(y));
  }
  return c;
}

// Tangents ydot_l of the chain for input tangent v.
std::vector<std::vector<double>> chain_tangent(const Network& net, const ChainCache& c,
                                               std::span<const double> v) {
  std::vector<std::vector<double>> yd;
  yd.emplace_back(v.begin(), v.end());
  for (std::size_t l = 0; l < net.size(); ++l) {
    const auto& b = net.blocks()[l];
    const std::size_t in = b.in_dim(), out = b.out_dim();
    std::vector<double> ud(out);
    matvec(b.params().first(out * in), out, in, yd.back(), ud);
    for (std::size_t i = 0; i < out; ++i) ud[i] *= blocks::activate_deriv(b.activation(), c.u[l][i]);
    yd.push_back(std::move(ud));
  }
  return yd;
}

double norm_of_diff_plus(const Tensor& x, const Tensor& fx, const Tensor& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] + fx[i] - y[i];
    s += r * r;
  }
  return std::sqrt(s);
}

}  // namespace

IResBlock::IResBlock(Network subnet, IResOptions opt, std::uint64_t probe_seed)
    : subnet_(std::move(subnet)), opt_(opt), probe_seed_(probe_seed) {
  if (subnet_.empty() || subnet_.in_dim() != subnet_.out_dim()) {
    throw ShapeError("iresnet: subnet must map dim -> dim");
  }
  for (const auto& b : subnet_.blocks()) {
    if (b.kind() != BlockKind::dense && b.kind() != BlockKind::linear_head) {
      throw PreconditionError("iresnet: subnet may contain only dense and linear_head blocks");
    }
  }
  if (!(opt_.lip_target > 0.0 && opt_.lip_target < 1.0)) {
    throw PreconditionError("iresnet: lip_target must lie in (0, 1)");
  }
  power_vectors_.resize(subnet_.size());
}

IResBlock IResBlock::make(std::size_t dim, std::size_t hidden, std::size_t depth, Activation act,
                          Rng& rng, IResOptions opt) {
  if (depth < 1 || hidden < 1) throw PreconditionError("iresnet: subnet needs depth, width >= 1");
  Network net;
  net.add(Block::dense(dim, hidden, act));
  for (std::size_t k = 1; k < depth; ++k) net.add(Block::dense(hidden, hidden, act));
  net.add(Block::linear_head(hidden, dim));
  net.init(rng);
  IResBlock block(std::move(net), opt, rng.next_u64());
  block.renormalize(50);
  return block;
}

Tensor IResBlock::forward(const Tensor& x) const {
  if (x.size() != dim()) throw ShapeError("iresnet: dimension mismatch");
  Tensor y = subnet_.evaluate(x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
  return y;
}

Tensor IResBlock::inverse(const Tensor& y) const {
  return solve_inverse(y, opt_.inverse_tol, opt_.max_iter).x;
}

FixedPointResult IResBlock::solve_inverse(const Tensor& y, double tol, std::size_t max_iter) const {
  if (y.size() != dim()) throw ShapeError("iresnet: dimension mismatch");
  if (!(tol > 0.0)) throw PreconditionError("iresnet inverse: tol must be positive");
  if (max_iter < 1) throw PreconditionError("iresnet inverse: max_iter must be >= 1");
  Tensor x = y;
  Tensor fx = subnet_.evaluate(x);
  for (std::size_t it = 1;; ++it) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = y[i] - fx[i];
    fx = subnet_.evaluate(x);
    const double r = norm_of_diff_plus(x, fx, y);
    if (!std::isfinite(r)) throw ConvergenceError("iresnet inverse: iteration diverged", r);
    if (r <= tol) return {std::move(x), it, r};
    if (it >= max_iter) {
      throw ConvergenceError("iresnet inverse: no convergence after " + std::to_string(max_iter) +
                                 " iterations",
                             r);
    }
  }
}

void IResBlock::renormalize(int iters) {
  for (std::size_t k = 0; k < subnet_.size(); ++k) {
    auto& b = subnet_.blocks()[k];
    const std::size_t in = b.in_dim(), out = b.out_dim();
    auto w = b.params().first(out * in);
    const double sigma = spectral_norm(w, out, in, iters, power_vectors_[k], k + 1);
    if (sigma > opt_.lip_target) {
      const double f = opt_.lip_target / sigma;
      for (auto& v : w) v *= f;
    }
  }
}

std::vector<double> IResBlock::spectral_estimates(int iters) {
  std::vector<double> est;
  for (std::size_t k = 0; k < subnet_.size(); ++k) {
    const auto& b = subnet_.blocks()[k];
    est.push_back(spectral_norm(b.params().first(b.out_dim() * b.in_dim()), b.out_dim(),
                                b.in_dim(), iters, power_vectors_[k], k + 1));
  }
  return est;
}

void IResBlock::after_step() {
  renormalize(opt_.power_iters);
  ++probe_seed_;
}

std::unique_ptr<FlowLayer> IResBlock::clone() const { return std::make_unique<IResBlock>(*this); }

Tensor IResBlock::jvp(const Tensor& x, const Tensor& v) const {
  const auto c = chain_forward(subnet_, x);
  return Tensor::vector(chain_tangent(subnet_, c, v.data()).back());
}

Tensor IResBlock::vjp(const Tensor& x, const Tensor& w) const {
  const auto c = chain_forward(subnet_, x);
  std::vector<double> g(w.data().begin(), w.data().end());
  for (std::size_t l = subnet_.size(); l-- > 0;) {
    const auto& b = subnet_.blocks()[l];
    const std::size_t in = b.in_dim(), out = b.out_dim();
    for (std::size_t i = 0; i < out; ++i) g[i] *= blocks::activate_deriv(b.activation(), c.u[l][i]);
    std::vector<double> gin(in);
    matvec_t(b.params().first(out * in), out, in, g, gin);
    g = std::move(gin);
  }
  return Tensor::vector(std::move(g));
}

Tensor IResBlock::jacobian(const Tensor& x) const {
  const std::size_t n = dim();
  const auto c = chain_forward(subnet_, x);
  Tensor j({n, n});
  std::vector<double> e(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    e[k] = 1.0;
    const auto col = chain_tangent(subnet_, c, e).back();
    e[k] = 0.0;
    for (std::size_t i = 0; i < n; ++i) j(i, k) = col[i];
  }
  return j;
}

void IResBlock::mixed_backward(const Tensor& x, const Tensor& a, const Tensor& b, double scale,
                               std::span<double> grad_params, std::span<double> grad_x) const {
  const auto c = chain_forward(subnet_, x);
  const auto yd = chain_tangent(subnet_, c, b.data());
  const auto off = subnet_.offsets();
  // Reverse sweep over (y_l, ydot_l) with ydot_bar_L = scale * a, y_bar_L = 0.
  std::vector<double> ydb(a.data().begin(), a.data().end());
  for (auto& v : ydb) v *= scale;
  std::vector<double> yb(ydb.size(), 0.0);
  for (std::size_t l = subnet_.size(); l-- > 0;) {
    const auto& blk = subnet_.blocks()[l];
    const std::size_t in = blk.in_dim(), out = blk.out_dim();
    const auto w = blk.params().first(out * in);
    auto gw = grad_params.subspan(off[l], out * in);
    auto gc = grad_params.subspan(off[l] + out * in, out);
    std::vector<double> udb(out), ub(out), ud(out);
    matvec(w, out, in, yd[l], ud);
    for (std::size_t i = 0; i < out; ++i) {
      const double u = c.u[l][i];
      const double d1 = blocks::activate_deriv(blk.activation(), u);
      const double d2 = blocks::activate_second_deriv(blk.activation(), u);
      udb[i] = d1 * ydb[i];
      ub[i] = d1 * yb[i] + d2 * ud[i] * ydb[i];
      gc[i] += ub[i];
      for (std::size_t j = 0; j < in; ++j) gw[i * in + j] += udb[i] * yd[l][j] + ub[i] * c.y[l][j];
    }
    std::vector<double> nydb(in), nyb(in);
    matvec_t(w, out, in, udb, nydb);
    matvec_t(w, out, in, ub, nyb);
    ydb = std::move(nydb);
    yb = std::move(nyb);
  }
  for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x[i] += yb[i];
}

double IResBlock::logdet_estimate(const Tensor& x, std::size_t terms, std::size_t probes,
                                  std::uint64_t seed, std::size_t exact_dim_cutoff) const {
  if (x.size() != dim()) throw ShapeError("iresnet: dimension mismatch");
  const std::size_t n = dim();
  if (n <= exact_dim_cutoff) {
    Tensor m = jacobian(x);
    for (std::size_t i = 0; i < n; ++i) m(i, i) += 1.0;
    return logabsdet_lu(m);
  }
  if (terms < 1 || probes < 1) throw PreconditionError("iresnet logdet: terms and probes must be >= 1");
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const Tensor v = Tensor::vector(rng.rademacher_vector(n));
    Tensor w = v;
    for (std::size_t k = 1; k <= terms; ++k) {
      w = vjp(x, w);
      const double sign = (k % 2 == 1) ? 1.0 : -1.0;
      total += sign * dot(w.data(), v.data()) / static_cast<double>(k);
    }
  }
  return total / static_cast<double>(probes);
}

Tensor IResBlock::logdet_estimate_backward(const Tensor& x, std::size_t terms, std::size_t probes,
                                           std::uint64_t seed, std::size_t exact_dim_cutoff,
                                           double scale, std::span<double> grad_params) const {
  if (x.size() != dim()) throw ShapeError("iresnet: dimension mismatch");
  if (grad_params.size() != num_params()) throw ShapeError("iresnet: gradient buffer has wrong size");
  const std::size_t n = dim();
  Tensor gx({n});
  if (n <= exact_dim_cutoff) {
    // d log|det(I + J)| = trace((I + J)^{-1} dJ) = sum_j row_j(A) . dJ e_j
    Tensor m = jacobian(x);
    for (std::size_t i = 0; i < n; ++i) m(i, i) += 1.0;
    const Tensor inv = lu_inverse(m);
    Tensor row({n}), e({n});
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) row[i] = inv(j, i);
      e[j] = 1.0;
      mixed_backward(x, row, e, scale, grad_params, gx.data());
      e[j] = 0.0;
    }
    return gx;
  }
  if (terms < 1 || probes < 1) throw PreconditionError("iresnet logdet: terms and probes must be >= 1");
  // d(v^T J^k v) = sum_{i<k} w_i^T dJ u_{k-1-i}, w_i = (J^T)^i v, u_j = J^j v.
  Rng rng(seed);
  const double inv_m = 1.0 / static_cast<double>(probes);
  for (std::size_t p = 0; p < probes; ++p) {
    const Tensor v = Tensor::vector(rng.rademacher_vector(n));
    std::vector<Tensor> u{v}, w{v};
    for (std::size_t j = 1; j < terms; ++j) {
      u.push_back(jvp(x, u.back()));
      w.push_back(vjp(x, w.back()));
    }
    for (std::size_t i = 0; i < terms; ++i) {
      Tensor b({n});
      for (std::size_t k = i + 1; k <= terms; ++k) {
        const double ck = ((k % 2 == 1) ? 1.0 : -1.0) / static_cast<double>(k) * inv_m;
        axpy(ck, u[k - 1 - i].data(), b.data());
      }
      mixed_backward(x, w[i], b, scale, grad_params, gx.data());
    }
  }
  return gx;
}

double IResBlock::logdet(const Tensor& x) const {
  return logdet_estimate(x, opt_.series_terms, opt_.probes, probe_seed_, opt_.exact_dim_cutoff);
}

Tensor IResBlock::logdet_backward(const Tensor& x, double scale,
                                  std::span<double> grad_params) const {
  return logdet_estimate_backward(x, opt_.series_terms, opt_.probes, probe_seed_,
                                  opt_.exact_dim_cutoff, scale, grad_params);
}

Tensor IResBlock::backward(const Tensor& x, const Tensor& grad_out,
                           std::span<double> grad_params) const {
  if (grad_out.size() != dim()) throw ShapeError("iresnet: dimension mismatch");
  const auto trace = blocks::network_forward(subnet_, x);
  Tensor gx = blocks::network_backprop_accumulate(subnet_, trace, grad_out, grad_params);
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += grad_out[i];
  return gx;
}

void iresnet_renormalize(IResBlock& block, int iters) { block.renormalize(iters); }

FixedPointResult iresnet_inverse(const IResBlock& block, const Tensor& y, double tol,
                                 std::size_t max_iter) {
  return block.solve_inverse(y, tol, max_iter);
}

double iresnet_logdet(const IResBlock& block, const Tensor& x, std::size_t series_terms,
                      std::size_t probes, std::uint64_t seed, std::size_t exact_dim_cutoff) {
  return block.logdet_estimate(x, series_terms, probes, seed, exact_dim_cutoff);
}

}  // namespace spdl::invertible
