#include "spdl/invertible/inv_linear.hpp"

#include <cmath>

#include "spdl/numcore/error.hpp"

namespace spdl::invertible {

namespace {

double softplus(double d) { return d > 0.0 ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d)); }

double softplus_inv(double v) { return v + std::log(-std::expm1(-v)); }

double sigmoid(double d) { return 1.0 / (1.0 + std::exp(-d)); }

void check_perm(const std::vector<std::size_t>& perm, std::size_t n) {
  if (perm.size() != n) throw ShapeError("inv_linear: permutation has wrong length");
  std::vector<bool> seen(n, false);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) throw PreconditionError("inv_linear: not a permutation");
    seen[p] = true;
  }
}

}  // namespace

InvLinear::InvLinear(std::size_t dim, double eps0)
    : n_(dim), eps0_(eps0), perm_(dim), signs_(dim, 1.0), params_(dim * dim, 0.0) {
  if (dim == 0) throw ShapeError("inv_linear: dimension must be positive");
  if (!(eps0 > 0.0 && eps0 < 1.0)) throw PreconditionError("inv_linear: eps0 must lie in (0, 1)");
  for (std::size_t i = 0; i < n_; ++i) {
    perm_[i] = i;
    params_[diag_index(i)] = softplus_inv(1.0 - eps0_);
  }
}

InvLinear InvLinear::random(std::size_t dim, Rng& rng, double eps0) {
  InvLinear layer(dim, eps0);
  layer.perm_ = spdl::permutation(dim, rng);
  const std::size_t n_off = dim * (dim - 1);
  for (std::size_t k = 0; k < n_off; ++k) layer.params_[k] = 0.3 * rng.normal();
  for (std::size_t i = 0; i < dim; ++i) {
    layer.signs_[i] = rng.rademacher();
    const double mag = std::exp(0.3 * rng.normal());
    layer.params_[layer.diag_index(i)] = softplus_inv(mag - eps0);
  }
  return layer;
}

InvLinear InvLinear::from_factors(std::vector<std::size_t> perm, const Tensor& lower,
                                  const Tensor& upper, double eps0) {
  const std::size_t n = perm.size();
  if (lower.rank() != 2 || upper.rank() != 2 || lower.rows() != n || lower.cols() != n ||
      upper.rows() != n || upper.cols() != n) {
    throw ShapeError("inv_linear: factors must be square and match the permutation");
  }
  check_perm(perm, n);
  InvLinear layer(n, eps0);
  layer.perm_ = std::move(perm);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i > j) layer.params_[layer.lower_index(i, j)] = lower(i, j);
      if (i < j) layer.params_[layer.upper_index(i, j)] = upper(i, j);
    }
  for (std::size_t i = 0; i < n; ++i) {
    const double u = upper(i, i);
    if (!(std::abs(u) > eps0)) {
      throw PreconditionError("inv_linear: |diag(U)| must exceed eps0");
    }
    layer.signs_[i] = u < 0.0 ? -1.0 : 1.0;
    layer.params_[layer.diag_index(i)] = softplus_inv(std::abs(u) - eps0);
  }
  return layer;
}

InvLinear InvLinear::restore(std::vector<std::size_t> perm, std::vector<double> signs,
                             std::vector<double> params, double eps0) {
  const std::size_t n = perm.size();
  InvLinear layer(n, eps0);
  check_perm(perm, n);
  if (signs.size() != n || params.size() != n * n) {
    throw ShapeError("inv_linear: inconsistent serialized state");
  }
  for (double s : signs)
    if (s != 1.0 && s != -1.0) throw PreconditionError("inv_linear: signs must be +-1");
  layer.perm_ = std::move(perm);
  layer.signs_ = std::move(signs);
  layer.params_ = std::move(params);
  return layer;
}

std::size_t InvLinear::lower_index(std::size_t i, std::size_t j) const { return i * (i - 1) / 2 + j; }

std::size_t InvLinear::upper_index(std::size_t i, std::size_t j) const {
  return n_ * (n_ - 1) / 2 + i * (n_ - 1) - i * (i - 1) / 2 + (j - i - 1);
}

std::size_t InvLinear::diag_index(std::size_t i) const { return n_ * (n_ - 1) + i; }

double InvLinear::lower(std::size_t i, std::size_t j) const { return params_[lower_index(i, j)]; }
double InvLinear::upper(std::size_t i, std::size_t j) const { return params_[upper_index(i, j)]; }
double InvLinear::diag(std::size_t i) const {
  return signs_[i] * (eps0_ + softplus(params_[diag_index(i)]));
}

Tensor InvLinear::forward(const Tensor& x) const {
  if (x.size() != n_) throw ShapeError("inv_linear: dimension mismatch");
  std::vector<double> a(n_), b(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    double s = diag(i) * x[i];
    for (std::size_t j = i + 1; j < n_; ++j) s += upper(i, j) * x[j];
    a[i] = s;
  }
  for (std::size_t i = 0; i < n_; ++i) {
    double s = a[i];
    for (std::size_t j = 0; j < i; ++j) s += lower(i, j) * a[j];
    b[i] = s;
  }
  Tensor y({n_});
  for (std::size_t i = 0; i < n_; ++i) y[i] = b[perm_[i]];
  return y;
}

Tensor InvLinear::inverse(const Tensor& y) const {
  if (y.size() != n_) throw ShapeError("inv_linear: dimension mismatch");
  std::vector<double> a(n_);
  for (std::size_t i = 0; i < n_; ++i) a[perm_[i]] = y[i];
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < i; ++j) a[i] -= lower(i, j) * a[j];
  Tensor x({n_});
  for (std::size_t i = n_; i-- > 0;) {
    double s = a[i];
    for (std::size_t j = i + 1; j < n_; ++j) s -= upper(i, j) * x[j];
    x[i] = s / diag(i);
  }
  return x;
}

double InvLinear::logdet() const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_; ++i) s += std::log(eps0_ + softplus(params_[diag_index(i)]));
  return s;
}

double InvLinear::logdet(const Tensor& x) const {
  if (x.size() != n_) throw ShapeError("inv_linear: dimension mismatch");
  return logdet();
}

Tensor InvLinear::backward(const Tensor& x, const Tensor& grad_out,
                           std::span<double> grad_params) const {
  if (x.size() != n_ || grad_out.size() != n_ || grad_params.size() != params_.size()) {
    throw ShapeError("inv_linear: dimension mismatch in backward");
  }
  std::vector<double> a(n_), gb(n_), ga(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    double s = diag(i) * x[i];
    for (std::size_t j = i + 1; j < n_; ++j) s += upper(i, j) * x[j];
    a[i] = s;
  }
  for (std::size_t i = 0; i < n_; ++i) gb[perm_[i]] = grad_out[i];
  for (std::size_t j = 0; j < n_; ++j) {
    double s = gb[j];
    for (std::size_t i = j + 1; i < n_; ++i) {
      s += lower(i, j) * gb[i];
      grad_params[lower_index(i, j)] += gb[i] * a[j];
    }
    ga[j] = s;
  }
  Tensor gx({n_});
  for (std::size_t j = 0; j < n_; ++j) {
    double s = diag(j) * ga[j];
    for (std::size_t i = 0; i < j; ++i) {
      s += upper(i, j) * ga[i];
      grad_params[upper_index(i, j)] += ga[i] * x[j];
    }
    gx[j] = s;
    grad_params[diag_index(j)] += ga[j] * x[j] * signs_[j] * sigmoid(params_[diag_index(j)]);
  }
  return gx;
}

Tensor InvLinear::logdet_backward(const Tensor& x, double scale,
                                  std::span<double> grad_params) const {
  if (x.size() != n_ || grad_params.size() != params_.size()) {
    throw ShapeError("inv_linear: dimension mismatch in logdet_backward");
  }
  for (std::size_t i = 0; i < n_; ++i) {
    const double d = params_[diag_index(i)];
    grad_params[diag_index(i)] += scale * sigmoid(d) / (eps0_ + softplus(d));
  }
  return Tensor({n_});
}

void InvLinear::set_params(std::span<const double> p) {
  if (p.size() != params_.size()) throw ShapeError("inv_linear: wrong parameter count");
  params_.assign(p.begin(), p.end());
}

std::unique_ptr<FlowLayer> InvLinear::clone() const { return std::make_unique<InvLinear>(*this); }

Tensor InvLinear::matrix() const {
  Tensor lu({n_, n_});
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      // (L U)_{ij} = sum_{k <= min(i, j)} L_ik U_kj
      double s = 0.0;
      for (std::size_t k = 0; k <= std::min(i, j); ++k) {
        const double l = k == i ? 1.0 : lower(i, k);
        const double u = k == j ? diag(k) : upper(k, j);
        s += l * u;
      }
      lu(i, j) = s;
    }
  Tensor m({n_, n_});
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) m(i, j) = lu(perm_[i], j);
  return m;
}

}  // namespace spdl::invertible
