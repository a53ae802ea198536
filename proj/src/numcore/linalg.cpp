#include "spdl/numcore/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spdl/numcore/error.hpp"
#include "spdl/numcore/rng.hpp"

namespace spdl {

void matvec(std::span<const double> a, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    const double* row = a.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

void matvec_t(std::span<const double> a, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y) {
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(cols), 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double xi = x[i];
    const double* row = a.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) y[j] += row[j] * xi;
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Tensor transpose(const Tensor& a) {
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.size() != a.cols()) throw ShapeError("matvec: incompatible shapes");
  Tensor y({a.rows()});
  matvec(a.data(), a.rows(), a.cols(), x.data(), y.data());
  return y;
}

double frobenius_norm(const Tensor& a) { return norm2(a.data()); }

double spectral_norm(const Tensor& a, int iters, std::uint64_t seed) {
  if (a.rank() != 2) {
    throw ShapeError("spectral_norm: expected a matrix, got shape " + shape_string(a.shape()));
  }
  std::vector<double> v;
  return spectral_norm(a.data(), a.rows(), a.cols(), iters, v, seed);
}

double spectral_norm(std::span<const double> a, std::size_t rows, std::size_t cols,
                     int iters, std::vector<double>& v, std::uint64_t seed) {
  if (iters < 1) throw PreconditionError("spectral_norm: iters must be >= 1");
  if (a.size() != rows * cols) throw ShapeError("spectral_norm: data/shape mismatch");
  if (rows == 0 || cols == 0) return 0.0;
  if (v.size() != cols || norm2(v) == 0.0) {
    Rng rng(seed);
    v = rng.rademacher_vector(cols);
  }
  std::vector<double> u(rows);
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    double nv = norm2(v);
    if (nv == 0.0) return 0.0;
    for (auto& x : v) x /= nv;
    matvec(a, rows, cols, v, u);
    sigma = norm2(u);
    if (sigma == 0.0) return 0.0;
    matvec_t(a, rows, cols, u, v);
  }
  const double nv = norm2(v);
  if (nv > 0.0)
    for (auto& x : v) x /= nv;
  return sigma;
}

double logabsdet_lu(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw ShapeError("logabsdet_lu: expected a square matrix, got " + shape_string(a.shape()));
  }
  const std::size_t n = a.rows();
  Tensor lu = a;
  double scale = 0.0;
  for (double x : lu.data()) scale = std::max(scale, std::abs(x));
  const double tiny = scale * static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  double logdet = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
    const double p = lu(piv, k);
    if (scale == 0.0 || std::abs(p) <= tiny) {
      throw SingularError("logabsdet_lu: matrix is singular to working precision");
    }
    if (piv != k)
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
    logdet += std::log(std::abs(p));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / p;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
    }
  }
  return logdet;
}

Tensor lu_inverse(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw ShapeError("lu_inverse: expected a square matrix, got " + shape_string(a.shape()));
  }
  const std::size_t n = a.rows();
  Tensor lu = a;
  Tensor inv = Tensor::identity(n);
  double scale = 0.0;
  for (double x : lu.data()) scale = std::max(scale, std::abs(x));
  const double tiny = scale * static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
    if (scale == 0.0 || std::abs(lu(piv, k)) <= tiny) {
      throw SingularError("lu_inverse: matrix is singular to working precision");
    }
    if (piv != k)
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(lu(k, j), lu(piv, j));
        std::swap(inv(k, j), inv(piv, j));
      }
    const double p = lu(k, k);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      const double f = lu(i, k) / p;
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        lu(i, j) -= f * lu(k, j);
        inv(i, j) -= f * inv(k, j);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double p = lu(i, i);
    for (std::size_t j = 0; j < n; ++j) inv(i, j) /= p;
  }
  return inv;
}

std::vector<double> cholesky_solve(const Tensor& a, std::span<const double> b) {
  if (a.rank() != 2 || a.rows() != a.cols() || b.size() != a.rows()) {
    throw ShapeError("cholesky_solve: incompatible shapes");
  }
  const std::size_t n = a.rows();
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      throw SingularError("cholesky_solve: matrix is not positive definite (pivot " +
                          std::to_string(j) + ")");
    }
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  std::vector<double> y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= l(k, i) * y[k];
    y[i] /= l(i, i);
  }
  return y;
}

Tensor project_simplex(const Tensor& h, double total) {
  if (h.rank() != 1 || h.size() == 0) {
    throw ShapeError("project_simplex: expected a non-empty 1-D tensor");
  }
  if (!(total > 0.0)) throw PreconditionError("project_simplex: total must be positive");
  // Sort descending, find the largest support size rho whose threshold keeps
  // the rho-th entry positive.
  std::vector<double> u(h.data().begin(), h.data().end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumsum += u[i];
    const double t = (cumsum - total) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) tau = t;
  }
  Tensor v({h.size()});
  for (std::size_t i = 0; i < h.size(); ++i) v[i] = std::max(h[i] - tau, 0.0);
  // Re-distribute the rounding residue over the support so the sum is exact
  // to the last few ulps.
  double s = 0.0;
  std::size_t support = 0;
  for (double x : v.data()) {
    s += x;
    if (x > 0.0) ++support;
  }
  if (support > 0) {
    const double corr = (total - s) / static_cast<double>(support);
    for (auto& x : v.data())
      if (x > 0.0) x = std::max(x + corr, 0.0);
  }
  return v;
}

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw PreconditionError("finite_diff_grad: eps must be positive");
  Tensor g(x.shape());
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + eps;
    const double fp = f(xp);
    xp[i] = xi - eps;
    const double fm = f(xp);
    xp[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("finite_diff_grad: non-finite function value at coordinate " +
                            std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

Tensor finite_diff_jacobian(const VectorFn& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw PreconditionError("finite_diff_jacobian: eps must be positive");
  Tensor xp = x;
  std::size_t m = 0;
  Tensor jac;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    xp[j] = xj + eps;
    const Tensor fp = f(xp);
    xp[j] = xj - eps;
    const Tensor fm = f(xp);
    xp[j] = xj;
    if (j == 0) {
      m = fp.size();
      jac = Tensor({m, x.size()});
    }
    if (!fp.all_finite() || !fm.all_finite()) {
      throw EvaluationError("finite_diff_jacobian: non-finite value at coordinate " +
                            std::to_string(j));
    }
    for (std::size_t i = 0; i < m; ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * eps);
  }
  return jac;
}

}  // namespace spdl
