#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spdl/numcore/tensor.hpp"

namespace spdl {

// y = A x for a row-major rows x cols matrix stored in `a`.
void matvec(std::span<const double> a, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);
// y = A^T x.
void matvec_t(std::span<const double> a, std::size_t rows, std::size_t cols,
              std::span<const double> x, std::span<double> y);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor matvec(const Tensor& a, const Tensor& x);
double frobenius_norm(const Tensor& a);

// Power-iteration estimate of the largest singular value of a 2-D tensor,
// started from a seeded Rademacher vector.
double spectral_norm(const Tensor& a, int iters, std::uint64_t seed);

// Warm-started variant: `v` holds the right singular vector estimate and is
// updated in place. An empty or wrongly sized `v` is re-initialized from
// `seed`.
double spectral_norm(std::span<const double> a, std::size_t rows, std::size_t cols,
                     int iters, std::vector<double>& v, std::uint64_t seed = 0);

// log|det a| via LU with partial pivoting. Throws SingularError on a
// numerically zero pivot.
double logabsdet_lu(const Tensor& a);

// Inverse of a square matrix by LU with partial pivoting.
Tensor lu_inverse(const Tensor& a);

// Solves (A) x = b for symmetric positive definite A by Cholesky. Throws
// SingularError if the factorization breaks down.
std::vector<double> cholesky_solve(const Tensor& a, std::span<const double> b);

// Euclidean projection of a 1-D tensor onto {v >= 0, sum v = total}.
Tensor project_simplex(const Tensor& h, double total);

using ScalarFn = std::function<double(const Tensor&)>;
using VectorFn = std::function<Tensor(const Tensor&)>;

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps);

// Central-difference Jacobian of a vector map; rows index outputs.
Tensor finite_diff_jacobian(const VectorFn& f, const Tensor& x, double eps);

}  // namespace spdl
