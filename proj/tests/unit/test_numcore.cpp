#include <cmath>

#include "doctest.h"
#include "spdl/numcore/error.hpp"
#include "spdl/numcore/linalg.hpp"
#include "spdl/numcore/rng.hpp"
#include "spdl/numcore/tensor.hpp"
#include "support/oracles.hpp"

using namespace spdl;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  return Tensor({r, c}, rng.normal_vector(r * c));
}

oracle::Mat to_mat(const Tensor& a) {
  oracle::Mat m(a.rows(), std::vector<double>(a.cols()));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m[i][j] = a(i, j);
  return m;
}

}  // namespace

TEST_CASE("tensor shape invariant") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.all_finite());
  t[0] = NAN;
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("rng streams are reproducible and seed-dependent") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= (x != c.next_u64());
  }
  CHECK(differs);
  Rng d(7), e(7);
  for (int i = 0; i < 100; ++i) CHECK(d.normal() == e.normal());
}

TEST_CASE("rng normal moments") {
  Rng rng(1);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("spectral_norm examples") {
  const double d[] = {3.0, 1.0};
  CHECK(spectral_norm(Tensor::diag(d), 50, 0) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(spectral_norm(Tensor::identity(4), 5, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(spectral_norm(Tensor::vector({1.0, 2.0}), 5, 0), ShapeError);

  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor a = random_matrix(5, 3, rng);
    const double ref = oracle::jacobi_singular_values(to_mat(a))[0];
    CHECK(std::abs(spectral_norm(a, 500, 3) - ref) <= 1e-8 * ref);
  }
}

TEST_CASE("spectral_norm is a lower bound and below the Frobenius norm") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_matrix(1 + rng.below(6), 1 + rng.below(6), rng);
    const double ref = oracle::jacobi_singular_values(to_mat(a))[0];
    for (int iters : {1, 3, 10}) {
      const double est = spectral_norm(a, iters, trial);
      CHECK(est <= ref * (1 + 1e-12));
      CHECK(est <= frobenius_norm(a) * (1 + 1e-12));
    }
  }
}

TEST_CASE("spectral_norm warm start") {
  Rng rng(3);
  const Tensor a = random_matrix(4, 4, rng);
  std::vector<double> v;
  double prev = 0;
  for (int i = 0; i < 30; ++i) {
    const double est = spectral_norm(a.data(), 4, 4, 1, v, 9);
    CHECK(est >= prev - 1e-12);
    prev = est;
  }
  CHECK(prev == doctest::Approx(oracle::jacobi_singular_values(to_mat(a))[0]).epsilon(1e-6));
}

TEST_CASE("project_simplex examples") {
  auto v = project_simplex(Tensor::vector({0.5, 0.5}), 1.0);
  CHECK(v[0] == 0.5);
  CHECK(v[1] == 0.5);
  v = project_simplex(Tensor::vector({2.0}), 1.0);
  CHECK(v[0] == doctest::Approx(1.0));

  v = project_simplex(Tensor::vector({1.0, 0.0, -0.2}), 1.0);
  const auto ref = oracle::simplex_projection_enumerate({1.0, 0.0, -0.2}, 1.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(v[i] - ref[i]) <= 1e-8);

  CHECK_THROWS_AS(project_simplex(Tensor::vector(std::vector<double>{}), 1.0), ShapeError);
  CHECK_THROWS_AS(project_simplex(Tensor::vector({1.0}), 0.0), PreconditionError);
}

TEST_CASE("project_simplex is the nearest feasible point") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const double total = rng.uniform(0.1, 3.0);
    const Tensor h = Tensor::vector(rng.normal_vector(n, 2.0));
    const Tensor v = project_simplex(h, total);
    double sum = 0;
    for (double x : v.data()) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - total) <= 1e-12);
    double dv = 0;
    for (std::size_t i = 0; i < n; ++i) dv += (h[i] - v[i]) * (h[i] - v[i]);
    for (int k = 0; k < 20; ++k) {
      std::vector<double> w(n);
      double ws = 0;
      for (auto& x : w) ws += (x = rng.uniform());
      double dw = 0;
      for (std::size_t i = 0; i < n; ++i) {
        w[i] *= total / ws;
        dw += (h[i] - w[i]) * (h[i] - w[i]);
      }
      CHECK(std::sqrt(dv) <= std::sqrt(dw) + 1e-9);
    }
  }
}

TEST_CASE("finite_diff_grad") {
  const auto c = finite_diff_grad([](const Tensor&) { return 3.0; }, Tensor::vector({1, 2}), 1e-3);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
  const auto g = finite_diff_grad(
      [](const Tensor& x) { return 0.5 * dot(x.data(), x.data()); }, Tensor::vector({1, 2}), 1e-3);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(g[1] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return NAN; }, Tensor::vector({1}), 1e-3),
                  EvaluationError);
}

TEST_CASE("finite_diff_grad agrees with analytic gradients") {
  // f(x) = sum_i sin(x_i) * x_{i+1} + 0.1 |x|^4
  auto f = [](const Tensor& x) {
    double s = 0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) s += std::sin(x[i]) * x[i + 1];
    const double n2 = dot(x.data(), x.data());
    return s + 0.1 * n2 * n2;
  };
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = Tensor::vector(rng.normal_vector(5, 2.0));
    const double n2 = dot(x.data(), x.data());
    Tensor g({5});
    for (std::size_t i = 0; i < 5; ++i) {
      g[i] = 0.4 * n2 * x[i];
      if (i + 1 < 5) g[i] += std::cos(x[i]) * x[i + 1];
      if (i > 0) g[i] += std::sin(x[i - 1]);
    }
    const Tensor fd = finite_diff_grad(f, x, 1e-5);
    std::vector<double> diff(5);
    for (std::size_t i = 0; i < 5; ++i) diff[i] = fd[i] - g[i];
    CHECK(norm2(diff) <= 1e-5 * norm2(g.data()));
  }
}

TEST_CASE("logabsdet_lu") {
  CHECK(logabsdet_lu(Tensor::identity(5)) == 0.0);
  const double d[] = {2.0, 0.5};
  CHECK(std::abs(logabsdet_lu(Tensor::diag(d))) <= 1e-15);
  CHECK_THROWS_AS(logabsdet_lu(Tensor::matrix(2, 2, {1, 2, 2, 4})), SingularError);
  CHECK_THROWS_AS(logabsdet_lu(Tensor({2, 3})), ShapeError);

  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = random_matrix(6, 6, rng);
    const double ref = std::log(std::abs(oracle::cofactor_det(to_mat(a))));
    CHECK(std::abs(logabsdet_lu(a) - ref) <= 1e-9);
  }
}

TEST_CASE("cholesky_solve") {
  const Tensor a = Tensor::matrix(2, 2, {4, 1, 1, 3});
  const double b[] = {1, 2};
  const auto x = cholesky_solve(a, b);
  CHECK(4 * x[0] + x[1] == doctest::Approx(1.0));
  CHECK(x[0] + 3 * x[1] == doctest::Approx(2.0));
  CHECK_THROWS_AS(cholesky_solve(Tensor::matrix(2, 2, {1, 2, 2, 1}), b), SingularError);
}
