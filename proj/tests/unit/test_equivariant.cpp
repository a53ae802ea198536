#include <cmath>
#include <sstream>

#include "doctest.h"
#include "spdl/equivariant/denoise.hpp"
#include "spdl/equivariant/p4.hpp"
#include "spdl/equivariant/train.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/numcore/linalg.hpp"
#include "spdl/numcore/rng.hpp"
#include "support/builders.hpp"

using namespace spdl;
using namespace spdl::equivariant;
using testsupport::rel_err;

namespace {

Tensor random_image(Rng& rng, std::size_t n, std::size_t c) {
  return Tensor({n, n, c}, rng.normal_vector(n * n * c));
}

Tensor random_p4(Rng& rng, std::size_t n, std::size_t c) {
  return Tensor({4, n, n, c}, rng.normal_vector(4 * n * n * c));
}

P4Kernel random_lift(Rng& rng, std::size_t k, std::size_t ci, std::size_t co) {
  P4Kernel kern = P4Kernel::lifting(k, ci, co);
  for (auto& v : kern.weights) v = rng.normal();
  return kern;
}

P4Kernel random_group(Rng& rng, std::size_t k, std::size_t ci, std::size_t co) {
  P4Kernel kern = P4Kernel::group_kernel(k, ci, co);
  for (auto& v : kern.weights) v = rng.normal();
  return kern;
}

Tensor relu(Tensor t) {
  for (auto& v : t.data()) v = std::max(v, 0.0);
  return t;
}

// Offset (di, dj) rotated by -r quarter turns: R^{-1}(di, dj) = (dj, -di).
std::pair<long, long> unrotate_offset(long di, long dj, int r) {
  for (int i = 0; i < r; ++i) {
    const long ni = dj, nj = -di;
    di = ni;
    dj = nj;
  }
  return {di, dj};
}

long wrap(long v, long n) { return ((v % n) + n) % n; }

Tensor oracle_lift(const Tensor& x, const P4Kernel& k) {
  const long n = static_cast<long>(x.extent(0)), m = static_cast<long>(k.extent / 2);
  const std::size_t ci = x.extent(2), co = k.out_channels;
  Tensor out({4, x.extent(0), x.extent(1), co});
  for (int r = 0; r < 4; ++r)
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j)
        for (std::size_t o = 0; o < co; ++o) {
          double s = 0.0;
          for (long di = -m; di <= m; ++di)
            for (long dj = -m; dj <= m; ++dj) {
              const auto [ei, ej] = unrotate_offset(di, dj, r);
              for (std::size_t c = 0; c < ci; ++c)
                s += k.at(0, ei + m, ej + m, c, o) *
                     x.data()[(wrap(i + di, n) * n + wrap(j + dj, n)) * ci + c];
            }
          out.data()[((r * n + i) * n + j) * co + o] = s;
        }
  return out;
}

Tensor oracle_gconv(const Tensor& y, const P4Kernel& k) {
  const long n = static_cast<long>(y.extent(1)), m = static_cast<long>(k.extent / 2);
  const std::size_t ci = y.extent(3), co = k.out_channels;
  Tensor out({4, y.extent(1), y.extent(2), co});
  for (int r = 0; r < 4; ++r)
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j)
        for (std::size_t o = 0; o < co; ++o) {
          double s = 0.0;
          for (int sr = 0; sr < 4; ++sr)
            for (long di = -m; di <= m; ++di)
              for (long dj = -m; dj <= m; ++dj) {
                const auto [ei, ej] = unrotate_offset(di, dj, r);
                for (std::size_t c = 0; c < ci; ++c)
                  s += k.at(static_cast<std::size_t>(wrap(sr - r, 4)), ei + m, ej + m, c, o) *
                       y.data()[((sr * n + wrap(i + di, n)) * n + wrap(j + dj, n)) * ci + c];
              }
          out.data()[((r * n + i) * n + j) * co + o] = s;
        }
  return out;
}

double oracle_objective(const Tensor& a, const Tensor& b, double lambda, double eps) {
  const std::size_t h = a.extent(0), w = a.extent(1), c = a.extent(2);
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = a.data()[i] - b.data()[i];
  double sq = 0.0;
  for (double v : r) sq += v * v;
  auto at = [&](std::size_t i, std::size_t j, std::size_t k) { return r[(i * w + j) * c + k]; };
  double tv = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = at(i, (j + 1) % w, k) - at(i, j, k);
        tv += std::sqrt(v * v + eps * eps) - eps;
      }
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = at((i + 1) % h, j, k) - at(i, j, k);
        tv += std::sqrt(v * v + eps * eps) - eps;
      }
  }
  return 0.5 * sq + lambda * tv;
}

double residual(const Tensor& a, const Tensor& b) { return max_abs_diff(a.data(), b.data()); }

}  // namespace

TEST_CASE("rot90 examples") {
  Rng rng(1);
  const Tensor img({2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  CHECK(rot90_image(img, 0) == img);
  CHECK(rot90_image(img, 1).values() == std::vector<double>{2, 4, 1, 3});
  const Tensor x = random_image(rng, 5, 2);
  Tensor y = x;
  for (int i = 0; i < 4; ++i) y = rot90_image(y, 1);
  CHECK(y == x);
  CHECK(rot90_image(x, 3) == rot90_image(x, -1));
  CHECK_THROWS_AS(rot90_image(Tensor({2, 3, 1}), 1), ShapeError);

  const Tensor f = random_p4(rng, 4, 3);
  CHECK(rot90_p4(rot90_p4(f, 2), 2) == f);
  CHECK(rot90_p4(f, 0) == f);
  Tensor g = f;
  for (int i = 0; i < 4; ++i) g = rot90_p4(g, 1);
  CHECK(g == f);
}

TEST_CASE("lift_conv examples") {
  Rng rng(2);
  Tensor delta({5, 5, 1});
  delta.data()[2 * 5 + 3] = 1.0;
  P4Kernel one = P4Kernel::lifting(1, 1, 1);
  one.weights[0] = 2.5;
  const Tensor out = lift_conv(delta, one);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t p = 0; p < 25; ++p) CHECK(out.data()[r * 25 + p] == 2.5 * delta.data()[p]);

  const Tensor x = random_image(rng, 8, 2);
  const Tensor zero = lift_conv(x, P4Kernel::lifting(3, 2, 3));
  for (double v : zero.data()) CHECK(v == 0.0);

  const P4Kernel k = random_lift(rng, 3, 2, 3);
  CHECK(residual(lift_conv(x, k), oracle_lift(x, k)) <= 1e-12);
  for (int r = 1; r < 4; ++r)
    CHECK(residual(lift_conv(rot90_image(x, r), k), rot90_p4(lift_conv(x, k), r)) <= 1e-12);

  CHECK_THROWS_AS(lift_conv(random_image(rng, 8, 1), k), ShapeError);
}

TEST_CASE("gconv examples") {
  Rng rng(3);
  const Tensor y = random_p4(rng, 6, 2);
  P4Kernel id = P4Kernel::group_kernel(3, 2, 2);
  for (std::size_t c = 0; c < 2; ++c) id.at(0, 1, 1, c, c) = 1.0;
  CHECK(gconv(y, id) == y);
  const Tensor zero = gconv(y, P4Kernel::group_kernel(3, 2, 4));
  for (double v : zero.data()) CHECK(v == 0.0);

  const P4Kernel k = random_group(rng, 3, 2, 3);
  CHECK(residual(gconv(y, k), oracle_gconv(y, k)) <= 1e-12);

  const P4Kernel k0 = random_lift(rng, 3, 1, 3), k1 = random_group(rng, 3, 3, 3),
                 k2 = random_group(rng, 5, 3, 2);
  auto net = [&](const Tensor& x) { return gconv(relu(gconv(relu(lift_conv(x, k0)), k1)), k2); };
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_image(rng, 8, 1);
    CHECK(residual(net(rot90_image(x, 1)), rot90_p4(net(x), 1)) <= 1e-12);
  }
  CHECK_THROWS_AS(gconv(y, k1), ShapeError);
}

TEST_CASE("group_project examples") {
  Rng rng(4);
  const Tensor slice = random_image(rng, 4, 2);
  Tensor constant({4, 4, 4, 2});
  for (std::size_t r = 0; r < 4; ++r)
    std::copy(slice.data().begin(), slice.data().end(), constant.data().begin() + r * 32);
  CHECK(residual(group_project(constant), slice) <= 1e-15);
  const Tensor zp = group_project(Tensor({4, 3, 3, 1}));
  for (double v : zp.data()) CHECK(v == 0.0);
  const Tensor f = random_p4(rng, 6, 3);
  for (int r = 0; r < 4; ++r)
    CHECK(residual(group_project(rot90_p4(f, r)), rot90_image(group_project(f), r)) <= 1e-12);
}

TEST_CASE("convolutions are linear") {
  Rng rng(5);
  const P4Kernel kl = random_lift(rng, 3, 2, 2);
  const P4Kernel kg = random_group(rng, 3, 2, 2);
  const Tensor a = random_image(rng, 6, 2), b = random_image(rng, 6, 2);
  Tensor ab = a;
  for (std::size_t i = 0; i < ab.size(); ++i) ab.data()[i] = 2.0 * a.data()[i] - 3.0 * b.data()[i];
  Tensor want = lift_conv(a, kl);
  const Tensor lb = lift_conv(b, kl);
  for (std::size_t i = 0; i < want.size(); ++i) want.data()[i] = 2.0 * want.data()[i] - 3.0 * lb.data()[i];
  CHECK(residual(lift_conv(ab, kl), want) <= 1e-12);

  const Tensor p = random_p4(rng, 6, 2), q = random_p4(rng, 6, 2);
  Tensor pq = p;
  for (std::size_t i = 0; i < pq.size(); ++i) pq.data()[i] = -0.5 * p.data()[i] + 4.0 * q.data()[i];
  Tensor gw = gconv(p, kg);
  const Tensor gq = gconv(q, kg);
  for (std::size_t i = 0; i < gw.size(); ++i) gw.data()[i] = -0.5 * gw.data()[i] + 4.0 * gq.data()[i];
  CHECK(residual(gconv(pq, kg), gw) <= 1e-12);
}

TEST_CASE("convolution adjoints") {
  Rng rng(6);
  const Tensor x = random_image(rng, 5, 2);
  const P4Kernel kl = random_lift(rng, 3, 2, 3);
  const Tensor g = random_p4(rng, 5, 3);
  std::vector<double> gk(kl.size(), 0.0);
  const Tensor gx = lift_conv_backward(x, kl, g, gk);
  CHECK(dot(lift_conv(x, kl).data(), g.data()) == doctest::Approx(dot(x.data(), gx.data())).epsilon(1e-12));
  P4Kernel probe = kl;
  auto fk = [&](const Tensor& w) {
    probe.weights = w.values();
    return dot(lift_conv(x, probe).data(), g.data());
  };
  CHECK(rel_err(gk, finite_diff_grad(fk, Tensor::vector(kl.weights), 1e-6).values()) <= 1e-8);

  const Tensor y = random_p4(rng, 5, 2);
  const P4Kernel kg = random_group(rng, 3, 2, 3);
  std::vector<double> gkg(kg.size(), 0.0);
  const Tensor gy = gconv_backward(y, kg, g, gkg);
  CHECK(dot(gconv(y, kg).data(), g.data()) == doctest::Approx(dot(y.data(), gy.data())).epsilon(1e-12));
  P4Kernel probe_g = kg;
  auto fg = [&](const Tensor& w) {
    probe_g.weights = w.values();
    return dot(gconv(y, probe_g).data(), g.data());
  };
  CHECK(rel_err(gkg, finite_diff_grad(fg, Tensor::vector(kg.weights), 1e-6).values()) <= 1e-8);

  const Tensor gi = random_image(rng, 5, 2);
  CHECK(dot(group_project(y).data(), gi.data()) ==
        doctest::Approx(dot(y.data(), group_project_backward(gi).data())).epsilon(1e-12));
}

TEST_CASE("denoise_objective examples") {
  Rng rng(7);
  const Tensor a = random_image(rng, 6, 1), b = random_image(rng, 6, 1);
  CHECK(denoise_objective(a, a, 0.3, 0.01) == 0.0);
  double half_sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) half_sq += 0.5 * std::pow(a.data()[i] - b.data()[i], 2);
  CHECK(denoise_objective(a, b, 0.0, 0.01) == doctest::Approx(half_sq).epsilon(1e-14));
  CHECK(std::abs(denoise_objective(a, b, 0.1, 0.01) - oracle_objective(a, b, 0.1, 0.01)) <= 1e-12);
  const Tensor c = random_image(rng, 5, 2), d = random_image(rng, 5, 2);
  CHECK(std::abs(denoise_objective(c, d, 0.7, 0.1) - oracle_objective(c, d, 0.7, 0.1)) <= 1e-12);

  Tensor g;
  (void)denoise_objective_grad(c, d, 0.7, 0.1, g);
  auto f = [&](const Tensor& v) { return denoise_objective(v.reshaped(c.shape()), d, 0.7, 0.1); };
  CHECK(rel_err(g.values(), finite_diff_grad(f, c.reshaped({c.size()}), 1e-6).values()) <= 1e-7);

  for (int r = 1; r < 4; ++r)
    CHECK(std::abs(denoise_objective(rot90_image(a, r), rot90_image(b, r), 0.1, 0.01) -
                   denoise_objective(a, b, 0.1, 0.01)) <= 1e-12);
  CHECK_THROWS_AS(denoise_objective(a, c, 0.1, 0.01), ShapeError);
}

TEST_CASE("p4 denoiser is exactly equivariant") {
  Rng rng(8);
  P4Denoiser net({3, 2, 3, 0.5});
  net.init(rng);
  for (auto& v : net.params()) v += 0.05 * rng.normal();
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_image(rng, 8, 1);
    const int r = 1 + trial % 3;
    CHECK(residual(net.apply(rot90_image(x, r)), rot90_image(net.apply(x), r)) <= 1e-12);
  }
  const auto data = rectangles_dataset(3, 8, 3, 0.1, 5);
  for (const auto& p : data) {
    const double j0 = denoise_objective(net.apply(p.noisy), p.clean, 0.1, 0.01);
    const double j1 = denoise_objective(net.apply(rot90_image(p.noisy, 1)), rot90_image(p.clean, 1), 0.1, 0.01);
    CHECK(std::abs(j0 - j1) <= 1e-12);
  }

  CnnDenoiser cnn({3, 2, 3, 0.5});
  cnn.init(rng);
  const Tensor x = random_image(rng, 8, 1);
  CHECK(residual(cnn.apply(rot90_image(x, 1)), rot90_image(cnn.apply(x), 1)) > 1e-6);
}

TEST_CASE("p4 denoiser uses fewer parameters at half width") {
  for (std::size_t c : {2, 4, 8, 16})
    for (std::size_t layers : {1, 3}) {
      const P4Denoiser p4({c / 2, layers, 3, 0.5});
      const CnnDenoiser cnn({c, layers, 3, 0.5});
      CHECK(p4.num_params() < cnn.num_params());
    }
}

TEST_CASE("denoiser gradients match finite differences") {
  Rng rng(9);
  const auto data = rectangles_dataset(1, 6, 2, 0.1, 3);
  const Tensor& x = data[0].noisy;
  const Tensor& y = data[0].clean;
  std::vector<std::unique_ptr<Denoiser>> nets;
  nets.push_back(std::make_unique<P4Denoiser>(DenoiserShape{2, 2, 3, 0.5}));
  nets.push_back(std::make_unique<CnnDenoiser>(DenoiserShape{3, 2, 3, 0.5}));
  for (auto& net : nets) {
    net->init(rng);
    for (auto& v : net->params()) v += 0.1 * rng.normal();
    Tensor g;
    (void)denoise_objective_grad(net->apply(x), y, 0.05, 0.05, g);
    std::vector<double> grad(net->num_params(), 0.0);
    net->backward(x, g, grad);
    auto probe = net->clone();
    const std::vector<double> theta(net->params().begin(), net->params().end());
    auto f = [&](const Tensor& t) {
      std::copy(t.data().begin(), t.data().end(), probe->params().begin());
      return denoise_objective(probe->apply(x), y, 0.05, 0.05);
    };
    CHECK(rel_err(grad, finite_diff_grad(f, Tensor::vector(theta), 1e-6).values()) <= 1e-4);
  }
}

TEST_CASE("rectangles_dataset") {
  const auto clean_only = rectangles_dataset(4, 8, 3, 0.0, 11);
  for (const auto& p : clean_only) CHECK(p.noisy == p.clean);
  const auto a = rectangles_dataset(5, 8, 3, 0.2, 12), b = rectangles_dataset(5, 8, 3, 0.2, 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].clean == b[i].clean);
    CHECK(a[i].noisy == b[i].noisy);
  }
  CHECK(dataset_hash(a) == dataset_hash(b));
  CHECK(dataset_hash(a) != dataset_hash(rectangles_dataset(5, 8, 3, 0.2, 13)));
  for (const auto& p : a) {
    bool any = false;
    for (double v : p.clean.data()) {
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
      any |= v > 0.0;
    }
    CHECK(any);
  }
  CHECK(dataset_hash(rectangles_dataset(1, 16, 4, 0.1, 2024)) == 11026989758031579999ULL);
  CHECK_THROWS_AS(rectangles_dataset(1, 3, 2, 0.1, 1), PreconditionError);
}

TEST_CASE("image container round trip") {
  const auto data = rectangles_dataset(3, 6, 2, 0.1, 1);
  std::vector<Tensor> imgs;
  for (const auto& p : data) imgs.push_back(p.noisy);
  std::stringstream ss;
  write_images(ss, imgs);
  const auto back = read_images(ss);
  REQUIRE(back.size() == imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) CHECK(back[i] == imgs[i]);
}

TEST_CASE("denoiser training") {
  const auto data = rectangles_dataset(8, 12, 3, 0.1, 5);
  DenoiseTrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.steps = 150;
  cfg.batch = 2;
  cfg.seed = 4;
  for (int model = 0; model < 2; ++model) {
    DenoiserShape shape;
    std::unique_ptr<Denoiser> net;
    if (model == 0) {
      shape.channels = 2;
      net = std::make_unique<P4Denoiser>(shape);
    } else {
      net = std::make_unique<CnnDenoiser>(shape);
    }
    Rng rng(7);
    net->init(rng);
    auto twin = net->clone();
    const double before = mean_denoise_objective(*net, data, cfg.lambda, cfg.eps);
    const auto log = train_denoiser(*net, data, cfg);
    const double after = mean_denoise_objective(*net, data, cfg.lambda, cfg.eps);
    INFO(net->name() << " " << before << " -> " << after);
    CHECK(log.size() == 150);
    CHECK(after < before);
    if (model == 0) {
      for (const auto& r : log) CHECK(r.equivariance_residual <= 1e-12);
    }
    const auto again = train_denoiser(*twin, data, cfg);
    std::ostringstream a, b;
    write_denoise_log(a, log);
    write_denoise_log(b, again);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("iter,loss,equivariance_residual\n0,", 0) == 0);
  }
  DenoiseTrainConfig bad = cfg;
  bad.batch = 9;
  P4Denoiser net({});
  CHECK_THROWS_AS(train_denoiser(net, data, bad), PreconditionError);
}
