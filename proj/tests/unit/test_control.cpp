#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "spdl/control/adjoint.hpp"
#include "spdl/control/dataset.hpp"
#include "spdl/control/deep_limit.hpp"
#include "spdl/control/loss.hpp"
#include "spdl/control/msa.hpp"
#include "spdl/control/regularizer.hpp"
#include "spdl/control/train.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/numcore/linalg.hpp"
#include "support/oracles.hpp"

using namespace spdl;
using namespace spdl::control;
using blocks::Activation;
using blocks::Block;
using blocks::Network;

namespace {

Network euler_classifier(std::size_t k, double h, std::uint64_t seed) {
  Rng rng(seed);
  Network net;
  for (std::size_t i = 0; i < k; ++i) {
    Block b = Block::euler(2, h, Activation::tanh);
    b.init(rng);
    net.add(b);
  }
  Block head = Block::linear_head(2, 1);
  head.init(rng);
  net.add(head);
  return net;
}

// y = 2x + 0.5 + noise
Dataset linear_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.name = "linear";
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    d.features.push_back(Tensor::vector({x}));
    d.labels.push_back(Tensor::vector({2.0 * x + 0.5 + 0.1 * rng.normal()}));
  }
  return d;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  return max_abs_diff(a, b);
}

}  // namespace

TEST_CASE("loss examples") {
  const Tensor t = Tensor::vector({0.3, -1.0});
  const LossValue z = loss_eval(LossKind::squared, t, t);
  CHECK(z.value == 0.0);
  CHECK(z.grad.values() == std::vector<double>{0.0, 0.0});

  const LossValue s = loss_eval(LossKind::squared, Tensor::vector({1.0, 0.0}), Tensor::vector({0.0, 0.0}));
  CHECK(s.value == 0.5);
  CHECK(s.grad.values() == std::vector<double>{1.0, 0.0});

  const LossValue ce = loss_eval(LossKind::softmax_cross_entropy, Tensor::vector({0.0, 0.0}),
                                 Tensor::vector({1.0, 0.0}));
  CHECK(ce.value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(ce.grad[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(ce.grad[1] == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = Tensor::vector(rng.normal_vector(4, 3.0));
    Tensor y({4});
    y[rng.below(4)] = 1.0;
    const LossValue v = loss_eval(LossKind::softmax_cross_entropy, logits, y);
    CHECK(v.value >= 0.0);
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& l) { return loss_eval(LossKind::softmax_cross_entropy, l, y).value; }, logits, 1e-6);
    CHECK(max_abs_diff(fd.data(), v.grad.data()) <= 1e-6);
  }
  CHECK_THROWS_AS(loss_eval(LossKind::squared, Tensor::vector({1.0}), t), ShapeError);
}

TEST_CASE("h1 penalty examples") {
  const std::vector<double> a{0.0}, b{1.0};
  const Penalty p = h1_penalty({a, b}, 1.0);
  CHECK(p.value == 2.0);

  const std::vector<double> c{1.0, -2.0};
  const Penalty constant = h1_penalty({c, c, c, c}, 0.5);
  CHECK(constant.value == doctest::Approx(0.5 * 5.0).epsilon(1e-15));
  const std::vector<double> zero{0.0, 0.0};
  CHECK(h1_penalty({zero, zero, zero}, 3.0).value == 0.0);
  CHECK_THROWS_AS(h1_penalty({}, 1.0), PreconditionError);
}

TEST_CASE("regularizer gradients match finite differences") {
  Rng rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 1 + rng.below(5), m = 1 + rng.below(4);
    const Tensor th = Tensor::vector(rng.normal_vector(k * m));
    auto h1 = [&](const Tensor& t) {
      std::vector<std::span<const double>> layers;
      for (std::size_t j = 0; j < k; ++j) layers.push_back(t.data().subspan(j * m, m));
      return h1_penalty(layers, 0.7);
    };
    CHECK(max_abs_diff(finite_diff_grad([&](const Tensor& t) { return h1(t).value; }, th, 1e-6).data(),
                       h1(th).grad) <= 1e-6);
    CHECK(max_abs_diff(finite_diff_grad([](const Tensor& t) { return l2_penalty(t.data(), 0.3).value; }, th, 1e-6)
                           .data(),
                       l2_penalty(th.data(), 0.3).grad) <= 1e-6);
    CHECK(max_abs_diff(finite_diff_grad([](const Tensor& t) { return l1_penalty(t.data(), 0.3).value; }, th, 1e-6)
                           .data(),
                       l1_penalty(th.data(), 0.3).grad) <= 1e-6);
  }

  Network net = euler_classifier(3, 0.25, 5);
  for (RegKind kind : {RegKind::l2, RegKind::l1, RegKind::h1_discrete}) {
    const Regularizer reg{kind, 0.2, 1.0};
    const Tensor th = Tensor::vector(net.params().values);
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& t) {
          Network n = net;
          n.set_params(t.data());
          return network_penalty(n, reg).value;
        },
        th, 1e-6);
    CHECK(max_abs_diff(fd.data(), network_penalty(net, reg).grad) <= 1e-6);
  }
  CHECK(network_penalty(net, {RegKind::timestep_simplex, 1.0, 1.0}).value == 0.0);
}

TEST_CASE("coercivity witness") {
  Rng rng(23);
  const std::vector<double> dir = rng.normal_vector(6);
  auto along = [&](double j, RegKind kind) {
    std::vector<double> t = dir;
    for (double& v : t) v *= j;
    if (kind == RegKind::l2) return l2_penalty(t, 0.1).value;
    return h1_penalty({std::span<const double>(t).first(3), std::span<const double>(t).last(3)}, 0.1).value;
  };
  for (RegKind kind : {RegKind::l2, RegKind::h1_discrete}) {
    const double v1 = along(1, kind), v10 = along(10, kind), v100 = along(100, kind);
    CHECK(v1 < v10);
    CHECK(v10 < v100);
    CHECK(v100 == doctest::Approx(1e4 * v1).epsilon(1e-12));
  }
}

TEST_CASE("prox_timestep examples") {
  const std::vector<double> uni{0.25, 0.25, 0.25, 0.25};
  CHECK(prox_timestep(uni, 1.0) == uni);
  CHECK(prox_timestep(std::vector<double>{-3.0}, 2.5) == std::vector<double>{2.5});

  Rng rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + rng.below(6);
    const auto h = rng.normal_vector(k);
    const double total = rng.uniform(0.5, 3.0);
    const auto p = prox_timestep(h, total);
    double s = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - total) <= 1e-12);
    CHECK(max_diff(p, oracle::simplex_projection_enumerate(h, total)) <= 1e-8);
  }
  CHECK_THROWS_AS(prox_timestep(uni, 0.0), PreconditionError);
}

TEST_CASE("datasets") {
  CHECK(make_dataset("halfmoon2d", 0, 0.1, 1).size() == 0);
  CHECK_THROWS_AS(make_dataset("spiral", 4, 0.1, 1), PreconditionError);

  const Dataset clean = make_dataset("halfmoon2d", 200, 0.0, 3);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double x = clean.features[i][0], y = clean.features[i][1];
    if (clean.labels[i][0] > 0) {
      CHECK(std::abs(std::hypot(x, y) - 1.0) <= 1e-12);
      CHECK(y >= 0.0);
    } else {
      CHECK(std::abs(std::hypot(x - 1.0, y - 0.5) - 1.0) <= 1e-12);
      CHECK(y <= 0.5);
    }
  }

  for (std::size_t dim : {2, 3}) {
    const Dataset d = make_dataset(dim == 2 ? "donut2d" : "donut3d", 100, 0.0, 4);
    CHECK(d.feature_dim() == dim);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double r = norm2(d.features[i].data());
      if (d.labels[i][0] > 0) {
        CHECK(r >= 1.0 - 1e-12);
        CHECK(r <= 1.5 + 1e-12);
      } else {
        CHECK(r <= 0.5 + 1e-12);
      }
    }
  }

  const Dataset dens = make_dataset("two_halfmoons_density", 10, 0.1, 5);
  CHECK_FALSE(dens.is_labeled());
  CHECK(dens.size() == 10);

  const Dataset a = make_dataset("donut3d", 50, 0.1, 6), b = make_dataset("donut3d", 50, 0.1, 6);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);

  // Golden values recorded at first build (seed 42, noise 0.1).
  const Dataset g = make_dataset("halfmoon2d", 4, 0.1, 42);
  const std::vector<std::vector<double>> moons{{0.86354130989295852, 0.41210263595841828},
                                               {2.0185620081368274, 0.33971464646196098},
                                               {-0.65249535012744708, 0.85524954341904658},
                                               {0.49149786917309068, -0.35239948946154787}};
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.features[i].values() == moons[i]);
  CHECK(g.labels[0][0] == 1.0);
  CHECK(g.labels[1][0] == -1.0);
  const Dataset d3 = make_dataset("donut3d", 4, 0.1, 42);
  CHECK(d3.features[3].values() ==
        std::vector<double>{-0.48132323862481552, -0.10958416156488818, 0.35458638876046966});
  const Dataset d2 = make_dataset("donut2d", 4, 0.1, 42);
  CHECK(d2.features[0].values() == std::vector<double>{-1.2124861034334724, -0.30376364317457638});

  std::ostringstream os;
  write_dataset(os, g);
  CHECK(os.str().rfind("x_0,x_1,label\n0.86354130989295852,", 0) == 0);
}

TEST_CASE("train_reduced examples") {
  const Dataset d = make_dataset("halfmoon2d", 64, 0.05, 7);
  Network net = euler_classifier(4, 0.25, 1);
  const auto theta0 = net.params().values;

  TrainConfig zero;
  zero.batch = 8;
  CHECK(train_reduced(net, d, zero).theta == theta0);
  CHECK(net.params().values == theta0);

  TrainConfig heavy;
  heavy.reg = {RegKind::l2, 1e3, 1.0};
  heavy.opt = optim::OptimizerConfig::sgd(1e-4);
  heavy.steps = 200;
  heavy.batch = 16;
  Network hnet = net;
  const auto hres = train_reduced(hnet, d, heavy);
  CHECK(norm2(hres.theta) < norm2(theta0));

  TrainConfig cfg;
  cfg.reg = {RegKind::l2, 1e-4, 1.0};
  cfg.opt = optim::OptimizerConfig::adam(0.01);
  cfg.steps = 50;
  cfg.batch = 10;
  cfg.seed = 9;
  Network a = net, b = net;
  const auto ra = train_reduced(a, d, cfg), rb = train_reduced(b, d, cfg);
  CHECK(ra.theta == rb.theta);
  std::ostringstream la, lb;
  write_train_log(la, ra.log);
  write_train_log(lb, rb.log);
  CHECK(la.str() == lb.str());
  CHECK(la.str().rfind("step,epoch,loss,reg_value,grad_norm,wall_ms\n0,0,", 0) == 0);
  CHECK(ra.log.size() == 50);
  CHECK(ra.log[5].epoch == 0);
  CHECK(ra.log[6].epoch == 1);  // 6 full batches of 10 per epoch of 64
  for (const auto& r : ra.log) CHECK(r.wall_ms == 0.0);

  cfg.batch = 65;
  CHECK_THROWS_AS(train_reduced(a, d, cfg), PreconditionError);

  Dataset bad = d;
  bad.features[3][0] = std::nan("");
  TrainConfig full = cfg;
  full.batch = 64;
  try {
    Network n = net;
    train_reduced(n, bad, full);
    FAIL("expected DiagnosticsError");
  } catch (const DiagnosticsError& e) {
    CHECK(e.index() == 0);
  }
}

TEST_CASE("objective gradient matches finite differences") {
  const Dataset d = make_dataset("donut2d", 12, 0.1, 8);
  Network net = euler_classifier(3, 0.3, 2);
  const Regularizer reg{RegKind::h1_discrete, 0.05, 1.0};
  const std::vector<std::size_t> idx{0, 3, 5, 7, 11};
  const auto o = objective(net, d, LossKind::squared, reg, idx);
  const Tensor fd = finite_diff_grad(
      [&](const Tensor& t) {
        Network n = net;
        n.set_params(t.data());
        const auto v = objective(n, d, LossKind::squared, reg, idx);
        return v.data + v.reg;
      },
      Tensor::vector(net.params().values), 1e-6);
  CHECK(max_abs_diff(fd.data(), o.grad) <= 1e-6);
}

TEST_CASE("halfmoon classification loss halves") {
  const Dataset d = make_dataset("halfmoon2d", 200, 0.05, 7);
  Network net = euler_classifier(40, 0.1, 1);
  const double before = dataset_loss(net, d, LossKind::squared);
  TrainConfig cfg;
  cfg.reg = {RegKind::l2, 1e-4, 1.0};
  cfg.opt = optim::OptimizerConfig::adam(0.01);
  cfg.steps = 2000;
  cfg.batch = 32;
  cfg.seed = 3;
  train_reduced(net, d, cfg);
  const double after = dataset_loss(net, d, LossKind::squared);
  INFO("before " << before << " after " << after);
  CHECK(after <= 0.5 * before);
}

TEST_CASE("timestep simplex training keeps the horizon") {
  const Dataset d = make_dataset("halfmoon2d", 32, 0.05, 9);
  Network net = euler_classifier(5, 0.3, 4);
  TrainConfig cfg;
  cfg.reg = {RegKind::timestep_simplex, 0.0, 2.0};
  cfg.opt = optim::OptimizerConfig::sgd(0.05);
  cfg.steps = 100;
  cfg.batch = 8;
  train_reduced(net, d, cfg);
  double total = 0.0;
  bool moved = false;
  for (std::size_t k = 0; k < 5; ++k) {
    const double h = net.blocks()[k].step();
    CHECK(h >= 0.0);
    total += h;
    moved = moved || h != 0.4;
  }
  CHECK(std::abs(total - 2.0) <= 1e-12);
  CHECK(moved);
}

TEST_CASE("msa examples") {
  const Dataset d = linear_data(50, 31);
  Network net;
  net.add(Block::euler(1, 1.0, Activation::identity));

  MsaConfig none;
  none.sweeps = 0;
  CHECK(msa_iterate(net, d, none).theta == net.params().values);

  // Least-squares fit y ~ s x + c; the block map is x + (a x + b).
  oracle::Mat xtx(2, std::vector<double>(2, 0.0));
  std::vector<double> xty(2, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double row[2] = {d.features[i][0], 1.0};
    for (int a = 0; a < 2; ++a) {
      xty[a] += row[a] * d.labels[i][0];
      for (int b = 0; b < 2; ++b) xtx[a][b] += row[a] * row[b];
    }
  }
  const auto sc = oracle::gauss_solve(xtx, xty);
  const std::vector<double> star{sc[0] - 1.0, sc[1]};

  MsaConfig cfg;
  cfg.sweeps = 200;
  cfg.inner_steps = 10;
  cfg.inner_lr = 0.05;
  Network m = net;
  const MsaResult r = msa_iterate(m, d, cfg);
  CHECK(max_diff(r.theta, star) <= 1e-6);
  // Non-increasing; once converged, successive values may differ by rounding.
  bool monotone = true;
  for (std::size_t i = 1; i < r.loss.size(); ++i)
    monotone = monotone && r.loss[i] <= r.loss[i - 1] * (1.0 + 1e-14);
  CHECK(monotone);
  CHECK(r.loss.back() < r.loss.front());

  Network fixed = net;
  fixed.set_params(star);
  MsaConfig one = cfg;
  one.sweeps = 1;
  CHECK(max_diff(msa_iterate(fixed, d, one).theta, star) <= 1e-8);

  Network deep;
  deep.add(Block::euler(2, 0.5, Activation::identity));
  deep.add(Block::euler(2, 0.5, Activation::identity));
  deep.add(Block::linear_head(2, 1));
  Rng drng(3);
  deep.init(drng);
  const Dataset moons = make_dataset("halfmoon2d", 16, 0.05, 3);
  MsaConfig wild;
  wild.inner_lr = 1e308;
  try {
    msa_iterate(deep, moons, wild);
    FAIL("expected DiagnosticsError");
  } catch (const DiagnosticsError& e) {
    REQUIRE(e.index() < deep.size());
    auto finite = [&](std::size_t k) {
      for (double v : deep.blocks()[k].params())
        if (!std::isfinite(v)) return false;
      return true;
    };
    for (std::size_t k = 0; k < e.index(); ++k) CHECK(finite(k));
    CHECK_FALSE(finite(e.index()));
  }
}

TEST_CASE("deep limit guards") {
  const Dataset d = make_dataset("halfmoon2d", 20, 0.05, 1);
  DeepLimitConfig cfg;
  cfg.ks = {4};
  cfg.steps = 20;
  cfg.restarts = 2;
  const auto rows = deep_limit_experiment(d, cfg);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].k == 4);
  CHECK(rows[0].restarts == 2);
  CHECK(std::isfinite(rows[0].best_loss));

  DeepLimitConfig zero = cfg;
  zero.lambda = 0.0;
  CHECK_THROWS_AS(deep_limit_experiment(d, zero), PreconditionError);
  DeepLimitConfig order = cfg;
  order.ks = {8, 4};
  CHECK_THROWS_AS(deep_limit_experiment(d, order), PreconditionError);

  Rng rng(2);
  const Network net = deep_limit_network(2, 1, 6, 1.5, Activation::tanh, rng);
  for (std::size_t k = 1; k < 6; ++k) CHECK(net.blocks()[k] == net.blocks()[0]);
  CHECK(net.blocks()[0].step() == 0.25);

  std::ostringstream os;
  write_deep_limit(os, {{4, 0.5, 3}});
  CHECK(os.str() == "K,best_loss,restarts\n4,0.5,3\n");
}

TEST_CASE("discretise and optimise commute") {
  for (std::uint64_t seed : {5, 6, 7}) {
    Rng rng(seed);
    Network net;
    for (int k = 0; k < 64; ++k) {
      Block b = Block::euler(3, 1.0 / 64, Activation::tanh);
      b.init(rng);
      net.add(b);
    }
    const Tensor x = Tensor::vector(rng.normal_vector(3)), y = Tensor::vector(rng.normal_vector(3));
    const CommutationResult r = commutation_check(net, x, y, 16);
    INFO("seed " << seed << " rel " << r.rel_err);
    CHECK(r.rel_err <= 1e-2);
  }
  Network bad;
  bad.add(Block::dense(2, 2, Activation::tanh));
  CHECK_THROWS_AS(commutation_check(bad, Tensor::vector({1, 2}), Tensor::vector({0, 0})),
                  PreconditionError);
}
