#include "spdl/cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "spdl/blocks/network.hpp"
#include "spdl/control/deep_limit.hpp"
#include "spdl/control/regularizer.hpp"
#include "spdl/equivariant/train.hpp"
#include "spdl/invertible/coupling.hpp"
#include "spdl/invertible/inv_linear.hpp"
#include "spdl/invertible/iresnet.hpp"
#include "spdl/invertible/pixel_shuffle.hpp"
#include "spdl/invertible/train.hpp"
#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/numcore/linalg.hpp"
#include "spdl/optim/benchmark.hpp"

namespace spdl::cli {

using blocks::Activation;
using blocks::Block;
using blocks::Network;

namespace {

CheckRow at_most(std::string suite, std::string prop, double observed, double threshold) {
  return {std::move(suite), std::move(prop), observed, threshold, observed <= threshold};
}

Network random_network(Rng& rng, std::size_t max_dim, std::size_t k) {
  const std::size_t dim = 2 * (1 + rng.below(max_dim / 2));
  Network net;
  std::size_t cur = dim;
  for (std::size_t i = 0; i < k; ++i) {
    switch (rng.below(4)) {
      case 0: {
        const std::size_t out = 2 * (1 + rng.below(max_dim / 2));
        net.add(Block::dense(cur, out, Activation::tanh));
        cur = out;
        break;
      }
      case 1: net.add(Block::euler(cur, rng.uniform(0.1, 0.5), Activation::tanh)); break;
      case 2: net.add(Block::gradflow(cur, 1 + rng.below(max_dim), rng.uniform(0.1, 0.5), Activation::tanh)); break;
      default: net.add(Block::verlet(cur, 1 + rng.below(max_dim), rng.uniform(0.1, 0.5), Activation::tanh)); break;
    }
  }
  net.init(rng);
  auto p = net.params();
  for (auto& v : p.values) v += 0.1 * rng.normal();
  net.set_params(p.values);
  return net;
}

double rel(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

std::vector<CheckRow> gradients() {
  std::vector<CheckRow> rows;
  Rng rng(101);
  double worst_p = 0.0, worst_x = 0.0;
  for (int t = 0; t < 20; ++t) {
    Network net = random_network(rng, 8, 1 + rng.below(5));
    const Tensor x = Tensor::vector(rng.normal_vector(net.in_dim()));
    const Tensor c = Tensor::vector(rng.normal_vector(net.out_dim()));
    const auto bp = blocks::network_backprop(net, blocks::network_forward(net, x), c);
    const Tensor th = Tensor::vector(net.params().values);
    const Tensor fdp = finite_diff_grad(
        [&](const Tensor& p) {
          Network n = net;
          n.set_params(p.data());
          return dot(n.evaluate(x).data(), c.data());
        },
        th, 1e-5);
    const Tensor fdx = finite_diff_grad([&](const Tensor& z) { return dot(net.evaluate(z).data(), c.data()); }, x, 1e-5);
    worst_p = std::max(worst_p, rel(bp.param_grad.values, fdp.values()));
    worst_x = std::max(worst_x, rel(bp.input_grad.values(), fdx.values()));
  }
  rows.push_back(at_most("gradients", "backprop_param_rel_err", worst_p, 1e-5));
  rows.push_back(at_most("gradients", "backprop_input_rel_err", worst_x, 1e-5));

  double worst_r = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Tensor th = Tensor::vector(rng.normal_vector(12));
    auto h1 = [](const Tensor& v) {
      return control::h1_penalty({v.data().first(4), v.data().subspan(4, 4), v.data().last(4)}, 0.5);
    };
    const Tensor fd = finite_diff_grad([&](const Tensor& v) { return h1(v).value; }, th, 1e-6);
    worst_r = std::max(worst_r, max_abs_diff(fd.data(), h1(th).grad));
  }
  rows.push_back(at_most("gradients", "h1_penalty_fd_abs_err", worst_r, 1e-6));

  double worst_c = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Tensor x = Tensor::vector({rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)});
    const Tensor fd = finite_diff_grad([](const Tensor& v) { return optim::camelback_value(v.data()); }, x, 1e-5);
    worst_c = std::max(worst_c, max_abs_diff(fd.data(), optim::camelback_gradient(x.data())));
  }
  rows.push_back(at_most("gradients", "camelback_fd_abs_err", worst_c, 1e-8));
  return rows;
}

double round_trip(const invertible::FlowLayer& l, Rng& rng, std::size_t trials) {
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Tensor x = Tensor::vector(rng.normal_vector(l.dim()));
    worst = std::max(worst, max_abs_diff(l.inverse(l.forward(x)).data(), x.data()));
  }
  return worst;
}

invertible::FlowModel perturbed_flow(std::size_t dim, invertible::FlowArch arch, Rng& rng) {
  auto m = invertible::make_flow(dim, 2, 8, 1, arch, Activation::tanh, rng);
  auto p = m.params();
  for (auto& v : p) v += 0.2 * rng.normal();
  m.set_params(p);
  m.after_step();
  return m;
}

std::vector<CheckRow> invertibility() {
  using namespace invertible;
  std::vector<CheckRow> rows;
  Rng rng(202);
  auto coupling = CouplingLayer::alternating(4, 0, CouplingLaw::affine, 8, 2, Activation::tanh, rng);
  auto cp = coupling.params();
  for (auto& v : cp) v = 0.5 * rng.normal();
  coupling.set_params(cp);
  rows.push_back(at_most("invertibility", "coupling_round_trip", round_trip(coupling, rng, 100), 1e-12));
  rows.push_back(at_most("invertibility", "inv_linear_round_trip", round_trip(InvLinear::random(5, rng), rng, 100), 1e-12));
  rows.push_back(at_most("invertibility", "pixel_shuffle_round_trip",
                         round_trip(PixelShuffleLayer(4, 4, 2, 2), rng, 100), 1e-12));
  IResOptions opt;
  opt.inverse_tol = 1e-12;
  const IResBlock ires = IResBlock::make(4, 8, 2, Activation::tanh, rng, opt);
  rows.push_back(at_most("invertibility", "iresnet_round_trip", round_trip(ires, rng, 100), 1e-8));

  double worst_ld = 0.0;
  for (int t = 0; t < 5; ++t) {
    const FlowModel m = perturbed_flow(2 + rng.below(5), FlowArch::coupling, rng);
    const Tensor x = Tensor::vector(rng.normal_vector(m.dim()));
    const auto states = m.trace(x);
    double sum = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) sum += m.layer(k).logdet(states[k]);
    const Tensor j = finite_diff_jacobian([&](const Tensor& v) { return m.forward(v); }, x, 1e-6);
    worst_ld = std::max(worst_ld, std::abs(sum - logabsdet_lu(j)));
  }
  rows.push_back(at_most("invertibility", "logdet_vs_fd_jacobian", worst_ld, 1e-4));

  for (FlowArch arch : {FlowArch::coupling, FlowArch::iresnet}) {
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
      const FlowModel m = perturbed_flow(4, arch, rng);
      const Tensor x = Tensor::vector(rng.normal_vector(4)), g = Tensor::vector(rng.normal_vector(4));
      const auto a = stored_trace_grad(m, x, g), b = memory_efficient_grad(m, x, g);
      worst = std::max(worst, max_abs_diff(a.param_grad.values, b.param_grad.values));
    }
    rows.push_back(at_most("invertibility",
                           std::string("memory_efficient_grad_") + std::string(to_string(arch)), worst,
                           arch == FlowArch::coupling ? 1e-10 : 1e-6));
  }
  return rows;
}

std::vector<CheckRow> equivariance() {
  using namespace equivariant;
  std::vector<CheckRow> rows;
  Rng rng(303);
  P4Denoiser net({});
  net.init(rng);
  for (auto& v : net.params()) v += 0.1 * rng.normal();
  double worst = 0.0, worst_obj = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Tensor x({8, 8, 1}, rng.normal_vector(64));
    const Tensor y({8, 8, 1}, rng.normal_vector(64));
    worst = std::max(worst, equivariance_residual(net, x));
    const double base = denoise_objective(net.apply(x), y, 0.1, 0.01);
    for (int r = 1; r < 4; ++r) {
      const double rot = denoise_objective(net.apply(rot90_image(x, r)), rot90_image(y, r), 0.1, 0.01);
      worst_obj = std::max(worst_obj, std::abs(rot - base));
    }
  }
  rows.push_back(at_most("equivariance", "p4_network_residual", worst, 1e-12));
  rows.push_back(at_most("equivariance", "objective_rotation_invariance", worst_obj, 1e-12));
  DenoiserShape half;
  half.channels = 2;
  const double ratio = static_cast<double>(P4Denoiser(half).num_params()) /
                       static_cast<double>(CnnDenoiser(DenoiserShape{}).num_params());
  rows.push_back({"equivariance", "param_ratio_p4_half_vs_cnn", ratio, 1.0, ratio < 1.0});
  return rows;
}

std::vector<CheckRow> dissipation() {
  std::vector<CheckRow> rows;
  optim::OptimizerState s(optim::OptimizerConfig::heavy_ball(0.01, 1.0, 1.0), 1);
  std::vector<double> th{1.0};
  optim::conformal_momentum_step(s, th, th);
  double prev = 0.5 * s.p[0] * s.p[0] + 0.5 * th[0] * th[0], worst_rise = 0.0;
  for (int k = 1; k < 10000; ++k) {
    optim::conformal_momentum_step(s, th, th);
    const double h = 0.5 * s.p[0] * s.p[0] + 0.5 * th[0] * th[0];
    worst_rise = std::max(worst_rise, h - prev);
    prev = h;
  }
  rows.push_back(at_most("dissipation", "conformal_hamiltonian_max_increase", worst_rise, 0.0));

  Rng rng(404);
  optim::OptimizerState r(optim::OptimizerConfig::rgd(0.05, 0.5), 3);
  std::vector<double> t = rng.normal_vector(3);
  double worst_ratio = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const auto g = rng.normal_vector(3, k % 2 ? 1e6 : 1e-3);
    const auto before = t;
    optim::rgd_step(r, t, g);
    double d = 0.0;
    for (std::size_t i = 0; i < 3; ++i) d += (t[i] - before[i]) * (t[i] - before[i]);
    worst_ratio = std::max(worst_ratio, std::sqrt(d) / 0.05);
  }
  rows.push_back(at_most("dissipation", "rgd_displacement_over_h", worst_ratio, 1.0 + 1e-12));

  for (Activation act : {Activation::tanh, Activation::relu}) {
    Block b = Block::gradflow(4, 6, 0.3, act);
    b.init(rng);
    const double nu = blocks::one_sided_lipschitz_witness(
        [&](const Tensor& z) { return blocks::block_vector_field(b, z); }, 4, 10000, 3.0, 7);
    rows.push_back(at_most("dissipation", std::string("gradflow_witness_") + std::string(blocks::to_string(act)), nu, 1e-12));
  }

  double worst_sym = 0.0;
  for (int k = 0; k < 10; ++k) {
    const std::size_t d = 1 + rng.below(3);
    Block b = Block::verlet(2 * d, 1 + rng.below(5), rng.uniform(0.05, 0.5), Activation::identity);
    b.init(rng);
    // The map is affine, so unit central differences give the exact Jacobian.
    const Tensor m = finite_diff_jacobian([&](const Tensor& z) { return b.forward(z); },
                                          Tensor::vector(rng.normal_vector(2 * d)), 1.0);
    const std::size_t n = 2 * d;
    Tensor j({n, n});
    for (std::size_t i = 0; i < d; ++i) {
      j(i, d + i) = 1.0;
      j(d + i, i) = -1.0;
    }
    const Tensor mtjm = matmul(matmul(transpose(m), j), m);
    worst_sym = std::max(worst_sym, max_abs_diff(mtjm.data(), j.data()));
  }
  rows.push_back(at_most("dissipation", "verlet_symplectic_defect", worst_sym, 1e-12));
  return rows;
}

std::vector<CheckRow> deeplimit() {
  const auto data = control::make_dataset("halfmoon2d", 100, 0.05, 11);
  control::DeepLimitConfig cfg;
  cfg.ks = {4, 8, 16, 32};
  cfg.lambda = 1e-3;
  cfg.steps = 3000;
  cfg.restarts = 3;
  cfg.plateau_patience = 50;
  cfg.opt = optim::OptimizerConfig::adam(0.01);
  cfg.seed = 1;
  const auto rows = control::deep_limit_experiment(data, cfg);
  double worst = 0.0;
  for (std::size_t i = 2; i < rows.size(); ++i) {
    const double prev = std::abs(rows[i - 1].best_loss - rows[i - 2].best_loss);
    const double cur = std::abs(rows[i].best_loss - rows[i - 1].best_loss);
    worst = std::max(worst, cur / prev);
  }
  return {{"deeplimit", "max_gap_ratio", worst, 1.0, worst < 1.0}};
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"gradients", "invertibility", "equivariance",
                                              "dissipation", "deeplimit", "all"};
  return names;
}

std::vector<CheckRow> run_suite(std::string_view name) {
  if (name == "gradients") return gradients();
  if (name == "invertibility") return invertibility();
  if (name == "equivariance") return equivariance();
  if (name == "dissipation") return dissipation();
  if (name == "deeplimit") return deeplimit();
  if (name == "all") {
    std::vector<CheckRow> all;
    for (const auto& n : suite_names()) {
      if (n == "all") continue;
      auto r = run_suite(n);
      all.insert(all.end(), r.begin(), r.end());
    }
    return all;
  }
  throw PreconditionError("unknown verify suite '" + std::string(name) + "'");
}

void write_report(std::ostream& os, const std::vector<CheckRow>& rows) {
  os << "suite,property,observed,threshold,status\n";
  for (const auto& r : rows) {
    os << r.suite << "," << r.property << "," << format_real(r.observed) << "," << format_real(r.threshold)
       << "," << (r.pass ? "PASS" : "FAIL") << "\n";
  }
}

}  // namespace spdl::cli
