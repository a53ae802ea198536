#include "spdl/optim/benchmark.hpp"

#include <cmath>
#include <ostream>

#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/numcore/tensor.hpp"

namespace spdl::optim {

namespace {

void need2(std::span<const double> t) {
  if (t.size() != 2) throw ShapeError("camelback: expected a 2-vector");
}

double dist(std::span<const double> a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

double camelback_value(std::span<const double> t) {
  need2(t);
  const double x = t[0], y = t[1], x2 = x * x;
  return 2.0 * x2 - 1.05 * x2 * x2 + x2 * x2 * x2 / 6.0 + x * y + y * y;
}

std::vector<double> camelback_gradient(std::span<const double> t) {
  need2(t);
  const double x = t[0], y = t[1], x2 = x * x;
  return {4.0 * x - 4.2 * x2 * x + x2 * x2 * x + y, x + 2.0 * y};
}

BenchmarkFunction camelback() {
  return {"camelback", camelback_value, camelback_gradient, {0.0, 0.0}};
}

Trajectory run_benchmark(const BenchmarkFunction& f, const OptimizerConfig& cfg,
                         std::vector<double> theta, std::size_t max_steps, double tol) {
  if (theta.size() != f.minimizer.size()) throw ShapeError("run_benchmark: wrong start dimension");
  Trajectory out;
  out.method = std::string(to_string(cfg.method));
  OptimizerState s(cfg, theta.size());
  auto record = [&](std::size_t k) {
    const auto g = f.gradient(theta);
    out.rows.push_back({k, f.value(theta), norm2(g), theta});
  };
  record(0);
  for (std::size_t k = 1; k <= max_steps; ++k) {
    if (dist(theta, f.minimizer) <= tol) {
      out.converged = true;
      break;
    }
    const auto g = f.gradient(lookahead(s, theta));
    step(s, theta, g);
    out.steps = k;
    record(k);
  }
  if (!out.converged) out.converged = dist(theta, f.minimizer) <= tol;
  return out;
}

std::vector<std::pair<std::string, OptimizerConfig>> camelback_configs() {
  return {
      {"GD", OptimizerConfig::sgd(0.01)},
      {"HB", OptimizerConfig::heavy_ball(0.01, gamma_from_factor(0.9, 0.01))},
      {"NaG", OptimizerConfig::nesterov(0.01, 0.012)},
      {"RGD", OptimizerConfig::rgd(1e-4, gamma_from_factor(0.9259, 1e-4))},
      {"Adam", OptimizerConfig::adam(0.1)},
  };
}

void write_trajectory(std::ostream& os, const Trajectory& t) {
  CsvWriter w(os, {"step", "loss", "grad_norm", "theta_0", "theta_1"});
  for (const auto& r : t.rows) {
    if (r.theta.size() != 2) throw ShapeError("write_trajectory: expected 2-D parameters");
    w.row({static_cast<double>(r.step), r.loss, r.grad_norm, r.theta[0], r.theta[1]});
  }
}

}  // namespace spdl::optim
