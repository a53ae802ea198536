#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "spdl/optim/optimizer.hpp"

namespace spdl::optim {

struct BenchmarkFunction {
  std::string name;
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
  std::vector<double> minimizer;
};

// V(x, y) = 2x^2 - 1.05x^4 + x^6/6 + xy + y^2.
double camelback_value(std::span<const double> theta);
std::vector<double> camelback_gradient(std::span<const double> theta);
BenchmarkFunction camelback();

struct TrajectoryRow {
  std::size_t step;
  double loss;
  double grad_norm;
  std::vector<double> theta;
};

struct Trajectory {
  std::string method;
  std::vector<TrajectoryRow> rows;
  bool converged = false;
  std::size_t steps = 0;  // steps taken until convergence or max_steps
};

// Runs the optimizer from theta0 until |theta - minimizer| <= tol or
// max_steps updates. Row 0 is the initial point. Nesterov gradients are
// taken at the lookahead point.
Trajectory run_benchmark(const BenchmarkFunction& f, const OptimizerConfig& cfg,
                         std::vector<double> theta0, std::size_t max_steps, double tol);

// GD, HB, NaG, RGD and Adam with the standard camelback benchmark settings.
std::vector<std::pair<std::string, OptimizerConfig>> camelback_configs();

// CSV with header step,loss,grad_norm,theta_0,theta_1 (2-D problems).
void write_trajectory(std::ostream& os, const Trajectory& t);

}  // namespace spdl::optim
