#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace spdl::optim {

enum class Method { sgd, adam, heavy_ball, nesterov, rgd };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

// Hyperparameters. `lr` is the step size h (or alpha for Adam). For the
// momentum methods `gamma` is the damping rate, so each step multiplies the
// momentum by exp(-gamma * lr); `mass` divides p in the heavy-ball position
// update. `momentum` is the Nesterov coefficient. `eps` regularizes Adam's
// denominator and the relativistic kinetic energy sqrt(eps + |p|^2).
struct OptimizerConfig {
  Method method = Method::sgd;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double gamma = 1.0;
  double mass = 1.0;
  double momentum = 0.0;

  static OptimizerConfig sgd(double lr);
  static OptimizerConfig adam(double alpha, double beta1 = 0.9, double beta2 = 0.999,
                              double eps = 1e-8);
  static OptimizerConfig heavy_ball(double h, double gamma, double mass = 1.0);
  static OptimizerConfig nesterov(double h, double mu);
  static OptimizerConfig rgd(double h, double gamma, double eps = 1e-8);
};

// gamma such that exp(-gamma h) equals `factor`.
double gamma_from_factor(double factor, double h);

struct OptimizerState {
  OptimizerConfig config;
  std::size_t step = 0;
  std::vector<double> m;  // Adam first moment
  std::vector<double> v;  // Adam second moment
  std::vector<double> p;  // momentum (heavy ball, Nesterov, RGD)

  OptimizerState() = default;
  OptimizerState(OptimizerConfig cfg, std::size_t dim);
};

// All steppers update theta in place, advance state.step by one and throw
// ShapeError when sizes disagree with the state.
void sgd_step(OptimizerState& s, std::span<double> theta, std::span<const double> grad);
void adam_step(OptimizerState& s, std::span<double> theta, std::span<const double> grad);
// p' = exp(-gamma h) p - h grad;  theta' = theta + h p' / mass.
void conformal_momentum_step(OptimizerState& s, std::span<double> theta,
                             std::span<const double> grad);
// p' = exp(-gamma h) p - h grad;  theta' = theta + h p' / sqrt(eps + |p'|^2).
void rgd_step(OptimizerState& s, std::span<double> theta, std::span<const double> grad);
// `grad` must be evaluated at lookahead(s, theta).
// p' = mu p - h grad;  theta' = theta + p'.
void nesterov_step(OptimizerState& s, std::span<double> theta, std::span<const double> grad);

// theta + mu p for Nesterov; theta itself for every other method.
std::vector<double> lookahead(const OptimizerState& s, std::span<const double> theta);

// Dispatches on s.config.method.
void step(OptimizerState& s, std::span<double> theta, std::span<const double> grad);

// Halves the step size when the observed loss has not improved for
// `patience` consecutive observations.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(std::size_t patience = 100, double factor = 0.5);
  // Returns true if the step size was reduced on this call.
  bool observe(double loss, OptimizerConfig& cfg);
  std::size_t reductions() const noexcept { return reductions_; }

 private:
  std::size_t patience_;
  double factor_;
  double best_;
  std::size_t since_ = 0;
  std::size_t reductions_ = 0;
};

}  // namespace spdl::optim
