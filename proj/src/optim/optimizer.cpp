#include "spdl/optim/optimizer.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "spdl/numcore/error.hpp"

namespace spdl::optim {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::sgd: return "sgd";
    case Method::adam: return "adam";
    case Method::heavy_ball: return "heavy_ball";
    case Method::nesterov: return "nesterov";
    case Method::rgd: return "rgd";
  }
  return "sgd";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::sgd, Method::adam, Method::heavy_ball, Method::nesterov, Method::rgd}) {
    if (to_string(m) == name) return m;
  }
  if (name == "gd") return Method::sgd;
  if (name == "hb") return Method::heavy_ball;
  if (name == "nag") return Method::nesterov;
  throw PreconditionError("unknown optimizer '" + std::string(name) + "'");
}

OptimizerConfig OptimizerConfig::sgd(double lr) {
  OptimizerConfig c;
  c.method = Method::sgd;
  c.lr = lr;
  return c;
}

OptimizerConfig OptimizerConfig::adam(double alpha, double beta1, double beta2, double eps) {
  OptimizerConfig c;
  c.method = Method::adam;
  c.lr = alpha;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.eps = eps;
  return c;
}

OptimizerConfig OptimizerConfig::heavy_ball(double h, double gamma, double mass) {
  OptimizerConfig c;
  c.method = Method::heavy_ball;
  c.lr = h;
  c.gamma = gamma;
  c.mass = mass;
  return c;
}

OptimizerConfig OptimizerConfig::nesterov(double h, double mu) {
  OptimizerConfig c;
  c.method = Method::nesterov;
  c.lr = h;
  c.momentum = mu;
  return c;
}

OptimizerConfig OptimizerConfig::rgd(double h, double gamma, double eps) {
  OptimizerConfig c;
  c.method = Method::rgd;
  c.lr = h;
  c.gamma = gamma;
  c.eps = eps;
  return c;
}

double gamma_from_factor(double factor, double h) {
  if (!(factor > 0.0 && factor <= 1.0) || !(h > 0.0)) {
    throw PreconditionError("gamma_from_factor: need factor in (0, 1] and h > 0");
  }
  return -std::log(factor) / h;
}

OptimizerState::OptimizerState(OptimizerConfig cfg, std::size_t dim) : config(cfg) {
  switch (cfg.method) {
    case Method::adam:
      m.assign(dim, 0.0);
      v.assign(dim, 0.0);
      break;
    case Method::heavy_ball:
    case Method::nesterov:
    case Method::rgd: p.assign(dim, 0.0); break;
    case Method::sgd: break;
  }
}

namespace {

void check(const char* who, std::span<double> theta, std::span<const double> grad,
           const std::vector<double>& buf) {
  if (theta.size() != grad.size() || buf.size() != theta.size()) {
    throw ShapeError(std::string(who) + ": parameter, gradient and state sizes differ");
  }
}

}  // namespace

void sgd_step(OptimizerState& s, std::span<double> theta, std::span<const double> grad) {
  if (theta.size() != grad.size()) throw ShapeError("sgd_step: parameter and gradient sizes differ");
  const double tau = s.config.lr;
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= tau * grad[i];
  ++s.step;
}

void adam_step(OptimizerState& s, std::span<double> theta, std::span<const double> grad) {
  check("adam_step", theta, grad, s.m);
  const auto& c = s.config;
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0 && c.beta2 > 0.0 && c.beta2 < 1.0 && c.eps > 0.0)) {
    throw PreconditionError("adam_step: need beta1, beta2 in (0, 1) and eps > 0");
  }
  ++s.step;
  const double j = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(c.beta1, j), c2 = 1.0 - std::pow(c.beta2, j);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * grad[i];
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mh = s.m[i] / c1, vh = s.v[i] / c2;
    theta[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
  }
}

void conformal_momentum_step(OptimizerState& s, std::span<double> theta,
                             std::span<const double> grad) {
  check("conformal_momentum_step", theta, grad, s.p);
  const auto& c = s.config;
  if (!(c.gamma >= 0.0 && c.mass > 0.0 && c.lr > 0.0)) {
    throw PreconditionError("conformal_momentum_step: need gamma >= 0, mass > 0, h > 0");
  }
  const double decay = std::exp(-c.gamma * c.lr);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.p[i] = decay * s.p[i] - c.lr * grad[i];
    theta[i] += c.lr * s.p[i] / c.mass;
  }
  ++s.step;
}

void rgd_step(OptimizerState& s, std::span<double> theta, std::span<const double> grad) {
  check("rgd_step", theta, grad, s.p);
  const auto& c = s.config;
  if (!(c.eps > 0.0)) throw PreconditionError("rgd_step: need eps > 0");
  const double decay = std::exp(-c.gamma * c.lr);
  double pp = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.p[i] = decay * s.p[i] - c.lr * grad[i];
    pp += s.p[i] * s.p[i];
  }
  const double scale = c.lr / std::sqrt(c.eps + pp);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += scale * s.p[i];
  ++s.step;
}

void nesterov_step(OptimizerState& s, std::span<double> theta, std::span<const double> grad) {
  check("nesterov_step", theta, grad, s.p);
  const auto& c = s.config;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.p[i] = c.momentum * s.p[i] - c.lr * grad[i];
    theta[i] += s.p[i];
  }
  ++s.step;
}

std::vector<double> lookahead(const OptimizerState& s, std::span<const double> theta) {
  std::vector<double> out(theta.begin(), theta.end());
  if (s.config.method == Method::nesterov) {
    if (s.p.size() != out.size()) throw ShapeError("lookahead: state size differs");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s.config.momentum * s.p[i];
  }
  return out;
}

void step(OptimizerState& s, std::span<double> theta, std::span<const double> grad) {
  switch (s.config.method) {
    case Method::sgd: sgd_step(s, theta, grad); return;
    case Method::adam: adam_step(s, theta, grad); return;
    case Method::heavy_ball: conformal_momentum_step(s, theta, grad); return;
    case Method::nesterov: nesterov_step(s, theta, grad); return;
    case Method::rgd: rgd_step(s, theta, grad); return;
  }
}

PlateauSchedule::PlateauSchedule(std::size_t patience, double factor)
    : patience_(patience), factor_(factor), best_(std::numeric_limits<double>::infinity()) {}

bool PlateauSchedule::observe(double loss, OptimizerConfig& cfg) {
  if (loss < best_) {
    best_ = loss;
    since_ = 0;
    return false;
  }
  if (++since_ < patience_) return false;
  cfg.lr *= factor_;
  since_ = 0;
  ++reductions_;
  return true;
}

}  // namespace spdl::optim
