#include "spdl/control/regularizer.hpp"

#include <cmath>
#include <string>

#include "spdl/numcore/error.hpp"
#include "spdl/numcore/linalg.hpp"

namespace spdl::control {

std::string_view to_string(RegKind k) {
  switch (k) {
    case RegKind::none: return "none";
    case RegKind::l2: return "l2";
    case RegKind::l1: return "l1";
    case RegKind::h1_discrete: return "h1";
    case RegKind::timestep_simplex: return "timestep_simplex";
  }
  return "none";
}

RegKind parse_regularizer(std::string_view name) {
  for (RegKind k : {RegKind::none, RegKind::l2, RegKind::l1, RegKind::h1_discrete,
                    RegKind::timestep_simplex}) {
    if (to_string(k) == name) return k;
  }
  if (name == "h1_discrete") return RegKind::h1_discrete;
  throw PreconditionError("unknown regularizer '" + std::string(name) + "'");
}

Penalty l2_penalty(std::span<const double> theta, double lambda) {
  Penalty p{0.0, std::vector<double>(theta.size())};
  for (std::size_t i = 0; i < theta.size(); ++i) {
    p.value += theta[i] * theta[i];
    p.grad[i] = 2.0 * lambda * theta[i];
  }
  p.value *= lambda;
  return p;
}

Penalty l1_penalty(std::span<const double> theta, double lambda) {
  Penalty p{0.0, std::vector<double>(theta.size())};
  for (std::size_t i = 0; i < theta.size(); ++i) {
    p.value += std::abs(theta[i]);
    p.grad[i] = theta[i] > 0.0 ? lambda : (theta[i] < 0.0 ? -lambda : 0.0);
  }
  p.value *= lambda;
  return p;
}

Penalty h1_penalty(const std::vector<std::span<const double>>& layers, double lambda) {
  if (layers.empty()) throw PreconditionError("h1_penalty: need K >= 1 layers");
  const std::size_t m = layers.front().size(), k = layers.size();
  for (const auto& l : layers) {
    if (l.size() != m) throw ShapeError("h1_penalty: layers have different sizes");
  }
  const double kk = static_cast<double>(k);
  Penalty p{0.0, std::vector<double>(m * k, 0.0)};
  double first = 0.0, diffs = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    first += layers[0][i] * layers[0][i];
    p.grad[i] = 2.0 * lambda * layers[0][i];
  }
  for (std::size_t j = 0; j + 1 < k; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      const double d = layers[j + 1][i] - layers[j][i];
      diffs += d * d;
      p.grad[(j + 1) * m + i] += 2.0 * lambda * kk * d;
      p.grad[j * m + i] -= 2.0 * lambda * kk * d;
    }
  p.value = lambda * (first + kk * diffs);
  return p;
}

std::vector<double> prox_timestep(std::span<const double> h, double horizon) {
  if (!(horizon > 0.0)) throw PreconditionError("prox_timestep: need T > 0");
  return project_simplex(Tensor::vector(std::vector<double>(h.begin(), h.end())), horizon).values();
}

Penalty network_penalty(const blocks::Network& net, const Regularizer& reg) {
  const auto offsets = net.offsets();
  const auto params = net.params();
  Penalty out{0.0, std::vector<double>(net.num_params(), 0.0)};
  auto add = [&](const Penalty& p, std::size_t off) {
    out.value += p.value;
    for (std::size_t i = 0; i < p.grad.size(); ++i) out.grad[off + i] += p.grad[i];
  };
  switch (reg.kind) {
    case RegKind::none:
    case RegKind::timestep_simplex: return out;
    case RegKind::l2: add(l2_penalty(params.values, reg.lambda), 0); return out;
    case RegKind::l1: add(l1_penalty(params.values, reg.lambda), 0); return out;
    case RegKind::h1_discrete: break;
  }
  std::vector<std::span<const double>> layers;
  std::vector<std::size_t> where;
  for (std::size_t k = 0; k < net.size(); ++k) {
    if (net.blocks()[k].is_ode()) {
      layers.push_back(params.block(k));
      where.push_back(offsets[k]);
    } else {
      add(l2_penalty(params.block(k), reg.lambda), offsets[k]);
    }
  }
  if (layers.empty()) return out;
  const Penalty h = h1_penalty(layers, reg.lambda);
  out.value += h.value;
  const std::size_t m = layers.front().size();
  for (std::size_t j = 0; j < layers.size(); ++j)
    for (std::size_t i = 0; i < m; ++i) out.grad[where[j] + i] += h.grad[j * m + i];
  return out;
}

}  // namespace spdl::control
