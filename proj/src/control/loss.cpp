#include "spdl/control/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spdl/numcore/error.hpp"

namespace spdl::control {

std::string_view to_string(LossKind k) {
  return k == LossKind::squared ? "squared" : "softmax_cross_entropy";
}

LossKind parse_loss(std::string_view name) {
  if (name == "squared") return LossKind::squared;
  if (name == "softmax_cross_entropy" || name == "cross_entropy") return LossKind::softmax_cross_entropy;
  throw PreconditionError("unknown loss '" + std::string(name) + "'");
}

LossValue loss_eval(LossKind kind, const Tensor& prediction, const Tensor& target) {
  if (prediction.size() != target.size()) {
    throw ShapeError("loss_eval: prediction " + shape_string(prediction.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const std::size_t n = prediction.size();
  LossValue out{0.0, Tensor(prediction.shape())};
  if (kind == LossKind::squared) {
    for (std::size_t i = 0; i < n; ++i) {
      const double r = prediction[i] - target[i];
      out.value += 0.5 * r * r;
      out.grad[i] = r;
    }
    return out;
  }
  if (n == 0) return out;
  const double mx = *std::max_element(prediction.data().begin(), prediction.data().end());
  double z = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    z += std::exp(prediction[i] - mx);
    mass += target[i];
  }
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < n; ++i) {
    out.value -= target[i] * (prediction[i] - lse);
    out.grad[i] = std::exp(prediction[i] - lse) * mass - target[i];
  }
  return out;
}

}  // namespace spdl::control
