#pragma once

#include <string_view>

#include "spdl/numcore/tensor.hpp"

namespace spdl::control {

enum class LossKind { squared, softmax_cross_entropy };

std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view name);

struct LossValue {
  double value;
  Tensor grad;  // with respect to the prediction
};

// squared:               0.5 |pred - target|^2
// softmax_cross_entropy: -sum_i target_i log softmax(pred)_i, pred are logits
LossValue loss_eval(LossKind kind, const Tensor& prediction, const Tensor& target);

}  // namespace spdl::control
