#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace spdl::blocks {

enum class Activation : std::uint8_t { tanh = 0, relu = 1, identity = 2 };

inline double activate(Activation a, double u) {
  switch (a) {
    case Activation::tanh: return std::tanh(u);
    case Activation::relu: return u > 0.0 ? u : 0.0;
    case Activation::identity: return u;
  }
  return u;
}

// relu'(0) is taken as 0.
inline double activate_deriv(Activation a, double u) {
  switch (a) {
    case Activation::tanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case Activation::relu: return u > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

inline double activate_second_deriv(Activation a, double u) {
  if (a == Activation::tanh) {
    const double t = std::tanh(u);
    return -2.0 * t * (1.0 - t * t);
  }
  return 0.0;
}

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

}  // namespace spdl::blocks
