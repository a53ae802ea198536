#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "spdl/numcore/tensor.hpp"

namespace spdl::invertible {

enum class FlowLayerKind : std::uint8_t {
  coupling = 1,
  inv_linear = 2,
  pixel_shuffle = 3,
  iresnet = 4,
};

// A bijection R^dim -> R^dim with a tractable log-determinant.
class FlowLayer {
 public:
  virtual ~FlowLayer() = default;

  virtual FlowLayerKind kind() const noexcept = 0;
  virtual std::size_t dim() const noexcept = 0;

  virtual Tensor forward(const Tensor& x) const = 0;
  virtual Tensor inverse(const Tensor& y) const = 0;
  // log|det dy/dx| at x.
  virtual double logdet(const Tensor& x) const = 0;

  // Returns dL/dx given dL/dy and accumulates dL/dtheta into grad_params.
  virtual Tensor backward(const Tensor& x, const Tensor& grad_out,
                          std::span<double> grad_params) const = 0;
  // Accumulates scale * d logdet(x)/dtheta into grad_params and returns
  // scale * d logdet(x)/dx.
  virtual Tensor logdet_backward(const Tensor& x, double scale,
                                 std::span<double> grad_params) const = 0;

  virtual std::size_t num_params() const noexcept = 0;
  virtual std::vector<double> params() const = 0;
  virtual void set_params(std::span<const double> p) = 0;

  // Hook run after each optimizer update.
  virtual void after_step() {}

  virtual std::unique_ptr<FlowLayer> clone() const = 0;
};

}  // namespace spdl::invertible
