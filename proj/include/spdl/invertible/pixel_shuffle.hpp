#pragma once

#include "spdl/invertible/flow_layer.hpp"

namespace spdl::invertible {

// H x W x C -> (H/s) x (W/s) x (C s^2) with
// out[i][j][(a s + b) C + c] = in[i s + a][j s + b][c].
Tensor pixel_shuffle(const Tensor& x, std::size_t s);
Tensor pixel_unshuffle(const Tensor& y, std::size_t s);

// Pixel shuffle on flattened H*W*C vectors.
class PixelShuffleLayer final : public FlowLayer {
 public:
  PixelShuffleLayer(std::size_t height, std::size_t width, std::size_t channels,
                    std::size_t stride);

  FlowLayerKind kind() const noexcept override { return FlowLayerKind::pixel_shuffle; }
  std::size_t dim() const noexcept override { return h_ * w_ * c_; }

  Tensor forward(const Tensor& x) const override;
  Tensor inverse(const Tensor& y) const override;
  double logdet(const Tensor&) const override { return 0.0; }
  Tensor backward(const Tensor& x, const Tensor& grad_out,
                  std::span<double> grad_params) const override;
  Tensor logdet_backward(const Tensor& x, double scale,
                         std::span<double> grad_params) const override;

  std::size_t num_params() const noexcept override { return 0; }
  std::vector<double> params() const override { return {}; }
  void set_params(std::span<const double> p) override;
  std::unique_ptr<FlowLayer> clone() const override;

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t channels() const noexcept { return c_; }
  std::size_t stride() const noexcept { return s_; }

 private:
  std::size_t h_, w_, c_, s_;
};

}  // namespace spdl::invertible
