#include "spdl/invertible/pixel_shuffle.hpp"

#include "spdl/numcore/error.hpp"

namespace spdl::invertible {

Tensor pixel_shuffle(const Tensor& x, std::size_t s) {
  if (x.rank() != 3) throw ShapeError("pixel_shuffle: expected H x W x C, got " + shape_string(x.shape()));
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  if (s == 0 || h % s != 0 || w % s != 0) {
    throw ShapeError("pixel_shuffle: stride " + std::to_string(s) + " does not divide " +
                     shape_string(x.shape()));
  }
  const std::size_t ho = h / s, wo = w / s, co = c * s * s;
  Tensor y({ho, wo, co});
  const auto in = x.data();
  auto out = y.data();
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j)
      for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b)
          for (std::size_t k = 0; k < c; ++k)
            out[(i * wo + j) * co + (a * s + b) * c + k] =
                in[((i * s + a) * w + (j * s + b)) * c + k];
  return y;
}

Tensor pixel_unshuffle(const Tensor& y, std::size_t s) {
  if (y.rank() != 3) throw ShapeError("pixel_unshuffle: expected rank 3, got " + shape_string(y.shape()));
  const std::size_t ho = y.extent(0), wo = y.extent(1), co = y.extent(2);
  if (s == 0 || co % (s * s) != 0) {
    throw ShapeError("pixel_unshuffle: channel count not divisible by stride^2");
  }
  const std::size_t c = co / (s * s), h = ho * s, w = wo * s;
  Tensor x({h, w, c});
  const auto in = y.data();
  auto out = x.data();
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j)
      for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b)
          for (std::size_t k = 0; k < c; ++k)
            out[((i * s + a) * w + (j * s + b)) * c + k] =
                in[(i * wo + j) * co + (a * s + b) * c + k];
  return x;
}

PixelShuffleLayer::PixelShuffleLayer(std::size_t height, std::size_t width, std::size_t channels,
                                     std::size_t stride)
    : h_(height), w_(width), c_(channels), s_(stride) {
  if (h_ == 0 || w_ == 0 || c_ == 0) throw ShapeError("pixel_shuffle layer: empty image");
  if (s_ == 0 || h_ % s_ != 0 || w_ % s_ != 0) {
    throw ShapeError("pixel_shuffle layer: stride does not divide the image size");
  }
}

Tensor PixelShuffleLayer::forward(const Tensor& x) const {
  if (x.size() != dim()) throw ShapeError("pixel_shuffle layer: dimension mismatch");
  return pixel_shuffle(x.reshaped({h_, w_, c_}), s_).reshaped({dim()});
}

Tensor PixelShuffleLayer::inverse(const Tensor& y) const {
  if (y.size() != dim()) throw ShapeError("pixel_shuffle layer: dimension mismatch");
  return pixel_unshuffle(y.reshaped({h_ / s_, w_ / s_, c_ * s_ * s_}), s_).reshaped({dim()});
}

Tensor PixelShuffleLayer::backward(const Tensor&, const Tensor& grad_out,
                                   std::span<double>) const {
  return inverse(grad_out);
}

Tensor PixelShuffleLayer::logdet_backward(const Tensor&, double, std::span<double>) const {
  return Tensor({dim()});
}

void PixelShuffleLayer::set_params(std::span<const double> p) {
  if (!p.empty()) throw ShapeError("pixel_shuffle layer: has no parameters");
}

std::unique_ptr<FlowLayer> PixelShuffleLayer::clone() const {
  return std::make_unique<PixelShuffleLayer>(*this);
}

}  // namespace spdl::invertible
