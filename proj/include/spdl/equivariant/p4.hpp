#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spdl/numcore/tensor.hpp"

namespace spdl::equivariant {

// Grid images are tensors of shape {H, W, C}; p4 features are tensors of
// shape {4, H, W, C} whose leading axis is the rotation r. All convolutions
// wrap periodically.
//
// Rotation by 90 degrees counterclockwise moves pixel (i, j) to
// (W - 1 - j, i).

// Kernel of odd spatial extent k. Lifting kernels are stored as
// [a][b][c_in][c_out]; group kernels carry a leading relative-rotation axis,
// [t][a][b][c_in][c_out]. Rotated copies are generated on the fly.
struct P4Kernel {
  std::size_t extent = 1;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  bool group = false;
  std::vector<double> weights;

  static P4Kernel lifting(std::size_t extent, std::size_t in_channels, std::size_t out_channels);
  static P4Kernel group_kernel(std::size_t extent, std::size_t in_channels,
                               std::size_t out_channels);

  std::size_t size() const noexcept { return weights.size(); }
  // Lifting: at(0, a, b, c, o); group: at(t, a, b, c, o).
  double& at(std::size_t t, std::size_t a, std::size_t b, std::size_t c, std::size_t o);
  double at(std::size_t t, std::size_t a, std::size_t b, std::size_t c, std::size_t o) const;
};

Tensor rot90_image(const Tensor& x, int r);
Tensor rot90_p4(const Tensor& x, int r);

// out[r][p][o] = sum_{d, c} k[R^{-r} d][c][o] x[p + d][c]
Tensor lift_conv(const Tensor& x, const P4Kernel& k);
// out[r][p][o] = sum_{s, d, c} k[(s - r) mod 4][R^{-r} d][c][o] y[s][p + d][c]
Tensor gconv(const Tensor& y, const P4Kernel& k);
// Mean over the rotation axis.
Tensor group_project(const Tensor& y);

// Adjoints. Each returns the input gradient and accumulates the kernel
// gradient (same layout as k.weights) into grad_k.
Tensor lift_conv_backward(const Tensor& x, const P4Kernel& k, const Tensor& grad_out,
                          std::span<double> grad_k);
Tensor gconv_backward(const Tensor& y, const P4Kernel& k, const Tensor& grad_out,
                      std::span<double> grad_k);
Tensor group_project_backward(const Tensor& grad_out);

// Ordinary periodic correlation with a [a][b][c_in][c_out] kernel.
Tensor conv2d(const Tensor& x, std::span<const double> kernel, std::size_t extent,
              std::size_t out_channels);
Tensor conv2d_backward(const Tensor& x, std::span<const double> kernel, std::size_t extent,
                       const Tensor& grad_out, std::span<double> grad_kernel);

}  // namespace spdl::equivariant
