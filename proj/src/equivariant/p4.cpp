#include "spdl/equivariant/p4.hpp"

#include "spdl/numcore/error.hpp"

namespace spdl::equivariant {

namespace {

struct Dims {
  std::size_t h, w, c;
};

Dims image_dims(const Tensor& x, const char* what) {
  if (x.rank() != 3) throw ShapeError(std::string(what) + ": expected H x W x C, got " + shape_string(x.shape()));
  return {x.extent(0), x.extent(1), x.extent(2)};
}

Dims p4_dims(const Tensor& y, const char* what) {
  if (y.rank() != 4 || y.extent(0) != 4) {
    throw ShapeError(std::string(what) + ": expected 4 x H x W x C, got " + shape_string(y.shape()));
  }
  return {y.extent(1), y.extent(2), y.extent(3)};
}

int wrap4(int r) { return ((r % 4) + 4) % 4; }

std::size_t wrap(long v, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

// Input offsets R^r (a - m, b - m) for every kernel index (a, b), with
// R(di, dj) = (-dj, di).
std::vector<std::pair<long, long>> rotated_offsets(std::size_t k, int r) {
  const long m = static_cast<long>(k / 2);
  std::vector<std::pair<long, long>> off;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      long di = static_cast<long>(a) - m, dj = static_cast<long>(b) - m;
      for (int t = 0; t < r; ++t) {
        const long ni = -dj, nj = di;
        di = ni;
        dj = nj;
      }
      off.emplace_back(di, dj);
    }
  return off;
}

// out[p][o] += sum_{e, c} kern[e][c][o] x[p + R^r e][c], summed in kernel
// index order so rotated inputs reproduce the same floating-point sums.
void corr_acc(const double* x, Dims d, const double* kern, std::size_t k, std::size_t co, int r,
              double* out) {
  const auto off = rotated_offsets(k, r);
  for (std::size_t i = 0; i < d.h; ++i)
    for (std::size_t j = 0; j < d.w; ++j) {
      double* o = out + (i * d.w + j) * co;
      for (std::size_t e = 0; e < off.size(); ++e) {
        const std::size_t ii = wrap(static_cast<long>(i) + off[e].first, d.h);
        const std::size_t jj = wrap(static_cast<long>(j) + off[e].second, d.w);
        const double* xp = x + (ii * d.w + jj) * d.c;
        const double* kp = kern + e * d.c * co;
        for (std::size_t c = 0; c < d.c; ++c) {
          const double xv = xp[c];
          const double* kc = kp + c * co;
          for (std::size_t q = 0; q < co; ++q) o[q] += kc[q] * xv;
        }
      }
    }
}

void corr_back(const double* x, Dims d, const double* kern, std::size_t k, std::size_t co, int r,
               const double* gout, double* gx, double* gkern) {
  const auto off = rotated_offsets(k, r);
  for (std::size_t i = 0; i < d.h; ++i)
    for (std::size_t j = 0; j < d.w; ++j) {
      const double* g = gout + (i * d.w + j) * co;
      for (std::size_t e = 0; e < off.size(); ++e) {
        const std::size_t ii = wrap(static_cast<long>(i) + off[e].first, d.h);
        const std::size_t jj = wrap(static_cast<long>(j) + off[e].second, d.w);
        const double* xp = x + (ii * d.w + jj) * d.c;
        double* gxp = gx + (ii * d.w + jj) * d.c;
        const double* kp = kern + e * d.c * co;
        double* gkp = gkern + e * d.c * co;
        for (std::size_t c = 0; c < d.c; ++c) {
          double s = 0.0;
          for (std::size_t q = 0; q < co; ++q) {
            s += kp[c * co + q] * g[q];
            gkp[c * co + q] += xp[c] * g[q];
          }
          gxp[c] += s;
        }
      }
    }
}

void check_kernel(const P4Kernel& k, bool group, std::size_t in_channels, const char* what) {
  if (k.extent % 2 == 0) throw ShapeError(std::string(what) + ": kernel extent must be odd");
  if (k.group != group) {
    throw ShapeError(std::string(what) + (group ? ": needs a group kernel" : ": needs a lifting kernel"));
  }
  if (k.in_channels != in_channels) {
    throw ShapeError(std::string(what) + ": kernel expects " + std::to_string(k.in_channels) +
                     " input channels, got " + std::to_string(in_channels));
  }
  const std::size_t want = (group ? 4 : 1) * k.extent * k.extent * k.in_channels * k.out_channels;
  if (k.weights.size() != want) throw ShapeError(std::string(what) + ": kernel has wrong size");
}

}  // namespace

P4Kernel P4Kernel::lifting(std::size_t extent, std::size_t in_channels, std::size_t out_channels) {
  if (extent % 2 == 0) throw ShapeError("p4 kernel: extent must be odd");
  return {extent, in_channels, out_channels, false,
          std::vector<double>(extent * extent * in_channels * out_channels, 0.0)};
}

P4Kernel P4Kernel::group_kernel(std::size_t extent, std::size_t in_channels,
                                std::size_t out_channels) {
  if (extent % 2 == 0) throw ShapeError("p4 kernel: extent must be odd");
  return {extent, in_channels, out_channels, true,
          std::vector<double>(4 * extent * extent * in_channels * out_channels, 0.0)};
}

double& P4Kernel::at(std::size_t t, std::size_t a, std::size_t b, std::size_t c, std::size_t o) {
  return weights[(((t * extent + a) * extent + b) * in_channels + c) * out_channels + o];
}

double P4Kernel::at(std::size_t t, std::size_t a, std::size_t b, std::size_t c,
                    std::size_t o) const {
  return weights[(((t * extent + a) * extent + b) * in_channels + c) * out_channels + o];
}

Tensor rot90_image(const Tensor& x, int r) {
  const Dims d = image_dims(x, "rot90_image");
  if (d.h != d.w) throw ShapeError("rot90_image: spatial dims must be square");
  r = wrap4(r);
  Tensor out = x;
  const std::size_t n = d.h;
  for (int t = 0; t < r; ++t) {
    const Tensor in = out;
    // out[a][b] = in[b][n - 1 - a]
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < d.c; ++c)
          out.data()[(a * n + b) * d.c + c] = in.data()[(b * n + (n - 1 - a)) * d.c + c];
  }
  return out;
}

Tensor rot90_p4(const Tensor& y, int r) {
  const Dims d = p4_dims(y, "rot90_p4");
  if (d.h != d.w) throw ShapeError("rot90_p4: spatial dims must be square");
  r = wrap4(r);
  const std::size_t slice = d.h * d.w * d.c;
  Tensor out(y.shape());
  // out[s] = rot90_image(y[(s - r) mod 4], r)
  for (int s = 0; s < 4; ++s) {
    const std::size_t src = static_cast<std::size_t>(wrap4(s - r));
    Tensor img({d.h, d.w, d.c},
               std::vector<double>(y.data().begin() + static_cast<std::ptrdiff_t>(src * slice),
                                   y.data().begin() + static_cast<std::ptrdiff_t>((src + 1) * slice)));
    const Tensor rimg = rot90_image(img, r);
    std::copy(rimg.data().begin(), rimg.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * slice));
  }
  return out;
}

Tensor lift_conv(const Tensor& x, const P4Kernel& k) {
  const Dims d = image_dims(x, "lift_conv");
  check_kernel(k, false, d.c, "lift_conv");
  const std::size_t co = k.out_channels, plane = d.h * d.w * co;
  Tensor out({4, d.h, d.w, co});
  for (int r = 0; r < 4; ++r) {
    corr_acc(x.data().data(), d, k.weights.data(), k.extent, co, r,
             out.data().data() + static_cast<std::size_t>(r) * plane);
  }
  return out;
}

Tensor lift_conv_backward(const Tensor& x, const P4Kernel& k, const Tensor& grad_out,
                          std::span<double> grad_k) {
  const Dims d = image_dims(x, "lift_conv_backward");
  check_kernel(k, false, d.c, "lift_conv_backward");
  const std::size_t co = k.out_channels, plane = d.h * d.w * co;
  if (grad_out.shape() != std::vector<std::size_t>{4, d.h, d.w, co} || grad_k.size() != k.size()) {
    throw ShapeError("lift_conv_backward: gradient shapes do not match");
  }
  Tensor gx(x.shape());
  for (int r = 0; r < 4; ++r) {
    corr_back(x.data().data(), d, k.weights.data(), k.extent, co, r,
              grad_out.data().data() + static_cast<std::size_t>(r) * plane, gx.data().data(),
              grad_k.data());
  }
  return gx;
}

// With t = s - r and e = R^{-r} d the group correlation reads
// out[r][p] = sum_{t, e, c} k[t][e][c] y[(t + r) mod 4][p + R^r e][c].
Tensor gconv(const Tensor& y, const P4Kernel& k) {
  const Dims d = p4_dims(y, "gconv");
  check_kernel(k, true, d.c, "gconv");
  const std::size_t co = k.out_channels, kk = k.extent * k.extent * d.c * co;
  const std::size_t in_plane = d.h * d.w * d.c, out_plane = d.h * d.w * co;
  Tensor out({4, d.h, d.w, co});
  for (int r = 0; r < 4; ++r)
    for (int t = 0; t < 4; ++t) {
      const auto s = static_cast<std::size_t>(wrap4(t + r));
      corr_acc(y.data().data() + s * in_plane, d, k.weights.data() + static_cast<std::size_t>(t) * kk,
               k.extent, co, r, out.data().data() + static_cast<std::size_t>(r) * out_plane);
    }
  return out;
}

Tensor gconv_backward(const Tensor& y, const P4Kernel& k, const Tensor& grad_out,
                      std::span<double> grad_k) {
  const Dims d = p4_dims(y, "gconv_backward");
  check_kernel(k, true, d.c, "gconv_backward");
  const std::size_t co = k.out_channels, kk = k.extent * k.extent * d.c * co;
  const std::size_t in_plane = d.h * d.w * d.c, out_plane = d.h * d.w * co;
  if (grad_out.shape() != std::vector<std::size_t>{4, d.h, d.w, co} || grad_k.size() != k.size()) {
    throw ShapeError("gconv_backward: gradient shapes do not match");
  }
  Tensor gy(y.shape());
  for (int r = 0; r < 4; ++r)
    for (int t = 0; t < 4; ++t) {
      const auto s = static_cast<std::size_t>(wrap4(t + r));
      corr_back(y.data().data() + s * in_plane, d, k.weights.data() + static_cast<std::size_t>(t) * kk,
                k.extent, co, r, grad_out.data().data() + static_cast<std::size_t>(r) * out_plane,
                gy.data().data() + s * in_plane, grad_k.data() + static_cast<std::size_t>(t) * kk);
    }
  return gy;
}

Tensor group_project(const Tensor& y) {
  const Dims d = p4_dims(y, "group_project");
  const std::size_t slice = d.h * d.w * d.c;
  Tensor out({d.h, d.w, d.c});
  for (std::size_t i = 0; i < slice; ++i) {
    // Pairwise order (y0 + y2) + (y1 + y3) is invariant under cyclic shifts
    // of the rotation axis, so projection commutes with rotation exactly.
    const auto v = y.data();
    out.data()[i] = 0.25 * ((v[i] + v[2 * slice + i]) + (v[slice + i] + v[3 * slice + i]));
  }
  return out;
}

Tensor group_project_backward(const Tensor& grad_out) {
  const Dims d = image_dims(grad_out, "group_project_backward");
  const std::size_t slice = d.h * d.w * d.c;
  Tensor gy({4, d.h, d.w, d.c});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t i = 0; i < slice; ++i) gy.data()[r * slice + i] = 0.25 * grad_out.data()[i];
  return gy;
}

Tensor conv2d(const Tensor& x, std::span<const double> kernel, std::size_t extent,
              std::size_t out_channels) {
  const Dims d = image_dims(x, "conv2d");
  if (extent % 2 == 0 || kernel.size() != extent * extent * d.c * out_channels) {
    throw ShapeError("conv2d: kernel does not match input channels");
  }
  Tensor out({d.h, d.w, out_channels});
  corr_acc(x.data().data(), d, kernel.data(), extent, out_channels, 0, out.data().data());
  return out;
}

Tensor conv2d_backward(const Tensor& x, std::span<const double> kernel, std::size_t extent,
                       const Tensor& grad_out, std::span<double> grad_kernel) {
  const Dims d = image_dims(x, "conv2d_backward");
  if (extent % 2 == 0 || kernel.size() == 0 || kernel.size() % (extent * extent * d.c) != 0) {
    throw ShapeError("conv2d_backward: kernel does not match input channels");
  }
  const std::size_t co = kernel.size() / (extent * extent * d.c);
  if (grad_out.shape() != std::vector<std::size_t>{d.h, d.w, co} ||
      grad_kernel.size() != kernel.size()) {
    throw ShapeError("conv2d_backward: gradient shapes do not match");
  }
  Tensor gx(x.shape());
  corr_back(x.data().data(), d, kernel.data(), extent, co, 0, grad_out.data().data(),
            gx.data().data(), grad_kernel.data());
  return gx;
}

}  // namespace spdl::equivariant
