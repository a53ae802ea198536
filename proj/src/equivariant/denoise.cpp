#include "spdl/equivariant/denoise.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "spdl/numcore/binary_io.hpp"
#include "spdl/numcore/error.hpp"

namespace spdl::equivariant {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 3 || a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": images must share an H x W x C shape");
  }
}

void add_bias(Tensor& t, std::span<const double> b) {
  const std::size_t c = b.size();
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += b[i % c];
}

void relu_inplace(Tensor& t) {
  for (auto& v : t.data()) v = v > 0.0 ? v : 0.0;
}

// grad of relu(a) masked and scaled; accumulates per-channel bias gradient.
Tensor relu_back(const Tensor& a, const Tensor& g, double scale, std::span<double> gb) {
  Tensor out(a.shape());
  const std::size_t c = gb.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = a.data()[i] > 0.0 ? scale * g.data()[i] : 0.0;
    out.data()[i] = v;
    gb[i % c] += v;
  }
  return out;
}

void check_input(const Tensor& x, const char* what) {
  if (x.rank() != 3 || x.extent(2) != 1) {
    throw ShapeError(std::string(what) + ": expected a single-channel H x W x 1 image, got " +
                     shape_string(x.shape()));
  }
}

// out = x + sum_c w_c q[c] + beta for q of shape {H, W, C}.
Tensor head_apply(const Tensor& x, const Tensor& q, std::span<const double> w, double beta) {
  Tensor out = x;
  const std::size_t c = w.size(), n = x.size();
  for (std::size_t p = 0; p < n; ++p) {
    double s = beta;
    for (std::size_t k = 0; k < c; ++k) s += w[k] * q.data()[p * c + k];
    out.data()[p] += s;
  }
  return out;
}

Tensor head_backward(const Tensor& q, std::span<const double> w, const Tensor& g,
                     std::span<double> gw, double& gbeta) {
  const std::size_t c = w.size(), n = g.size();
  Tensor gq(q.shape());
  for (std::size_t p = 0; p < n; ++p) {
    const double gp = g.data()[p];
    gbeta += gp;
    for (std::size_t k = 0; k < c; ++k) {
      gw[k] += gp * q.data()[p * c + k];
      gq.data()[p * c + k] = gp * w[k];
    }
  }
  return gq;
}

void check_shape(const DenoiserShape& s) {
  if (s.channels == 0 || s.extent % 2 == 0) {
    throw PreconditionError("denoiser: need channels >= 1 and an odd kernel extent");
  }
}

}  // namespace

double denoise_objective(const Tensor& yhat, const Tensor& ystar, double lambda, double eps) {
  Tensor g;
  return denoise_objective_grad(yhat, ystar, lambda, eps, g);
}

double denoise_objective_grad(const Tensor& yhat, const Tensor& ystar, double lambda, double eps,
                              Tensor& grad) {
  check_pair(yhat, ystar, "denoise_objective");
  if (lambda < 0.0 || !(eps > 0.0)) throw PreconditionError("denoise_objective: need lambda >= 0, eps > 0");
  const std::size_t h = yhat.extent(0), w = yhat.extent(1), c = yhat.extent(2);
  grad = Tensor(yhat.shape());
  auto r = [&](std::size_t i, std::size_t j, std::size_t k) {
    const std::size_t idx = (i * w + j) * c + k;
    return yhat.data()[idx] - ystar.data()[idx];
  };
  auto g = [&](std::size_t i, std::size_t j, std::size_t k) -> double& {
    return grad.data()[(i * w + j) * c + k];
  };
  double data = 0.0, tv = 0.0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const double rv = r(i, j, k);
        data += 0.5 * rv * rv;
        g(i, j, k) += rv;
        if (lambda == 0.0) continue;
        const std::size_t jn = (j + 1) % w, in = (i + 1) % h;
        const double vx = r(i, jn, k) - rv, vy = r(in, j, k) - rv;
        const double sx = std::sqrt(vx * vx + eps * eps), sy = std::sqrt(vy * vy + eps * eps);
        tv += (sx - eps) + (sy - eps);
        g(i, jn, k) += lambda * vx / sx;
        g(i, j, k) -= lambda * vx / sx;
        g(in, j, k) += lambda * vy / sy;
        g(i, j, k) -= lambda * vy / sy;
      }
  return data + lambda * tv;
}

P4Denoiser::P4Denoiser(DenoiserShape shape) : shape_(shape) {
  check_shape(shape_);
  params_.assign(head_offset() + shape_.channels + 1, 0.0);
}

std::size_t P4Denoiser::lift_size() const { return shape_.extent * shape_.extent * shape_.channels; }

std::size_t P4Denoiser::layer_size() const {
  return 4 * shape_.extent * shape_.extent * shape_.channels * shape_.channels;
}

std::size_t P4Denoiser::layer_offset(std::size_t l) const {
  return lift_size() + shape_.channels + l * (layer_size() + shape_.channels);
}

std::size_t P4Denoiser::head_offset() const { return layer_offset(shape_.layers); }

P4Kernel P4Denoiser::lift_kernel() const {
  P4Kernel k = P4Kernel::lifting(shape_.extent, 1, shape_.channels);
  std::copy_n(params_.begin(), lift_size(), k.weights.begin());
  return k;
}

P4Kernel P4Denoiser::layer_kernel(std::size_t l) const {
  P4Kernel k = P4Kernel::group_kernel(shape_.extent, shape_.channels, shape_.channels);
  std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(layer_offset(l)), layer_size(),
              k.weights.begin());
  return k;
}

void P4Denoiser::init(Rng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  const double k2 = static_cast<double>(shape_.extent * shape_.extent);
  for (std::size_t i = 0; i < lift_size(); ++i) params_[i] = rng.normal() / std::sqrt(k2);
  const double sg = 1.0 / std::sqrt(4.0 * k2 * static_cast<double>(shape_.channels));
  for (std::size_t l = 0; l < shape_.layers; ++l)
    for (std::size_t i = 0; i < layer_size(); ++i) params_[layer_offset(l) + i] = sg * rng.normal();
  for (std::size_t c = 0; c < shape_.channels; ++c) params_[head_offset() + c] = 0.1 * rng.normal();
}

Tensor P4Denoiser::apply(const Tensor& x) const {
  check_input(x, "p4 denoiser");
  const std::size_t c = shape_.channels;
  const std::span<const double> p = params_;
  Tensor z = lift_conv(x, lift_kernel());
  add_bias(z, p.subspan(lift_size(), c));
  relu_inplace(z);
  for (std::size_t l = 0; l < shape_.layers; ++l) {
    Tensor a = gconv(z, layer_kernel(l));
    add_bias(a, p.subspan(layer_offset(l) + layer_size(), c));
    relu_inplace(a);
    axpy(shape_.h, a.data(), z.data());
  }
  return head_apply(x, group_project(z), p.subspan(head_offset(), c), p[head_offset() + c]);
}

void P4Denoiser::backward(const Tensor& x, const Tensor& grad_out, std::span<double> grad) const {
  check_input(x, "p4 denoiser");
  if (grad.size() != params_.size() || grad_out.shape() != x.shape()) {
    throw ShapeError("p4 denoiser: gradient shapes do not match");
  }
  const std::size_t c = shape_.channels, L = shape_.layers;
  const std::span<const double> p = params_;
  std::vector<P4Kernel> kernels;
  for (std::size_t l = 0; l < L; ++l) kernels.push_back(layer_kernel(l));
  const P4Kernel k0 = lift_kernel();
  Tensor a0 = lift_conv(x, k0);
  add_bias(a0, p.subspan(lift_size(), c));
  std::vector<Tensor> z, a;
  z.push_back(a0);
  relu_inplace(z.back());
  for (std::size_t l = 0; l < L; ++l) {
    Tensor al = gconv(z.back(), kernels[l]);
    add_bias(al, p.subspan(layer_offset(l) + layer_size(), c));
    Tensor zn = z.back();
    Tensor act = al;
    relu_inplace(act);
    axpy(shape_.h, act.data(), zn.data());
    a.push_back(std::move(al));
    z.push_back(std::move(zn));
  }
  const Tensor q = group_project(z.back());
  double gbeta = 0.0;
  const Tensor gq = head_backward(q, p.subspan(head_offset(), c), grad_out,
                                  grad.subspan(head_offset(), c), gbeta);
  grad[head_offset() + c] += gbeta;
  Tensor gz = group_project_backward(gq);
  for (std::size_t l = L; l-- > 0;) {
    const Tensor ga = relu_back(a[l], gz, shape_.h, grad.subspan(layer_offset(l) + layer_size(), c));
    const Tensor gprev = gconv_backward(z[l], kernels[l], ga, grad.subspan(layer_offset(l), layer_size()));
    axpy(1.0, gprev.data(), gz.data());
  }
  const Tensor ga0 = relu_back(a0, gz, 1.0, grad.subspan(lift_size(), c));
  (void)lift_conv_backward(x, k0, ga0, grad.subspan(0, lift_size()));
}

CnnDenoiser::CnnDenoiser(DenoiserShape shape) : shape_(shape) {
  check_shape(shape_);
  params_.assign(head_offset() + shape_.channels + 1, 0.0);
}

std::size_t CnnDenoiser::layer_offset(std::size_t l) const {
  const std::size_t k2 = shape_.extent * shape_.extent, c = shape_.channels;
  return k2 * c + c + l * (k2 * c * c + c);
}

std::size_t CnnDenoiser::head_offset() const { return layer_offset(shape_.layers); }

void CnnDenoiser::init(Rng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  const std::size_t k2 = shape_.extent * shape_.extent, c = shape_.channels;
  for (std::size_t i = 0; i < k2 * c; ++i) params_[i] = rng.normal() / std::sqrt(static_cast<double>(k2));
  const double sg = 1.0 / std::sqrt(static_cast<double>(k2 * c));
  for (std::size_t l = 0; l < shape_.layers; ++l)
    for (std::size_t i = 0; i < k2 * c * c; ++i) params_[layer_offset(l) + i] = sg * rng.normal();
  for (std::size_t k = 0; k < c; ++k) params_[head_offset() + k] = 0.1 * rng.normal();
}

Tensor CnnDenoiser::apply(const Tensor& x) const {
  check_input(x, "cnn denoiser");
  const std::size_t k2 = shape_.extent * shape_.extent, c = shape_.channels;
  const std::span<const double> p = params_;
  Tensor z = conv2d(x, p.subspan(0, k2 * c), shape_.extent, c);
  add_bias(z, p.subspan(k2 * c, c));
  relu_inplace(z);
  for (std::size_t l = 0; l < shape_.layers; ++l) {
    Tensor a = conv2d(z, p.subspan(layer_offset(l), k2 * c * c), shape_.extent, c);
    add_bias(a, p.subspan(layer_offset(l) + k2 * c * c, c));
    relu_inplace(a);
    axpy(shape_.h, a.data(), z.data());
  }
  return head_apply(x, z, p.subspan(head_offset(), c), p[head_offset() + c]);
}

void CnnDenoiser::backward(const Tensor& x, const Tensor& grad_out, std::span<double> grad) const {
  check_input(x, "cnn denoiser");
  if (grad.size() != params_.size() || grad_out.shape() != x.shape()) {
    throw ShapeError("cnn denoiser: gradient shapes do not match");
  }
  const std::size_t k2 = shape_.extent * shape_.extent, c = shape_.channels, L = shape_.layers;
  const std::span<const double> p = params_;
  Tensor a0 = conv2d(x, p.subspan(0, k2 * c), shape_.extent, c);
  add_bias(a0, p.subspan(k2 * c, c));
  std::vector<Tensor> z, a;
  z.push_back(a0);
  relu_inplace(z.back());
  for (std::size_t l = 0; l < L; ++l) {
    Tensor al = conv2d(z.back(), p.subspan(layer_offset(l), k2 * c * c), shape_.extent, c);
    add_bias(al, p.subspan(layer_offset(l) + k2 * c * c, c));
    Tensor act = al;
    relu_inplace(act);
    Tensor zn = z.back();
    axpy(shape_.h, act.data(), zn.data());
    a.push_back(std::move(al));
    z.push_back(std::move(zn));
  }
  double gbeta = 0.0;
  Tensor gz = head_backward(z.back(), p.subspan(head_offset(), c), grad_out,
                            grad.subspan(head_offset(), c), gbeta);
  grad[head_offset() + c] += gbeta;
  for (std::size_t l = L; l-- > 0;) {
    const Tensor ga = relu_back(a[l], gz, shape_.h, grad.subspan(layer_offset(l) + k2 * c * c, c));
    const Tensor gprev = conv2d_backward(z[l], p.subspan(layer_offset(l), k2 * c * c), shape_.extent,
                                         ga, grad.subspan(layer_offset(l), k2 * c * c));
    axpy(1.0, gprev.data(), gz.data());
  }
  const Tensor ga0 = relu_back(a0, gz, 1.0, grad.subspan(k2 * c, c));
  (void)conv2d_backward(x, p.subspan(0, k2 * c), shape_.extent, ga0, grad.subspan(0, k2 * c));
}

std::vector<ImagePair> rectangles_dataset(std::size_t n, std::size_t size, std::size_t max_rects,
                                          double noise_sigma, std::uint64_t seed) {
  if (size < 4) throw PreconditionError("rectangles_dataset: size must be >= 4");
  if (max_rects < 1) throw PreconditionError("rectangles_dataset: max_rects must be >= 1");
  if (noise_sigma < 0.0) throw PreconditionError("rectangles_dataset: noise_sigma must be >= 0");
  Rng rng(seed);
  std::vector<ImagePair> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    Tensor clean({size, size, 1});
    const std::size_t count = 1 + rng.below(max_rects);
    for (std::size_t q = 0; q < count; ++q) {
      std::size_t r0 = rng.below(size), r1 = rng.below(size);
      std::size_t c0 = rng.below(size), c1 = rng.below(size);
      if (r0 > r1) std::swap(r0, r1);
      if (c0 > c1) std::swap(c0, c1);
      const double v = rng.uniform();
      for (std::size_t i = r0; i <= r1; ++i)
        for (std::size_t j = c0; j <= c1; ++j) clean.data()[i * size + j] = v;
    }
    Tensor noisy = clean;
    for (auto& v : noisy.data()) v += noise_sigma * rng.normal();
    out.push_back({std::move(clean), std::move(noisy)});
  }
  return out;
}

std::uint64_t dataset_hash(const std::vector<ImagePair>& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const Tensor& t) {
    for (double v : t.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ULL;
      }
    }
  };
  for (const auto& p : data) feed(p.clean);
  for (const auto& p : data) feed(p.noisy);
  return h;
}

void write_images(std::ostream& os, const std::vector<Tensor>& images) {
  io::write_magic(os, "SPDLIMG1");
  io::write_u32(os, kImageFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(images.size()));
  for (const auto& img : images) {
    if (img.rank() != 3) throw ShapeError("write_images: images must be H x W x C");
    for (std::size_t d = 0; d < 3; ++d) io::write_u32(os, static_cast<std::uint32_t>(img.extent(d)));
    for (double v : img.data()) io::write_f64(os, v);
  }
}

std::vector<Tensor> read_images(std::istream& is) {
  io::expect_magic(is, "SPDLIMG1");
  const auto version = io::read_u32(is);
  if (version != kImageFormatVersion) throw io::FormatError("image container: unsupported version");
  const auto count = io::read_u32(is);
  std::vector<Tensor> images;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t h = io::read_u32(is), w = io::read_u32(is), c = io::read_u32(is);
    if (h * w * c > (std::size_t{1} << 28)) throw io::FormatError("image container: implausible size");
    std::vector<double> data(h * w * c);
    for (auto& v : data) v = io::read_f64(is);
    images.emplace_back(std::vector<std::size_t>{h, w, c}, std::move(data));
  }
  return images;
}

void save_images(const std::filesystem::path& path, const std::vector<Tensor>& images) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_images(os, images);
}

std::vector<Tensor> load_images(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_images(is);
}

}  // namespace spdl::equivariant
