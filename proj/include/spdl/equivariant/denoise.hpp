#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "spdl/equivariant/p4.hpp"
#include "spdl/numcore/rng.hpp"

namespace spdl::equivariant {

// 1/2 |yhat - y|^2 + lambda * sum phi(v) over the periodic forward
// differences v of the residual in both grid directions, with
// phi(v) = sqrt(v^2 + eps^2) - eps.
double denoise_objective(const Tensor& yhat, const Tensor& ystar, double lambda, double eps);
// Same value; writes d/dyhat into grad (shape of yhat).
double denoise_objective_grad(const Tensor& yhat, const Tensor& ystar, double lambda, double eps,
                              Tensor& grad);

struct DenoiserShape {
  std::size_t channels = 4;
  std::size_t layers = 2;
  std::size_t extent = 3;
  double h = 0.5;
};

// Residual image-to-image model on single-channel {H, W, 1} images:
//   z0 = relu(conv0(x) + b0), z_{l+1} = z_l + h relu(conv_l(z_l) + b_l),
//   out = x + sum_c w_c z_L[c] + beta.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::string_view name() const noexcept = 0;
  virtual std::size_t num_params() const noexcept = 0;
  virtual std::span<double> params() noexcept = 0;
  virtual std::span<const double> params() const noexcept = 0;
  virtual Tensor apply(const Tensor& x) const = 0;
  // Accumulates dL/dtheta into grad given dL/d(out).
  virtual void backward(const Tensor& x, const Tensor& grad_out, std::span<double> grad) const = 0;
  virtual std::unique_ptr<Denoiser> clone() const = 0;
  virtual void init(Rng& rng) = 0;
};

// p4-equivariant variant: lifting convolution, group convolutions, and a
// mean projection over rotations before the channel mix.
class P4Denoiser final : public Denoiser {
 public:
  explicit P4Denoiser(DenoiserShape shape);
  std::string_view name() const noexcept override { return "p4"; }
  std::size_t num_params() const noexcept override { return params_.size(); }
  std::span<double> params() noexcept override { return params_; }
  std::span<const double> params() const noexcept override { return params_; }
  Tensor apply(const Tensor& x) const override;
  void backward(const Tensor& x, const Tensor& grad_out, std::span<double> grad) const override;
  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<P4Denoiser>(*this); }
  void init(Rng& rng) override;
  const DenoiserShape& shape() const noexcept { return shape_; }

 private:
  P4Kernel lift_kernel() const;
  P4Kernel layer_kernel(std::size_t l) const;
  std::size_t lift_size() const;
  std::size_t layer_size() const;
  std::size_t layer_offset(std::size_t l) const;
  std::size_t head_offset() const;

  DenoiserShape shape_;
  std::vector<double> params_;
};

// Ordinary periodic CNN with the same residual structure.
class CnnDenoiser final : public Denoiser {
 public:
  explicit CnnDenoiser(DenoiserShape shape);
  std::string_view name() const noexcept override { return "cnn"; }
  std::size_t num_params() const noexcept override { return params_.size(); }
  std::span<double> params() noexcept override { return params_; }
  std::span<const double> params() const noexcept override { return params_; }
  Tensor apply(const Tensor& x) const override;
  void backward(const Tensor& x, const Tensor& grad_out, std::span<double> grad) const override;
  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<CnnDenoiser>(*this); }
  void init(Rng& rng) override;
  const DenoiserShape& shape() const noexcept { return shape_; }

 private:
  std::size_t layer_offset(std::size_t l) const;
  std::size_t head_offset() const;

  DenoiserShape shape_;
  std::vector<double> params_;
};

struct ImagePair {
  Tensor clean;
  Tensor noisy;
};

// n single-channel size x size images, each with 1..max_rects filled
// axis-aligned rectangles of uniform random intensity in [0, 1) painted in
// order over a zero background; noisy = clean + N(0, noise_sigma^2).
std::vector<ImagePair> rectangles_dataset(std::size_t n, std::size_t size, std::size_t max_rects,
                                          double noise_sigma, std::uint64_t seed);

// 64-bit FNV-1a over the IEEE-754 bytes (little-endian) of every clean then
// noisy image.
std::uint64_t dataset_hash(const std::vector<ImagePair>& data);

// Image container, little-endian:
//   "SPDLIMG1", u32 version (= 1), u32 count,
//   per image: u32 height, u32 width, u32 channels, f64 data[h * w * c]
inline constexpr std::uint32_t kImageFormatVersion = 1;
void write_images(std::ostream& os, const std::vector<Tensor>& images);
std::vector<Tensor> read_images(std::istream& is);
void save_images(const std::filesystem::path& path, const std::vector<Tensor>& images);
std::vector<Tensor> load_images(const std::filesystem::path& path);

}  // namespace spdl::equivariant
