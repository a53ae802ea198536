#pragma once

#include <cstdint>
#include <vector>

#include "spdl/blocks/network.hpp"
#include "spdl/invertible/flow_layer.hpp"

namespace spdl::invertible {

struct IResOptions {
  double lip_target = 0.9;
  std::size_t series_terms = 10;
  std::size_t probes = 1;
  std::size_t exact_dim_cutoff = 10;
  double inverse_tol = 1e-12;
  std::size_t max_iter = 1000;
  int power_iters = 1;  // per after_step()
};

struct FixedPointResult {
  Tensor x;
  std::size_t iterations;
  double residual;
};

// g(x) = x + f(x) where f is a chain of dense / linear_head blocks mapping
// dim -> dim. Every weight matrix is kept at spectral norm <= lip_target.
class IResBlock final : public FlowLayer {
 public:
  IResBlock(blocks::Network subnet, IResOptions opt = {}, std::uint64_t probe_seed = 0);

  // `depth` dense layers of width `hidden`, then a linear head back to dim.
  // Renormalized with 50 power iterations.
  static IResBlock make(std::size_t dim, std::size_t hidden, std::size_t depth,
                        blocks::Activation act, Rng& rng, IResOptions opt = {});

  FlowLayerKind kind() const noexcept override { return FlowLayerKind::iresnet; }
  std::size_t dim() const noexcept override { return subnet_.in_dim(); }

  Tensor forward(const Tensor& x) const override;
  Tensor inverse(const Tensor& y) const override;
  // Exact when dim <= exact_dim_cutoff, otherwise the truncated series with
  // `probes` Rademacher probes drawn from the current probe seed.
  double logdet(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& grad_out,
                  std::span<double> grad_params) const override;
  Tensor logdet_backward(const Tensor& x, double scale,
                         std::span<double> grad_params) const override;

  std::size_t num_params() const noexcept override { return subnet_.num_params(); }
  std::vector<double> params() const override { return subnet_.params().values; }
  void set_params(std::span<const double> p) override { subnet_.set_params(p); }
  // One warm-started power iteration per matrix, then advances the probe seed.
  void after_step() override;
  std::unique_ptr<FlowLayer> clone() const override;

  // Rescales every weight matrix whose estimate exceeds lip_target down to
  // lip_target. Biases are untouched.
  void renormalize(int iters);
  // Current warm-started estimates, one per weight matrix.
  std::vector<double> spectral_estimates(int iters);

  FixedPointResult solve_inverse(const Tensor& y, double tol, std::size_t max_iter) const;
  double logdet_estimate(const Tensor& x, std::size_t terms, std::size_t probes,
                         std::uint64_t seed, std::size_t exact_dim_cutoff) const;
  // Gradient of logdet_estimate with the same arguments, scaled.
  Tensor logdet_estimate_backward(const Tensor& x, std::size_t terms, std::size_t probes,
                                  std::uint64_t seed, std::size_t exact_dim_cutoff,
                                  double scale, std::span<double> grad_params) const;

  Tensor residual(const Tensor& x) const { return subnet_.evaluate(x); }
  // Jacobian of f (not of g); rows index outputs.
  Tensor jacobian(const Tensor& x) const;
  Tensor jvp(const Tensor& x, const Tensor& v) const;
  Tensor vjp(const Tensor& x, const Tensor& w) const;
  // Accumulates scale * d(a^T J_f(x) b)/dtheta into grad_params and
  // scale * d(a^T J_f(x) b)/dx into grad_x.
  void mixed_backward(const Tensor& x, const Tensor& a, const Tensor& b, double scale,
                      std::span<double> grad_params, std::span<double> grad_x) const;

  const blocks::Network& subnet() const noexcept { return subnet_; }
  blocks::Network& subnet() noexcept { return subnet_; }
  const IResOptions& options() const noexcept { return opt_; }
  IResOptions& options() noexcept { return opt_; }
  std::uint64_t probe_seed() const noexcept { return probe_seed_; }

 private:
  blocks::Network subnet_;
  IResOptions opt_;
  std::uint64_t probe_seed_;
  std::vector<std::vector<double>> power_vectors_;  // one per block (weights only)
};

void iresnet_renormalize(IResBlock& block, int iters = 50);
FixedPointResult iresnet_inverse(const IResBlock& block, const Tensor& y, double tol,
                                 std::size_t max_iter);
double iresnet_logdet(const IResBlock& block, const Tensor& x, std::size_t series_terms,
                      std::size_t probes, std::uint64_t seed, std::size_t exact_dim_cutoff);

}  // namespace spdl::invertible
