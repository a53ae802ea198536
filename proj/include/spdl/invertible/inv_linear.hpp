#pragma once

#include <vector>

#include "spdl/invertible/flow_layer.hpp"
#include "spdl/numcore/rng.hpp"

namespace spdl::invertible {

// y = P L U x with P a fixed permutation ((P v)_i = v[perm[i]]), L unit
// lower triangular and U upper triangular with
// diag(U)_i = sign_i * (eps0 + softplus(d_i)).
//
// Parameter layout: strict lower part of L (row-major), strict upper part
// of U (row-major), then d.
class InvLinear final : public FlowLayer {
 public:
  static constexpr double kDefaultEps = 1e-3;

  // Identity map.
  explicit InvLinear(std::size_t dim, double eps0 = kDefaultEps);

  // Random permutation and factors near the identity.
  static InvLinear random(std::size_t dim, Rng& rng, double eps0 = kDefaultEps);

  // From explicit factors. The strict upper part of `lower` and the strict
  // lower part of `upper` are ignored; |diag(upper)| must exceed eps0.
  static InvLinear from_factors(std::vector<std::size_t> perm, const Tensor& lower,
                                const Tensor& upper, double eps0 = kDefaultEps);

  FlowLayerKind kind() const noexcept override { return FlowLayerKind::inv_linear; }
  std::size_t dim() const noexcept override { return n_; }

  Tensor forward(const Tensor& x) const override;
  Tensor inverse(const Tensor& y) const override;
  // Independent of x.
  double logdet(const Tensor& x) const override;
  double logdet() const;
  Tensor backward(const Tensor& x, const Tensor& grad_out,
                  std::span<double> grad_params) const override;
  Tensor logdet_backward(const Tensor& x, double scale,
                         std::span<double> grad_params) const override;

  std::size_t num_params() const noexcept override { return params_.size(); }
  std::vector<double> params() const override { return params_; }
  void set_params(std::span<const double> p) override;
  std::unique_ptr<FlowLayer> clone() const override;

  // The composed matrix P L U.
  Tensor matrix() const;
  double eps0() const noexcept { return eps0_; }
  const std::vector<std::size_t>& permutation() const noexcept { return perm_; }
  const std::vector<double>& signs() const noexcept { return signs_; }

  // Restores a layer from serialized state.
  static InvLinear restore(std::vector<std::size_t> perm, std::vector<double> signs,
                           std::vector<double> params, double eps0);

 private:
  double lower(std::size_t i, std::size_t j) const;  // i > j
  double upper(std::size_t i, std::size_t j) const;  // i < j
  double diag(std::size_t i) const;
  std::size_t lower_index(std::size_t i, std::size_t j) const;
  std::size_t upper_index(std::size_t i, std::size_t j) const;
  std::size_t diag_index(std::size_t i) const;

  std::size_t n_;
  double eps0_;
  std::vector<std::size_t> perm_;
  std::vector<double> signs_;
  std::vector<double> params_;
};

}  // namespace spdl::invertible
