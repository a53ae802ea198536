#pragma once

#include <cstdint>
#include <vector>

#include "spdl/blocks/network.hpp"
#include "spdl/invertible/flow_layer.hpp"

namespace spdl::invertible {

enum class CouplingLaw : std::uint8_t { additive = 0, affine = 1 };

// y1 = x1, y2 = x2 + f(x1)                 (additive)
// y1 = x1, y2 = x2 * exp(s) + t, (s,t)=f(x1) (affine, s clamped to [-5, 5])
//
// For the affine law the subnet output is [s (|I2|), t (|I2|)].
class CouplingLayer final : public FlowLayer {
 public:
  static constexpr double kScaleClamp = 5.0;

  CouplingLayer(std::vector<std::size_t> first, std::vector<std::size_t> second, CouplingLaw law,
                blocks::Network subnet);

  // Partition by index parity: I1 = {i : i % 2 == parity}. The subnet has
  // `depth` dense layers of width `hidden` followed by a zero-initialized
  // linear head, so the layer starts as the identity.
  static CouplingLayer alternating(std::size_t dim, unsigned parity, CouplingLaw law,
                                   std::size_t hidden, std::size_t depth,
                                   blocks::Activation act, Rng& rng);

  FlowLayerKind kind() const noexcept override { return FlowLayerKind::coupling; }
  std::size_t dim() const noexcept override { return first_.size() + second_.size(); }

  Tensor forward(const Tensor& x) const override;
  Tensor inverse(const Tensor& y) const override;
  double logdet(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& grad_out,
                  std::span<double> grad_params) const override;
  Tensor logdet_backward(const Tensor& x, double scale,
                         std::span<double> grad_params) const override;

  std::size_t num_params() const noexcept override { return subnet_.num_params(); }
  std::vector<double> params() const override { return subnet_.params().values; }
  void set_params(std::span<const double> p) override { subnet_.set_params(p); }
  std::unique_ptr<FlowLayer> clone() const override;

  CouplingLaw law() const noexcept { return law_; }
  const std::vector<std::size_t>& first() const noexcept { return first_; }
  const std::vector<std::size_t>& second() const noexcept { return second_; }
  const blocks::Network& subnet() const noexcept { return subnet_; }
  blocks::Network& subnet() noexcept { return subnet_; }

 private:
  Tensor gather_first(const Tensor& x) const;
  void check_dim(const Tensor& x) const;

  std::vector<std::size_t> first_;
  std::vector<std::size_t> second_;
  CouplingLaw law_;
  blocks::Network subnet_;
};

}  // namespace spdl::invertible
