#include "spdl/invertible/coupling.hpp"

#include <algorithm>
#include <cmath>

#include "spdl/numcore/error.hpp"

namespace spdl::invertible {

using blocks::Block;
using blocks::Network;

namespace {

double clamp_scale(double s) {
  return std::clamp(s, -CouplingLayer::kScaleClamp, CouplingLayer::kScaleClamp);
}

bool scale_active(double s) {
  return s >= -CouplingLayer::kScaleClamp && s <= CouplingLayer::kScaleClamp;
}

}  // namespace

CouplingLayer::CouplingLayer(std::vector<std::size_t> first, std::vector<std::size_t> second,
                             CouplingLaw law, Network subnet)
    : first_(std::move(first)), second_(std::move(second)), law_(law), subnet_(std::move(subnet)) {
  if (first_.empty() || second_.empty()) {
    throw ShapeError("coupling: both partition sets must be nonempty");
  }
  const std::size_t m = dim();
  std::vector<bool> seen(m, false);
  for (const auto* part : {&first_, &second_})
    for (std::size_t i : *part) {
      if (i >= m || seen[i]) throw ShapeError("coupling: partition is not a split of 0..dim-1");
      seen[i] = true;
    }
  const std::size_t want_out = law_ == CouplingLaw::affine ? 2 * second_.size() : second_.size();
  if (subnet_.empty() || subnet_.in_dim() != first_.size() || subnet_.out_dim() != want_out) {
    throw ShapeError("coupling: subnet must map " + std::to_string(first_.size()) + " -> " +
                     std::to_string(want_out));
  }
}

CouplingLayer CouplingLayer::alternating(std::size_t dim, unsigned parity, CouplingLaw law,
                                         std::size_t hidden, std::size_t depth,
                                         blocks::Activation act, Rng& rng) {
  if (dim < 2) throw ShapeError("coupling: dimension must be at least 2");
  if (depth < 1 || hidden < 1) throw PreconditionError("coupling: subnet needs depth, width >= 1");
  std::vector<std::size_t> first, second;
  for (std::size_t i = 0; i < dim; ++i) (i % 2 == parity % 2 ? first : second).push_back(i);
  const std::size_t out = law == CouplingLaw::affine ? 2 * second.size() : second.size();
  Network net;
  net.add(Block::dense(first.size(), hidden, act));
  for (std::size_t k = 1; k < depth; ++k) net.add(Block::dense(hidden, hidden, act));
  net.add(Block::linear_head(hidden, out));
  net.init(rng);
  auto head = net.blocks().back().params();
  std::fill(head.begin(), head.end(), 0.0);
  return CouplingLayer(std::move(first), std::move(second), law, std::move(net));
}

void CouplingLayer::check_dim(const Tensor& x) const {
  if (x.size() != dim()) {
    throw ShapeError("coupling: expected dim " + std::to_string(dim()) + ", got " +
                     std::to_string(x.size()));
  }
}

Tensor CouplingLayer::gather_first(const Tensor& x) const {
  Tensor x1({first_.size()});
  for (std::size_t i = 0; i < first_.size(); ++i) x1[i] = x[first_[i]];
  return x1;
}

Tensor CouplingLayer::forward(const Tensor& x) const {
  check_dim(x);
  const Tensor f = subnet_.evaluate(gather_first(x));
  Tensor y = x;
  const std::size_t m2 = second_.size();
  for (std::size_t i = 0; i < m2; ++i) {
    const std::size_t j = second_[i];
    if (law_ == CouplingLaw::additive) {
      y[j] = x[j] + f[i];
    } else {
      y[j] = x[j] * std::exp(clamp_scale(f[i])) + f[m2 + i];
    }
  }
  return y;
}

Tensor CouplingLayer::inverse(const Tensor& y) const {
  check_dim(y);
  const Tensor f = subnet_.evaluate(gather_first(y));
  Tensor x = y;
  const std::size_t m2 = second_.size();
  for (std::size_t i = 0; i < m2; ++i) {
    const std::size_t j = second_[i];
    if (law_ == CouplingLaw::additive) {
      x[j] = y[j] - f[i];
    } else {
      x[j] = (y[j] - f[m2 + i]) * std::exp(-clamp_scale(f[i]));
    }
  }
  return x;
}

double CouplingLayer::logdet(const Tensor& x) const {
  check_dim(x);
  if (law_ == CouplingLaw::additive) return 0.0;
  const Tensor f = subnet_.evaluate(gather_first(x));
  double s = 0.0;
  for (std::size_t i = 0; i < second_.size(); ++i) s += clamp_scale(f[i]);
  return s;
}

Tensor CouplingLayer::backward(const Tensor& x, const Tensor& grad_out,
                               std::span<double> grad_params) const {
  check_dim(x);
  check_dim(grad_out);
  const auto trace = blocks::network_forward(subnet_, gather_first(x));
  const Tensor& f = trace.output();
  const std::size_t m2 = second_.size();
  Tensor gf({f.size()});
  Tensor gx = grad_out;
  for (std::size_t i = 0; i < m2; ++i) {
    const std::size_t j = second_[i];
    const double g = grad_out[j];
    if (law_ == CouplingLaw::additive) {
      gf[i] = g;
    } else {
      const double e = std::exp(clamp_scale(f[i]));
      gx[j] = g * e;
      gf[i] = scale_active(f[i]) ? g * x[j] * e : 0.0;
      gf[m2 + i] = g;
    }
  }
  const Tensor g1 = blocks::network_backprop_accumulate(subnet_, trace, gf, grad_params);
  for (std::size_t i = 0; i < first_.size(); ++i) gx[first_[i]] += g1[i];
  return gx;
}

Tensor CouplingLayer::logdet_backward(const Tensor& x, double scale,
                                      std::span<double> grad_params) const {
  check_dim(x);
  Tensor gx({dim()});
  if (law_ == CouplingLaw::additive) return gx;
  const auto trace = blocks::network_forward(subnet_, gather_first(x));
  const Tensor& f = trace.output();
  Tensor gf({f.size()});
  for (std::size_t i = 0; i < second_.size(); ++i) gf[i] = scale_active(f[i]) ? scale : 0.0;
  const Tensor g1 = blocks::network_backprop_accumulate(subnet_, trace, gf, grad_params);
  for (std::size_t i = 0; i < first_.size(); ++i) gx[first_[i]] = g1[i];
  return gx;
}

std::unique_ptr<FlowLayer> CouplingLayer::clone() const {
  return std::make_unique<CouplingLayer>(*this);
}

}  // namespace spdl::invertible
