#include "spdl/blocks/network.hpp"

#include <cmath>
#include <limits>

#include "spdl/numcore/error.hpp"

namespace spdl::blocks {

Network::Network(std::vector<Block> blocks) {
  for (auto& b : blocks) add(std::move(b));
}

Network& Network::add(Block b) {
  if (!blocks_.empty() && blocks_.back().out_dim() != b.in_dim()) {
    throw ShapeError("network: block " + std::to_string(blocks_.size()) + " expects input dim " +
                     std::to_string(b.in_dim()) + " but previous block outputs " +
                     std::to_string(blocks_.back().out_dim()));
  }
  blocks_.push_back(std::move(b));
  return *this;
}

std::size_t Network::in_dim() const noexcept {
  return blocks_.empty() ? 0 : blocks_.front().in_dim();
}

std::size_t Network::out_dim() const noexcept {
  return blocks_.empty() ? 0 : blocks_.back().out_dim();
}

std::size_t Network::num_params() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.num_params();
  return n;
}

std::vector<std::size_t> Network::offsets() const {
  std::vector<std::size_t> off{0};
  for (const auto& b : blocks_) off.push_back(off.back() + b.num_params());
  return off;
}

ParamVector Network::params() const {
  ParamVector pv{{}, offsets()};
  pv.values.reserve(pv.offsets.back());
  for (const auto& b : blocks_) pv.values.insert(pv.values.end(), b.params().begin(), b.params().end());
  return pv;
}

void Network::set_params(std::span<const double> flat) {
  if (flat.size() != num_params()) {
    throw ShapeError("network: expected " + std::to_string(num_params()) + " parameters, got " +
                     std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (auto& b : blocks_) {
    auto dst = b.params();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + dst.size()), dst.begin());
    off += dst.size();
  }
}

ParamVector Network::zero_grad() const {
  auto off = offsets();
  return ParamVector{std::vector<double>(off.back(), 0.0), std::move(off)};
}

void Network::init(Rng& rng) {
  for (auto& b : blocks_) b.init(rng);
}

Tensor Network::evaluate(const Tensor& x) const {
  Tensor z = x;
  for (const auto& b : blocks_) z = b.forward(z);
  return z;
}

ForwardTrace network_forward(const Network& net, const Tensor& x) {
  if (!net.empty() && x.size() != net.in_dim()) {
    throw ShapeError("network_forward: input dim " + std::to_string(x.size()) +
                     " does not match network input dim " + std::to_string(net.in_dim()));
  }
  ForwardTrace trace;
  trace.states.reserve(net.size() + 1);
  trace.states.push_back(x);
  for (const auto& b : net.blocks()) trace.states.push_back(b.forward(trace.states.back()));
  return trace;
}

Tensor network_backprop_accumulate(const Network& net, const ForwardTrace& trace,
                                   const Tensor& loss_grad, std::span<double> grad) {
  if (trace.states.size() != net.size() + 1) {
    throw ConsistencyError("network_backprop: trace has " + std::to_string(trace.states.size()) +
                           " states for a network of " + std::to_string(net.size()) + " blocks");
  }
  if (grad.size() != net.num_params()) {
    throw ShapeError("network_backprop: gradient buffer has wrong size");
  }
  for (std::size_t k = 0; k < net.size(); ++k) {
    const auto& b = net.blocks()[k];
    if (trace.states[k].size() != b.in_dim() || trace.states[k + 1].size() != b.out_dim()) {
      throw ConsistencyError("network_backprop: trace state " + std::to_string(k) +
                             " does not match block dimensions");
    }
  }
  if (loss_grad.size() != trace.output().size()) {
    throw ShapeError("network_backprop: loss gradient has dim " +
                     std::to_string(loss_grad.size()) + ", output dim is " +
                     std::to_string(trace.output().size()));
  }
  std::vector<double> p(loss_grad.data().begin(), loss_grad.data().end());
  std::size_t off = grad.size();
  for (std::size_t k = net.size(); k-- > 0;) {
    const auto& b = net.blocks()[k];
    off -= b.num_params();
    std::vector<double> p_in(b.in_dim());
    b.backward(trace.states[k].data(), p, p_in, grad.subspan(off, b.num_params()));
    p = std::move(p_in);
  }
  return Tensor::vector(std::move(p));
}

BackpropResult network_backprop(const Network& net, const ForwardTrace& trace,
                                const Tensor& loss_grad) {
  BackpropResult r{net.zero_grad(), {}};
  r.input_grad = network_backprop_accumulate(net, trace, loss_grad, r.param_grad.values);
  return r;
}

double one_sided_lipschitz_witness(const VectorField& f, std::size_t dim, std::size_t samples,
                                   double radius, std::uint64_t seed) {
  if (samples < 1) throw PreconditionError("one_sided_lipschitz_witness: samples must be >= 1");
  Rng rng(seed);
  auto sample_ball = [&] {
    std::vector<double> v = rng.normal_vector(dim);
    const double n = norm2(v);
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
    for (auto& x : v) x *= (n > 0.0 ? r / n : 0.0);
    return Tensor::vector(std::move(v));
  };
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples; ++s) {
    const Tensor z1 = sample_ball();
    const Tensor z2 = sample_ball();
    const Tensor f1 = f(z1);
    const Tensor f2 = f(z2);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double dz = z2[i] - z1[i];
      num += (f2[i] - f1[i]) * dz;
      den += dz * dz;
    }
    const double ratio = (den == 0.0 || num == 0.0) ? 0.0 : num / den;
    if (!std::isfinite(ratio)) throw EvaluationError("one_sided_lipschitz_witness: non-finite ratio");
    best = std::max(best, ratio);
  }
  return best;
}

}  // namespace spdl::blocks
