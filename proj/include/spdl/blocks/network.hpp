#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spdl/blocks/block.hpp"
#include "spdl/numcore/rng.hpp"
#include "spdl/numcore/tensor.hpp"

namespace spdl::blocks {

// Flattened parameters of a sequence of blocks. offsets[k] is where block k
// starts; offsets.back() == values.size().
struct ParamVector {
  std::vector<double> values;
  std::vector<std::size_t> offsets;

  std::span<double> block(std::size_t k) {
    return std::span<double>(values).subspan(offsets[k], offsets[k + 1] - offsets[k]);
  }
  std::span<const double> block(std::size_t k) const {
    return std::span<const double>(values).subspan(offsets[k], offsets[k + 1] - offsets[k]);
  }
  std::size_t size() const noexcept { return values.size(); }
};

// States z^0 ... z^K of one forward pass.
struct ForwardTrace {
  std::vector<Tensor> states;
  const Tensor& output() const { return states.back(); }
};

struct BackpropResult {
  ParamVector param_grad;
  Tensor input_grad;  // p^0
};

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Block> blocks);

  // Appends a block; its input dimension must match the current output.
  Network& add(Block b);

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::vector<Block>& blocks() noexcept { return blocks_; }
  std::size_t size() const noexcept { return blocks_.size(); }
  bool empty() const noexcept { return blocks_.empty(); }
  // Input dimension; 0 for an empty network (which accepts any input).
  std::size_t in_dim() const noexcept;
  std::size_t out_dim() const noexcept;

  std::size_t num_params() const noexcept;
  std::vector<std::size_t> offsets() const;
  ParamVector params() const;
  void set_params(std::span<const double> flat);
  ParamVector zero_grad() const;

  void init(Rng& rng);
  Tensor evaluate(const Tensor& x) const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<Block> blocks_;
};

ForwardTrace network_forward(const Network& net, const Tensor& x);

// Discrete adjoint recursion: p^K = loss_grad, p^k = (d f^k / d z)^T p^{k+1},
// with parameter gradient (d f^k / d theta^k)^T p^{k+1} for every block.
BackpropResult network_backprop(const Network& net, const ForwardTrace& trace,
                                const Tensor& loss_grad);

// Same recursion, accumulating the parameter gradient into `grad` (sized
// num_params()) and returning the input gradient.
Tensor network_backprop_accumulate(const Network& net, const ForwardTrace& trace,
                                   const Tensor& loss_grad, std::span<double> grad);

using VectorField = std::function<Tensor(const Tensor&)>;

// max over random pairs z1, z2 in the ball of given radius of
// <f(z2) - f(z1), z2 - z1> / |z2 - z1|^2. Pairs with identical outputs and
// identical inputs contribute 0.
double one_sided_lipschitz_witness(const VectorField& f, std::size_t dim, std::size_t samples,
                                   double radius, std::uint64_t seed);

}  // namespace spdl::blocks
