#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "spdl/blocks/activation.hpp"
#include "spdl/numcore/rng.hpp"
#include "spdl/numcore/tensor.hpp"

namespace spdl::blocks {

enum class BlockKind : std::uint8_t {
  dense = 0,               // sigma(A x + b)
  euler_residual = 1,      // z + h sigma(A z + b)
  gradient_flow = 2,       // z - h A^T sigma(A z + b)
  verlet_hamiltonian = 3,  // symplectic Euler step on (z, p)
  linear_head = 4,         // A x + b
  softmax_head = 5,        // softmax(A x + b)
};

std::string_view to_string(BlockKind k);
BlockKind parse_block_kind(std::string_view name);

// Location of one weight matrix inside a block's parameter vector.
struct MatrixView {
  std::size_t offset;
  std::size_t rows;
  std::size_t cols;
};

// One parametric layer with its forward map and vector-Jacobian products.
//
// Parameter layout (row-major, concatenated):
//   dense, linear_head, softmax_head, euler_residual: A (out x in), b (out)
//   gradient_flow:       A (width x dim), b (width)
//   verlet_hamiltonian:  A1 (width x d), b1, A2 (width x d), b2   with d = dim/2
// For verlet blocks the first half of the state is z, the second half p.
class Block {
 public:
  static Block dense(std::size_t in, std::size_t out, Activation act);
  static Block euler(std::size_t dim, double h, Activation act);
  static Block gradflow(std::size_t dim, std::size_t width, double h, Activation act);
  static Block verlet(std::size_t dim, std::size_t width, double h, Activation act);
  static Block linear_head(std::size_t in, std::size_t out);
  static Block softmax_head(std::size_t in, std::size_t out);

  // Builds a block of the given kind with explicit metadata and parameters.
  // Validates the parameter count; used by deserialization.
  static Block make(BlockKind kind, Activation act, double h, std::size_t in_dim,
                    std::size_t out_dim, std::size_t width, std::vector<double> params);

  BlockKind kind() const noexcept { return kind_; }
  Activation activation() const noexcept { return act_; }
  double step() const noexcept { return h_; }
  void set_step(double h) { h_ = h; }
  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }
  std::size_t width() const noexcept { return width_; }
  bool is_ode() const noexcept;

  std::size_t num_params() const noexcept { return params_.size(); }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  // Weight matrices (not biases) of this block.
  std::vector<MatrixView> weight_matrices() const;

  // Gaussian entries scaled by 1/sqrt(fan-in) for weights; zero biases.
  void init(Rng& rng);

  void forward(std::span<const double> x, std::span<double> y) const;
  Tensor forward(const Tensor& x) const;

  // Given x and dL/dy, writes dL/dx into grad_in and accumulates dL/dtheta
  // into grad_params (which must have num_params() entries).
  void backward(std::span<const double> x, std::span<const double> grad_out,
                std::span<double> grad_in, std::span<double> grad_params) const;

  friend bool operator==(const Block&, const Block&) = default;

 private:
  Block(BlockKind kind, Activation act, double h, std::size_t in, std::size_t out,
        std::size_t width);

  BlockKind kind_;
  Activation act_;
  double h_;
  std::size_t in_;
  std::size_t out_;
  std::size_t width_;
  std::vector<double> params_;
};

// The vector field of an ODE block (gradient_flow or euler_residual)
// evaluated at z with the block's parameters, i.e. (forward(z) - z) / h.
Tensor block_vector_field(const Block& b, const Tensor& z);

}  // namespace spdl::blocks
