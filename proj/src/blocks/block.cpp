#include "spdl/blocks/block.hpp"

#include <algorithm>
#include <cmath>

#include "spdl/numcore/error.hpp"
#include "spdl/numcore/linalg.hpp"

namespace spdl::blocks {
namespace {

constexpr std::string_view kKindNames[] = {"dense",      "euler_residual", "gradient_flow",
                                           "verlet_hamiltonian", "linear_head", "softmax_head"};

// s = sigma(A x + b); out = A^T s. Scratch u receives the pre-activation.
void transposed_field(std::span<const double> a, std::span<const double> b, std::size_t rows,
                      std::size_t cols, Activation act, std::span<const double> x,
                      std::span<double> u, std::span<double> s, std::span<double> out) {
  matvec(a, rows, cols, x, u);
  for (std::size_t i = 0; i < rows; ++i) {
    u[i] += b[i];
    s[i] = activate(act, u[i]);
  }
  matvec_t(a, rows, cols, s, out);
}

// Adjoint of out = A^T sigma(A x + b) with incoming adjoint w (length cols).
// Accumulates into grad_x (length cols), grad_a, grad_b.
void transposed_field_backward(std::span<const double> a, std::span<const double> b,
                               std::size_t rows, std::size_t cols, Activation act,
                               std::span<const double> x, std::span<const double> w,
                               std::span<double> grad_x, std::span<double> grad_a,
                               std::span<double> grad_b) {
  std::vector<double> u(rows), s(rows), gs(rows);
  matvec(a, rows, cols, x, u);
  for (std::size_t i = 0; i < rows; ++i) {
    u[i] += b[i];
    s[i] = activate(act, u[i]);
  }
  // out_j = sum_i A_ij s_i
  matvec(a, rows, cols, w, gs);
  for (std::size_t i = 0; i < rows; ++i) {
    const double gu = activate_deriv(act, u[i]) * gs[i];
    grad_b[i] += gu;
    double* ga = grad_a.data() + i * cols;
    const double* ai = a.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      ga[j] += s[i] * w[j] + gu * x[j];
      grad_x[j] += ai[j] * gu;
    }
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw PreconditionError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(BlockKind k) { return kKindNames[static_cast<int>(k)]; }

BlockKind parse_block_kind(std::string_view name) {
  for (int i = 0; i < 6; ++i)
    if (kKindNames[i] == name) return static_cast<BlockKind>(i);
  throw PreconditionError("unknown block kind '" + std::string(name) + "'");
}

Block::Block(BlockKind kind, Activation act, double h, std::size_t in, std::size_t out,
             std::size_t width)
    : kind_(kind), act_(act), h_(h), in_(in), out_(out), width_(width) {
  std::size_t n = 0;
  switch (kind) {
    case BlockKind::dense:
    case BlockKind::linear_head:
    case BlockKind::softmax_head:
    case BlockKind::euler_residual: n = out * in + out; break;
    case BlockKind::gradient_flow: n = width * in + width; break;
    case BlockKind::verlet_hamiltonian: n = 2 * (width * (in / 2) + width); break;
  }
  params_.assign(n, 0.0);
}

Block Block::dense(std::size_t in, std::size_t out, Activation act) {
  return Block(BlockKind::dense, act, 0.0, in, out, out);
}

Block Block::euler(std::size_t dim, double h, Activation act) {
  return Block(BlockKind::euler_residual, act, h, dim, dim, dim);
}

Block Block::gradflow(std::size_t dim, std::size_t width, double h, Activation act) {
  return Block(BlockKind::gradient_flow, act, h, dim, dim, width);
}

Block Block::verlet(std::size_t dim, std::size_t width, double h, Activation act) {
  if (dim % 2 != 0) {
    throw ShapeError("verlet block: feature dimension must be even, got " + std::to_string(dim));
  }
  return Block(BlockKind::verlet_hamiltonian, act, h, dim, dim, width);
}

Block Block::linear_head(std::size_t in, std::size_t out) {
  return Block(BlockKind::linear_head, Activation::identity, 0.0, in, out, out);
}

Block Block::softmax_head(std::size_t in, std::size_t out) {
  return Block(BlockKind::softmax_head, Activation::identity, 0.0, in, out, out);
}

Block Block::make(BlockKind kind, Activation act, double h, std::size_t in_dim,
                  std::size_t out_dim, std::size_t width, std::vector<double> params) {
  Block b = [&] {
    switch (kind) {
      case BlockKind::dense: return dense(in_dim, out_dim, act);
      case BlockKind::euler_residual: return euler(in_dim, h, act);
      case BlockKind::gradient_flow: return gradflow(in_dim, width, h, act);
      case BlockKind::verlet_hamiltonian: return verlet(in_dim, width, h, act);
      case BlockKind::linear_head: return linear_head(in_dim, out_dim);
      case BlockKind::softmax_head: return softmax_head(in_dim, out_dim);
    }
    throw PreconditionError("block: invalid kind");
  }();
  if (b.out_dim() != out_dim) throw ShapeError("block: output dimension inconsistent with kind");
  if (params.size() != b.num_params()) {
    throw ShapeError("block " + std::string(to_string(kind)) + ": expected " +
                     std::to_string(b.num_params()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  b.params_ = std::move(params);
  return b;
}

bool Block::is_ode() const noexcept {
  return kind_ == BlockKind::euler_residual || kind_ == BlockKind::gradient_flow ||
         kind_ == BlockKind::verlet_hamiltonian;
}

std::vector<MatrixView> Block::weight_matrices() const {
  switch (kind_) {
    case BlockKind::dense:
    case BlockKind::linear_head:
    case BlockKind::softmax_head:
    case BlockKind::euler_residual: return {{0, out_, in_}};
    case BlockKind::gradient_flow: return {{0, width_, in_}};
    case BlockKind::verlet_hamiltonian: {
      const std::size_t d = in_ / 2;
      return {{0, width_, d}, {width_ * d + width_, width_, d}};
    }
  }
  return {};
}

void Block::init(Rng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  for (const auto& m : weight_matrices()) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols));
    for (std::size_t i = 0; i < m.rows * m.cols; ++i) params_[m.offset + i] = scale * rng.normal();
  }
}

void Block::forward(std::span<const double> x, std::span<double> y) const {
  if (x.size() != in_ || y.size() != out_) {
    throw ShapeError("block " + std::string(to_string(kind_)) + ": expected input dim " +
                     std::to_string(in_) + ", got " + std::to_string(x.size()));
  }
  const std::span<const double> p = params_;
  switch (kind_) {
    case BlockKind::dense:
    case BlockKind::linear_head: {
      matvec(p.first(out_ * in_), out_, in_, x, y);
      for (std::size_t i = 0; i < out_; ++i) y[i] = activate(act_, y[i] + p[out_ * in_ + i]);
      return;
    }
    case BlockKind::softmax_head: {
      matvec(p.first(out_ * in_), out_, in_, x, y);
      double mx = -INFINITY;
      for (std::size_t i = 0; i < out_; ++i) {
        y[i] += p[out_ * in_ + i];
        mx = std::max(mx, y[i]);
      }
      double z = 0.0;
      for (std::size_t i = 0; i < out_; ++i) z += (y[i] = std::exp(y[i] - mx));
      for (std::size_t i = 0; i < out_; ++i) y[i] /= z;
      return;
    }
    case BlockKind::euler_residual: {
      std::vector<double> u(out_);
      matvec(p.first(out_ * in_), out_, in_, x, u);
      for (std::size_t i = 0; i < out_; ++i)
        y[i] = x[i] + h_ * activate(act_, u[i] + p[out_ * in_ + i]);
      return;
    }
    case BlockKind::gradient_flow: {
      std::vector<double> u(width_), s(width_), f(in_);
      transposed_field(p.first(width_ * in_), p.subspan(width_ * in_, width_), width_, in_,
                       act_, x, u, s, f);
      for (std::size_t i = 0; i < in_; ++i) y[i] = x[i] - h_ * f[i];
      return;
    }
    case BlockKind::verlet_hamiltonian: {
      const std::size_t d = in_ / 2;
      const std::size_t blk = width_ * d + width_;
      std::vector<double> u(width_), s(width_), f(d);
      // z+ = z + h A1^T sigma(A1 p + b1)
      transposed_field(p.first(width_ * d), p.subspan(width_ * d, width_), width_, d, act_,
                       x.subspan(d, d), u, s, f);
      for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + h_ * f[i];
      // p+ = p - h A2^T sigma(A2 z+ + b2)
      transposed_field(p.subspan(blk, width_ * d), p.subspan(blk + width_ * d, width_), width_,
                       d, act_, y.first(d), u, s, f);
      for (std::size_t i = 0; i < d; ++i) y[d + i] = x[d + i] - h_ * f[i];
      return;
    }
  }
}

Tensor Block::forward(const Tensor& x) const {
  Tensor y({out_});
  forward(x.data(), y.data());
  return y;
}

void Block::backward(std::span<const double> x, std::span<const double> grad_out,
                     std::span<double> grad_in, std::span<double> grad_params) const {
  if (x.size() != in_ || grad_out.size() != out_ || grad_in.size() != in_ ||
      grad_params.size() != params_.size()) {
    throw ShapeError("block " + std::string(to_string(kind_)) + ": backward shape mismatch");
  }
  const std::span<const double> p = params_;
  switch (kind_) {
    case BlockKind::dense:
    case BlockKind::linear_head:
    case BlockKind::softmax_head:
    case BlockKind::euler_residual: {
      std::vector<double> u(out_), gu(out_);
      matvec(p.first(out_ * in_), out_, in_, x, u);
      for (std::size_t i = 0; i < out_; ++i) u[i] += p[out_ * in_ + i];
      if (kind_ == BlockKind::softmax_head) {
        double mx = -INFINITY;
        for (double v : u) mx = std::max(mx, v);
        double z = 0.0;
        for (auto& v : u) z += (v = std::exp(v - mx));
        double inner = 0.0;
        for (std::size_t i = 0; i < out_; ++i) {
          u[i] /= z;
          inner += u[i] * grad_out[i];
        }
        for (std::size_t i = 0; i < out_; ++i) gu[i] = u[i] * (grad_out[i] - inner);
      } else {
        const double scale = kind_ == BlockKind::euler_residual ? h_ : 1.0;
        for (std::size_t i = 0; i < out_; ++i)
          gu[i] = scale * activate_deriv(act_, u[i]) * grad_out[i];
      }
      for (std::size_t i = 0; i < out_; ++i) {
        double* ga = grad_params.data() + i * in_;
        for (std::size_t j = 0; j < in_; ++j) ga[j] += gu[i] * x[j];
        grad_params[out_ * in_ + i] += gu[i];
      }
      matvec_t(p.first(out_ * in_), out_, in_, gu, grad_in);
      if (kind_ == BlockKind::euler_residual)
        for (std::size_t j = 0; j < in_; ++j) grad_in[j] += grad_out[j];
      return;
    }
    case BlockKind::gradient_flow: {
      std::vector<double> w(in_);
      for (std::size_t j = 0; j < in_; ++j) {
        w[j] = -h_ * grad_out[j];
        grad_in[j] = grad_out[j];
      }
      transposed_field_backward(p.first(width_ * in_), p.subspan(width_ * in_, width_), width_,
                                in_, act_, x, w, grad_in, grad_params.first(width_ * in_),
                                grad_params.subspan(width_ * in_, width_));
      return;
    }
    case BlockKind::verlet_hamiltonian: {
      const std::size_t d = in_ / 2;
      const std::size_t blk = width_ * d + width_;
      // Recompute z+ from the first stage.
      std::vector<double> u(width_), s(width_), f(d), zplus(d);
      transposed_field(p.first(width_ * d), p.subspan(width_ * d, width_), width_, d, act_,
                       x.subspan(d, d), u, s, f);
      for (std::size_t i = 0; i < d; ++i) zplus[i] = x[i] + h_ * f[i];

      std::vector<double> gz(grad_out.begin(), grad_out.begin() + static_cast<std::ptrdiff_t>(d));
      std::vector<double> gp(grad_out.begin() + static_cast<std::ptrdiff_t>(d), grad_out.end());
      std::vector<double> w(d);
      // Second stage: p+ = p - h A2^T sigma(A2 z+ + b2).
      for (std::size_t i = 0; i < d; ++i) w[i] = -h_ * gp[i];
      transposed_field_backward(p.subspan(blk, width_ * d), p.subspan(blk + width_ * d, width_),
                                width_, d, act_, zplus, w, gz,
                                grad_params.subspan(blk, width_ * d),
                                grad_params.subspan(blk + width_ * d, width_));
      // First stage: z+ = z + h A1^T sigma(A1 p + b1).
      for (std::size_t i = 0; i < d; ++i) w[i] = h_ * gz[i];
      transposed_field_backward(p.first(width_ * d), p.subspan(width_ * d, width_), width_, d,
                                act_, x.subspan(d, d), w, gp, grad_params.first(width_ * d),
                                grad_params.subspan(width_ * d, width_));
      std::copy(gz.begin(), gz.end(), grad_in.begin());
      std::copy(gp.begin(), gp.end(), grad_in.begin() + static_cast<std::ptrdiff_t>(d));
      return;
    }
  }
}

Tensor block_vector_field(const Block& b, const Tensor& z) {
  if (z.size() != b.in_dim()) throw ShapeError("block_vector_field: dimension mismatch");
  const std::span<const double> p = b.params();
  const std::size_t n = b.in_dim();
  const std::size_t w = b.width();
  Tensor f({n});
  switch (b.kind()) {
    case BlockKind::euler_residual: {
      matvec(p.first(n * n), n, n, z.data(), f.data());
      for (std::size_t i = 0; i < n; ++i) f[i] = activate(b.activation(), f[i] + p[n * n + i]);
      return f;
    }
    case BlockKind::gradient_flow: {
      std::vector<double> u(w), s(w);
      transposed_field(p.first(w * n), p.subspan(w * n, w), w, n, b.activation(), z.data(), u,
                       s, f.data());
      for (auto& v : f.data()) v = -v;
      return f;
    }
    case BlockKind::verlet_hamiltonian: {
      const std::size_t d = n / 2;
      const std::size_t blk = w * d + w;
      std::vector<double> u(w), s(w);
      transposed_field(p.first(w * d), p.subspan(w * d, w), w, d, b.activation(),
                       z.data().subspan(d, d), u, s, f.data().first(d));
      transposed_field(p.subspan(blk, w * d), p.subspan(blk + w * d, w), w, d, b.activation(),
                       z.data().first(d), u, s, f.data().subspan(d, d));
      for (std::size_t i = d; i < n; ++i) f[i] = -f[i];
      return f;
    }
    default:
      throw PreconditionError("block_vector_field: block kind " + std::string(to_string(b.kind())) +
                              " is not an ODE block");
  }
}

}  // namespace spdl::blocks
