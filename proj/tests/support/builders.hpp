#pragma once

#include <cmath>
#include <vector>

#include "spdl/blocks/network.hpp"
#include "spdl/numcore/linalg.hpp"
#include "spdl/numcore/rng.hpp"

namespace testsupport {

using spdl::Rng;
using spdl::Tensor;
using spdl::blocks::Activation;
using spdl::blocks::Block;
using spdl::blocks::Network;

// Random network of K blocks mixing dense, euler, gradflow and verlet kinds
// with feature dimensions <= max_dim (even, so verlet blocks always fit).
inline Network random_mixed_network(Rng& rng, std::size_t max_dim, std::size_t blocks,
                                    Activation act = Activation::tanh) {
  const std::size_t dim = 2 * (1 + rng.below(max_dim / 2));
  Network net;
  std::size_t cur = dim;
  for (std::size_t k = 0; k < blocks; ++k) {
    switch (rng.below(4)) {
      case 0: {
        const std::size_t out = 2 * (1 + rng.below(max_dim / 2));
        net.add(Block::dense(cur, out, act));
        cur = out;
        break;
      }
      case 1: net.add(Block::euler(cur, rng.uniform(0.1, 0.5), act)); break;
      case 2: net.add(Block::gradflow(cur, 1 + rng.below(max_dim), rng.uniform(0.1, 0.5), act)); break;
      default: net.add(Block::verlet(cur, 1 + rng.below(max_dim), rng.uniform(0.1, 0.5), act)); break;
    }
  }
  net.init(rng);
  // Non-zero biases so every code path is exercised.
  auto p = net.params();
  for (auto& v : p.values) v += 0.1 * rng.normal();
  net.set_params(p.values);
  return net;
}

// Central-difference gradient of theta -> c . net(x; theta).
inline std::vector<double> fd_param_grad(Network net, const Tensor& x, const Tensor& c,
                                         double eps = 1e-5) {
  const auto theta = net.params().values;
  auto f = [&](const Tensor& t) {
    net.set_params(t.data());
    return spdl::dot(net.evaluate(x).data(), c.data());
  };
  auto g = spdl::finite_diff_grad(f, Tensor::vector(theta), eps);
  return g.values();
}

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

}  // namespace testsupport
