#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "spdl/equivariant/denoise.hpp"

namespace spdl::equivariant {

struct DenoiseTrainConfig {
  double lambda = 0.1;
  double eps = 0.01;
  double lr = 1e-3;  // Adam step size
  std::size_t steps = 0;
  std::size_t batch = 4;
  std::size_t patience = 100;  // halve lr after this many steps without improvement
  std::uint64_t seed = 0;
};

struct DenoiseLogRow {
  std::size_t iter;
  double loss;                   // minibatch mean objective before the update
  double equivariance_residual;  // on the first image of the minibatch
};

// max over r in {1, 2, 3} of |net(rot90(x, r)) - rot90(net(x), r)|_inf.
double equivariance_residual(const Denoiser& net, const Tensor& x);

// Mean denoise objective of net(noisy) against clean.
double mean_denoise_objective(const Denoiser& net, const std::vector<ImagePair>& data, double lambda,
                              double eps);

// Adam on the mean objective over minibatches drawn from per-epoch shuffles.
// Throws DiagnosticsError (index = iteration) on a non-finite loss.
std::vector<DenoiseLogRow> train_denoiser(Denoiser& net, const std::vector<ImagePair>& data,
                                          const DenoiseTrainConfig& cfg);

// CSV: iter,loss,equivariance_residual.
void write_denoise_log(std::ostream& os, const std::vector<DenoiseLogRow>& log);

}  // namespace spdl::equivariant
