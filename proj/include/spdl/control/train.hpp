#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "spdl/blocks/network.hpp"
#include "spdl/control/dataset.hpp"
#include "spdl/control/loss.hpp"
#include "spdl/control/regularizer.hpp"
#include "spdl/optim/optimizer.hpp"

namespace spdl::control {

struct TrainConfig {
  LossKind loss = LossKind::squared;
  Regularizer reg;
  optim::OptimizerConfig opt;
  std::size_t steps = 0;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  bool record_wall_time = false;
  // When nonzero, the step size is halved after this many steps without an
  // improvement of the logged objective (loss + reg_value).
  std::size_t plateau_patience = 0;
};

struct TrainLogRow {
  std::size_t step;
  std::size_t epoch;
  double loss;       // minibatch mean data loss before the update
  double reg_value;  // regularizer value before the update
  double grad_norm;
  double wall_ms;    // 0 unless record_wall_time
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::vector<double> theta;
};

// Mean data loss over the dataset.
double dataset_loss(const blocks::Network& net, const Dataset& data, LossKind loss);

// Mean data loss plus regularizer value and their joint gradient over the
// given sample indices.
struct Objective {
  double data = 0.0;
  double reg = 0.0;
  std::vector<double> grad;
};
Objective objective(const blocks::Network& net, const Dataset& data, LossKind loss,
                    const Regularizer& reg, const std::vector<std::size_t>& indices);

// Minibatch first-order training. Batches are drawn without replacement
// from a per-epoch shuffle; a final partial batch is dropped. With the
// timestep_simplex regularizer the step sizes of euler/gradflow blocks are
// trained as well and projected onto {h >= 0, sum h = T} after every update.
// Throws DiagnosticsError (index = step) on a non-finite loss.
TrainResult train_reduced(blocks::Network& net, const Dataset& data, const TrainConfig& cfg);

// CSV: step,epoch,loss,reg_value,grad_norm,wall_ms.
void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& log);

}  // namespace spdl::control
