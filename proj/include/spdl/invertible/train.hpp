#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "spdl/blocks/activation.hpp"
#include "spdl/invertible/flow_model.hpp"

namespace spdl::invertible {

enum class FlowArch { coupling, iresnet };

FlowArch parse_flow_arch(std::string_view name);
std::string_view to_string(FlowArch a);

// `layers` stages, each an invertible linear map followed by an affine
// coupling (alternating parity) or an i-ResNet block.
FlowModel make_flow(std::size_t dim, std::size_t layers, std::size_t hidden, std::size_t depth,
                    FlowArch arch, blocks::Activation act, Rng& rng);

struct FlowTrainConfig {
  double lr = 1e-3;  // Adam step size
  std::size_t steps = 0;
  std::size_t batch = 0;  // 0 means full batch
  std::uint64_t seed = 0;
};

struct FlowLogRow {
  std::size_t step;
  std::size_t epoch;
  double nll;  // minibatch mean NLL before the update
  double grad_norm;
};

// Adam on the mean negative log-likelihood of the rows of `data` (N x M),
// calling after_step() on the model after every update.
std::vector<FlowLogRow> train_flow(FlowModel& model, const Tensor& data, const FlowTrainConfig& cfg);

// CSV: step,epoch,loss,reg_value,grad_norm,wall_ms (reg_value and wall_ms 0).
void write_flow_log(std::ostream& os, const std::vector<FlowLogRow>& log);

}  // namespace spdl::invertible
