#include "spdl/invertible/train.hpp"

#include <ostream>
#include <string>

#include "spdl/invertible/coupling.hpp"
#include "spdl/invertible/inv_linear.hpp"
#include "spdl/invertible/iresnet.hpp"
#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/optim/optimizer.hpp"

namespace spdl::invertible {

FlowArch parse_flow_arch(std::string_view name) {
  if (name == "coupling") return FlowArch::coupling;
  if (name == "iresnet") return FlowArch::iresnet;
  throw PreconditionError("unknown flow architecture '" + std::string(name) + "'");
}

std::string_view to_string(FlowArch a) { return a == FlowArch::coupling ? "coupling" : "iresnet"; }

FlowModel make_flow(std::size_t dim, std::size_t layers, std::size_t hidden, std::size_t depth,
                    FlowArch arch, blocks::Activation act, Rng& rng) {
  if (dim < 2) throw PreconditionError("make_flow: dim must be >= 2");
  FlowModel m;
  for (std::size_t k = 0; k < layers; ++k) {
    m.add(InvLinear::random(dim, rng));
    if (arch == FlowArch::coupling) {
      m.add(CouplingLayer::alternating(dim, static_cast<unsigned>(k % 2), CouplingLaw::affine, hidden,
                                       depth, act, rng));
    } else {
      m.add(IResBlock::make(dim, hidden, depth, act, rng));
    }
  }
  return m;
}

std::vector<FlowLogRow> train_flow(FlowModel& model, const Tensor& data, const FlowTrainConfig& cfg) {
  std::vector<FlowLogRow> log;
  if (cfg.steps == 0) return log;
  if (data.rank() != 2 || data.cols() != model.dim()) {
    throw ShapeError("train_flow: data must be N x " + std::to_string(model.dim()));
  }
  const std::size_t n = data.rows(), m = data.cols();
  const std::size_t batch = cfg.batch == 0 ? n : cfg.batch;
  if (batch < 1 || batch > n) throw PreconditionError("train_flow: batch must be in [1, N]");
  optim::OptimizerState state(optim::OptimizerConfig::adam(cfg.lr), model.num_params());
  Rng rng(cfg.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  std::vector<double> theta = model.params();
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    if (order.empty() || cursor + batch > order.size()) {
      if (!order.empty()) ++epoch;
      order = permutation(n, rng);
      cursor = 0;
    }
    Tensor mb({batch, m});
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < m; ++j) mb(i, j) = data(order[cursor + i], j);
    cursor += batch;
    const NllResult r = flow_nll(model, mb, true);
    log.push_back({s, epoch, r.nll, norm2(r.grad)});
    optim::adam_step(state, theta, r.grad);
    model.set_params(theta);
    model.after_step();
    theta = model.params();
  }
  return log;
}

void write_flow_log(std::ostream& os, const std::vector<FlowLogRow>& log) {
  CsvWriter w(os, {"step", "epoch", "loss", "reg_value", "grad_norm", "wall_ms"});
  for (const auto& r : log) {
    w.row({static_cast<double>(r.step), static_cast<double>(r.epoch), r.nll, 0.0, r.grad_norm, 0.0});
  }
}

}  // namespace spdl::invertible
