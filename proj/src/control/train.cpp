#include "spdl/control/train.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>

#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/numcore/rng.hpp"

namespace spdl::control {

using blocks::BlockKind;
using blocks::Network;

namespace {

void check_data(const Network& net, const Dataset& data) {
  if (!data.is_labeled()) throw PreconditionError("training needs a labeled dataset");
  if (data.labels.size() != data.size()) throw ShapeError("dataset has unequal feature/label counts");
  if (data.size() > 0 && !net.empty() && data.feature_dim() != net.in_dim()) {
    throw ShapeError("dataset dimension " + std::to_string(data.feature_dim()) +
                     " does not match network input " + std::to_string(net.in_dim()));
  }
}

bool trains_step(const blocks::Block& b) {
  return b.kind() == BlockKind::euler_residual || b.kind() == BlockKind::gradient_flow;
}

// Mean loss and parameter gradient over `indices`; when `hgrad` is non-null
// it also receives dE/dh for every block (zero for blocks without a step).
double data_term(const Network& net, const Dataset& data, LossKind loss,
                 const std::vector<std::size_t>& indices, std::vector<double>& grad,
                 std::vector<double>* hgrad) {
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (std::size_t idx : indices) {
    const auto trace = blocks::network_forward(net, data.features[idx]);
    const LossValue lv = loss_eval(loss, trace.output(), data.labels[idx]);
    total += lv.value;
    Tensor g = lv.grad;
    for (double& v : g.data()) v *= inv;
    if (!hgrad) {
      blocks::network_backprop_accumulate(net, trace, g, grad);
      continue;
    }
    std::vector<double> p(g.data().begin(), g.data().end());
    std::size_t off = grad.size();
    for (std::size_t k = net.size(); k-- > 0;) {
      const auto& b = net.blocks()[k];
      off -= b.num_params();
      if (trains_step(b)) {
        (*hgrad)[k] += dot(p, blocks::block_vector_field(b, trace.states[k]).data());
      }
      std::vector<double> p_in(b.in_dim());
      b.backward(trace.states[k].data(), p, p_in, std::span<double>(grad).subspan(off, b.num_params()));
      p = std::move(p_in);
    }
  }
  return total * inv;
}

}  // namespace

double dataset_loss(const Network& net, const Dataset& data, LossKind loss) {
  check_data(net, data);
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += loss_eval(loss, net.evaluate(data.features[i]), data.labels[i]).value;
  }
  return total / static_cast<double>(data.size());
}

Objective objective(const Network& net, const Dataset& data, LossKind loss, const Regularizer& reg,
                    const std::vector<std::size_t>& indices) {
  check_data(net, data);
  if (indices.empty()) throw PreconditionError("objective: empty index set");
  Objective o;
  o.grad.assign(net.num_params(), 0.0);
  o.data = data_term(net, data, loss, indices, o.grad, nullptr);
  const Penalty p = network_penalty(net, reg);
  o.reg = p.value;
  for (std::size_t i = 0; i < o.grad.size(); ++i) o.grad[i] += p.grad[i];
  return o;
}

TrainResult train_reduced(Network& net, const Dataset& data, const TrainConfig& cfg) {
  check_data(net, data);
  TrainResult res;
  res.theta = net.params().values;
  if (cfg.steps == 0) return res;
  if (cfg.batch < 1 || cfg.batch > data.size()) {
    throw PreconditionError("train_reduced: batch must be in [1, N]");
  }
  const bool timestep = cfg.reg.kind == RegKind::timestep_simplex;
  std::vector<std::size_t> stepped;
  if (timestep) {
    for (std::size_t k = 0; k < net.size(); ++k) {
      const auto& b = net.blocks()[k];
      if (trains_step(b)) {
        stepped.push_back(k);
      } else if (b.is_ode()) {
        throw PreconditionError("train_reduced: timestep_simplex supports euler and gradflow blocks only");
      }
    }
    if (stepped.empty()) throw PreconditionError("train_reduced: no step sizes to train");
  }
  const std::size_t np = net.num_params();
  std::vector<double> theta = res.theta;
  for (std::size_t k : stepped) theta.push_back(net.blocks()[k].step());
  if (timestep) {
    const auto h = prox_timestep(std::span<const double>(theta).subspan(np), cfg.reg.horizon);
    std::copy(h.begin(), h.end(), theta.begin() + static_cast<std::ptrdiff_t>(np));
  }
  auto apply = [&] {
    net.set_params(std::span<const double>(theta).first(np));
    for (std::size_t j = 0; j < stepped.size(); ++j) net.blocks()[stepped[j]].set_step(theta[np + j]);
  };
  apply();

  optim::OptimizerState state(cfg.opt, theta.size());
  optim::PlateauSchedule plateau(cfg.plateau_patience);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    if (order.empty() || cursor + cfg.batch > order.size()) {
      if (!order.empty()) ++epoch;
      order = permutation(data.size(), rng);
      cursor = 0;
    }
    const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                         order.begin() + static_cast<std::ptrdiff_t>(cursor + cfg.batch));
    cursor += cfg.batch;

    // Nesterov evaluates the gradient at the lookahead point.
    const std::vector<double> at = optim::lookahead(state, theta);
    if (at != theta) {
      net.set_params(std::span<const double>(at).first(np));
      for (std::size_t j = 0; j < stepped.size(); ++j) net.blocks()[stepped[j]].set_step(at[np + j]);
    }
    std::vector<double> grad(theta.size(), 0.0);
    std::vector<double> hgrad(net.size(), 0.0);
    std::vector<double> pgrad(np, 0.0);
    const double loss = data_term(net, data, cfg.loss, batch, pgrad, timestep ? &hgrad : nullptr);
    const Penalty pen = network_penalty(net, cfg.reg);
    if (!std::isfinite(loss) || !std::isfinite(pen.value)) {
      throw DiagnosticsError("train_reduced: non-finite loss at step " + std::to_string(s), s);
    }
    for (std::size_t i = 0; i < np; ++i) grad[i] = pgrad[i] + pen.grad[i];
    for (std::size_t j = 0; j < stepped.size(); ++j) grad[np + j] = hgrad[stepped[j]];

    if (cfg.plateau_patience > 0) plateau.observe(loss + pen.value, state.config);
    optim::step(state, theta, grad);
    if (timestep) {
      const auto h = prox_timestep(std::span<const double>(theta).subspan(np), cfg.reg.horizon);
      std::copy(h.begin(), h.end(), theta.begin() + static_cast<std::ptrdiff_t>(np));
    }
    apply();
    double wall = 0.0;
    if (cfg.record_wall_time) {
      wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    res.log.push_back({s, epoch, loss, pen.value, norm2(grad), wall});
  }
  res.theta = net.params().values;
  return res;
}

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& log) {
  CsvWriter w(os, {"step", "epoch", "loss", "reg_value", "grad_norm", "wall_ms"});
  for (const auto& r : log) {
    w.row({static_cast<double>(r.step), static_cast<double>(r.epoch), r.loss, r.reg_value,
           r.grad_norm, r.wall_ms});
  }
}

}  // namespace spdl::control
