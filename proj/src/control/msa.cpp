#include "spdl/control/msa.hpp"

#include <cmath>
#include <string>

#include "spdl/control/train.hpp"
#include "spdl/numcore/error.hpp"

namespace spdl::control {

std::vector<double> hamiltonian_gradient(const blocks::Block& b, const std::vector<Tensor>& states,
                                         const std::vector<Tensor>& costates) {
  std::vector<double> g(b.num_params(), 0.0);
  std::vector<double> gin(b.in_dim());
  for (std::size_t n = 0; n < states.size(); ++n) {
    b.backward(states[n].data(), costates[n].data(), gin, g);
  }
  const double scale = 1.0 / (static_cast<double>(states.size()) * (b.is_ode() ? b.step() : 1.0));
  for (double& v : g) v *= scale;
  return g;
}

MsaResult msa_iterate(blocks::Network& net, const Dataset& data, const MsaConfig& cfg) {
  if (!data.is_labeled() || data.size() == 0) {
    throw PreconditionError("msa_iterate: need a non-empty labeled dataset");
  }
  MsaResult res;
  const std::size_t n = data.size(), kk = net.size();
  for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
    // states[k][n] and costates[k][n] = p_n^k
    std::vector<std::vector<Tensor>> states(kk + 1), costates(kk + 1);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto trace = blocks::network_forward(net, data.features[i]);
      const LossValue lv = loss_eval(cfg.loss, trace.output(), data.labels[i]);
      loss += lv.value;
      std::vector<double> p(lv.grad.data().begin(), lv.grad.data().end());
      for (double& v : p) v = -v;
      costates[kk].push_back(Tensor::vector(p));
      for (std::size_t k = kk; k-- > 0;) {
        const auto& b = net.blocks()[k];
        std::vector<double> p_in(b.in_dim()), scratch(b.num_params());
        b.backward(trace.states[k].data(), p, p_in, scratch);
        p = std::move(p_in);
        costates[k].push_back(Tensor::vector(p));
      }
      for (std::size_t k = 0; k <= kk; ++k) states[k].push_back(trace.states[k]);
    }
    res.loss.push_back(loss / static_cast<double>(n));

    for (std::size_t k = 0; k < kk; ++k) {
      auto& b = net.blocks()[k];
      for (std::size_t it = 0; it < cfg.inner_steps; ++it) {
        const auto g = hamiltonian_gradient(b, states[k], costates[k + 1]);
        auto th = b.params();
        for (std::size_t i = 0; i < th.size(); ++i) {
          th[i] += cfg.inner_lr * g[i];
          if (!std::isfinite(th[i])) {
            throw DiagnosticsError("msa_iterate: Hamiltonian ascent diverged at layer " +
                                   std::to_string(k), k);
          }
        }
      }
    }
  }
  if (cfg.sweeps > 0) res.loss.push_back(dataset_loss(net, data, cfg.loss));
  res.theta = net.params().values;
  return res;
}

}  // namespace spdl::control
