#include "spdl/equivariant/train.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/optim/optimizer.hpp"

namespace spdl::equivariant {

double equivariance_residual(const Denoiser& net, const Tensor& x) {
  const Tensor y = net.apply(x);
  double worst = 0.0;
  for (int r = 1; r < 4; ++r) {
    const Tensor a = net.apply(rot90_image(x, r));
    const Tensor b = rot90_image(y, r);
    worst = std::max(worst, max_abs_diff(a.data(), b.data()));
  }
  return worst;
}

double mean_denoise_objective(const Denoiser& net, const std::vector<ImagePair>& data, double lambda,
                              double eps) {
  if (data.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : data) s += denoise_objective(net.apply(p.noisy), p.clean, lambda, eps);
  return s / static_cast<double>(data.size());
}

std::vector<DenoiseLogRow> train_denoiser(Denoiser& net, const std::vector<ImagePair>& data,
                                          const DenoiseTrainConfig& cfg) {
  std::vector<DenoiseLogRow> log;
  if (cfg.steps == 0) return log;
  if (cfg.batch < 1 || cfg.batch > data.size()) {
    throw PreconditionError("train_denoiser: batch must be in [1, N]");
  }
  optim::OptimizerState state(optim::OptimizerConfig::adam(cfg.lr), net.num_params());
  optim::PlateauSchedule plateau(cfg.patience);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  const double inv = 1.0 / static_cast<double>(cfg.batch);
  for (std::size_t it = 0; it < cfg.steps; ++it) {
    if (order.empty() || cursor + cfg.batch > order.size()) {
      order = permutation(data.size(), rng);
      cursor = 0;
    }
    std::vector<double> grad(net.num_params(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const ImagePair& p = data[order[cursor + b]];
      const Tensor out = net.apply(p.noisy);
      Tensor g(out.shape());
      loss += denoise_objective_grad(out, p.clean, cfg.lambda, cfg.eps, g);
      for (double& v : g.data()) v *= inv;
      net.backward(p.noisy, g, grad);
    }
    loss *= inv;
    if (!std::isfinite(loss)) {
      throw DiagnosticsError("train_denoiser: non-finite loss at iteration " + std::to_string(it), it);
    }
    const double resid = equivariance_residual(net, data[order[cursor]].noisy);
    cursor += cfg.batch;
    log.push_back({it, loss, resid});
    plateau.observe(loss, state.config);
    optim::adam_step(state, net.params(), grad);
  }
  return log;
}

void write_denoise_log(std::ostream& os, const std::vector<DenoiseLogRow>& log) {
  CsvWriter w(os, {"iter", "loss", "equivariance_residual"});
  for (const auto& r : log) w.row({static_cast<double>(r.iter), r.loss, r.equivariance_residual});
}

}  // namespace spdl::equivariant
