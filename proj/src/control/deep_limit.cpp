#include "spdl/control/deep_limit.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <ostream>

#include "spdl/control/train.hpp"
#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"

namespace spdl::control {

using blocks::Block;
using blocks::Network;

Network deep_limit_network(std::size_t dim, std::size_t out, std::size_t k, double horizon,
                           blocks::Activation act, Rng& rng) {
  if (k < 1) throw PreconditionError("deep_limit_network: K must be >= 1");
  const double h = horizon / static_cast<double>(k);
  Block layer = Block::euler(dim, h, act);
  layer.init(rng);
  Network net;
  for (std::size_t i = 0; i < k; ++i) net.add(layer);
  Block head = Block::linear_head(dim, out);
  head.init(rng);
  net.add(head);
  return net;
}

std::vector<DeepLimitRow> deep_limit_experiment(const Dataset& data, const DeepLimitConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw PreconditionError("deep_limit_experiment: lambda must be > 0");
  if (cfg.ks.empty()) throw PreconditionError("deep_limit_experiment: empty K list");
  for (std::size_t i = 0; i + 1 < cfg.ks.size(); ++i) {
    if (cfg.ks[i] >= cfg.ks[i + 1]) throw PreconditionError("deep_limit_experiment: K list must increase");
  }
  if (cfg.restarts < 1) throw PreconditionError("deep_limit_experiment: restarts must be >= 1");
  if (!data.is_labeled() || data.size() == 0) {
    throw PreconditionError("deep_limit_experiment: need a non-empty labeled dataset");
  }
  const Regularizer reg{RegKind::h1_discrete, cfg.lambda, cfg.horizon};
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<DeepLimitRow> rows;
  for (std::size_t k : cfg.ks) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
      Rng rng(cfg.seed + 1000003 * r);
      Network net = deep_limit_network(data.feature_dim(), data.labels.front().size(), k, cfg.horizon,
                                       cfg.act, rng);
      TrainConfig tc;
      tc.loss = cfg.loss;
      tc.reg = reg;
      tc.opt = cfg.opt;
      tc.steps = cfg.steps;
      tc.batch = cfg.batch == 0 ? data.size() : cfg.batch;
      tc.seed = cfg.seed + r;
      tc.plateau_patience = cfg.plateau_patience;
      train_reduced(net, data, tc);
      const Objective o = objective(net, data, cfg.loss, reg, all);
      best = std::min(best, o.data + o.reg);
    }
    rows.push_back({k, best, cfg.restarts});
  }
  return rows;
}

void write_deep_limit(std::ostream& os, const std::vector<DeepLimitRow>& rows) {
  CsvWriter w(os, {"K", "best_loss", "restarts"});
  for (const auto& r : rows) {
    w.row({static_cast<double>(r.k), r.best_loss, static_cast<double>(r.restarts)});
  }
}

}  // namespace spdl::control
