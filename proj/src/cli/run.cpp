#include "spdl/cli/run.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "spdl/blocks/network.hpp"
#include "spdl/control/dataset.hpp"
#include "spdl/control/deep_limit.hpp"
#include "spdl/control/msa.hpp"
#include "spdl/control/train.hpp"
#include "spdl/equivariant/train.hpp"
#include "spdl/invertible/train.hpp"
#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"
#include "spdl/optim/benchmark.hpp"

namespace spdl::cli {

namespace fs = std::filesystem;
using blocks::Block;
using blocks::Network;

namespace {

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  // Writes through a string buffer so files are only created once complete.
  template <class F>
  void write(const std::string& name, F&& body) {
    std::ostringstream ss;
    body(ss);
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << ss.str();
    files_.push_back(dir_ / name);
  }
  const fs::path& dir() const { return dir_; }
  std::vector<fs::path> files() const { return files_; }
  void add(fs::path p) { files_.push_back(std::move(p)); }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

optim::OptimizerConfig optimizer(const RunConfig& c) {
  optim::OptimizerConfig o;
  o.method = optim::parse_method(c.get_string("optimizer"));
  o.lr = c.get_real("lr");
  o.beta1 = c.get_real("beta1");
  o.beta2 = c.get_real("beta2");
  o.eps = c.get_real("eps");
  o.gamma = c.get_real("gamma");
  o.mass = c.get_real("mass");
  o.momentum = c.get_real("momentum");
  return o;
}

control::Dataset dataset(const RunConfig& c) {
  return control::make_dataset(c.get_string("dataset"), c.get_uint("n"), c.get_real("noise"),
                               c.get_uint("seed"));
}

Network ode_network(const RunConfig& c, std::size_t dim, Rng& rng) {
  const auto act = blocks::parse_activation(c.get_string("model.activation"));
  const std::string kind = c.get_string("model.block");
  const double h = c.get_real("model.h");
  const std::size_t width = c.get_uint("model.width") ? c.get_uint("model.width") : dim;
  Network net;
  for (std::uint64_t k = 0; k < c.get_uint("model.layers"); ++k) {
    Block b = kind == "euler"      ? Block::euler(dim, h, act)
              : kind == "gradflow" ? Block::gradflow(dim, width, h, act)
                                   : Block::verlet(dim, width, h, act);
    b.init(rng);
    net.add(b);
  }
  Block head = Block::linear_head(dim, 1);
  head.init(rng);
  net.add(head);
  return net;
}

control::TrainConfig train_config(const RunConfig& c) {
  control::TrainConfig t;
  t.reg = {control::parse_regularizer(c.get_string("reg")), c.get_real("reg.lambda"), c.get_real("reg.horizon")};
  t.opt = optimizer(c);
  t.steps = c.get_uint("steps");
  t.batch = c.get_uint("batch");
  t.seed = c.get_uint("seed");
  t.record_wall_time = c.get_bool("record_wall_time");
  t.plateau_patience = c.get_uint("plateau_patience");
  return t;
}

struct Box {
  double xlo, xhi, ylo, yhi;
};

Box bounds(const control::Dataset& d, double pad) {
  Box b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
        std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& x : d.features) {
    b.xlo = std::min(b.xlo, x[0]);
    b.xhi = std::max(b.xhi, x[0]);
    b.ylo = std::min(b.ylo, x[1]);
    b.yhi = std::max(b.yhi, x[1]);
  }
  if (d.size() == 0) b = {-1.0, 1.0, -1.0, 1.0};
  return {b.xlo - pad, b.xhi + pad, b.ylo - pad, b.yhi + pad};
}

double grid_coord(double lo, double hi, std::size_t i, std::size_t n) {
  return n < 2 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

void metrics(Outputs& out, const std::vector<std::pair<std::string, double>>& m) {
  out.write("metrics.csv", [&](std::ostream& os) {
    os << "metric,value\n";
    for (const auto& [k, v] : m) os << k << "," << format_real(v) << "\n";
  });
}

void run_classify(const RunConfig& c, Outputs& out, std::ostream& log) {
  const control::Dataset d = dataset(c);
  if (!d.is_labeled()) throw PreconditionError("classify needs a labeled dataset");
  Rng rng(c.get_uint("seed"));
  Network net = ode_network(c, d.feature_dim(), rng);
  const double before = control::dataset_loss(net, d, control::LossKind::squared);
  const auto res = control::train_reduced(net, d, train_config(c));
  const double after = control::dataset_loss(net, d, control::LossKind::squared);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    correct += (net.evaluate(d.features[i])[0] >= 0.0) == (d.labels[i][0] > 0.0);
  }
  log << "classify: loss " << before << " -> " << after << "\n";
  out.write("train_log.csv", [&](std::ostream& os) { control::write_train_log(os, res.log); });
  if (d.feature_dim() == 2) {
    const Box b = bounds(d, 0.5);
    const std::size_t g = c.get_uint("grid");
    out.write("decision_grid.csv", [&](std::ostream& os) {
      CsvWriter w(os, {"x", "y", "prediction"});
      for (std::size_t j = 0; j < g; ++j)
        for (std::size_t i = 0; i < g; ++i) {
          const double x = grid_coord(b.xlo, b.xhi, i, g), y = grid_coord(b.ylo, b.yhi, j, g);
          w.row({x, y, net.evaluate(Tensor::vector({x, y}))[0]});
        }
    });
  }
  out.write("states.csv", [&](std::ostream& os) {
    std::vector<std::string> header{"sample", "layer", "label"};
    for (std::size_t j = 0; j < d.feature_dim(); ++j) header.push_back("z_" + std::to_string(j));
    CsvWriter w(os, header);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto trace = blocks::network_forward(net, d.features[i]);
      for (std::size_t k = 0; k + 1 < trace.states.size(); ++k) {
        std::vector<double> row{static_cast<double>(i), static_cast<double>(k), d.labels[i][0]};
        row.insert(row.end(), trace.states[k].data().begin(), trace.states[k].data().end());
        w.row(row);
      }
    }
  });
  const double acc = d.size() ? static_cast<double>(correct) / static_cast<double>(d.size()) : 0.0;
  metrics(out, {{"initial_loss", before}, {"final_loss", after}, {"accuracy", acc}});
}

void run_flow(const RunConfig& c, Outputs& out, std::ostream& log) {
  const control::Dataset d = dataset(c);
  if (d.feature_dim() != 2 && d.size() > 0) throw PreconditionError("flow runs need 2-D data");
  if (d.size() == 0) throw PreconditionError("flow runs need n > 0");
  const Tensor x = control::feature_matrix(d);
  Rng rng(c.get_uint("seed"));
  invertible::FlowModel model = invertible::make_flow(
      2, c.get_uint("flow.layers"), c.get_uint("flow.hidden"), c.get_uint("flow.depth"),
      invertible::parse_flow_arch(c.get_string("flow.arch")),
      blocks::parse_activation(c.get_string("model.activation")), rng);
  const double before = invertible::flow_nll(model, x, false).nll;
  invertible::FlowTrainConfig t;
  t.lr = c.get_real("lr");
  t.steps = c.get_uint("steps");
  t.batch = std::min<std::uint64_t>(c.get_uint("batch"), d.size());
  t.seed = c.get_uint("seed");
  const auto rows = invertible::train_flow(model, x, t);
  const double after = invertible::flow_nll(model, x, false).nll;
  log << "flow: nll " << before << " -> " << after << "\n";
  out.write("train_log.csv", [&](std::ostream& os) { invertible::write_flow_log(os, rows); });
  const Box b = bounds(d, 1.0);
  const std::size_t g = c.get_uint("grid");
  out.write("density_grid.csv",
            [&](std::ostream& os) { invertible::write_density_grid(os, model, b.xlo, b.xhi, b.ylo, b.yhi, g, g); });
  out.write("flow.bin", [&](std::ostream& os) { invertible::write_flow(os, model); });
  metrics(out, {{"initial_nll", before}, {"final_nll", after}});
}

void run_denoise(const RunConfig& c, Outputs& out, std::ostream& log) {
  const std::uint64_t seed = c.get_uint("seed");
  const std::size_t size = c.get_uint("denoise.size"), rects = c.get_uint("denoise.max_rects");
  const double sigma = c.get_real("denoise.sigma");
  const auto train = equivariant::rectangles_dataset(c.get_uint("denoise.images"), size, rects, sigma, seed);
  const auto test = equivariant::rectangles_dataset(c.get_uint("denoise.test_images"), size, rects, sigma, seed + 1);
  equivariant::DenoiserShape shape;
  shape.channels = c.get_uint("denoise.channels");
  shape.layers = c.get_uint("denoise.layers");
  std::unique_ptr<equivariant::Denoiser> net;
  if (c.get_string("denoise.model") == "p4") {
    net = std::make_unique<equivariant::P4Denoiser>(shape);
  } else {
    net = std::make_unique<equivariant::CnnDenoiser>(shape);
  }
  Rng rng(seed);
  net->init(rng);
  equivariant::DenoiseTrainConfig t;
  t.lambda = c.get_real("denoise.lambda");
  t.eps = c.get_real("denoise.eps");
  t.lr = c.get_real("lr");
  t.steps = c.get_uint("steps");
  t.batch = std::min<std::uint64_t>(c.get_uint("batch"), train.size());
  t.patience = c.get_uint("denoise.patience");
  t.seed = seed;
  const double before = equivariant::mean_denoise_objective(*net, test, t.lambda, t.eps);
  const auto rows = equivariant::train_denoiser(*net, train, t);
  const double after = equivariant::mean_denoise_objective(*net, test, t.lambda, t.eps);
  log << "denoise (" << net->name() << ", " << net->num_params() << " params): test objective " << before
      << " -> " << after << "\n";
  out.write("train_log.csv", [&](std::ostream& os) { equivariant::write_denoise_log(os, rows); });
  std::vector<Tensor> images;
  double resid = 0.0;
  for (const auto& p : test) {
    images.push_back(p.clean);
    images.push_back(p.noisy);
    images.push_back(net->apply(p.noisy));
    resid = std::max(resid, equivariant::equivariance_residual(*net, p.noisy));
  }
  out.write("denoised.spdlimg", [&](std::ostream& os) { equivariant::write_images(os, images); });
  metrics(out, {{"params", static_cast<double>(net->num_params())},
                {"test_objective_initial", before},
                {"test_objective_final", after},
                {"test_equivariance_residual", resid}});
}

void run_optbench(const RunConfig& c, Outputs& out, std::ostream& log) {
  const auto f = optim::camelback();
  const std::size_t max_steps = c.get_uint("optbench.max_steps");
  const double tol = c.get_real("optbench.tol");
  std::vector<std::pair<std::string, optim::Trajectory>> runs;
  for (const auto& [name, cfg] : optim::camelback_configs()) {
    runs.emplace_back(name, optim::run_benchmark(f, cfg, {-0.5, 0.8}, max_steps, tol));
    const auto& t = runs.back().second;
    log << "optbench " << name << ": " << (t.converged ? "converged" : "not converged") << " after "
        << t.steps << " steps\n";
    out.write("trajectory_" + name + ".csv", [&](std::ostream& os) { optim::write_trajectory(os, t); });
  }
  out.write("summary.csv", [&](std::ostream& os) {
    os << "method,steps,converged,final_loss,final_theta_norm\n";
    for (const auto& [name, t] : runs) {
      const auto& last = t.rows.back();
      os << name << "," << t.steps << "," << (t.converged ? 1 : 0) << "," << format_real(last.loss) << ","
         << format_real(norm2(last.theta)) << "\n";
    }
  });
}

void run_deeplimit(const RunConfig& c, Outputs& out, std::ostream& log) {
  const control::Dataset d = dataset(c);
  control::DeepLimitConfig cfg;
  cfg.ks = c.get_int_list("deeplimit.ks");
  cfg.lambda = c.get_real("deeplimit.lambda");
  cfg.horizon = c.get_real("deeplimit.horizon");
  cfg.opt = optimizer(c);
  cfg.steps = c.get_uint("steps");
  cfg.restarts = c.get_uint("deeplimit.restarts");
  cfg.batch = c.get_uint("batch") >= d.size() ? 0 : c.get_uint("batch");
  cfg.plateau_patience = c.get_uint("plateau_patience");
  cfg.act = blocks::parse_activation(c.get_string("model.activation"));
  cfg.seed = c.get_uint("seed");
  const auto rows = control::deep_limit_experiment(d, cfg);
  for (const auto& r : rows) log << "deeplimit K=" << r.k << ": " << r.best_loss << "\n";
  out.write("deeplimit.csv", [&](std::ostream& os) { control::write_deep_limit(os, rows); });
}

void run_msa(const RunConfig& c, Outputs& out, std::ostream& log) {
  const control::Dataset d = dataset(c);
  Rng rng(c.get_uint("seed"));
  Network net = ode_network(c, d.feature_dim(), rng);
  control::MsaConfig m;
  m.sweeps = c.get_uint("msa.sweeps");
  m.inner_steps = c.get_uint("msa.inner_steps");
  m.inner_lr = c.get_real("msa.inner_lr");
  const auto res = control::msa_iterate(net, d, m);
  if (!res.loss.empty()) log << "msa: loss " << res.loss.front() << " -> " << res.loss.back() << "\n";
  out.write("msa_log.csv", [&](std::ostream& os) {
    CsvWriter w(os, {"sweep", "loss"});
    for (std::size_t i = 0; i < res.loss.size(); ++i) w.row({static_cast<double>(i), res.loss[i]});
  });
  metrics(out, {{"initial_loss", res.loss.empty() ? 0.0 : res.loss.front()},
                {"final_loss", res.loss.empty() ? 0.0 : res.loss.back()}});
}

}  // namespace

std::vector<fs::path> run(const RunConfig& cfg, std::ostream& log) {
  Outputs out(cfg.get_string("out"));
  out.write("config.txt", [&](std::ostream& os) { os << serialize_config(cfg); });
  const std::string& e = cfg.get_string("experiment");
  if (e == "classify") run_classify(cfg, out, log);
  else if (e == "flow") run_flow(cfg, out, log);
  else if (e == "denoise") run_denoise(cfg, out, log);
  else if (e == "optbench") run_optbench(cfg, out, log);
  else if (e == "deeplimit") run_deeplimit(cfg, out, log);
  else if (e == "msa") run_msa(cfg, out, log);
  else throw PreconditionError("unknown experiment '" + e + "'");
  return out.files();
}

}  // namespace spdl::cli
