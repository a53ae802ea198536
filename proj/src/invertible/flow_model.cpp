#include "spdl/invertible/flow_model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "spdl/blocks/serialize.hpp"
#include "spdl/invertible/coupling.hpp"
#include "spdl/invertible/inv_linear.hpp"
#include "spdl/invertible/iresnet.hpp"
#include "spdl/invertible/pixel_shuffle.hpp"
#include "spdl/numcore/binary_io.hpp"
#include "spdl/numcore/csv.hpp"
#include "spdl/numcore/error.hpp"

namespace spdl::invertible {

FlowModel::FlowModel(const FlowModel& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

FlowModel& FlowModel::operator=(const FlowModel& other) {
  if (this != &other) {
    FlowModel tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

FlowModel& FlowModel::add(std::unique_ptr<FlowLayer> layer) {
  if (!layer) throw PreconditionError("flow: null layer");
  if (!layers_.empty() && layer->dim() != dim()) {
    throw ShapeError("flow: layer dim " + std::to_string(layer->dim()) + " does not match model dim " +
                     std::to_string(dim()));
  }
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor FlowModel::forward(const Tensor& x) const {
  Tensor z = x;
  for (const auto& l : layers_) z = l->forward(z);
  return z;
}

Tensor FlowModel::inverse(const Tensor& z) const {
  Tensor x = z;
  for (std::size_t k = layers_.size(); k-- > 0;) x = layers_[k]->inverse(x);
  return x;
}

std::vector<Tensor> FlowModel::trace(const Tensor& x) const {
  std::vector<Tensor> states{x};
  for (const auto& l : layers_) states.push_back(l->forward(states.back()));
  return states;
}

double FlowModel::log_prob(const Tensor& x) const {
  const double m = static_cast<double>(x.size());
  double ld = 0.0;
  Tensor z = x;
  for (const auto& l : layers_) {
    ld += l->logdet(z);
    z = l->forward(z);
  }
  return -0.5 * dot(z.data(), z.data()) - 0.5 * m * std::log(2.0 * std::numbers::pi) + ld;
}

std::size_t FlowModel::num_params() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->num_params();
  return n;
}

std::vector<std::size_t> FlowModel::offsets() const {
  std::vector<std::size_t> off{0};
  for (const auto& l : layers_) off.push_back(off.back() + l->num_params());
  return off;
}

std::vector<double> FlowModel::params() const {
  std::vector<double> p;
  p.reserve(num_params());
  for (const auto& l : layers_) {
    const auto lp = l->params();
    p.insert(p.end(), lp.begin(), lp.end());
  }
  return p;
}

void FlowModel::set_params(std::span<const double> flat) {
  if (flat.size() != num_params()) throw ShapeError("flow: wrong parameter count");
  std::size_t off = 0;
  for (auto& l : layers_) {
    l->set_params(flat.subspan(off, l->num_params()));
    off += l->num_params();
  }
}

void FlowModel::after_step() {
  for (auto& l : layers_) l->after_step();
}

NllResult flow_nll(const FlowModel& model, const Tensor& batch, bool with_grad) {
  const std::size_t m = model.dim();
  if (batch.rank() != 2 || batch.cols() != m || batch.rows() == 0) {
    throw ShapeError("flow_nll: batch must be N x " + std::to_string(m) + ", got " +
                     shape_string(batch.shape()));
  }
  const std::size_t n = batch.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double base = 0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi);
  const auto off = model.offsets();
  NllResult res{0.0, {}};
  if (with_grad) res.grad.assign(model.num_params(), 0.0);
  std::span<double> grad(res.grad);
  for (std::size_t r = 0; r < n; ++r) {
    Tensor x({m});
    for (std::size_t j = 0; j < m; ++j) x[j] = batch(r, j);
    std::vector<Tensor> states{x};
    double ld = 0.0;
    for (std::size_t k = 0; k < model.size(); ++k) {
      const double lk = model.layer(k).logdet(states.back());
      Tensor next = model.layer(k).forward(states.back());
      if (!std::isfinite(lk) || !next.all_finite()) {
        throw DiagnosticsError("flow_nll: non-finite value in layer " + std::to_string(k), k);
      }
      ld += lk;
      states.push_back(std::move(next));
    }
    const Tensor& z = states.back();
    res.nll += (0.5 * dot(z.data(), z.data()) + base - ld) * inv_n;
    if (!with_grad) continue;
    Tensor g = z;
    for (auto& v : g.data()) v *= inv_n;
    for (std::size_t k = model.size(); k-- > 0;) {
      auto gk = grad.subspan(off[k], off[k + 1] - off[k]);
      Tensor gx = model.layer(k).backward(states[k], g, gk);
      const Tensor gl = model.layer(k).logdet_backward(states[k], -inv_n, gk);
      axpy(1.0, gl.data(), gx.data());
      g = std::move(gx);
    }
  }
  if (!std::isfinite(res.nll)) throw DiagnosticsError("flow_nll: non-finite objective");
  return res;
}

FlowGradient stored_trace_grad(const FlowModel& model, const Tensor& x, const Tensor& loss_grad) {
  const auto states = model.trace(x);
  FlowGradient out{{std::vector<double>(model.num_params(), 0.0), model.offsets()}, loss_grad};
  for (std::size_t k = model.size(); k-- > 0;) {
    out.input_grad = model.layer(k).backward(states[k], out.input_grad, out.param_grad.block(k));
  }
  return out;
}

FlowGradient memory_efficient_grad(const FlowModel& model, const Tensor& x,
                                   const Tensor& loss_grad) {
  Tensor z = model.forward(x);
  FlowGradient out{{std::vector<double>(model.num_params(), 0.0), model.offsets()}, loss_grad};
  for (std::size_t k = model.size(); k-- > 0;) {
    Tensor prev = model.layer(k).inverse(z);
    out.input_grad = model.layer(k).backward(prev, out.input_grad, out.param_grad.block(k));
    z = std::move(prev);
  }
  return out;
}

void write_density_grid(std::ostream& os, const FlowModel& model, double x_lo, double x_hi,
                        double y_lo, double y_hi, std::size_t nx, std::size_t ny) {
  if (model.dim() != 2) throw ShapeError("density grid: model must be 2-D");
  if (nx < 2 || ny < 2) throw PreconditionError("density grid: need at least 2 points per axis");
  CsvWriter csv(os, {"x", "y", "log_density"});
  for (std::size_t j = 0; j < ny; ++j) {
    const double y = y_lo + (y_hi - y_lo) * static_cast<double>(j) / static_cast<double>(ny - 1);
    for (std::size_t i = 0; i < nx; ++i) {
      const double x = x_lo + (x_hi - x_lo) * static_cast<double>(i) / static_cast<double>(nx - 1);
      csv.row({x, y, model.log_prob(Tensor::vector({x, y}))});
    }
  }
}

namespace {

void write_indices(std::ostream& os, const std::vector<std::size_t>& idx) {
  io::write_u32(os, static_cast<std::uint32_t>(idx.size()));
  for (std::size_t i : idx) io::write_u32(os, static_cast<std::uint32_t>(i));
}

std::vector<std::size_t> read_indices(std::istream& is) {
  const auto n = io::read_u32(is);
  if (n > (1u << 24)) throw io::FormatError("flow container: implausible index count");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = io::read_u32(is);
  return idx;
}

}  // namespace

void write_flow(std::ostream& os, const FlowModel& model) {
  io::write_magic(os, "SPDLFLW1");
  io::write_u32(os, kFlowFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(model.dim()));
  io::write_u32(os, static_cast<std::uint32_t>(model.size()));
  for (std::size_t k = 0; k < model.size(); ++k) {
    const FlowLayer& layer = model.layer(k);
    io::write_u8(os, static_cast<std::uint8_t>(layer.kind()));
    switch (layer.kind()) {
      case FlowLayerKind::coupling: {
        const auto& c = static_cast<const CouplingLayer&>(layer);
        io::write_u8(os, static_cast<std::uint8_t>(c.law()));
        write_indices(os, c.first());
        write_indices(os, c.second());
        blocks::write_network(os, c.subnet());
        break;
      }
      case FlowLayerKind::inv_linear: {
        const auto& l = static_cast<const InvLinear&>(layer);
        io::write_u32(os, static_cast<std::uint32_t>(l.dim()));
        io::write_f64(os, l.eps0());
        for (std::size_t p : l.permutation()) io::write_u32(os, static_cast<std::uint32_t>(p));
        for (double s : l.signs()) io::write_f64(os, s);
        const auto params = l.params();
        io::write_u64(os, params.size());
        for (double v : params) io::write_f64(os, v);
        break;
      }
      case FlowLayerKind::pixel_shuffle: {
        const auto& p = static_cast<const PixelShuffleLayer&>(layer);
        io::write_u32(os, static_cast<std::uint32_t>(p.height()));
        io::write_u32(os, static_cast<std::uint32_t>(p.width()));
        io::write_u32(os, static_cast<std::uint32_t>(p.channels()));
        io::write_u32(os, static_cast<std::uint32_t>(p.stride()));
        break;
      }
      case FlowLayerKind::iresnet: {
        const auto& r = static_cast<const IResBlock&>(layer);
        const auto& o = r.options();
        io::write_f64(os, o.lip_target);
        io::write_u32(os, static_cast<std::uint32_t>(o.series_terms));
        io::write_u32(os, static_cast<std::uint32_t>(o.probes));
        io::write_u32(os, static_cast<std::uint32_t>(o.exact_dim_cutoff));
        io::write_f64(os, o.inverse_tol);
        io::write_u32(os, static_cast<std::uint32_t>(o.max_iter));
        io::write_u32(os, static_cast<std::uint32_t>(o.power_iters));
        io::write_u64(os, r.probe_seed());
        blocks::write_network(os, r.subnet());
        break;
      }
    }
  }
}

FlowModel read_flow(std::istream& is) {
  io::expect_magic(is, "SPDLFLW1");
  const auto version = io::read_u32(is);
  if (version != kFlowFormatVersion) {
    throw io::FormatError("flow container: unsupported version " + std::to_string(version));
  }
  const auto dim = io::read_u32(is);
  const auto count = io::read_u32(is);
  FlowModel model;
  for (std::uint32_t k = 0; k < count; ++k) {
    switch (static_cast<FlowLayerKind>(io::read_u8(is))) {
      case FlowLayerKind::coupling: {
        const auto law = io::read_u8(is);
        if (law > 1) throw io::FormatError("flow container: invalid coupling law");
        auto first = read_indices(is);
        auto second = read_indices(is);
        model.add(CouplingLayer(std::move(first), std::move(second), static_cast<CouplingLaw>(law),
                                blocks::read_network(is)));
        break;
      }
      case FlowLayerKind::inv_linear: {
        const auto n = io::read_u32(is);
        if (n > (1u << 16)) throw io::FormatError("flow container: implausible dimension");
        const double eps0 = io::read_f64(is);
        std::vector<std::size_t> perm(n);
        for (auto& p : perm) p = io::read_u32(is);
        std::vector<double> signs(n);
        for (auto& s : signs) s = io::read_f64(is);
        const auto np = io::read_u64(is);
        if (np != std::uint64_t{n} * n) throw io::FormatError("flow container: bad parameter count");
        std::vector<double> params(np);
        for (auto& v : params) v = io::read_f64(is);
        model.add(InvLinear::restore(std::move(perm), std::move(signs), std::move(params), eps0));
        break;
      }
      case FlowLayerKind::pixel_shuffle: {
        const auto h = io::read_u32(is), w = io::read_u32(is);
        const auto c = io::read_u32(is), s = io::read_u32(is);
        model.add(PixelShuffleLayer(h, w, c, s));
        break;
      }
      case FlowLayerKind::iresnet: {
        IResOptions o;
        o.lip_target = io::read_f64(is);
        o.series_terms = io::read_u32(is);
        o.probes = io::read_u32(is);
        o.exact_dim_cutoff = io::read_u32(is);
        o.inverse_tol = io::read_f64(is);
        o.max_iter = io::read_u32(is);
        o.power_iters = static_cast<int>(io::read_u32(is));
        const auto seed = io::read_u64(is);
        model.add(IResBlock(blocks::read_network(is), o, seed));
        break;
      }
      default:
        throw io::FormatError("flow container: unknown layer kind");
    }
  }
  if (count > 0 && model.dim() != dim) throw io::FormatError("flow container: dimension mismatch");
  return model;
}

void save_flow(const std::filesystem::path& path, const FlowModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_flow(os, model);
}

FlowModel load_flow(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_flow(is);
}

}  // namespace spdl::invertible
