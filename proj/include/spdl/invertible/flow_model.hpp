#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "spdl/blocks/network.hpp"
#include "spdl/invertible/flow_layer.hpp"

namespace spdl::invertible {

// Ordered invertible layers with a standard normal base distribution:
// z = layer_{K-1}( ... layer_0(x)).
class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(const FlowModel& other);
  FlowModel& operator=(const FlowModel& other);
  FlowModel(FlowModel&&) noexcept = default;
  FlowModel& operator=(FlowModel&&) noexcept = default;

  FlowModel& add(std::unique_ptr<FlowLayer> layer);
  template <class L>
  FlowModel& add(L layer) {
    return add(std::unique_ptr<FlowLayer>(std::make_unique<L>(std::move(layer))));
  }

  std::size_t size() const noexcept { return layers_.size(); }
  std::size_t dim() const noexcept { return layers_.empty() ? 0 : layers_.front()->dim(); }
  const FlowLayer& layer(std::size_t k) const { return *layers_.at(k); }
  FlowLayer& layer(std::size_t k) { return *layers_.at(k); }

  Tensor forward(const Tensor& x) const;
  Tensor inverse(const Tensor& z) const;
  // x, layer_0(x), ..., z.
  std::vector<Tensor> trace(const Tensor& x) const;
  double log_prob(const Tensor& x) const;

  std::size_t num_params() const noexcept;
  std::vector<std::size_t> offsets() const;
  std::vector<double> params() const;
  void set_params(std::span<const double> flat);
  void after_step();

 private:
  std::vector<std::unique_ptr<FlowLayer>> layers_;
};

struct NllResult {
  double nll;
  std::vector<double> grad;  // empty when not requested
};

// Mean over the rows of `batch` (N x M) of
//   1/2 |z|^2 + M/2 log(2 pi) - sum_k logdet_k.
// Throws DiagnosticsError naming the first layer that produced a
// non-finite state or log-determinant.
NllResult flow_nll(const FlowModel& model, const Tensor& batch, bool with_grad = true);

struct FlowGradient {
  blocks::ParamVector param_grad;
  Tensor input_grad;
};

// Backpropagates loss_grad = dL/dz through the model with all states stored.
FlowGradient stored_trace_grad(const FlowModel& model, const Tensor& x, const Tensor& loss_grad);
// Same gradient keeping only the output and reconstructing earlier states
// with layer inverses.
FlowGradient memory_efficient_grad(const FlowModel& model, const Tensor& x,
                                   const Tensor& loss_grad);

// Grid of log densities for a 2-D model; header x,y,log_density, x varying
// fastest.
void write_density_grid(std::ostream& os, const FlowModel& model, double x_lo, double x_hi,
                        double y_lo, double y_hi, std::size_t nx, std::size_t ny);

// Flow checkpoint, little-endian:
//   "SPDLFLW1", u32 version (= 1), u32 dim, u32 layer_count
//   per layer: u8 kind tag (FlowLayerKind), then
//     coupling:      u8 law, u32 |I1|, u32 I1[], u32 |I2|, u32 I2[], network container
//     inv_linear:    u32 n, f64 eps0, u32 perm[n], f64 signs[n], u64 count, f64 params[]
//     pixel_shuffle: u32 h, u32 w, u32 c, u32 s
//     iresnet:       f64 lip_target, u32 series_terms, u32 probes, u32 exact_dim_cutoff,
//                    f64 inverse_tol, u32 max_iter, u32 power_iters, u64 probe_seed,
//                    network container
inline constexpr std::uint32_t kFlowFormatVersion = 1;
void write_flow(std::ostream& os, const FlowModel& model);
FlowModel read_flow(std::istream& is);
void save_flow(const std::filesystem::path& path, const FlowModel& model);
FlowModel load_flow(const std::filesystem::path& path);

}  // namespace spdl::invertible
