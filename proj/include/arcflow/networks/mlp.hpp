#pragma once

// Multilayer perceptrons evaluated over batches of points (one column per
// point). The forward pass is a template over the point type so the same
// code runs on plain matrices, on tape variables and on forward-mode
// Dual/Jet wrappers of either.

#include "arcflow/autodiff/forward.hpp"
#include "arcflow/autodiff/tape.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace arcflow::nn {

using ad::Tensor;

enum class LayerKind : std::uint8_t { kSiren, kFiner, kLinear, kTanh };

std::string_view kind_name(LayerKind kind);
LayerKind parse_kind(std::string_view name);

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct LayerT {
  T w;  // out x in
  T b;  // out x 1
  LayerKind kind = LayerKind::kLinear;
};

struct MlpParams {
  std::vector<LayerT<Tensor>> layers;
  double omega0 = 4.0;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().w.cols(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().w.rows(); }
  std::size_t parameter_count() const;
  /// Throws NetworkError if the dimensions do not chain or omega0 <= 0.
  void validate() const;
};

/// sin(omega0 (W z + b))
template <class Z, class T>
Z siren_layer(const Z& z, const T& w, const T& b, double omega0) {
  return ad::apply(ad::affine(w, b, z),
                   [omega0](const auto& u, int order) { return ad::sine_fn(u, order, omega0); });
}

/// u = W z + b; sin(omega0 (|u| + 1) u)
template <class Z, class T>
Z finer_layer(const Z& z, const T& w, const T& b, double omega0) {
  Z inner = ad::apply(ad::affine(w, b, z), [omega0](const auto& u, int order) {
    return ad::finer_scale_fn(u, order, omega0);
  });
  return ad::apply(inner, [](const auto& u, int order) { return ad::unit_sine_fn(u, order); });
}

template <class Z, class T>
Z apply_layer(const Z& z, const LayerT<T>& layer, double omega0) {
  switch (layer.kind) {
    case LayerKind::kSiren:
      return siren_layer(z, layer.w, layer.b, omega0);
    case LayerKind::kFiner:
      return finer_layer(z, layer.w, layer.b, omega0);
    case LayerKind::kTanh:
      return ad::apply(ad::affine(layer.w, layer.b, z),
                       [](const auto& u, int order) { return ad::tanh_fn(u, order); });
    case LayerKind::kLinear:
      break;
  }
  return ad::affine(layer.w, layer.b, z);
}

template <class Z, class T>
Z mlp_forward(const std::vector<LayerT<T>>& layers, double omega0, Z z) {
  for (const LayerT<T>& layer : layers) z = apply_layer(z, layer, omega0);
  return z;
}

/// Records every weight and bias as a differentiable leaf.
std::vector<LayerT<ad::Var>> on_tape(ad::Tape& tape, const MlpParams& params);

/// First layer U(-1/fan_in, 1/fan_in); later layers
/// U(-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0); zero biases. All
/// hidden layers are SIREN and the last layer is linear.
MlpParams siren_init(const std::vector<int>& dims, double omega0, std::uint64_t seed);

/// Glorot-uniform weights, zero biases; tanh hidden layers, linear output.
MlpParams tanh_init(const std::vector<int>& dims, std::uint64_t seed);

// Flat parameter vector in layer order (W row-major, then b).
Eigen::VectorXd flatten(const MlpParams& params);
void unflatten(MlpParams& params, const Eigen::VectorXd& flat);

// Text container: a version line, omega0, then per layer kind, dimensions
// and row-major weights and biases in shortest round-trip form.
void write_mlp(std::ostream& out, const MlpParams& params);
MlpParams read_mlp(std::istream& in);

}  // namespace arcflow::nn
