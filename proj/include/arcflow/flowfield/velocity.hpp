#pragma once

// Divergence-free velocity v = curl a(x, t/T) of a potential a : R^4 -> R^3,
// and its spatial Jacobian for transporting normals and tangent frames.
//
// Positions are 3 x N (one column per point). Spatial derivatives of the
// potential come from forward mode: Dual<T, 3> with the three basis tangents
// gives da/dx_l, Jet<T> adds the second derivatives needed by the Jacobian.

#include "arcflow/autodiff/forward.hpp"
#include "arcflow/networks/mlp.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <optional>
#include <stdexcept>

namespace arcflow::flow {

using ad::Tensor;

class FlowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-form potential: value a, first derivatives d(k, l) = da_k/dx_l and
/// second derivatives h[k](l, m) at one point.
struct AnalyticPotential {
  struct Derivs {
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    Eigen::Matrix3d d = Eigen::Matrix3d::Zero();
    std::array<Eigen::Matrix3d, 3> h{Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero(),
                                     Eigen::Matrix3d::Zero()};
  };
  std::function<Derivs(const Eigen::Vector3d& x, double tau)> eval;
};

/// a = -|x|^2 omega / 2, so v = omega x x (rigid rotation).
AnalyticPotential rotation_potential(const Eigen::Vector3d& omega);
/// a = (c x x) / 2, so v = c.
AnalyticPotential uniform_potential(const Eigen::Vector3d& c);
/// a = (0, 0, x y), so v = (x, -y, 0).
AnalyticPotential saddle_potential();

template <class T>
struct FieldSample {
  T v;                     // 3 x N
  std::array<T, 3> jac{};  // dv/dx_j, each 3 x N (only from the Jet path)
};

/// A velocity field handle: either an ARC-Net or an analytic potential.
class VelocityField {
 public:
  VelocityField(nn::MlpParams potential, double horizon);
  VelocityField(AnalyticPotential potential, double horizon);

  double horizon() const { return horizon_; }
  bool is_network() const { return network_.has_value(); }
  const nn::MlpParams& network() const { return *network_; }
  nn::MlpParams& network() { return *network_; }

  /// Velocity at the columns of x (3 x N) and time t.
  Tensor velocity(const Tensor& x, double t) const;
  /// Velocity and Jacobian columns dv/dx_j (each 3 x N).
  Tensor velocity(const Tensor& x, double t, std::array<Tensor, 3>& jac_cols) const;

  Eigen::Vector3d velocity(const Eigen::Vector3d& x, double t) const;
  Eigen::Matrix3d velocity_jacobian(const Eigen::Vector3d& x, double t) const;

  /// Velocity, plus the Jacobian columns when requested.
  FieldSample<Tensor> sample(const Tensor& x, double t, bool with_jacobian) const;

  /// Potential value at (x, t), 3 x N.
  Tensor potential(const Tensor& x, double t) const;

 private:
  void check_time(double t) const;
  double horizon_;
  std::optional<nn::MlpParams> network_;
  std::optional<AnalyticPotential> analytic_;
};

// ---------------------------------------------------------------------------
// Generic curl assembly. T is Tensor or ad::Var.

/// curl from first derivatives g[l] = da/dx_l (3 x N each).
template <class T>
T curl_from_grad(const std::array<T, 3>& g) {
  using ad::slice;
  using ad::sub;
  T c0 = sub(slice(g[1], 2, 1), slice(g[2], 1, 1));
  T c1 = sub(slice(g[2], 0, 1), slice(g[0], 2, 1));
  T c2 = sub(slice(g[0], 1, 1), slice(g[1], 0, 1));
  return ad::concat({c0, c1, c2});
}

/// Network input (x, tau) as a first-order dual in the spatial coordinates.
template <class T>
ad::Dual<T, 3> spatial_dual_input(const T& x, double tau) {
  const Tensor tau_row = Tensor::Constant(1, ad::value_of(x).cols(), tau);
  ad::Dual<T, 3> in;
  in.primal = ad::concat({x, ad::const_like(x, tau_row)});
  for (int l = 0; l < 3; ++l) {
    Tensor e = Tensor::Zero(4, 1);
    e(l, 0) = 1.0;
    in.tangent[l] = ad::const_like(x, e);
  }
  return in;
}

template <class T>
ad::Jet<T> spatial_jet_input(const T& x, double tau) {
  const Tensor tau_row = Tensor::Constant(1, ad::value_of(x).cols(), tau);
  ad::Jet<T> in;
  in.value = ad::concat({x, ad::const_like(x, tau_row)});
  for (int l = 0; l < 3; ++l) {
    Tensor e = Tensor::Zero(4, 1);
    e(l, 0) = 1.0;
    in.grad[l] = ad::const_like(x, e);
  }
  in.has_hess = false;
  return in;
}

/// Velocity only: one forward pass carrying three tangents.
template <class T>
T network_velocity(const std::vector<nn::LayerT<T>>& layers, double omega0, const T& x,
                   double tau) {
  ad::Dual<T, 3> a = nn::mlp_forward(layers, omega0, spatial_dual_input(x, tau));
  return curl_from_grad(a.tangent);
}

/// Curl and its Jacobian from a potential jet (value, da/dx_l, d2a/dx_l dx_m).
template <class T>
FieldSample<T> curl_from_jet(const ad::Jet<T>& a) {
  FieldSample<T> out;
  out.v = curl_from_grad(a.grad);
  for (int j = 0; j < 3; ++j) {
    if (!a.has_hess) {
      out.jac[j] = ad::zeros_like(out.v);
      continue;
    }
    std::array<T, 3> dg;
    for (int l = 0; l < 3; ++l) dg[l] = a.hess[ad::hess_index(l, j)];
    out.jac[j] = curl_from_grad(dg);
  }
  return out;
}

template <class T>
FieldSample<T> network_velocity_and_jacobian(const std::vector<nn::LayerT<T>>& layers,
                                             double omega0, const T& x, double tau) {
  return curl_from_jet(nn::mlp_forward(layers, omega0, spatial_jet_input(x, tau)));
}

/// ARC-Net layers recorded on a tape (or plain), with the same sampling
/// interface as VelocityField.
template <class T>
struct NetworkField {
  const std::vector<nn::LayerT<T>>* layers = nullptr;
  double omega0 = 1.0;
  double horizon = 1.0;

  FieldSample<T> sample(const T& x, double t, bool with_jacobian) const {
    const double tau = t / horizon;
    if (with_jacobian) return network_velocity_and_jacobian(*layers, omega0, x, tau);
    return {network_velocity(*layers, omega0, x, tau), {}};
  }
};

// ---------------------------------------------------------------------------
// Transport rates.

/// -J^T n for the columns of n, with J given by its columns.
template <class T>
T normal_rate(const T& n, const std::array<T, 3>& jac) {
  return ad::neg(ad::concat({ad::dot(jac[0], n), ad::dot(jac[1], n), ad::dot(jac[2], n)}));
}

/// J b for the columns of b.
template <class T>
T tangent_rate(const T& b, const std::array<T, 3>& jac) {
  using ad::add;
  using ad::mul;
  using ad::slice;
  return add(add(mul(jac[0], slice(b, 0, 1)), mul(jac[1], slice(b, 1, 1))),
             mul(jac[2], slice(b, 2, 1)));
}

Eigen::Vector3d normal_rate(const Eigen::Vector3d& n, const Eigen::Matrix3d& jac);
/// J B. Throws FlowError when |trace J| exceeds `trace_tol` (the field is
/// not divergence-free).
Eigen::Matrix3d basis_rate(const Eigen::Matrix3d& b, const Eigen::Matrix3d& jac,
                           double trace_tol = 1e-8);

}  // namespace arcflow::flow
