#include "arcflow/flowfield/velocity.hpp"

#include <cmath>
#include <string>

namespace arcflow::flow {

AnalyticPotential rotation_potential(const Eigen::Vector3d& omega) {
  return {[omega](const Eigen::Vector3d& x, double) {
    AnalyticPotential::Derivs d;
    d.a = -0.5 * x.squaredNorm() * omega;
    d.d = -omega * x.transpose();
    for (int k = 0; k < 3; ++k) d.h[k] = -omega(k) * Eigen::Matrix3d::Identity();
    return d;
  }};
}

AnalyticPotential uniform_potential(const Eigen::Vector3d& c) {
  return {[c](const Eigen::Vector3d& x, double) {
    AnalyticPotential::Derivs d;
    d.a = 0.5 * c.cross(x);
    // (c x x)_k = eps_kij c_i x_j, so da_k/dx_l = eps_kil c_i / 2.
    Eigen::Matrix3d skew;
    skew << 0.0, -c(2), c(1), c(2), 0.0, -c(0), -c(1), c(0), 0.0;
    d.d = 0.5 * skew;
    return d;
  }};
}

AnalyticPotential saddle_potential() {
  return {[](const Eigen::Vector3d& x, double) {
    AnalyticPotential::Derivs d;
    d.a = Eigen::Vector3d(0.0, 0.0, x(0) * x(1));
    d.d(2, 0) = x(1);
    d.d(2, 1) = x(0);
    d.h[2](0, 1) = 1.0;
    d.h[2](1, 0) = 1.0;
    return d;
  }};
}

VelocityField::VelocityField(nn::MlpParams potential, double horizon)
    : horizon_(horizon), network_(std::move(potential)) {
  if (!(horizon_ > 0.0)) throw FlowError("time horizon must be positive");
  network_->validate();
  if (network_->input_dim() != 4 || network_->output_dim() != 3) {
    throw FlowError("potential network must map R^4 to R^3");
  }
}

VelocityField::VelocityField(AnalyticPotential potential, double horizon)
    : horizon_(horizon), analytic_(std::move(potential)) {
  if (!(horizon_ > 0.0)) throw FlowError("time horizon must be positive");
}

void VelocityField::check_time(double t) const {
  if (!(t >= -1e-12 * horizon_ && t <= horizon_ * (1.0 + 1e-12))) {
    throw FlowError("time " + std::to_string(t) + " outside [0, T]");
  }
}

namespace {

ad::Jet<Tensor> analytic_jet(const AnalyticPotential& p, const Tensor& x, double tau) {
  const Eigen::Index n = x.cols();
  ad::Jet<Tensor> out;
  out.value.resize(3, n);
  for (auto& g : out.grad) g.resize(3, n);
  for (auto& h : out.hess) h.resize(3, n);
  out.has_hess = true;
  for (Eigen::Index c = 0; c < n; ++c) {
    const AnalyticPotential::Derivs d = p.eval(x.col(c), tau);
    out.value.col(c) = d.a;
    for (int l = 0; l < 3; ++l) out.grad[l].col(c) = d.d.col(l);
    for (int l = 0; l < 3; ++l) {
      for (int m = l; m < 3; ++m) {
        for (int k = 0; k < 3; ++k) out.hess[ad::hess_index(l, m)](k, c) = d.h[k](l, m);
      }
    }
  }
  return out;
}

void check_finite(const Tensor& v) {
  if (!v.allFinite()) throw FlowError("non-finite velocity");
}

}  // namespace

Tensor VelocityField::velocity(const Tensor& x, double t) const {
  check_time(t);
  const double tau = t / horizon_;
  Tensor v;
  if (network_) {
    v = network_velocity(network_->layers, network_->omega0, x, tau);
  } else {
    v = curl_from_grad(analytic_jet(*analytic_, x, tau).grad);
  }
  check_finite(v);
  return v;
}

Tensor VelocityField::velocity(const Tensor& x, double t, std::array<Tensor, 3>& jac) const {
  check_time(t);
  const double tau = t / horizon_;
  FieldSample<Tensor> s =
      network_ ? network_velocity_and_jacobian(network_->layers, network_->omega0, x, tau)
               : curl_from_jet(analytic_jet(*analytic_, x, tau));
  check_finite(s.v);
  for (const auto& j : s.jac) check_finite(j);
  jac = std::move(s.jac);
  return s.v;
}

FieldSample<Tensor> VelocityField::sample(const Tensor& x, double t, bool with_jacobian) const {
  FieldSample<Tensor> s;
  if (with_jacobian) {
    s.v = velocity(x, t, s.jac);
  } else {
    s.v = velocity(x, t);
  }
  return s;
}

Eigen::Vector3d VelocityField::velocity(const Eigen::Vector3d& x, double t) const {
  return velocity(Tensor(x), t).col(0);
}

Eigen::Matrix3d VelocityField::velocity_jacobian(const Eigen::Vector3d& x, double t) const {
  std::array<Tensor, 3> jac;
  velocity(Tensor(x), t, jac);
  Eigen::Matrix3d j;
  for (int c = 0; c < 3; ++c) j.col(c) = jac[c].col(0);
  return j;
}

Tensor VelocityField::potential(const Tensor& x, double t) const {
  check_time(t);
  const double tau = t / horizon_;
  if (network_) {
    Tensor in(4, x.cols());
    in.topRows(3) = x;
    in.row(3).setConstant(tau);
    return nn::mlp_forward(network_->layers, network_->omega0, in);
  }
  return analytic_jet(*analytic_, x, tau).value;
}

Eigen::Vector3d normal_rate(const Eigen::Vector3d& n, const Eigen::Matrix3d& jac) {
  return -jac.transpose() * n;
}

Eigen::Matrix3d basis_rate(const Eigen::Matrix3d& b, const Eigen::Matrix3d& jac,
                           double trace_tol) {
  if (std::abs(jac.trace()) > trace_tol) {
    throw FlowError("Jacobian trace " + std::to_string(jac.trace()) +
                    " violates the divergence-free precondition");
  }
  return jac * b;
}

}  // namespace arcflow::flow
