#include "arcflow/networks/qnet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace arcflow::nn {

SymEigen4 jacobi_eigen4(const Eigen::Matrix4d& input, double tol) {
  Eigen::Matrix4d a = 0.5 * (input + input.transpose());
  Eigen::Matrix4d v = Eigen::Matrix4d::Identity();
  const double scale = std::max(a.norm(), 1e-300);
  int sweep = 0;
  for (; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 4; ++p) {
      for (int q = p + 1; q < 4; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(2.0 * off) <= tol * scale) break;
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation annihilating a(p, q).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 4; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < 4; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < 4; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });
  SymEigen4 out;
  out.sweeps = sweep;
  for (int k = 0; k < 4; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

Eigen::Matrix4d symmetric_from_params(const Vector10d& t) {
  Eigen::Matrix4d a;
  a << t(0), t(1), t(2), t(3),
       t(1), t(4), t(5), t(6),
       t(2), t(5), t(7), t(8),
       t(3), t(6), t(8), t(9);
  return a;
}

Eigen::Vector4d fix_quaternion_sign(Eigen::Vector4d q) {
  for (int k = 0; k < 4; ++k) {
    if (std::abs(q(k)) > 1e-8) {
      if (q(k) < 0.0) q = -q;
      break;
    }
  }
  return q;
}

SymmetricQuatOutput min_eigen_quaternion(const Eigen::Matrix4d& a) {
  const SymEigen4 eig = jacobi_eigen4(a);
  if (eig.values(1) - eig.values(0) < 1e-10) {
    throw NetworkError("degenerate rotation: repeated minimum eigenvalue");
  }
  SymmetricQuatOutput out;
  out.a = a;
  out.eigenvalues = eig.values;
  out.eigenvectors = eig.vectors;
  out.q = fix_quaternion_sign(eig.vectors.col(0).normalized());
  return out;
}

namespace {
Eigen::Matrix4d backward_from_eigen(const Eigen::Vector4d& values, const Eigen::Matrix4d& vectors,
                                    const Eigen::Vector4d& q, const Eigen::Vector4d& g) {
  if (values(1) - values(0) < 1e-8) {
    throw NetworkError("eigenvalue gap below 1e-8 in quaternion layer gradient");
  }
  // (lambda1 I - A)^+ g
  Eigen::Vector4d u = Eigen::Vector4d::Zero();
  for (int k = 1; k < 4; ++k) {
    u += vectors.col(k) * (vectors.col(k).dot(g) / (values(0) - values(k)));
  }
  const Eigen::Matrix4d gm = u * q.transpose();
  return 0.5 * (gm + gm.transpose());
}
}  // namespace

Eigen::Matrix4d qnet_backward(const Eigen::Matrix4d& a, const Eigen::Vector4d& q,
                              const Eigen::Vector4d& upstream) {
  const SymEigen4 eig = jacobi_eigen4(a);
  return backward_from_eigen(eig.values, eig.vectors, q, upstream);
}

Vector10d symmetric_param_gradient(const Eigen::Matrix4d& g) {
  Vector10d out;
  out << g(0, 0), 2 * g(0, 1), 2 * g(0, 2), 2 * g(0, 3),
         g(1, 1), 2 * g(1, 2), 2 * g(1, 3),
         g(2, 2), 2 * g(2, 3),
         g(3, 3);
  return out;
}

ad::Tensor QuatLayerOp::forward(std::span<const ad::Tensor* const> inputs) {
  const ad::Tensor& theta = *inputs[0];
  if (theta.rows() != 10) throw NetworkError("quaternion layer expects 10 rows");
  ad::Tensor out(4, theta.cols());
  for (Eigen::Index j = 0; j < theta.cols(); ++j) {
    const Vector10d t = theta.col(j);
    out.col(j) = min_eigen_quaternion(symmetric_from_params(t)).q;
  }
  return out;
}

void QuatLayerOp::backward(std::span<const ad::Tensor* const> inputs, const ad::Tensor& output,
                           const ad::Tensor& output_adjoint,
                           std::span<ad::Tensor* const> input_adjoints) {
  if (input_adjoints[0] == nullptr) return;
  const ad::Tensor& theta = *inputs[0];
  ad::Tensor& grad = *input_adjoints[0];
  for (Eigen::Index j = 0; j < theta.cols(); ++j) {
    const Vector10d t = theta.col(j);
    const SymEigen4 eig = jacobi_eigen4(symmetric_from_params(t));
    const Eigen::Vector4d q = output.col(j);
    const Eigen::Matrix4d gs = backward_from_eigen(eig.values, eig.vectors, q,
                                                   output_adjoint.col(j));
    grad.col(j) += symmetric_param_gradient(gs);
  }
}

ad::Tensor quaternion_layer(const ad::Tensor& theta) {
  QuatLayerOp op;
  const ad::Tensor* in[] = {&theta};
  return op.forward(in);
}

ad::Var quaternion_layer(const ad::Var& theta) {
  return ad::custom(std::make_shared<QuatLayerOp>(), std::span<const ad::Var>(&theta, 1));
}

MlpParams build_qnet(const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> dims{4};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(10);
  return tanh_init(dims, seed);
}

void bias_to_identity(MlpParams& qnet, double output_gain) {
  if (qnet.output_dim() != 10) throw NetworkError("Q-Net must have 10 outputs");
  Vector10d b;
  b << 0, 0, 0, 0, 1, 0, 0, 1, 0, 1;
  qnet.layers.back().b = b;
  qnet.layers.back().w *= output_gain;
}

}  // namespace arcflow::nn
