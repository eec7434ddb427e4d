#pragma once

// Q-Net: a tanh MLP whose 10 outputs fill a symmetric 4x4 matrix A; the
// predicted rotation is the unit eigenvector of A's smallest eigenvalue.

#include "arcflow/autodiff/tape.hpp"
#include "arcflow/networks/mlp.hpp"

#include <Eigen/Dense>

#include <memory>

namespace arcflow::nn {

using Vector10d = Eigen::Matrix<double, 10, 1>;

/// Eigen-decomposition by cyclic Jacobi rotations; eigenvalues ascending,
/// eigenvectors in the matching columns.
struct SymEigen4 {
  Eigen::Vector4d values;
  Eigen::Matrix4d vectors;
  int sweeps = 0;
};
SymEigen4 jacobi_eigen4(const Eigen::Matrix4d& a, double tol = 1e-12);

/// Parameter order: (00, 01, 02, 03, 11, 12, 13, 22, 23, 33).
Eigen::Matrix4d symmetric_from_params(const Vector10d& theta);

struct SymmetricQuatOutput {
  Eigen::Matrix4d a;
  Eigen::Vector4d q;  // (w, x, y, z)
  Eigen::Vector4d eigenvalues;
  Eigen::Matrix4d eigenvectors;
};

/// First component with |value| > 1e-8 made non-negative.
Eigen::Vector4d fix_quaternion_sign(Eigen::Vector4d q);

/// Min-eigenvector of A. Throws NetworkError if the two smallest eigenvalues
/// are within 1e-10.
SymmetricQuatOutput min_eigen_quaternion(const Eigen::Matrix4d& a);

/// Gradient of a loss with respect to symmetric perturbations of A, given
/// dL/dq. Returned symmetric: sym((lambda1 I - A)^+ g q^T). Throws
/// NetworkError if the eigenvalue gap is below 1e-8.
Eigen::Matrix4d qnet_backward(const Eigen::Matrix4d& a, const Eigen::Vector4d& q,
                              const Eigen::Vector4d& upstream);
/// Chains a symmetric gradient through symmetric_from_params.
Vector10d symmetric_param_gradient(const Eigen::Matrix4d& g_sym);

/// Tape node mapping 10 x N parameter columns to 4 x N quaternions.
class QuatLayerOp : public ad::CustomOp {
 public:
  std::string_view name() const override { return "min_eigen_quaternion"; }
  ad::Tensor forward(std::span<const ad::Tensor* const> inputs) override;
  void backward(std::span<const ad::Tensor* const> inputs, const ad::Tensor& output,
                const ad::Tensor& output_adjoint,
                std::span<ad::Tensor* const> input_adjoints) override;
};

ad::Tensor quaternion_layer(const ad::Tensor& theta);
ad::Var quaternion_layer(const ad::Var& theta);

/// Glorot-initialised 4 -> hidden... -> 10 network.
MlpParams build_qnet(const std::vector<int>& hidden, std::uint64_t seed);
/// Output bias set to A = diag(0, 1, 1, 1) and output weights scaled by
/// `output_gain`, so the untrained network predicts rotations near the
/// identity (exactly the identity at gain 0).
void bias_to_identity(MlpParams& qnet, double output_gain = 1.0);

/// Quaternions (4 x N) for points x (3 x N) at normalised time tau.
template <class T>
T qnet_forward(const std::vector<LayerT<T>>& layers, const T& input) {
  return quaternion_layer(mlp_forward(layers, 1.0, input));
}

}  // namespace arcflow::nn
