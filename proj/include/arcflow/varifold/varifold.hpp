#pragma once

// Discrete oriented varifolds: points with unit normals and weights, the
// Gaussian product kernel, and ridge-leverage-score compression.

#include "arcflow/autodiff/tape.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace arcflow::vf {

class VarifoldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VarifoldSurface {
  Eigen::Matrix3Xd points;
  Eigen::Matrix3Xd normals;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return points.cols(); }
  /// Throws VarifoldError on length mismatch or non-unit normals; with
  /// `positive_weights`, also on weights <= 0.
  void validate(bool positive_weights = true) const;
};

struct KernelConfig {
  double ell_x = 0.5;
  double ell_n = 0.5;
  void validate() const;
};

struct CompressionConfig {
  int m = 0;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  double jitter = 1e-8;  // relative to trace(K_CC) / |C|
};

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& v, double ell);

/// Tree summation of a contiguous range.
double pairwise_sum(std::span<const double> values);

/// K(i, j) = kx(x_i, y_j) kn(n_i, m_j).
Eigen::MatrixXd kernel_matrix(const VarifoldSurface& x, const VarifoldSurface& y,
                              const KernelConfig& k);

double inner_product(const VarifoldSurface& x, const VarifoldSurface& y, const KernelConfig& k);

/// <X,X> - 2<X,Y> + <Y,Y>, tiny negatives clamped to 0.
double distance(const VarifoldSurface& x, const VarifoldSurface& y, const KernelConfig& k);

/// Gradient of <X,X> - 2<X,Y> with respect to X's points, normals (treated as
/// free vectors) and weights.
struct DistanceGradient {
  double value = 0.0;  // <X,X> - 2<X,Y>
  Eigen::Matrix3Xd d_points;
  Eigen::Matrix3Xd d_normals;
  Eigen::VectorXd d_weights;
};
DistanceGradient distance_gradient(const VarifoldSurface& x, const VarifoldSurface& y,
                                   const KernelConfig& k);

/// Tape node: inputs points (3xN), unit normals (3xN), weights (1xN); output
/// the 1x1 distance to a fixed target whose self-product is cached.
class DistanceOp : public ad::CustomOp {
 public:
  DistanceOp(VarifoldSurface target, KernelConfig k);
  std::string_view name() const override { return "varifold_distance"; }
  ad::Tensor forward(std::span<const ad::Tensor* const> inputs) override;
  void backward(std::span<const ad::Tensor* const> inputs, const ad::Tensor& output,
                const ad::Tensor& output_adjoint,
                std::span<ad::Tensor* const> input_adjoints) override;
  double target_self_product() const { return yy_; }

 private:
  VarifoldSurface target_;
  KernelConfig k_;
  double yy_;
};

/// Distance from the varifold (x, n / |n|, s |n|) to `target`. Unnormalised
/// normals n carry the area change, so the weights follow them.
ad::Var varifold_distance(const ad::Var& points, const ad::Var& raw_normals,
                          const ad::Tensor& base_weights, const VarifoldSurface& target,
                          const KernelConfig& k);
/// Same, reusing an op (and its cached target self-product).
ad::Var varifold_distance(const ad::Var& points, const ad::Var& raw_normals,
                          const ad::Tensor& base_weights, std::shared_ptr<DistanceOp> op);

// ---------------------------------------------------------------------------
// Compression.

/// Batch index lists: a seeded permutation cut into floor(n / b) batches of
/// b = floor(sqrt(n)), leftovers dealt round-robin.
std::vector<std::vector<int>> rls_batches(int n, std::uint64_t seed);

/// Leverage score of each point within its own batch: [K (K + lambda I)^-1]_ii.
Eigen::VectorXd rls_scores(const VarifoldSurface& y, const KernelConfig& k,
                           const CompressionConfig& cfg);

/// m independent draws with probability proportional to the scores.
std::vector<int> rls_sample(const Eigen::VectorXd& scores, int m, std::uint64_t seed);

/// Solves (K_CC + jitter I) beta = K_CY s_Y. `selected` must be duplicate-free.
Eigen::VectorXd compression_weights(const VarifoldSurface& y, const std::vector<int>& selected,
                                    const KernelConfig& k, const CompressionConfig& cfg);

VarifoldSurface subset(const VarifoldSurface& y, const std::vector<int>& indices);

struct CompressionResult {
  VarifoldSurface surface;
  std::vector<int> indices;  // sorted, unique
  Eigen::VectorXd scores;
};
CompressionResult compress(const VarifoldSurface& y, const KernelConfig& k,
                           const CompressionConfig& cfg);

// ---------------------------------------------------------------------------
// Files.

struct CompressedFile {
  VarifoldSurface surface;
  KernelConfig kernel;
  double lambda = 1.0;
  std::uint64_t seed = 0;
};

void write_compressed(std::ostream& out, const CompressedFile& file);
CompressedFile read_compressed(std::istream& in);
void save_compressed(const std::string& path, const CompressedFile& file);
CompressedFile load_compressed(const std::string& path);

}  // namespace arcflow::vf
