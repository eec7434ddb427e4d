#pragma once

// Loss terms and their gradients.
//
// Every term follows one pattern: integrate a group of particles (points,
// optionally with a normal or tangent frame) over the time grid, score the
// states at some nodes, then send the state adjoints back through the RK4
// steps in reverse. Each step is re-recorded on a fresh tape from the stored
// node state, so memory stays at one step's worth of tape.

#include "arcflow/meshio/mesh.hpp"
#include "arcflow/networks/qnet.hpp"
#include "arcflow/odesolve/rk4.hpp"
#include "arcflow/skeleton/skeleton.hpp"
#include "arcflow/varifold/varifold.hpp"

#include <Eigen/Dense>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace arcflow::loss {

using ad::Tensor;

enum class Stage { kMain, kFineTune };

struct LossWeights {
  double lambda1 = 2e2;  // skeleton
  double lambda2 = 1e1;  // soft tissue
  double lambda3 = 5e3;  // surface

  static LossWeights defaults(Stage stage);
  void validate() const;
};

struct FlowModel {
  nn::MlpParams arcnet;
  nn::MlpParams qnet;  // may be empty when no frame terms are used
  skel::PoseParams pose;

  Eigen::Index parameter_count() const;
  /// [arcnet, qnet, pose]
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
};

struct Problem {
  mesh::TriMesh source_mesh;
  vf::VarifoldSurface source;  // vertices, unit normals, vertex areas
  vf::VarifoldSurface target;
  skel::Skeleton skeleton;     // no edges: skeleton and tissue terms vanish
  ode::TimeGrid grid;

  /// Source varifold from the mesh.
  static Problem make(mesh::TriMesh source_mesh, vf::VarifoldSurface target,
                      skel::Skeleton skeleton, ode::TimeGrid grid);
  void validate() const;
};

struct LossTerms {
  double varifold = 0.0;
  double skeleton = 0.0;
  double soft = 0.0;
  double surf = 0.0;
  double full = 0.0;

  bool finite() const;
  std::string describe() const;
};

/// conj(q) b q for unit quaternions q (4 x N) and vectors b (3 x N).
template <class T>
T rotate_conjugate(const T& q, const T& b) {
  using ad::add;
  using ad::cross;
  using ad::mul;
  using ad::scale;
  using ad::slice;
  using ad::sub;
  const T w = slice(q, 0, 1);
  const T v = slice(q, 1, 3);
  const T vb = cross(v, b);
  return add(sub(b, scale(mul(w, vb), 2.0)), scale(cross(v, vb), 2.0));
}

/// Sum over points of sum_j |b_j - r_j|^2 + (1/J) sum_j (|b_j| - 1)^2 for J
/// frame columns b_j (each 3 x N) and reference columns r_j (3 x N or 3 x 1).
template <class T>
T frame_penalty(const std::vector<T>& cols, const std::vector<Tensor>& refs) {
  using ad::add;
  using ad::dot;
  using ad::mul;
  using ad::norm;
  using ad::scale;
  using ad::shift;
  using ad::sub;
  using ad::sum;
  if (refs.size() != cols.size()) throw std::invalid_argument("frame_penalty: one reference per column");
  T total;
  const double stretch = 1.0 / static_cast<double>(cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const T d = sub(cols[j], ad::const_like(cols[j], refs[j]));
    const T s = shift(norm(cols[j]), -1.0);
    const T term = add(sum(dot(d, d)), scale(sum(mul(s, s)), stretch));
    total = j == 0 ? term : add(total, term);
  }
  return total;
}

/// Unit axis e_j as a 3 x 1 reference column.
inline Tensor axis_column(int j) { return Tensor(Eigen::Vector3d::Unit(j)); }

/// Gradient blocks laid out like FlowModel::flatten.
struct ModelGradient {
  Eigen::VectorXd arcnet;
  Eigen::VectorXd qnet;
  Eigen::VectorXd pose;

  Eigen::VectorXd flatten() const;
};

/// Constraint points for one evaluation, plus the surface frames.
struct Samples {
  skel::ConstraintSets sets;
  Eigen::Matrix3Xd surface_points;
  Eigen::Matrix3Xd surface_normals;
};
Samples make_samples(const Problem& problem, skel::ConstraintSets sets);

class LossEvaluator {
 public:
  explicit LossEvaluator(const Problem& problem);

  void set_kernel(const vf::KernelConfig& k);
  const vf::KernelConfig& kernel() const { return kernel_; }

  /// All four terms; gradient of the weighted sum when `grad` is given.
  LossTerms evaluate(const FlowModel& model, const Samples& samples, const LossWeights& w,
                     ModelGradient* grad = nullptr) const;
  /// Same terms with the flow taken from `field` (the network when a
  /// gradient is requested).
  LossTerms evaluate(const flow::VelocityField& field, const FlowModel& model, const Samples& samples,
                     const LossWeights& w, ModelGradient* grad = nullptr) const;

  double varifold(const FlowModel& model) const;
  double skeleton(const FlowModel& model, const Eigen::Matrix3Xd& bone,
                  const std::vector<int>& bone_edge) const;
  double soft(const FlowModel& model, const Eigen::Matrix3Xd& tissue) const;
  double surf(const FlowModel& model, const Eigen::Matrix3Xd& points,
              const Eigen::Matrix3Xd& normals) const;

 private:
  const Problem& problem_;
  vf::KernelConfig kernel_;
  std::shared_ptr<vf::DistanceOp> op_;
};

/// States at every grid node, starting with `initial`.
std::vector<ode::FlowState<Tensor>> flow_nodes(const flow::VelocityField& field, const ode::TimeGrid& grid,
                                               const ode::FlowState<Tensor>& initial);

/// Pulls node adjoints back to t = 0 through the RK4 steps, adding the
/// network gradient into `net_grad`. Returns the adjoint of the initial state.
ode::FlowState<Tensor> reverse_sweep(const nn::MlpParams& net, const ode::TimeGrid& grid,
                                     const std::vector<ode::FlowState<Tensor>>& nodes,
                                     std::vector<ode::FlowState<Tensor>> node_adjoints,
                                     Eigen::VectorXd& net_grad);

/// Orthonormal tangents (t1, t2) with (n, t1, t2) right-handed.
std::pair<Eigen::Vector3d, Eigen::Vector3d> tangent_pair(const Eigen::Vector3d& n);

}  // namespace arcflow::loss
