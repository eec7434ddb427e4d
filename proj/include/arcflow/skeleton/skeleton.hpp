#pragma once

// Source skeleton, pose parameters, forward kinematics with SLERP in time,
// and per-epoch sampling of bone, tissue and surface constraint points.

#include "arcflow/meshio/mesh.hpp"
#include "arcflow/skeleton/quaternion.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace arcflow::skel {

class SkeletonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Skeleton {
  Eigen::Matrix3Xd joints;
  std::vector<std::pair<int, int>> edges;  // (parent joint, child joint)
  int root = 0;

  int joint_count() const { return static_cast<int>(joints.cols()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  /// Throws SkeletonError unless the edges form a tree rooted at `root`.
  void validate() const;
  /// Edges ordered so each edge follows the edge ending at its parent joint.
  std::vector<int> edge_order() const;
  /// Per edge, the edge ending at its parent joint (-1 at the root).
  std::vector<int> parent_edges() const;
  double bone_length(int edge) const;
};

Skeleton read_skeleton(std::istream& in);
void write_skeleton(std::ostream& out, const Skeleton& s);
Skeleton load_skeleton(const std::string& path);
void save_skeleton(const Skeleton& s, const std::string& path);
Skeleton transform_skeleton(const Skeleton& s, const mesh::Similarity& t);

/// Global translation and one rotation per edge (relative to its parent).
struct PoseParams {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  std::vector<Quat<double>> rotations;

  static PoseParams identity(int edges);
  int parameter_count() const { return 3 + 4 * static_cast<int>(rotations.size()); }
  /// [translation, q_0, q_1, ...]
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& v);
  void renormalize();
};

/// Absolute per-edge rigid motion x -> s + R(r) x and posed joint positions.
template <class S>
struct Kinematics {
  std::vector<Vec3<S>> translation;
  std::vector<Quat<S>> rotation;
  Eigen::Matrix<S, 3, Eigen::Dynamic> joints;
};

/// Root-to-leaf composition: r_k = r_parent q_k, the root joint moves by the
/// global translation and each child joint is placed by its bone.
template <class S>
Kinematics<S> fwd_kinematics(const Skeleton& skel, const Vec3<S>& translation,
                             const std::vector<Quat<S>>& rotations) {
  if (static_cast<int>(rotations.size()) != skel.edge_count()) {
    throw SkeletonError("pose has " + std::to_string(rotations.size()) + " rotations for " +
                        std::to_string(skel.edge_count()) + " edges");
  }
  const std::vector<int> order = skel.edge_order();
  if (static_cast<int>(order.size()) != skel.edge_count()) throw SkeletonError("cycle detected");
  const std::vector<int> parent = skel.parent_edges();
  Kinematics<S> out;
  out.translation.resize(rotations.size());
  out.rotation.resize(rotations.size());
  out.joints.resize(3, skel.joint_count());
  const Eigen::Matrix3Xd& b = skel.joints;
  out.joints.col(skel.root) = b.col(skel.root).template cast<S>() + translation;
  for (int k : order) {
    const auto [p, c] = skel.edges[static_cast<std::size_t>(k)];
    const Quat<S> local = quat_normalized<S>(rotations[static_cast<std::size_t>(k)]);
    const Quat<S> r = parent[k] < 0 ? local : quat_mul<S>(out.rotation[parent[k]], local);
    const Mat3<S> m = quat_to_matrix<S>(r);
    out.rotation[k] = r;
    const Vec3<S> bp = b.col(p).template cast<S>();
    const Vec3<S> bc = b.col(c).template cast<S>();
    const Vec3<S> jp = out.joints.col(p);
    out.translation[k] = jp - m * bp;
    out.joints.col(c) = out.translation[k] + m * bc;
  }
  return out;
}

Kinematics<double> fwd_kinematics(const Skeleton& skel, const PoseParams& pose);

/// Per-edge motion at normalised time tau in [0, 1]: (tau s_k, r_k^tau).
template <class S>
Kinematics<S> slerp_pose(const Kinematics<S>& final_pose, double tau) {
  if (tau < 0.0 || tau > 1.0) throw SkeletonError("interpolation time outside [0, T]");
  Kinematics<S> out;
  out.translation.reserve(final_pose.translation.size());
  out.rotation.reserve(final_pose.rotation.size());
  for (std::size_t k = 0; k < final_pose.rotation.size(); ++k) {
    out.translation.push_back(final_pose.translation[k] * tau);
    out.rotation.push_back(quat_pow<S>(principal<S>(final_pose.rotation[k]), tau));
  }
  return out;
}

Kinematics<double> slerp_pose(const Kinematics<double>& final_pose, double t, double horizon);

/// s_k(t) + q_k(t) p0 q_k(t)*
Eigen::Vector3d rigid_point_at(const Kinematics<double>& final_pose, int edge,
                               const Eigen::Vector3d& p0, double t, double horizon);

/// Bone motion at one time with derivatives with respect to the flattened
/// pose parameters.
struct BoneMotion {
  Eigen::Matrix3d r;
  Eigen::Vector3d s;
  std::vector<Eigen::Matrix3d> dr;  // one per pose parameter
  std::vector<Eigen::Vector3d> ds;
};
std::vector<BoneMotion> bone_motion(const Skeleton& skel, const PoseParams& pose, double tau);

// ---------------------------------------------------------------------------
// Sampling.

struct BoneAlpha {
  double tau = 0.0;  // along the axis, [0, 1]
  double rho = 0.0;  // radial fraction, [0, 1]
  double psi = 0.0;  // angle, [0, 2 pi)
};

/// Point in the cylinder of radius `radius_fraction` x bone length.
Eigen::Vector3d sample_bone_point(const Skeleton& skel, int edge, const BoneAlpha& alpha,
                                  double radius_fraction);

struct ConstraintCounts {
  int bone_per_edge = 50;
  int tissue_per_edge = 50;
  int surface = 500;
};

struct ConstraintRadii {
  double bone = 0.10;
  double tissue = 0.25;
};

struct ConstraintSets {
  Eigen::Matrix3Xd bone;
  std::vector<int> bone_edge;
  Eigen::Matrix3Xd tissue;
  std::vector<int> tissue_edge;
  std::vector<int> surface;  // vertex indices, drawn by vertex area
};

/// Fresh draws for one epoch, fixed by (seed, epoch). Tissue points lie in
/// the annulus between the bone and tissue radii and inside the mesh.
ConstraintSets sample_constraint_sets(const Skeleton& skel, const mesh::TriMesh& mesh,
                                      const ConstraintCounts& counts, const ConstraintRadii& radii,
                                      std::uint64_t seed, std::uint64_t epoch);

}  // namespace arcflow::skel
