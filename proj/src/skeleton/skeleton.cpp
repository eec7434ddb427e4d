#include "arcflow/skeleton/skeleton.hpp"

#include "arcflow/util/numtext.hpp"

#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

namespace arcflow::skel {

void Skeleton::validate() const {
  const int n = joint_count();
  if (n == 0) throw SkeletonError("skeleton has no joints");
  if (root < 0 || root >= n) throw SkeletonError("root joint out of range");
  if (edge_count() != n - 1) {
    throw SkeletonError("a tree on " + std::to_string(n) + " joints needs " +
                        std::to_string(n - 1) + " edges, found " + std::to_string(edge_count()));
  }
  std::vector<int> parents(static_cast<std::size_t>(n), 0);
  for (const auto& [p, c] : edges) {
    if (p < 0 || p >= n || c < 0 || c >= n) throw SkeletonError("edge joint out of range");
    if (p == c) throw SkeletonError("edge from joint " + std::to_string(p) + " to itself");
    parents[c]++;
  }
  for (int j = 0; j < n; ++j) {
    const int want = j == root ? 0 : 1;
    if (parents[j] != want) {
      throw SkeletonError("joint " + std::to_string(j) + " has " + std::to_string(parents[j]) +
                          " parent edges");
    }
  }
  if (static_cast<int>(edge_order().size()) != edge_count()) {
    throw SkeletonError("cycle detected: not every joint is reachable from the root");
  }
  for (int k = 0; k < edge_count(); ++k) {
    if (!(bone_length(k) > 0.0)) throw SkeletonError("bone " + std::to_string(k) + " has zero length");
  }
}

std::vector<int> Skeleton::edge_order() const {
  std::multimap<int, int> by_parent;
  for (int k = 0; k < edge_count(); ++k) by_parent.emplace(edges[k].first, k);
  std::vector<int> order;
  std::queue<int> joints_queue;
  joints_queue.push(root);
  std::vector<char> seen(static_cast<std::size_t>(joint_count()), 0);
  seen[root] = 1;
  while (!joints_queue.empty()) {
    const int j = joints_queue.front();
    joints_queue.pop();
    auto [lo, hi] = by_parent.equal_range(j);
    for (auto it = lo; it != hi; ++it) {
      const int c = edges[it->second].second;
      if (seen[c]) continue;
      seen[c] = 1;
      order.push_back(it->second);
      joints_queue.push(c);
    }
  }
  return order;
}

std::vector<int> Skeleton::parent_edges() const {
  std::vector<int> into(static_cast<std::size_t>(joint_count()), -1);
  for (int k = 0; k < edge_count(); ++k) into[edges[k].second] = k;
  std::vector<int> out(edges.size());
  for (int k = 0; k < edge_count(); ++k) out[k] = into[edges[k].first];
  return out;
}

double Skeleton::bone_length(int k) const {
  const auto [p, c] = edges.at(static_cast<std::size_t>(k));
  return (joints.col(c) - joints.col(p)).norm();
}

Skeleton read_skeleton(std::istream& in) {
  std::map<long long, Eigen::Vector3d> joints;
  Skeleton s;
  bool has_root = false;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw SkeletonError("skeleton line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    try {
      if (tag == "joint") {
        if (tok.size() != 4) fail("expected 'joint id x y z'");
        const long long id = util::parse_int(tok[0]);
        const Eigen::Vector3d p(util::parse_double(tok[1]), util::parse_double(tok[2]),
                                util::parse_double(tok[3]));
        if (!joints.emplace(id, p).second) fail("duplicate joint " + tok[0]);
      } else if (tag == "edge") {
        if (tok.size() != 2) fail("expected 'edge parent child'");
        s.edges.emplace_back(static_cast<int>(util::parse_int(tok[0])),
                             static_cast<int>(util::parse_int(tok[1])));
      } else if (tag == "root") {
        if (tok.size() != 1) fail("expected 'root id'");
        s.root = static_cast<int>(util::parse_int(tok[0]));
        has_root = true;
      } else {
        fail("unknown record '" + tag + "'");
      }
    } catch (const std::invalid_argument& e) {
      fail(std::string("bad number: ") + e.what());
    }
  }
  if (!has_root) throw SkeletonError("skeleton has no root record");
  s.joints.resize(3, static_cast<Eigen::Index>(joints.size()));
  long long expect = 0;
  for (const auto& [id, p] : joints) {
    if (id != expect) throw SkeletonError("joint ids must be 0..n-1, missing " + std::to_string(expect));
    s.joints.col(id) = p;
    ++expect;
  }
  s.validate();
  return s;
}

void write_skeleton(std::ostream& out, const Skeleton& s) {
  using util::format_double;
  for (int j = 0; j < s.joint_count(); ++j) {
    out << "joint " << j << ' ' << format_double(s.joints(0, j)) << ' '
        << format_double(s.joints(1, j)) << ' ' << format_double(s.joints(2, j)) << '\n';
  }
  for (const auto& [p, c] : s.edges) out << "edge " << p << ' ' << c << '\n';
  out << "root " << s.root << '\n';
}

Skeleton load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SkeletonError("cannot open " + path);
  return read_skeleton(in);
}

void save_skeleton(const Skeleton& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SkeletonError("cannot write " + path);
  write_skeleton(out, s);
}

Skeleton transform_skeleton(const Skeleton& s, const mesh::Similarity& t) {
  Skeleton out = s;
  out.joints = t.apply(s.joints);
  return out;
}

// ---------------------------------------------------------------------------

PoseParams PoseParams::identity(int edges) {
  PoseParams p;
  p.rotations.assign(static_cast<std::size_t>(edges), identity_quat<double>());
  return p;
}

Eigen::VectorXd PoseParams::flatten() const {
  Eigen::VectorXd v(parameter_count());
  v.head<3>() = translation;
  for (std::size_t k = 0; k < rotations.size(); ++k) v.segment<4>(3 + 4 * k) = rotations[k];
  return v;
}

void PoseParams::unflatten(const Eigen::VectorXd& v) {
  if (v.size() != parameter_count()) throw SkeletonError("pose vector has the wrong length");
  translation = v.head<3>();
  for (std::size_t k = 0; k < rotations.size(); ++k) rotations[k] = v.segment<4>(3 + 4 * k);
}

void PoseParams::renormalize() {
  for (auto& q : rotations) q.normalize();
}

Kinematics<double> fwd_kinematics(const Skeleton& skel, const PoseParams& pose) {
  return fwd_kinematics<double>(skel, pose.translation, pose.rotations);
}

Kinematics<double> slerp_pose(const Kinematics<double>& final_pose, double t, double horizon) {
  return slerp_pose<double>(final_pose, t / horizon);
}

Eigen::Vector3d rigid_point_at(const Kinematics<double>& final_pose, int edge,
                               const Eigen::Vector3d& p0, double t, double horizon) {
  const double tau = t / horizon;
  if (tau < 0.0 || tau > 1.0) throw SkeletonError("time outside [0, T]");
  const auto k = static_cast<std::size_t>(edge);
  const Quat<double> q = quat_pow<double>(principal<double>(final_pose.rotation.at(k)), tau);
  return tau * final_pose.translation[k] + quat_rotate<double>(q, p0);
}

std::vector<BoneMotion> bone_motion(const Skeleton& skel, const PoseParams& pose, double tau) {
  using Ad = Eigen::AutoDiffScalar<Eigen::VectorXd>;
  const int n = pose.parameter_count();
  const Eigen::VectorXd flat = pose.flatten();
  auto var = [&](int i) { return Ad(flat(i), n, i); };
  Vec3<Ad> s(var(0), var(1), var(2));
  std::vector<Quat<Ad>> q;
  for (std::size_t k = 0; k < pose.rotations.size(); ++k) {
    const int o = 3 + 4 * static_cast<int>(k);
    q.emplace_back(var(o), var(o + 1), var(o + 2), var(o + 3));
  }
  const Kinematics<Ad> at = slerp_pose<Ad>(fwd_kinematics<Ad>(skel, s, q), tau);
  std::vector<BoneMotion> out(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) {
    const Mat3<Ad> r = quat_to_matrix<Ad>(at.rotation[k]);
    BoneMotion& b = out[k];
    b.dr.assign(static_cast<std::size_t>(n), Eigen::Matrix3d::Zero());
    b.ds.assign(static_cast<std::size_t>(n), Eigen::Vector3d::Zero());
    for (int i = 0; i < 3; ++i) {
      b.s(i) = at.translation[k](i).value();
      const Eigen::VectorXd& d = at.translation[k](i).derivatives();
      for (Eigen::Index p = 0; p < d.size(); ++p) b.ds[p](i) = d(p);
      for (int j = 0; j < 3; ++j) {
        b.r(i, j) = r(i, j).value();
        const Eigen::VectorXd& dm = r(i, j).derivatives();
        for (Eigen::Index p = 0; p < dm.size(); ++p) b.dr[p](i, j) = dm(p);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void bone_frame(const Skeleton& skel, int edge, Eigen::Vector3d& base, Eigen::Vector3d& axis,
                Eigen::Vector3d& u, Eigen::Vector3d& v) {
  const auto [p, c] = skel.edges.at(static_cast<std::size_t>(edge));
  base = skel.joints.col(p);
  axis = skel.joints.col(c) - base;
  if (!(axis.norm() > 0.0)) throw SkeletonError("bone " + std::to_string(edge) + " has zero length");
  u = axis.unitOrthogonal();
  v = axis.normalized().cross(u);
}

}  // namespace

Eigen::Vector3d sample_bone_point(const Skeleton& skel, int edge, const BoneAlpha& a,
                                  double radius_fraction) {
  Eigen::Vector3d base, axis, u, v;
  bone_frame(skel, edge, base, axis, u, v);
  const double r = a.rho * radius_fraction * axis.norm();
  return base + a.tau * axis + r * (std::cos(a.psi) * u + std::sin(a.psi) * v);
}

ConstraintSets sample_constraint_sets(const Skeleton& skel, const mesh::TriMesh& m,
                                      const ConstraintCounts& counts, const ConstraintRadii& radii,
                                      std::uint64_t seed, std::uint64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  ConstraintSets out;

  std::vector<Eigen::Vector3d> bone, tissue;
  for (int k = 0; k < skel.edge_count(); ++k) {
    for (int i = 0; i < counts.bone_per_edge; ++i) {
      BoneAlpha a{unit(rng), std::sqrt(unit(rng)), two_pi * unit(rng)};
      bone.push_back(sample_bone_point(skel, k, a, radii.bone));
      out.bone_edge.push_back(k);
    }
    // Annulus between the two radii, uniform by area; rejected outside the body.
    const double inner2 = radii.bone * radii.bone;
    const double outer2 = radii.tissue * radii.tissue;
    int accepted = 0;
    for (int attempt = 0; accepted < counts.tissue_per_edge && attempt < 20 * counts.tissue_per_edge;
         ++attempt) {
      const double frac = std::sqrt(inner2 + unit(rng) * (outer2 - inner2));
      BoneAlpha a{unit(rng), 1.0, two_pi * unit(rng)};
      const Eigen::Vector3d p = sample_bone_point(skel, k, a, frac);
      if (m.face_count() > 0 && !mesh::point_inside(m, p)) continue;
      tissue.push_back(p);
      out.tissue_edge.push_back(k);
      ++accepted;
    }
  }
  auto pack = [](const std::vector<Eigen::Vector3d>& v) {
    Eigen::Matrix3Xd x(3, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) x.col(i) = v[i];
    return x;
  };
  out.bone = pack(bone);
  out.tissue = pack(tissue);

  if (counts.surface > 0 && m.vertex_count() > 0) {
    const Eigen::VectorXd area = m.vertex_areas();
    std::discrete_distribution<int> pick(area.data(), area.data() + area.size());
    out.surface.resize(static_cast<std::size_t>(counts.surface));
    for (int& i : out.surface) i = pick(rng);
  }
  return out;
}

}  // namespace arcflow::skel
