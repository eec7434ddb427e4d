#include "arcflow/losses/terms.hpp"

#include <cmath>
#include <sstream>

namespace arcflow::loss {

using ode::FlowState;

LossWeights LossWeights::defaults(Stage stage) {
  if (stage == Stage::kFineTune) return {1e3, 1e2, 5e3};
  return {2e2, 1e1, 5e3};
}

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

Eigen::Index FlowModel::parameter_count() const {
  return static_cast<Eigen::Index>(arcnet.parameter_count() + qnet.parameter_count()) +
         pose.parameter_count();
}

Eigen::VectorXd FlowModel::flatten() const {
  Eigen::VectorXd out(parameter_count());
  const Eigen::VectorXd a = nn::flatten(arcnet);
  const Eigen::VectorXd q = nn::flatten(qnet);
  out << a, q, pose.flatten();
  return out;
}

void FlowModel::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("model vector has the wrong length");
  const auto na = static_cast<Eigen::Index>(arcnet.parameter_count());
  const auto nq = static_cast<Eigen::Index>(qnet.parameter_count());
  nn::unflatten(arcnet, flat.head(na));
  nn::unflatten(qnet, flat.segment(na, nq));
  pose.unflatten(flat.tail(pose.parameter_count()));
}

Eigen::VectorXd ModelGradient::flatten() const {
  Eigen::VectorXd out(arcnet.size() + qnet.size() + pose.size());
  out << arcnet, qnet, pose;
  return out;
}

Problem Problem::make(mesh::TriMesh source_mesh, vf::VarifoldSurface target, skel::Skeleton skeleton,
                      ode::TimeGrid grid) {
  Problem p;
  p.source = mesh::to_varifold(source_mesh);
  p.source_mesh = std::move(source_mesh);
  p.target = std::move(target);
  p.skeleton = std::move(skeleton);
  p.grid = grid;
  p.validate();
  return p;
}

void Problem::validate() const {
  source.validate();
  target.validate(false);
  grid.validate();
  if (skeleton.edge_count() > 0) skeleton.validate();
}

bool LossTerms::finite() const {
  return std::isfinite(varifold) && std::isfinite(skeleton) && std::isfinite(soft) &&
         std::isfinite(surf) && std::isfinite(full);
}

std::string LossTerms::describe() const {
  std::ostringstream s;
  s << "varifold=" << varifold << " skeleton=" << skeleton << " soft=" << soft << " surf=" << surf
    << " full=" << full;
  return s.str();
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> tangent_pair(const Eigen::Vector3d& n) {
  if (!(n.norm() > 1e-12)) throw std::invalid_argument("degenerate surface normal");
  const Eigen::Vector3d u = n.normalized();
  const Eigen::Vector3d t1 = u.unitOrthogonal();
  return {t1, u.cross(t1)};
}

Samples make_samples(const Problem& problem, skel::ConstraintSets sets) {
  Samples s;
  const auto n = static_cast<Eigen::Index>(sets.surface.size());
  s.surface_points.resize(3, n);
  s.surface_normals.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int v = sets.surface[static_cast<std::size_t>(i)];
    s.surface_points.col(i) = problem.source.points.col(v);
    s.surface_normals.col(i) = problem.source.normals.col(v);
  }
  s.sets = std::move(sets);
  return s;
}

// ---------------------------------------------------------------------------
// Integration and the reverse sweep.

namespace {

FlowState<Tensor> zeros_like_state(const FlowState<Tensor>& s) {
  FlowState<Tensor> z;
  z.x = Tensor::Zero(s.x.rows(), s.x.cols());
  if (s.n) z.n = Tensor::Zero(s.n->rows(), s.n->cols());
  for (const Tensor& b : s.tangents) z.tangents.push_back(Tensor::Zero(b.rows(), b.cols()));
  return z;
}

void add_into(FlowState<Tensor>& acc, const FlowState<Tensor>& a) {
  acc.x += a.x;
  if (acc.n) *acc.n += *a.n;
  for (std::size_t i = 0; i < acc.tangents.size(); ++i) acc.tangents[i] += a.tangents[i];
}

Eigen::VectorXd layer_adjoints(const nn::MlpParams& shape,
                               const std::vector<nn::LayerT<ad::Var>>& layers) {
  nn::MlpParams g = shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    g.layers[i].w = layers[i].w.adjoint();
    g.layers[i].b = layers[i].b.adjoint();
  }
  return nn::flatten(g);
}

Tensor tau_row(Eigen::Index n, double tau) { return Tensor::Constant(1, n, tau); }

}  // namespace

std::vector<FlowState<Tensor>> flow_nodes(const flow::VelocityField& field, const ode::TimeGrid& grid,
                                          const FlowState<Tensor>& initial) {
  std::vector<double> times;
  for (int l = 0; l <= grid.steps; ++l) times.push_back(grid.node(l));
  return ode::ode_solve_batch(field, grid, initial, times).states;
}

FlowState<Tensor> reverse_sweep(const nn::MlpParams& net, const ode::TimeGrid& grid,
                                const std::vector<FlowState<Tensor>>& nodes,
                                std::vector<FlowState<Tensor>> node_adjoints,
                                Eigen::VectorXd& net_grad) {
  if (nodes.size() != static_cast<std::size_t>(grid.steps + 1) ||
      node_adjoints.size() != nodes.size()) {
    throw std::invalid_argument("reverse sweep needs one state and adjoint per node");
  }
  if (net_grad.size() == 0) net_grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  FlowState<Tensor> a = std::move(node_adjoints[grid.steps]);
  for (int l = grid.steps - 1; l >= 0; --l) {
    ad::Tape tape;
    const std::vector<nn::LayerT<ad::Var>> layers = nn::on_tape(tape, net);
    const FlowState<Tensor>& s = nodes[static_cast<std::size_t>(l)];
    FlowState<ad::Var> in;
    in.x = tape.param(s.x);
    if (s.n) in.n = tape.param(*s.n);
    for (const Tensor& b : s.tangents) in.tangents.push_back(tape.param(b));
    const flow::NetworkField<ad::Var> field{&layers, net.omega0, grid.horizon};
    const FlowState<ad::Var> out = ode::rk4_step(field, in, grid.node(l), grid.h());

    std::vector<std::pair<ad::Var, Tensor>> seeds;
    seeds.emplace_back(out.x, a.x);
    if (out.n) seeds.emplace_back(*out.n, *a.n);
    for (std::size_t i = 0; i < out.tangents.size(); ++i) seeds.emplace_back(out.tangents[i], a.tangents[i]);
    tape.backward(seeds);

    net_grad += layer_adjoints(net, layers);
    FlowState<Tensor> prev;
    prev.x = in.x.adjoint();
    if (in.n) prev.n = in.n->adjoint();
    for (const ad::Var& b : in.tangents) prev.tangents.push_back(b.adjoint());
    add_into(prev, node_adjoints[static_cast<std::size_t>(l)]);
    a = std::move(prev);
  }
  return a;
}

// ---------------------------------------------------------------------------

LossEvaluator::LossEvaluator(const Problem& problem) : problem_(problem) {
  set_kernel(vf::KernelConfig{});
}

void LossEvaluator::set_kernel(const vf::KernelConfig& k) {
  k.validate();
  kernel_ = k;
  op_ = std::make_shared<vf::DistanceOp>(problem_.target, k);
}

namespace {

struct GroupResult {
  double value = 0.0;
  std::vector<FlowState<Tensor>> adjoints;  // per node, already weighted
};

// Frame penalty at every node after t = 0. Adds the weighted Q-Net gradient.
GroupResult frame_term(const nn::MlpParams& qnet, const ode::TimeGrid& grid,
                       const std::vector<FlowState<Tensor>>& nodes, const std::vector<Tensor>& refs,
                       double weight, Eigen::VectorXd* qnet_grad) {
  GroupResult r;
  const bool want = qnet_grad != nullptr;
  if (want) {
    r.adjoints.reserve(nodes.size());
    for (const auto& s : nodes) r.adjoints.push_back(zeros_like_state(s));
  }
  for (int l = 1; l <= grid.steps; ++l) {
    const FlowState<Tensor>& s = nodes[static_cast<std::size_t>(l)];
    const double tau = grid.node(l) / grid.horizon;
    ad::Tape tape;
    const std::vector<nn::LayerT<ad::Var>> layers = nn::on_tape(tape, qnet);
    const ad::Var x = tape.param(s.x);
    std::vector<ad::Var> b;
    for (const Tensor& t : s.tangents) b.push_back(tape.param(t));
    const ad::Var q = nn::qnet_forward(layers, ad::concat({x, tape.constant(tau_row(s.x.cols(), tau))}));
    std::vector<ad::Var> rotated;
    for (const ad::Var& col : b) rotated.push_back(rotate_conjugate(q, col));
    const ad::Var pen = frame_penalty(rotated, refs);
    r.value += pen.value()(0, 0);
    if (!want) continue;
    tape.backward(pen, Tensor::Constant(1, 1, weight));
    *qnet_grad += layer_adjoints(qnet, layers);
    FlowState<Tensor>& a = r.adjoints[static_cast<std::size_t>(l)];
    a.x = x.adjoint();
    for (std::size_t j = 0; j < b.size(); ++j) a.tangents[j] = b[j].adjoint();
  }
  return r;
}

FlowState<Tensor> frame_state(const Eigen::Matrix3Xd& x, const std::vector<Eigen::Matrix3Xd>& cols) {
  FlowState<Tensor> s{Tensor(x), std::nullopt, {}};
  for (const auto& c : cols) s.tangents.emplace_back(c);
  return s;
}

FlowState<Tensor> tissue_state(const Eigen::Matrix3Xd& x) {
  std::vector<Eigen::Matrix3Xd> cols;
  for (int j = 0; j < 3; ++j) {
    Eigen::Matrix3Xd e = Eigen::Matrix3Xd::Zero(3, x.cols());
    e.row(j).setOnes();
    cols.push_back(e);
  }
  return frame_state(x, cols);
}

FlowState<Tensor> surface_state(const Eigen::Matrix3Xd& x, const Eigen::Matrix3Xd& normals) {
  Eigen::Matrix3Xd t1(3, x.cols()), t2(3, x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const auto [a, b] = tangent_pair(normals.col(i));
    t1.col(i) = a;
    t2.col(i) = b;
  }
  return frame_state(x, {t1, t2});
}

}  // namespace

LossTerms LossEvaluator::evaluate(const FlowModel& model, const Samples& samples,
                                  const LossWeights& w, ModelGradient* grad) const {
  return evaluate(flow::VelocityField(model.arcnet, problem_.grid.horizon), model, samples, w, grad);
}

LossTerms LossEvaluator::evaluate(const flow::VelocityField& field, const FlowModel& model,
                                  const Samples& samples, const LossWeights& w,
                                  ModelGradient* grad) const {
  w.validate();
  const ode::TimeGrid& grid = problem_.grid;
  const nn::MlpParams& net = model.arcnet;
  if (grad && !field.is_network()) throw std::invalid_argument("gradients need the network field");
  LossTerms terms;
  if (grad) {
    grad->arcnet = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
    grad->qnet = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.qnet.parameter_count()));
    grad->pose = Eigen::VectorXd::Zero(model.pose.parameter_count());
  }

  // Varifold matching at t = T.
  {
    const FlowState<Tensor> init{Tensor(problem_.source.points), Tensor(problem_.source.normals), {}};
    const auto nodes = flow_nodes(field, grid, init);
    const FlowState<Tensor>& end = nodes.back();
    ad::Tape tape;
    const ad::Var x = tape.param(end.x);
    const ad::Var n = tape.param(*end.n);
    const ad::Var d = vf::varifold_distance(x, n, problem_.source.weights.transpose(), op_);
    terms.varifold = d.value()(0, 0);
    if (grad) {
      tape.backward(d);
      std::vector<FlowState<Tensor>> adj;
      for (const auto& s : nodes) adj.push_back(zeros_like_state(s));
      adj.back().x = x.adjoint();
      adj.back().n = n.adjoint();
      reverse_sweep(net, grid, nodes, std::move(adj), grad->arcnet);
    }
  }

  // Skeleton: flowed bone samples against the interpolated rigid motion.
  const skel::ConstraintSets& sets = samples.sets;
  if (problem_.skeleton.edge_count() > 0 && sets.bone.cols() > 0) {
    const FlowState<Tensor> init{Tensor(sets.bone), std::nullopt, {}};
    const auto nodes = flow_nodes(field, grid, init);
    std::vector<FlowState<Tensor>> adj;
    if (grad) {
      for (const auto& s : nodes) adj.push_back(zeros_like_state(s));
    }
    const int np = model.pose.parameter_count();
    for (int l = 1; l <= grid.steps; ++l) {
      const double tau = grid.node(l) / grid.horizon;
      const Tensor& x = nodes[static_cast<std::size_t>(l)].x;
      std::vector<skel::BoneMotion> motion;
      skel::Kinematics<double> kin;
      if (grad) {
        motion = skel::bone_motion(problem_.skeleton, model.pose, tau);
      } else {
        kin = skel::slerp_pose<double>(skel::fwd_kinematics(problem_.skeleton, model.pose), tau);
      }
      for (Eigen::Index m = 0; m < sets.bone.cols(); ++m) {
        const auto k = static_cast<std::size_t>(sets.bone_edge[static_cast<std::size_t>(m)]);
        const Eigen::Vector3d p0 = sets.bone.col(m);
        Eigen::Vector3d pred;
        if (grad) {
          pred = motion[k].r * p0 + motion[k].s;
        } else {
          pred = skel::quat_to_matrix<double>(kin.rotation[k]) * p0 + kin.translation[k];
        }
        const Eigen::Vector3d r = pred - x.col(m);
        terms.skeleton += r.squaredNorm();
        if (!grad) continue;
        adj[static_cast<std::size_t>(l)].x.col(m) = -2.0 * w.lambda1 * r;
        for (int p = 0; p < np; ++p) {
          grad->pose(p) += 2.0 * w.lambda1 * r.dot(motion[k].dr[p] * p0 + motion[k].ds[p]);
        }
      }
    }
    if (grad && w.lambda1 > 0.0) reverse_sweep(net, grid, nodes, std::move(adj), grad->arcnet);
  }

  // Soft tissue and surface frames.
  const bool has_qnet = !model.qnet.layers.empty();
  if (has_qnet && sets.tissue.cols() > 0) {
    const auto nodes = flow_nodes(field, grid, tissue_state(sets.tissue));
    GroupResult g = frame_term(model.qnet, grid, nodes, {axis_column(0), axis_column(1), axis_column(2)}, w.lambda2,
                               grad && w.lambda2 > 0.0 ? &grad->qnet : nullptr);
    terms.soft = g.value;
    if (grad && w.lambda2 > 0.0) reverse_sweep(net, grid, nodes, std::move(g.adjoints), grad->arcnet);
  }
  if (has_qnet && samples.surface_points.cols() > 0) {
    const auto nodes =
        flow_nodes(field, grid, surface_state(samples.surface_points, samples.surface_normals));
    // Transported tangents are compared with their own starting values.
    GroupResult g = frame_term(model.qnet, grid, nodes, nodes.front().tangents, w.lambda3,
                               grad && w.lambda3 > 0.0 ? &grad->qnet : nullptr);
    terms.surf = g.value;
    if (grad && w.lambda3 > 0.0) reverse_sweep(net, grid, nodes, std::move(g.adjoints), grad->arcnet);
  }

  terms.full = terms.varifold + w.lambda1 * terms.skeleton + w.lambda2 * terms.soft +
               w.lambda3 * terms.surf;
  return terms;
}

double LossEvaluator::varifold(const FlowModel& model) const {
  Samples none;
  return evaluate(model, none, {0, 0, 0}).varifold;
}

double LossEvaluator::skeleton(const FlowModel& model, const Eigen::Matrix3Xd& bone,
                               const std::vector<int>& bone_edge) const {
  Samples s;
  s.sets.bone = bone;
  s.sets.bone_edge = bone_edge;
  return evaluate(model, s, {0, 0, 0}).skeleton;
}

double LossEvaluator::soft(const FlowModel& model, const Eigen::Matrix3Xd& tissue) const {
  Samples s;
  s.sets.tissue = tissue;
  return evaluate(model, s, {0, 0, 0}).soft;
}

double LossEvaluator::surf(const FlowModel& model, const Eigen::Matrix3Xd& points,
                           const Eigen::Matrix3Xd& normals) const {
  Samples s;
  s.surface_points = points;
  s.surface_normals = normals;
  return evaluate(model, s, {0, 0, 0}).surf;
}

}  // namespace arcflow::loss
