#include "arcflow/losses/train.hpp"

#include "arcflow/util/numtext.hpp"

#include <json.hpp>

#include <istream>
#include <ostream>

namespace arcflow::loss {

using nlohmann::json;

TrainingError::TrainingError(int epoch, const LossTerms& terms, const std::string& what)
    : std::runtime_error("epoch " + std::to_string(epoch) + ": " + what + " (" + terms.describe() + ")"),
      epoch_(epoch),
      terms_(terms) {}

std::string log_header() { return "epoch,L_var,L_skel,L_soft,L_surf,L_full,lr,ell_x,ell_n"; }

std::string log_line(const EpochRecord& r) {
  using util::format_double;
  std::string s = std::to_string(r.epoch);
  for (double v : {r.terms.varifold, r.terms.skeleton, r.terms.soft, r.terms.surf, r.terms.full, r.lr,
                   r.kernel.ell_x, r.kernel.ell_n}) {
    s += ',';
    s += format_double(v);
  }
  return s;
}

Trainer::Trainer(const Problem& problem, FlowModel model, TrainConfig cfg)
    : problem_(problem),
      model_(std::move(model)),
      cfg_(std::move(cfg)),
      evaluator_(problem),
      adam_(model_groups(model_), cfg_.adam) {
  cfg_.schedule.validate();
  cfg_.main.validate();
  cfg_.fine.validate();
  if (model_.pose.rotations.size() != static_cast<std::size_t>(problem.skeleton.edge_count())) {
    throw std::invalid_argument("pose and skeleton disagree on the number of bones");
  }
}

Samples Trainer::samples(int epoch) const {
  return make_samples(problem_, skel::sample_constraint_sets(problem_.skeleton, problem_.source_mesh,
                                                             cfg_.counts, cfg_.radii, cfg_.seed,
                                                             static_cast<std::uint64_t>(epoch)));
}

EpochRecord Trainer::step() {
  EpochRecord r;
  r.epoch = epoch_;
  r.stage = cfg_.schedule.stage(epoch_);
  r.lr = cfg_.schedule.lr(epoch_);
  r.kernel = cfg_.schedule.kernel(epoch_);
  if (r.kernel.ell_x != evaluator_.kernel().ell_x || r.kernel.ell_n != evaluator_.kernel().ell_n ||
      epoch_ == 0) {
    evaluator_.set_kernel(r.kernel);
  }
  const LossWeights& w = r.stage == Stage::kMain ? cfg_.main : cfg_.fine;
  ModelGradient g;
  r.terms = evaluator_.evaluate(model_, samples(epoch_), w, &g);
  if (!r.terms.finite()) throw TrainingError(epoch_, r.terms, "non-finite loss");
  const Eigen::VectorXd grad = g.flatten();
  if (!grad.allFinite()) throw TrainingError(epoch_, r.terms, "non-finite gradient");
  Eigen::VectorXd params = model_.flatten();
  adam_.step(params, grad, r.lr);
  model_.unflatten(params);
  ++epoch_;
  return r;
}

void Trainer::run(int max_epochs, const std::function<void(const EpochRecord&)>& on_epoch) {
  for (int i = 0; i < max_epochs && !finished(); ++i) {
    const EpochRecord r = step();
    if (on_epoch) on_epoch(r);
  }
}

// ---------------------------------------------------------------------------
// JSON.

namespace {

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mlp_json(const nn::MlpParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"kind", std::string(nn::kind_name(l.kind))},
                      {"out", l.w.rows()},
                      {"in", l.w.cols()}});
  }
  return {{"omega0", p.omega0}, {"layers", layers}, {"values", vector_json(nn::flatten(p))}};
}

nn::MlpParams json_mlp(const json& j) {
  nn::MlpParams p;
  p.omega0 = j.at("omega0").get<double>();
  for (const json& l : j.at("layers")) {
    nn::LayerT<Tensor> layer;
    layer.kind = nn::parse_kind(l.at("kind").get<std::string>());
    const auto out = l.at("out").get<Eigen::Index>();
    const auto in = l.at("in").get<Eigen::Index>();
    layer.w = Tensor::Zero(out, in);
    layer.b = Tensor::Zero(out, 1);
    p.layers.push_back(std::move(layer));
  }
  if (!p.layers.empty()) p.validate();
  const Eigen::VectorXd values = json_vector(j.at("values"));
  if (values.size() != static_cast<Eigen::Index>(p.parameter_count())) {
    throw nn::NetworkError("network values do not match the layer sizes");
  }
  nn::unflatten(p, values);
  return p;
}

json model_json(const FlowModel& m) {
  return {{"arcnet", mlp_json(m.arcnet)},
          {"qnet", mlp_json(m.qnet)},
          {"pose", vector_json(m.pose.flatten())},
          {"bones", m.pose.rotations.size()}};
}

FlowModel json_model(const json& j) {
  FlowModel m;
  m.arcnet = json_mlp(j.at("arcnet"));
  m.qnet = json_mlp(j.at("qnet"));
  m.pose = skel::PoseParams::identity(j.at("bones").get<int>());
  m.pose.unflatten(json_vector(j.at("pose")));
  return m;
}

json parse(std::istream& in) {
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("bad model file: ") + e.what());
  }
}

}  // namespace

void write_model(std::ostream& out, const FlowModel& model) {
  out << json{{"format", "arcflow_model"}, {"version", 1}, {"model", model_json(model)}}.dump(1) << '\n';
}

FlowModel read_model(std::istream& in) {
  const json j = parse(in);
  try {
    return json_model(j.at("model"));
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("bad model file: ") + e.what());
  }
}

void Trainer::save_checkpoint(std::ostream& out) const {
  const json j{{"format", "arcflow_model"},
               {"version", 1},
               {"model", model_json(model_)},
               {"epoch", epoch_},
               {"seed", cfg_.seed},
               {"adam",
                {{"steps", adam_.steps()},
                 {"m", vector_json(adam_.first_moment())},
                 {"v", vector_json(adam_.second_moment())}}}};
  out << j.dump(1) << '\n';
}

void Trainer::load_checkpoint(std::istream& in) {
  const json j = parse(in);
  try {
    FlowModel m = json_model(j.at("model"));
    if (m.parameter_count() != model_.parameter_count()) {
      throw std::runtime_error("checkpoint model does not match the configured architecture");
    }
    const json& a = j.at("adam");
    adam_.restore(a.at("steps").get<long>(), json_vector(a.at("m")), json_vector(a.at("v")));
    model_ = std::move(m);
    epoch_ = j.at("epoch").get<int>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("bad checkpoint: ") + e.what());
  }
}

}  // namespace arcflow::loss
