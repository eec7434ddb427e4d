#include "commands.hpp"

#include "arcflow/synth/shapes.hpp"
#include "arcflow/util/numtext.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace arcflow::cli {

namespace fs = std::filesystem;
using util::format_double;

namespace {

struct Inputs {
  mesh::TriMesh source;  // normalised when the config asks for it
  mesh::TriMesh target;
  skel::Skeleton skeleton;
  mesh::Similarity to_unit;  // identity without normalisation
};

Inputs load_inputs(const RunConfig& cfg) {
  if (cfg.source.empty() || cfg.target.empty()) throw ConfigError("paths.source and paths.target are required");
  Inputs in;
  in.source = mesh::load_mesh(cfg.source);
  in.target = mesh::load_mesh(cfg.target);
  if (!cfg.skeleton.empty()) in.skeleton = skel::load_skeleton(cfg.skeleton);
  if (cfg.normalize) {
    in.to_unit = mesh::unit_cube_transform(in.source);
    in.source.vertices = in.to_unit.apply(in.source.vertices);
    in.target.vertices = in.to_unit.apply(in.target.vertices);
    if (in.skeleton.edge_count() > 0) in.skeleton = skel::transform_skeleton(in.skeleton, in.to_unit);
  }
  return in;
}

vf::KernelConfig finest_kernel(const RunConfig& cfg) { return cfg.train.schedule.milestones.back().kernel; }

vf::VarifoldSurface target_varifold(const RunConfig& cfg, const mesh::TriMesh& target) {
  vf::VarifoldSurface y = mesh::to_varifold(target);
  if (cfg.compression.m > 0) y = vf::compress(y, finest_kernel(cfg), cfg.compression).surface;
  return y;
}

loss::FlowModel initial_model(const RunConfig& cfg, int bones) {
  loss::FlowModel m;
  m.arcnet = nn::build_arcnet(cfg.arcnet, cfg.seed);
  m.qnet = nn::build_qnet(cfg.qnet_hidden, cfg.seed + 1);
  nn::bias_to_identity(m.qnet, cfg.qnet_output_gain);
  m.pose = skel::PoseParams::identity(bones);
  return m;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

void write_pose(const fs::path& p, const skel::PoseParams& pose) {
  std::ofstream f = open_out(p);
  f << "# translation x y z; rotation bone w x y z\n";
  f << "translation " << format_double(pose.translation.x()) << ' ' << format_double(pose.translation.y())
    << ' ' << format_double(pose.translation.z()) << '\n';
  for (std::size_t k = 0; k < pose.rotations.size(); ++k) {
    const auto& q = pose.rotations[k];
    f << "rotation " << k;
    for (int i = 0; i < 4; ++i) f << ' ' << format_double(q(i));
    f << '\n';
  }
}

loss::FlowModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return loss::read_model(in);
}

Eigen::Matrix3Xd flow_to(const loss::FlowModel& model, const ode::TimeGrid& grid, const Eigen::Matrix3Xd& x,
                         double t) {
  const flow::VelocityField field(model.arcnet, grid.horizon);
  ode::FlowState<ad::Tensor> s{x, std::nullopt, {}};
  return ode::integrate(field, grid, std::move(s), t).x;
}

}  // namespace

void cmd_synth(const SynthOptions& opt, std::ostream& log) {
  synth::Case c;
  const auto& shape = opt.shape;
  if (opt.angle_deg && shape == "sphere") {
    synth::SphereSpec s;
    s.frequency = std::max(1, static_cast<int>(std::lround(s.frequency * opt.resolution)));
    s.angle_deg = *opt.angle_deg;
    c = synth::sphere(s);
  } else if (opt.angle_deg && shape == "capsule_arm") {
    synth::ArmSpec s;
    s.rings = std::max(2, static_cast<int>(std::lround(s.rings * opt.resolution)));
    s.segments = std::max(3, static_cast<int>(std::lround(s.segments * opt.resolution)));
    s.elbow_deg = *opt.angle_deg;
    c = synth::capsule_arm(s);
  } else if (opt.angle_deg && shape == "two_box") {
    synth::HingeSpec s;
    s.cells = std::max(1, static_cast<int>(std::lround(s.cells * opt.resolution)));
    s.hinge_deg = *opt.angle_deg;
    c = synth::two_box(s);
  } else {
    c = synth::make(shape, opt.resolution);
  }
  ensure_dir(opt.out);
  const fs::path dir(opt.out);
  mesh::save_mesh(c.source, (dir / "source.obj").string());
  mesh::save_mesh(c.target, (dir / "target.obj").string());
  metrics::save_correspondence(metrics::identity_map(static_cast<int>(c.source.vertex_count())),
                               (dir / "correspondence.txt").string());
  std::ofstream ini = open_out(dir / "run.ini");
  ini << "[paths]\nsource = source.obj\ntarget = target.obj\ncorrespondence = correspondence.txt\n";
  if (c.skeleton.edge_count() > 0) {
    skel::save_skeleton(c.skeleton, (dir / "skeleton.txt").string());
    ini << "skeleton = skeleton.txt\n";
  }
  if (c.truth) write_pose(dir / "truth_pose.txt", *c.truth);
  log << "synth " << shape << ": " << c.source.vertex_count() << " vertices, " << c.source.face_count()
      << " faces, " << c.skeleton.edge_count() << " bones -> " << opt.out << '\n';
}

void cmd_compress(const RunConfig& cfg, const CompressOptions& opt, std::ostream& log) {
  const std::string path = opt.mesh.empty() ? cfg.target : opt.mesh;
  if (path.empty()) throw ConfigError("no mesh to compress (--mesh or paths.target)");
  mesh::TriMesh m = mesh::load_mesh(path);
  if (cfg.normalize) m = mesh::normalize_to_unit_cube(m);
  const vf::VarifoldSurface y = mesh::to_varifold(m);
  vf::CompressionConfig cc = cfg.compression;
  if (opt.m > 0) cc.m = opt.m;
  if (cc.m <= 0) throw ConfigError("compression size m must be positive");
  if (cc.m > y.size()) {
    throw std::invalid_argument("m = " + std::to_string(cc.m) + " exceeds the " + std::to_string(y.size()) +
                                " mesh vertices");
  }
  const vf::KernelConfig k = finest_kernel(cfg);
  const auto r = vf::compress(y, k, cc);
  vf::save_compressed(opt.out, {r.surface, k, cc.lambda, cc.seed});
  const double yy = vf::inner_product(y, y, k);
  const double cc_self = vf::inner_product(r.surface, r.surface, k);
  const double gap = vf::distance(y, r.surface, k);
  log << "compress: n = " << y.size() << ", m = " << cc.m << ", kept " << r.surface.size() << ", kernel (" << format_double(k.ell_x)
      << ", " << format_double(k.ell_n) << ")\n";
  log << "relative self-product error " << format_double(std::abs(cc_self - yy) / yy) << '\n';
  log << "relative distance to full " << format_double(gap / yy) << '\n';
}

void cmd_fit(const RunConfig& cfg, const FitOptions& opt, std::ostream& log) {
  cfg.validate();
  ensure_dir(opt.out);
  const fs::path dir(opt.out);
  {
    std::ofstream c = open_out(dir / "config.ini");
    write_config(c, cfg);
  }
  const Inputs in = load_inputs(cfg);
  const loss::Problem problem =
      loss::Problem::make(in.source, target_varifold(cfg, in.target), in.skeleton, cfg.grid);
  loss::Trainer trainer(problem, initial_model(cfg, in.skeleton.edge_count()), cfg.train);
  if (!opt.resume.empty()) {
    std::ifstream ck(opt.resume);
    if (!ck) throw std::runtime_error("cannot open checkpoint " + opt.resume);
    trainer.load_checkpoint(ck);
    log << "resumed at epoch " << trainer.epoch() << '\n';
  }

  std::ofstream csv = open_out(dir / "log.csv");
  csv << loss::log_header() << (opt.deterministic ? "" : ",wall_s") << '\n';
  const auto start = std::chrono::steady_clock::now();
  auto save = [&] {
    std::ofstream ck = open_out(dir / "checkpoint.json");
    trainer.save_checkpoint(ck);
  };
  const int budget = opt.max_epochs < 0 ? trainer.config().schedule.total_epochs() : opt.max_epochs;
  try {
    trainer.run(budget, [&](const loss::EpochRecord& r) {
      csv << loss::log_line(r);
      if (!opt.deterministic) {
        csv << ',' << format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      }
      csv << '\n';
      if (opt.progress_every > 0 && r.epoch % opt.progress_every == 0) {
        log << "epoch " << r.epoch << ' ' << r.terms.describe() << '\n';
      }
    });
  } catch (const loss::TrainingError&) {
    csv.flush();
    save();
    throw;
  }
  save();
  const auto& pose = trainer.model().pose;
  write_pose(dir / "pose.txt", pose);
  if (in.skeleton.edge_count() > 0) {
    skel::Skeleton moved = in.skeleton;
    moved.joints = skel::fwd_kinematics(in.skeleton, pose).joints;
    skel::save_skeleton(skel::transform_skeleton(moved, in.to_unit.inverse()), (dir / "target_skeleton.txt").string());
  }
  log << "fit: " << trainer.epoch() << " of " << trainer.config().schedule.total_epochs() << " epochs -> "
      << opt.out << '\n';
}

void cmd_export(const RunConfig& cfg, const ExportOptions& opt, std::ostream& log) {
  if (opt.frames < 1) throw std::invalid_argument("--frames must be at least 1");
  cfg.grid.validate();
  const loss::FlowModel model = load_model(opt.checkpoint);
  const mesh::TriMesh raw = mesh::load_mesh(cfg.source);
  mesh::Similarity to_unit;
  if (cfg.normalize) to_unit = mesh::unit_cube_transform(raw);
  const Eigen::Matrix3Xd x0 = to_unit.apply(raw.vertices);
  ensure_dir(opt.out);
  for (int k = 0; k <= opt.frames; ++k) {
    mesh::TriMesh frame = raw;
    if (k > 0) {
      const double t = k == opt.frames ? cfg.grid.horizon : cfg.grid.horizon * k / opt.frames;
      frame.vertices = to_unit.inverse().apply(flow_to(model, cfg.grid, x0, t));
    }
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.obj", k);
    mesh::save_mesh(frame, (fs::path(opt.out) / name).string());
  }
  log << "export: " << opt.frames + 1 << " frames -> " << opt.out << '\n';
}

metrics::Report cmd_eval(const RunConfig& cfg, const EvalOptions& opt, std::ostream& log) {
  cfg.grid.validate();
  const loss::FlowModel model = load_model(opt.checkpoint);
  const Inputs in = load_inputs(cfg);
  const Eigen::Matrix3Xd flowed = flow_to(model, cfg.grid, in.source.vertices, cfg.grid.horizon);
  std::optional<metrics::CorrespondenceMap> truth;
  if (!cfg.correspondence.empty()) {
    truth = metrics::load_correspondence(cfg.correspondence);
    if (static_cast<Eigen::Index>(truth->target.size()) != in.source.vertex_count()) {
      throw std::runtime_error("ground-truth map has " + std::to_string(truth->target.size()) +
                               " entries for " + std::to_string(in.source.vertex_count()) + " source vertices");
    }
  }
  metrics::Report r = metrics::evaluate(in.source, flowed, in.target, truth ? &*truth : nullptr, opt.thresholds);
  if (!truth) {
    // Without ground truth only the chamfer row is reported.
    std::erase_if(r.rows, [](const metrics::MetricRow& row) { return row.name != "chamfer"; });
  }
  ensure_dir(opt.out);
  {
    std::ofstream f = open_out(fs::path(opt.out) / "report.csv");
    metrics::write_report(f, r);
  }
  {
    std::ofstream f = open_out(fs::path(opt.out) / "errors.csv");
    metrics::write_errors(f, r);
  }
  metrics::write_report(log, r);
  return r;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffeomorphic shape interpolation and correspondence"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, preset_name, out_dir;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  app.add_option("--config", config_path, "INI run configuration");
  app.add_option("--preset", preset_name, "defaults: mano, dfaust or smal");
  app.add_option("--seed", seed, "overrides run.seed");
  app.add_flag("--deterministic", deterministic, "reproducible logs (no timing column)");
  app.add_option("--out", out_dir, "output file or directory");

  SynthOptions synth_opt;
  double angle = 0.0;
  auto* synth_cmd = app.add_subcommand("synth", "generate a source/target pair with known correspondence");
  synth_cmd->add_option("--shape", synth_opt.shape, "sphere, capsule_arm or two_box")->required();
  synth_cmd->add_option("--resolution", synth_opt.resolution, "tessellation scale (1 = default)");
  auto* angle_opt = synth_cmd->add_option("--angle", angle, "rotation, elbow or hinge angle in degrees");

  CompressOptions comp_opt;
  auto* comp_cmd = app.add_subcommand("compress", "compress a mesh varifold");
  comp_cmd->add_option("--mesh", comp_opt.mesh, "mesh file (default: paths.target)");
  comp_cmd->add_option("--m", comp_opt.m, "compressed size (default: compression.m)");

  FitOptions fit_opt;
  auto* fit_cmd = app.add_subcommand("fit", "train the flow");
  fit_cmd->add_option("--max-epochs", fit_opt.max_epochs, "stop after this many epochs");
  fit_cmd->add_option("--resume", fit_opt.resume, "checkpoint to continue from");
  fit_cmd->add_option("--progress", fit_opt.progress_every, "print every N epochs (0: never)");

  ExportOptions exp_opt;
  auto* exp_cmd = app.add_subcommand("export", "write meshes along the flow");
  exp_cmd->add_option("--checkpoint", exp_opt.checkpoint, "model or checkpoint file")->required();
  exp_cmd->add_option("--frames", exp_opt.frames, "number of intervals (frames + 1 files)");

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "correspondence and distortion metrics");
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "model or checkpoint file")->required();
  eval_cmd->add_option("--geodesic-threshold", eval_opt.thresholds.geodesic);
  eval_cmd->add_option("--chamfer-threshold", eval_opt.thresholds.chamfer);
  eval_cmd->add_option("--conformal-threshold", eval_opt.thresholds.conformal);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    auto config = [&] {
      RunConfig c = config_path.empty() ? preset(preset_name.empty() ? "mano" : preset_name)
                                        : load_config(config_path, preset_name);
      if (seed) {
        c.seed = *seed;
        c.train.seed = *seed;
      }
      return c;
    };
    if (verb == "synth") {
      if (*angle_opt) synth_opt.angle_deg = angle;
      if (!out_dir.empty()) synth_opt.out = out_dir;
      cmd_synth(synth_opt, out);
    } else if (verb == "compress") {
      if (!out_dir.empty()) comp_opt.out = out_dir;
      cmd_compress(config(), comp_opt, out);
    } else if (verb == "fit") {
      if (!out_dir.empty()) fit_opt.out = out_dir;
      fit_opt.deterministic = deterministic;
      cmd_fit(config(), fit_opt, out);
    } else if (verb == "export") {
      if (!out_dir.empty()) exp_opt.out = out_dir;
      cmd_export(config(), exp_opt, out);
    } else {
      if (!out_dir.empty()) eval_opt.out = out_dir;
      cmd_eval(config(), eval_opt, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << verb << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace arcflow::cli
