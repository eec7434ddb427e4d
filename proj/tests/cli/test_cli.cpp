#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "commands.hpp"

#include "arcflow/meshio/mesh.hpp"
#include "arcflow/util/numtext.hpp"
#include "arcflow/varifold/varifold.hpp"

#include <algorithm>
#include <cmath>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace arcflow;
using namespace arcflow::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("arcflow_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "arcflow");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<double> fields(const std::string& line) {
  std::vector<double> v;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) v.push_back(util::parse_double(f));
  return v;
}

// A small, quick fit on top of a synth run.ini.
void append_small_fit(const fs::path& ini, const std::string& extra = "") {
  std::ofstream f(ini, std::ios::app);
  f << "[run]\nseed = 5\n"
    << "[arcnet]\nhidden = 16,16\noutput_gain = 0.1\n"
    << "[qnet]\nhidden = 8\n"
    << "[grid]\nsteps = 4\n"
    << "[schedule]\nepochs_main = 400\nepochs_ft = 100\nlr_init = 3e-2\nlr_final = 3e-3\nwarmup = 10\n"
    << "milestones = 0:0.25:0.5 250:0.1:0.5\n"
    << "[sampling]\nsurface = 40\nbone = 10\ntissue = 10\n"
    << extra;
}

}  // namespace

TEST_CASE("presets carry the published defaults") {
  const RunConfig mano = preset("mano");
  CHECK(mano.train.schedule.epochs_main == 4000);
  CHECK(mano.train.schedule.epochs_ft == 2000);
  CHECK(mano.train.schedule.lr_init == 1e-2);
  CHECK(mano.train.schedule.lr_final == 1e-3);
  CHECK(mano.train.schedule.warmup == 50);
  CHECK(mano.grid.steps == 10);
  CHECK(mano.train.schedule.kernel(3500).ell_n == 0.3);
  CHECK(mano.train.counts.tissue_per_edge == 50);
  CHECK(mano.train.radii.tissue == 0.25);
  CHECK(mano.train.main.lambda3 == 5e3);
  CHECK(mano.train.fine.lambda1 == 1e3);
  CHECK(mano.arcnet.hidden == std::vector<int>{256, 256, 256, 256, 128});
  CHECK(mano.arcnet.omega0 == 4.0);
  CHECK(mano.qnet_hidden == std::vector<int>{128, 128, 128});

  const RunConfig dfaust = preset("dfaust");
  CHECK(dfaust.train.schedule.epochs_main == 5000);
  CHECK(dfaust.grid.steps == 15);
  CHECK(dfaust.train.schedule.lr_final == 1e-4);
  CHECK(dfaust.train.counts.tissue_per_edge == 25);
  CHECK(dfaust.train.schedule.kernel(1000).ell_x == 0.25);

  const RunConfig smal = preset("smal");
  CHECK(smal.train.radii.tissue == 0.15);
  CHECK(smal.train.schedule.lr_init == 5e-3);
  CHECK_THROWS_AS(preset("horse"), ConfigError);
}

TEST_CASE("config parsing") {
  std::istringstream in(
      "[run]\npreset = smal\nseed = 9\n[grid]\nsteps = 7\n[loss]\nmain = 1,2,3\n"
      "[schedule]\nmilestones = 0:0.3:0.6 10:0.2:0.5\n");
  const RunConfig c = parse_config(in);
  CHECK(c.preset == "smal");
  CHECK(c.seed == 9);
  CHECK(c.train.seed == 9);
  CHECK(c.grid.steps == 7);
  CHECK(c.train.main.lambda2 == 2.0);
  CHECK(c.train.fine.lambda1 == 1e3);
  CHECK(c.train.schedule.milestones.size() == 2);
  CHECK(c.train.schedule.kernel(12).ell_x == 0.2);
  CHECK(c.train.radii.tissue == 0.15);

  std::ostringstream out;
  write_config(out, c);
  std::istringstream back(out.str());
  std::ostringstream again;
  write_config(again, parse_config(back));
  CHECK(again.str() == out.str());

  std::istringstream override_in("[run]\npreset = smal\n");
  CHECK(parse_config(override_in, "dfaust").grid.steps == 15);

  for (const char* bad : {"[grid]\nstepz = 3\n", "[grid]\nsteps = three\n", "[loss]\nmain = 1,2\n",
                          "[schedule]\nmilestones = 0:0.5\n", "[arcnet]\nhidden = 8,x\n", "steps = 3\n"}) {
    std::istringstream b(bad);
    CHECK_THROWS_AS(parse_config(b), ConfigError);
  }
  RunConfig neg = preset("mano");
  neg.train.main.lambda1 = -1.0;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
  neg = preset("mano");
  neg.train.radii.tissue = 0.05;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
}

TEST_CASE("synth writes a consistent problem") {
  const fs::path dir = scratch("synth");
  REQUIRE(run({"synth", "--shape", "sphere", "--resolution", "0.5", "--out", (dir / "s").string()}) == 0);
  const auto src = mesh::load_mesh((dir / "s" / "source.obj").string());
  const auto tgt = mesh::load_mesh((dir / "s" / "target.obj").string());
  const auto gt = metrics::load_correspondence((dir / "s" / "correspondence.txt").string());
  REQUIRE(gt.target.size() == static_cast<std::size_t>(src.vertex_count()));
  for (std::size_t i = 0; i < gt.target.size(); ++i) CHECK(gt.target[i] == static_cast<int>(i));
  CHECK(((tgt.vertices - src.vertices).colwise() - Eigen::Vector3d(0.2, 0, 0)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(!fs::exists(dir / "s" / "skeleton.txt"));

  REQUIRE(run({"synth", "--shape", "capsule_arm", "--angle", "45", "--out", (dir / "a").string()}) == 0);
  CHECK(skel::load_skeleton((dir / "a" / "skeleton.txt").string()).edge_count() == 2);
  CHECK(fs::exists(dir / "a" / "truth_pose.txt"));
  const RunConfig c = load_config((dir / "a" / "run.ini").string());
  CHECK(c.skeleton == (dir / "a" / "skeleton.txt").string());

  std::string err;
  CHECK(run({"synth", "--shape", "torus", "--out", (dir / "t").string()}, nullptr, &err) != 0);
  CHECK(err.starts_with("error: synth: unknown shape"));
  CHECK(run({"launch"}, nullptr, &err) != 0);
}

TEST_CASE("identity problem evaluates perfectly and exports exactly") {
  const fs::path dir = scratch("identity");
  REQUIRE(run({"synth", "--shape", "sphere", "--resolution", "0.4", "--out", dir.string()}) == 0);
  {
    std::ofstream f(dir / "run.ini", std::ios::app);
    f << "[arcnet]\nhidden = 8\noutput_gain = 0\n[qnet]\nhidden = 4\n";
  }
  // Target = source.
  fs::copy_file(dir / "source.obj", dir / "target.obj", fs::copy_options::overwrite_existing);
  const std::string ini = (dir / "run.ini").string();
  REQUIRE(run({"fit", "--config", ini, "--max-epochs", "0", "--out", (dir / "fit").string()}) == 0);
  const std::string ck = (dir / "fit" / "checkpoint.json").string();
  std::string out;
  REQUIRE(run({"eval", "--config", ini, "--checkpoint", ck, "--out", (dir / "eval").string()}, &out) == 0);
  const RunConfig cfg = load_config(ini);
  const auto rows = lines(slurp(dir / "eval" / "report.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].starts_with("chamfer,"));
  CHECK(rows[1].ends_with(",1@0.1"));
  CHECK(rows[2].ends_with(",1@0.2"));
  CHECK(rows[3].starts_with("conformal,"));
  const std::string auc_text = rows[3].substr(rows[3].rfind(',') + 1);
  CHECK(util::parse_double(auc_text.substr(0, auc_text.find('@'))) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out == slurp(dir / "eval" / "report.csv"));
  std::string again;
  run({"eval", "--config", ini, "--checkpoint", ck, "--out", (dir / "eval2").string()}, &again);
  CHECK(again == out);

  // Without ground truth only chamfer is reported.
  {
    std::ofstream f(dir / "nogt.ini");
    f << "[paths]\nsource = source.obj\ntarget = target.obj\n";
  }
  run({"eval", "--config", (dir / "nogt.ini").string(), "--checkpoint", ck, "--out", (dir / "eval3").string()}, &out);
  CHECK(lines(out).size() == 2);

  REQUIRE(run({"export", "--config", ini, "--checkpoint", ck, "--frames", "1", "--out", (dir / "f1").string()}) == 0);
  CHECK(fs::exists(dir / "f1" / "frame_0000.obj"));
  CHECK(fs::exists(dir / "f1" / "frame_0001.obj"));
  CHECK(!fs::exists(dir / "f1" / "frame_0002.obj"));
  CHECK(slurp(dir / "f1" / "frame_0000.obj") == slurp(dir / "source.obj"));
}

TEST_CASE("compress reports fidelity") {
  const fs::path dir = scratch("compress");
  REQUIRE(run({"synth", "--shape", "sphere", "--resolution", "0.5", "--out", dir.string()}) == 0);
  const std::string ini = (dir / "run.ini").string();
  const auto target = mesh::normalize_to_unit_cube(mesh::load_mesh((dir / "target.obj").string()));
  const auto n = target.vertex_count();
  std::string out;
  REQUIRE(run({"compress", "--config", ini, "--m", std::to_string(n / 4), "--out", (dir / "q.txt").string()}, &out) ==
          0);
  const auto l = lines(out);
  REQUIRE(l.size() == 3);
  const double reported = util::parse_double(l[2].substr(l[2].rfind(' ') + 1));

  // Recompute from the written file against the full target.
  const auto file = vf::load_compressed((dir / "q.txt").string());
  const auto full = mesh::to_varifold(target);
  CHECK(file.surface.size() <= n / 4);
  const double expect =
      vf::distance(file.surface, full, file.kernel) / vf::inner_product(full, full, file.kernel);
  CHECK(std::abs(reported - expect) <= 1e-9 * std::max(1.0, expect));

  std::string err;
  CHECK(run({"compress", "--config", ini, "--m", std::to_string(n + 1), "--out", (dir / "x.txt").string()}, nullptr,
            &err) != 0);
  CHECK(err.starts_with("error: compress:"));
  run({"compress", "--config", ini, "--m", "60", "--seed", "3", "--out", (dir / "a.txt").string()});
  run({"compress", "--config", ini, "--m", "60", "--seed", "3", "--out", (dir / "b.txt").string()});
  CHECK(slurp(dir / "a.txt") == slurp(dir / "b.txt"));
}

TEST_CASE("fit logs are reproducible and resumable") {
  const fs::path dir = scratch("fit");
  REQUIRE(run({"synth", "--shape", "capsule_arm", "--resolution", "0.5", "--out", dir.string()}) == 0);
  append_small_fit(dir / "run.ini", "[loss]\nmain = 2,0.25,3\nfine = 7,0.5,3\n");
  const std::string ini = (dir / "run.ini").string();
  const std::vector<std::string> common{"fit", "--config", ini, "--deterministic", "--progress", "0"};
  auto fit = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> a = common;
    a.insert(a.end(), extra.begin(), extra.end());
    a.push_back("--out");
    a.push_back((dir / out).string());
    return run(a);
  };
  REQUIRE(fit("a", {"--max-epochs", "6"}) == 0);
  REQUIRE(fit("b", {"--max-epochs", "6"}) == 0);
  CHECK(slurp(dir / "a" / "log.csv") == slurp(dir / "b" / "log.csv"));
  REQUIRE(fit("c", {"--max-epochs", "3"}) == 0);
  REQUIRE(fit("d", {"--max-epochs", "3", "--resume", (dir / "c" / "checkpoint.json").string()}) == 0);
  const auto full = lines(slurp(dir / "a" / "log.csv"));
  const auto resumed = lines(slurp(dir / "d" / "log.csv"));
  REQUIRE(resumed.size() == 4);
  for (int i = 1; i <= 3; ++i) CHECK(resumed[i] == full[3 + i]);

  // The configured weights are the ones in the logged total.
  for (std::size_t i = 1; i < full.size(); ++i) {
    const auto v = fields(full[i]);
    CHECK(v[5] == doctest::Approx(v[1] + 2 * v[2] + 0.25 * v[3] + 3 * v[4]).epsilon(1e-12));
  }
  CHECK(lines(slurp(dir / "a" / "log.csv"))[0] == loss::log_header());
  CHECK(fs::exists(dir / "a" / "pose.txt"));
  CHECK(skel::load_skeleton((dir / "a" / "target_skeleton.txt").string()).edge_count() == 2);
  CHECK(slurp(dir / "a" / "config.ini").find("main = 2,0.25,3") != std::string::npos);

  REQUIRE(fit("e", {"--max-epochs", "1"}) == 0);
  std::ofstream(dir / "e" / "nondet.ini") << "";
  REQUIRE(run({"fit", "--config", ini, "--max-epochs", "1", "--progress", "0", "--out", (dir / "f").string()}) == 0);
  CHECK(lines(slurp(dir / "f" / "log.csv"))[0] == loss::log_header() + ",wall_s");
}

TEST_CASE("sphere to translated sphere") {
  const fs::path dir = scratch("sphere");
  REQUIRE(run({"synth", "--shape", "sphere", "--resolution", "0.5", "--out", dir.string()}) == 0);
  // Summed constraint terms: preset weights divided by samples x steps.
  append_small_fit(dir / "run.ini", "[loss]\nmain = 1,0.05,30\nfine = 5,0.5,30\n");
  const std::string ini = (dir / "run.ini").string();
  REQUIRE(run({"fit", "--config", ini, "--deterministic", "--progress", "0", "--out", (dir / "fit").string()}) == 0);
  std::string out;
  REQUIRE(run({"eval", "--config", ini, "--checkpoint", (dir / "fit" / "checkpoint.json").string(), "--out",
               (dir / "eval").string()},
              &out) == 0);
  MESSAGE(out);
  const std::string row = lines(out)[1];
  REQUIRE(row.starts_with("chamfer,"));
  const auto a = row.find(',') + 1;
  const double chamfer = util::parse_double(row.substr(a, row.find(',', a) - a));
  CHECK(chamfer < 1e-2);

  REQUIRE(run({"export", "--config", ini, "--checkpoint", (dir / "fit" / "checkpoint.json").string(), "--frames",
               "4", "--out", (dir / "frames").string()}) == 0);
  const auto src = mesh::load_mesh((dir / "source.obj").string());
  const auto last = mesh::load_mesh((dir / "frames" / "frame_0004.obj").string());
  const auto mid = mesh::load_mesh((dir / "frames" / "frame_0002.obj").string());
  const Eigen::Vector3d shift_end = (last.vertices - src.vertices).rowwise().mean();
  const Eigen::Vector3d shift_mid = (mid.vertices - src.vertices).rowwise().mean();
  CHECK(shift_end.x() == doctest::Approx(0.2).epsilon(0.05));
  CHECK(shift_mid.x() > 0.03);
  CHECK(shift_mid.x() < 0.17);
}
