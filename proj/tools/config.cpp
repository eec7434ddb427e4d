#include "config.hpp"

#include "arcflow/util/numtext.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

namespace arcflow::cli {

namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(item.substr(a, item.find_last_not_of(" \t") - a + 1));
  }
  return out;
}

std::vector<int> int_list(const std::string& key, const std::string& text) {
  std::vector<int> v;
  try {
    for (const auto& s : split(text, ',')) v.push_back(static_cast<int>(util::parse_int(s)));
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a comma-separated list of integers, got '" + text + "'");
  }
  return v;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

loss::LossWeights weights(const std::string& key, const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw ConfigError(key + ": expected three weights lambda1,lambda2,lambda3");
  try {
    return {util::parse_double(parts[0]), util::parse_double(parts[1]), util::parse_double(parts[2])};
  } catch (const std::exception&) {
    throw ConfigError(key + ": bad number in '" + text + "'");
  }
}

std::string weights_text(const loss::LossWeights& w) {
  using util::format_double;
  return format_double(w.lambda1) + "," + format_double(w.lambda2) + "," + format_double(w.lambda3);
}

// "epoch:ell_x:ell_n" entries separated by spaces.
std::vector<loss::Milestone> milestones(const std::string& text) {
  std::vector<loss::Milestone> out;
  for (const auto& item : split(text, ' ')) {
    const auto f = split(item, ':');
    if (f.size() != 3) throw ConfigError("schedule.milestones: expected epoch:ell_x:ell_n, got '" + item + "'");
    try {
      out.push_back({static_cast<int>(util::parse_int(f[0])),
                     {util::parse_double(f[1]), util::parse_double(f[2])}});
    } catch (const std::exception&) {
      throw ConfigError("schedule.milestones: bad number in '" + item + "'");
    }
  }
  return out;
}

std::string milestones_text(const std::vector<loss::Milestone>& ms) {
  std::string s;
  for (const auto& m : ms) {
    if (!s.empty()) s += ' ';
    s += std::to_string(m.epoch) + ":" + util::format_double(m.kernel.ell_x) + ":" +
         util::format_double(m.kernel.ell_n);
  }
  return s;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "run.preset",          "run.seed",
      "paths.source",        "paths.target",
      "paths.skeleton",      "paths.correspondence",
      "paths.normalize",     "grid.horizon",
      "grid.steps",          "arcnet.hidden",
      "arcnet.omega0",       "arcnet.output_gain",
      "qnet.hidden",         "qnet.output_gain",
      "compression.m",
      "compression.lambda",  "compression.seed",
      "schedule.epochs_main", "schedule.epochs_ft",
      "schedule.lr_init",    "schedule.lr_final",
      "schedule.warmup",     "schedule.milestones",
      "loss.main",           "loss.fine",
      "sampling.bone",       "sampling.tissue",
      "sampling.surface",    "sampling.bone_radius",
      "sampling.tissue_radius"};
  return keys;
}

}  // namespace

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  auto& s = c.train.schedule;
  s.warmup = 50;
  s.epochs_ft = 2000;
  if (name == "mano") {
    s.epochs_main = 4000;
    s.lr_init = 1e-2;
    s.lr_final = 1e-3;
    c.grid.steps = 10;
    s.milestones = {{0, {0.5, 0.5}}, {1000, {0.1, 0.5}}, {2000, {0.1, 0.4}}, {3000, {0.1, 0.3}}};
    c.train.counts = {50, 50, 500};
    c.train.radii = {0.10, 0.25};
  } else if (name == "dfaust") {
    s.epochs_main = 5000;
    s.lr_init = 5e-3;
    s.lr_final = 1e-4;
    c.grid.steps = 15;
    s.milestones = {{0, {0.5, 0.5}}, {1000, {0.25, 0.5}}, {2000, {0.1, 0.4}}, {3000, {0.1, 0.3}}};
    c.train.counts = {50, 25, 500};
    c.train.radii = {0.10, 0.25};
  } else if (name == "smal") {
    s.epochs_main = 4000;
    s.lr_init = 5e-3;
    s.lr_final = 1e-4;
    c.grid.steps = 10;
    s.milestones = {{0, {0.5, 0.5}}, {1000, {0.25, 0.5}}, {2000, {0.1, 0.4}}, {3000, {0.1, 0.3}}};
    c.train.counts = {50, 50, 500};
    c.train.radii = {0.10, 0.15};
  } else {
    throw ConfigError("unknown preset '" + name + "' (mano, dfaust, smal)");
  }
  return c;
}

RunConfig parse_config(std::istream& in, const std::string& preset_override) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      if (!known_keys().contains(section + "." + key)) {
        throw ConfigError("config: unknown key '" + section + "." + key + "'");
      }
    }
  }
  const std::string name =
      preset_override.empty() ? tree.get<std::string>("run.preset", "mano") : preset_override;
  RunConfig c = preset(name);

  auto text = [&](const std::string& key) { return tree.get_optional<std::string>(key); };
  auto number = [&](const std::string& key, auto& dst) {
    const auto v = text(key);
    if (!v) return;
    try {
      using T = std::decay_t<decltype(dst)>;
      if constexpr (std::is_floating_point_v<T>) {
        dst = util::parse_double(*v);
      } else {
        dst = static_cast<T>(util::parse_int(*v));
      }
    } catch (const std::exception&) {
      throw ConfigError(key + ": bad number '" + *v + "'");
    }
  };

  number("run.seed", c.seed);
  if (auto v = text("paths.source")) c.source = *v;
  if (auto v = text("paths.target")) c.target = *v;
  if (auto v = text("paths.skeleton")) c.skeleton = *v;
  if (auto v = text("paths.correspondence")) c.correspondence = *v;
  if (auto v = text("paths.normalize")) {
    if (*v != "true" && *v != "false") throw ConfigError("paths.normalize: expected true or false");
    c.normalize = *v == "true";
  }
  number("grid.horizon", c.grid.horizon);
  number("grid.steps", c.grid.steps);
  if (auto v = text("arcnet.hidden")) c.arcnet.hidden = int_list("arcnet.hidden", *v);
  number("arcnet.omega0", c.arcnet.omega0);
  number("arcnet.output_gain", c.arcnet.output_gain);
  if (auto v = text("qnet.hidden")) c.qnet_hidden = int_list("qnet.hidden", *v);
  number("qnet.output_gain", c.qnet_output_gain);
  number("compression.m", c.compression.m);
  number("compression.lambda", c.compression.lambda);
  number("compression.seed", c.compression.seed);
  auto& s = c.train.schedule;
  number("schedule.epochs_main", s.epochs_main);
  number("schedule.epochs_ft", s.epochs_ft);
  number("schedule.lr_init", s.lr_init);
  number("schedule.lr_final", s.lr_final);
  number("schedule.warmup", s.warmup);
  if (auto v = text("schedule.milestones")) s.milestones = milestones(*v);
  if (auto v = text("loss.main")) c.train.main = weights("loss.main", *v);
  if (auto v = text("loss.fine")) c.train.fine = weights("loss.fine", *v);
  number("sampling.bone", c.train.counts.bone_per_edge);
  number("sampling.tissue", c.train.counts.tissue_per_edge);
  number("sampling.surface", c.train.counts.surface);
  number("sampling.bone_radius", c.train.radii.bone);
  number("sampling.tissue_radius", c.train.radii.tissue);
  c.train.seed = c.seed;
  return c;
}

RunConfig load_config(const std::string& path, const std::string& preset_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  RunConfig c = parse_config(in, preset_override);
  c.resolve_paths(std::filesystem::path(path).parent_path().string());
  return c;
}

void RunConfig::resolve_paths(const std::string& base_dir) {
  namespace fs = std::filesystem;
  for (std::string* p : {&source, &target, &skeleton, &correspondence}) {
    if (!p->empty() && fs::path(*p).is_relative()) *p = fs::absolute(fs::path(base_dir) / *p).lexically_normal().string();
  }
}

void RunConfig::validate() const {
  try {
    grid.validate();
    train.schedule.validate();
    train.main.validate();
    train.fine.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (arcnet.hidden.empty()) throw ConfigError("arcnet.hidden: at least one layer");
  for (int w : arcnet.hidden) {
    if (w <= 0) throw ConfigError("arcnet.hidden: widths must be positive");
  }
  for (int w : qnet_hidden) {
    if (w <= 0) throw ConfigError("qnet.hidden: widths must be positive");
  }
  if (compression.m < 0) throw ConfigError("compression.m: must be non-negative");
  const auto& n = train.counts;
  if (n.bone_per_edge < 0 || n.tissue_per_edge < 0 || n.surface < 0) {
    throw ConfigError("sampling: counts must be non-negative");
  }
  if (!(train.radii.bone > 0.0) || !(train.radii.tissue > train.radii.bone)) {
    throw ConfigError("sampling: need 0 < bone_radius < tissue_radius");
  }
}

void write_config(std::ostream& out, const RunConfig& c) {
  using util::format_double;
  const auto& s = c.train.schedule;
  out << "[run]\npreset = " << c.preset << "\nseed = " << c.seed << "\n\n";
  out << "[paths]\nsource = " << c.source << "\ntarget = " << c.target << "\nskeleton = " << c.skeleton
      << "\ncorrespondence = " << c.correspondence << "\nnormalize = " << (c.normalize ? "true" : "false")
      << "\n\n";
  out << "[grid]\nhorizon = " << format_double(c.grid.horizon) << "\nsteps = " << c.grid.steps << "\n\n";
  out << "[arcnet]\nhidden = " << join(c.arcnet.hidden) << "\nomega0 = " << format_double(c.arcnet.omega0)
      << "\noutput_gain = " << format_double(c.arcnet.output_gain) << "\n\n";
  out << "[qnet]\nhidden = " << join(c.qnet_hidden) << "\noutput_gain = " << format_double(c.qnet_output_gain)
      << "\n\n";
  out << "[compression]\nm = " << c.compression.m << "\nlambda = " << format_double(c.compression.lambda)
      << "\nseed = " << c.compression.seed << "\n\n";
  out << "[schedule]\nepochs_main = " << s.epochs_main << "\nepochs_ft = " << s.epochs_ft
      << "\nlr_init = " << format_double(s.lr_init) << "\nlr_final = " << format_double(s.lr_final)
      << "\nwarmup = " << s.warmup << "\nmilestones = " << milestones_text(s.milestones) << "\n\n";
  out << "[loss]\nmain = " << weights_text(c.train.main) << "\nfine = " << weights_text(c.train.fine)
      << "\n\n";
  out << "[sampling]\nbone = " << c.train.counts.bone_per_edge << "\ntissue = " << c.train.counts.tissue_per_edge
      << "\nsurface = " << c.train.counts.surface << "\nbone_radius = " << format_double(c.train.radii.bone)
      << "\ntissue_radius = " << format_double(c.train.radii.tissue) << "\n";
}

}  // namespace arcflow::cli
