#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "dryobs/ekf.hpp"
#include "dryobs/errors.hpp"
#include "dryobs/gramian.hpp"
#include "dryobs/grid.hpp"
#include "dryobs/mask.hpp"
#include "dryobs/material.hpp"
#include "dryobs/pipeline/hash.hpp"

namespace dryobs::pipeline {

// The shipped default configuration. presets/paper-5.yaml is a copy of this
// text; a unit test keeps the two identical.
inline constexpr const char* kPaper5Preset = R"yaml(# Drying of a 10 x 20 x 5 mm wood particle at 353.15 K, estimated from the
# mean temperature of a 17 x 3 patch on the x- face.
grid:
  nx: 10
  ny: 20
  nz: 5
  cell_size: 1.0e-3
  fiber_axis: x
material:
  id: calibration-wood-v1
  params: {}
ambient:
  interpolation: constant
  schedule:
    - {t: 0.0, T_inf: 353.15, rho_inf: 0.005}
initial:
  x0: 0.8
  T0: 298.15
  sweep: [0.8, 0.6, 0.4, 0.2]
simulation:
  t_end: 1100.0
  snapshots: 100
  dt: 0.0
  safety: 0.9
  clamp_tolerance: 1.0e-9
pod:
  threshold: 0.9999
  n_x: 5
  n_T: 5
  rank_tol: 1.0e-12
rom:
  rtol: 1.0e-7
  atol: 1.0e-9
gramian:
  magnitudes: [1.0e-7, 1.0e-6, 1.0e-5]
  dt: 0.005
  m_f: 1000000
  settle_tol: 1.0e-9
  rtol: 1.0e-8
  atol_rel: 1.0e-10
  T_inf: 298.15
  rho_inf: 0.005
  orders: [6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30, 32, 34, 36, 38, 40, 42, 44, 46, 48, 50]
mask:
  type: centered
  face: x-
  nu: 17
  nv: 3
ekf:
  measurement_interval: 5.0
  horizon: 1100.0
  Q: 1.0
  R: 1.0
  coefficient_unit_volume: 1.0e-9
  jacobian_step: 1.0e-5
  rtol: 1.0e-5
  atol: 1.0e-8
  noise: false
  scenarios:
    - {name: A, init: guess, x_guess: 1.0, P0: 200.0}
    - {name: B, init: guess, x_guess: 0.6, P0: 83.5}
    - {name: C, init: truth, x_guess: 0.0, P0: 0.0}
output:
  dir: out
seed: 20190611
)yaml";

struct GridSpec {
  int nx = 10, ny = 20, nz = 5;
  double cell_size = 1e-3;
  std::string fiber_axis = "x";
};

struct MaterialSpec {
  std::string id = "calibration-wood-v1";
  std::map<std::string, double> params;
};

struct AmbientSpec {
  std::string interpolation = "constant";
  std::vector<AmbientConditions::Point> schedule{{0.0, 353.15, 0.005}};
};

struct InitialSpec {
  double x0 = 0.8;
  double T0 = 298.15;
  std::vector<double> sweep{0.8, 0.6, 0.4, 0.2};
};

struct SimulationSpec {
  double t_end = 1100.0;
  int snapshots = 100;
  double dt = 0.0;  // 0 selects the largest stable step
  double safety = 0.9;
  double clamp_tolerance = 1e-9;
};

struct PodSpec {
  double threshold = 0.9999;
  int n_x = 5;  // 0 selects the energy threshold
  int n_T = 5;
  double rank_tol = 1e-12;
};

struct RomSpec {
  double rtol = 1e-7;
  double atol = 1e-9;
};

struct GramianSpec {
  std::vector<double> magnitudes{1e-7, 1e-6, 1e-5};
  double dt = 0.005;
  long m_f = 1'000'000;
  double settle_tol = 1e-9;
  double rtol = 1e-8;
  double atol_rel = 1e-10;
  double T_inf = 298.15;
  double rho_inf = 0.005;
  std::vector<int> orders;
};

struct MaskSpec {
  std::string type = "centered";  // centered | rectangle | cells | single
  std::string face = "x-";
  int nu = 17, nv = 3;
  int u0 = 0, u1 = 0, v0 = 0, v1 = 0;
  std::vector<int> cells;
  int cell = -1;
};

struct ScenarioSpec {
  std::string name;
  std::string init = "guess";  // guess | truth
  double x_guess = 0.0;
  double P0 = 0.0;
};

struct EkfSpec {
  double measurement_interval = 5.0;
  double horizon = 1100.0;
  double Q = 1.0;
  double R = 1.0;
  /// Volume (m^3) of the coefficient unit in which Q and P0 are given; see README.
  double coefficient_unit_volume = 1e-9;
  double jacobian_step = 1e-5;
  double rtol = 1e-5;
  double atol = 1e-8;
  bool noise = false;
  std::vector<ScenarioSpec> scenarios;
};

struct PipelineConfig {
  GridSpec grid;
  MaterialSpec material;
  AmbientSpec ambient;
  InitialSpec initial;
  SimulationSpec simulation;
  PodSpec pod;
  RomSpec rom;
  GramianSpec gramian;
  MaskSpec mask;
  EkfSpec ekf;
  std::string output_dir = "out";
  std::uint64_t seed = 20190611;

  /// Source location ("file:line") of every key that was set, for diagnostics.
  std::map<std::string, std::string> locations;

  std::string where(const std::string& key) const {
    auto it = locations.find(key);
    return it == locations.end() ? std::string("<default>") : it->second;
  }
};

// ---------------------------------------------------------------------------
// Reading

namespace detail {

class Reader {
 public:
  Reader(PipelineConfig& cfg, std::string source) : cfg_(cfg), source_(std::move(source)) {}

  std::string loc(const YAML::Node& n) const {
    return source_ + ":" + std::to_string(n.Mark().line + 1);
  }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& key, const std::string& msg) const {
    throw ConfigurationError(loc(n) + ": " + key + ": " + msg);
  }

  void require_map(const YAML::Node& n, const std::string& key) const {
    if (!n.IsMap()) fail(n, key, "expected a mapping");
  }

  void allow(const YAML::Node& n, const std::string& prefix, std::initializer_list<const char*> keys) const {
    require_map(n, prefix.empty() ? "<root>" : prefix);
    for (const auto& kv : n) {
      const std::string k = kv.first.as<std::string>();
      bool ok = false;
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) {
        std::string list;
        for (const char* a : keys) list += std::string(list.empty() ? "" : ", ") + a;
        fail(kv.first, prefix.empty() ? k : prefix + "." + k, "unknown key (allowed: " + list + ")");
      }
    }
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& key, const char* type) const {
    if (!n.IsScalar()) fail(n, key, std::string("expected ") + type);
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, key, std::string("expected ") + type + ", got '" + n.Scalar() + "'");
    }
  }

  template <class T>
  void get(const YAML::Node& parent, const char* name, const std::string& prefix, T& out) {
    const YAML::Node n = parent[name];
    if (!n) return;
    const std::string key = prefix.empty() ? std::string(name) : prefix + "." + name;
    if constexpr (std::is_same_v<T, bool>) {
      out = scalar<bool>(n, key, "true or false");
    } else if constexpr (std::is_integral_v<T>) {
      const double v = scalar<double>(n, key, "an integer");
      if (v != static_cast<double>(static_cast<T>(v))) fail(n, key, "expected an integer");
      out = static_cast<T>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
      out = scalar<double>(n, key, "a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      out = scalar<std::string>(n, key, "a string");
    } else {
      if (!n.IsSequence()) fail(n, key, "expected a list");
      out.clear();
      for (std::size_t k = 0; k < n.size(); ++k) {
        using V = typename T::value_type;
        const std::string item = key + "[" + std::to_string(k) + "]";
        if constexpr (std::is_integral_v<V>) {
          const double v = scalar<double>(n[k], item, "an integer");
          if (v != static_cast<double>(static_cast<V>(v))) fail(n[k], item, "expected an integer");
          out.push_back(static_cast<V>(v));
        } else {
          out.push_back(scalar<V>(n[k], item, "a number"));
        }
      }
    }
    cfg_.locations[key] = loc(n);
  }

  void apply(const YAML::Node& root);

 private:
  PipelineConfig& cfg_;
  std::string source_;
};

inline void Reader::apply(const YAML::Node& root) {
  if (!root || root.IsNull()) return;
  allow(root, "", {"preset", "grid", "material", "ambient", "initial", "simulation", "pod", "rom", "gramian",
                   "mask", "ekf", "output", "seed"});
  if (auto n = root["grid"]) {
    allow(n, "grid", {"nx", "ny", "nz", "cell_size", "fiber_axis"});
    get(n, "nx", "grid", cfg_.grid.nx);
    get(n, "ny", "grid", cfg_.grid.ny);
    get(n, "nz", "grid", cfg_.grid.nz);
    get(n, "cell_size", "grid", cfg_.grid.cell_size);
    get(n, "fiber_axis", "grid", cfg_.grid.fiber_axis);
  }
  if (auto n = root["material"]) {
    allow(n, "material", {"id", "params"});
    get(n, "id", "material", cfg_.material.id);
    if (auto p = n["params"]) {
      if (!p.IsMap()) fail(p, "material.params", "expected a mapping");
      for (const auto& kv : p) {
        const std::string k = kv.first.as<std::string>();
        cfg_.material.params[k] = scalar<double>(kv.second, "material.params." + k, "a number");
        cfg_.locations["material.params." + k] = loc(kv.second);
      }
    }
  }
  if (auto n = root["ambient"]) {
    allow(n, "ambient", {"interpolation", "schedule"});
    get(n, "interpolation", "ambient", cfg_.ambient.interpolation);
    if (auto s = n["schedule"]) {
      if (!s.IsSequence()) fail(s, "ambient.schedule", "expected a list");
      cfg_.ambient.schedule.clear();
      for (std::size_t k = 0; k < s.size(); ++k) {
        const std::string key = "ambient.schedule[" + std::to_string(k) + "]";
        allow(s[k], key, {"t", "T_inf", "rho_inf"});
        AmbientConditions::Point p{0.0, 0.0, 0.0};
        get(s[k], "t", key, p.t);
        get(s[k], "T_inf", key, p.T_inf);
        get(s[k], "rho_inf", key, p.rho_inf);
        if (!s[k]["T_inf"] || !s[k]["rho_inf"]) fail(s[k], key, "needs T_inf and rho_inf");
        cfg_.ambient.schedule.push_back(p);
      }
      cfg_.locations["ambient.schedule"] = loc(s);
    }
  }
  if (auto n = root["initial"]) {
    allow(n, "initial", {"x0", "T0", "sweep"});
    get(n, "x0", "initial", cfg_.initial.x0);
    get(n, "T0", "initial", cfg_.initial.T0);
    get(n, "sweep", "initial", cfg_.initial.sweep);
  }
  if (auto n = root["simulation"]) {
    allow(n, "simulation", {"t_end", "snapshots", "dt", "safety", "clamp_tolerance"});
    get(n, "t_end", "simulation", cfg_.simulation.t_end);
    get(n, "snapshots", "simulation", cfg_.simulation.snapshots);
    get(n, "dt", "simulation", cfg_.simulation.dt);
    get(n, "safety", "simulation", cfg_.simulation.safety);
    get(n, "clamp_tolerance", "simulation", cfg_.simulation.clamp_tolerance);
  }
  if (auto n = root["pod"]) {
    allow(n, "pod", {"threshold", "n_x", "n_T", "rank_tol"});
    get(n, "threshold", "pod", cfg_.pod.threshold);
    get(n, "n_x", "pod", cfg_.pod.n_x);
    get(n, "n_T", "pod", cfg_.pod.n_T);
    get(n, "rank_tol", "pod", cfg_.pod.rank_tol);
  }
  if (auto n = root["rom"]) {
    allow(n, "rom", {"rtol", "atol"});
    get(n, "rtol", "rom", cfg_.rom.rtol);
    get(n, "atol", "rom", cfg_.rom.atol);
  }
  if (auto n = root["gramian"]) {
    allow(n, "gramian",
          {"magnitudes", "dt", "m_f", "settle_tol", "rtol", "atol_rel", "T_inf", "rho_inf", "orders"});
    get(n, "magnitudes", "gramian", cfg_.gramian.magnitudes);
    get(n, "dt", "gramian", cfg_.gramian.dt);
    get(n, "m_f", "gramian", cfg_.gramian.m_f);
    get(n, "settle_tol", "gramian", cfg_.gramian.settle_tol);
    get(n, "rtol", "gramian", cfg_.gramian.rtol);
    get(n, "atol_rel", "gramian", cfg_.gramian.atol_rel);
    get(n, "T_inf", "gramian", cfg_.gramian.T_inf);
    get(n, "rho_inf", "gramian", cfg_.gramian.rho_inf);
    get(n, "orders", "gramian", cfg_.gramian.orders);
  }
  if (auto n = root["mask"]) {
    allow(n, "mask", {"type", "face", "nu", "nv", "u0", "u1", "v0", "v1", "cells", "cell"});
    get(n, "type", "mask", cfg_.mask.type);
    get(n, "face", "mask", cfg_.mask.face);
    get(n, "nu", "mask", cfg_.mask.nu);
    get(n, "nv", "mask", cfg_.mask.nv);
    get(n, "u0", "mask", cfg_.mask.u0);
    get(n, "u1", "mask", cfg_.mask.u1);
    get(n, "v0", "mask", cfg_.mask.v0);
    get(n, "v1", "mask", cfg_.mask.v1);
    get(n, "cells", "mask", cfg_.mask.cells);
    get(n, "cell", "mask", cfg_.mask.cell);
  }
  if (auto n = root["ekf"]) {
    allow(n, "ekf", {"measurement_interval", "horizon", "Q", "R", "coefficient_unit_volume", "jacobian_step",
                     "rtol", "atol", "noise", "scenarios"});
    get(n, "measurement_interval", "ekf", cfg_.ekf.measurement_interval);
    get(n, "horizon", "ekf", cfg_.ekf.horizon);
    get(n, "Q", "ekf", cfg_.ekf.Q);
    get(n, "R", "ekf", cfg_.ekf.R);
    get(n, "coefficient_unit_volume", "ekf", cfg_.ekf.coefficient_unit_volume);
    get(n, "jacobian_step", "ekf", cfg_.ekf.jacobian_step);
    get(n, "rtol", "ekf", cfg_.ekf.rtol);
    get(n, "atol", "ekf", cfg_.ekf.atol);
    get(n, "noise", "ekf", cfg_.ekf.noise);
    if (auto s = n["scenarios"]) {
      if (!s.IsSequence()) fail(s, "ekf.scenarios", "expected a list");
      cfg_.ekf.scenarios.clear();
      for (std::size_t k = 0; k < s.size(); ++k) {
        const std::string key = "ekf.scenarios[" + std::to_string(k) + "]";
        allow(s[k], key, {"name", "init", "x_guess", "P0"});
        ScenarioSpec sc;
        get(s[k], "name", key, sc.name);
        get(s[k], "init", key, sc.init);
        get(s[k], "x_guess", key, sc.x_guess);
        get(s[k], "P0", key, sc.P0);
        if (sc.name.empty()) fail(s[k], key, "scenario needs a name");
        cfg_.ekf.scenarios.push_back(sc);
      }
      cfg_.locations["ekf.scenarios"] = loc(s);
    }
  }
  if (auto n = root["output"]) {
    allow(n, "output", {"dir"});
    get(n, "dir", "output", cfg_.output_dir);
  }
  if (root["seed"]) get(root, "seed", "", cfg_.seed);
}

inline YAML::Node load_yaml(const std::string& text, const std::string& source) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigurationError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
}

}  // namespace detail

inline std::vector<std::string> preset_names() { return {"paper-5"}; }

inline const char* preset_text(const std::string& name) {
  if (name == "paper-5") return kPaper5Preset;
  throw ConfigurationError("unknown preset '" + name + "' (available: paper-5)");
}

inline void validate_config(const PipelineConfig& cfg);

namespace detail {

inline PipelineConfig build_config(std::string base, const YAML::Node& user, const std::string& user_src) {
  PipelineConfig cfg;
  if (user && user.IsMap() && user["preset"]) {
    const auto n = user["preset"];
    if (!n.IsScalar()) throw ConfigurationError(user_src + ":" + std::to_string(n.Mark().line + 1) + ": preset: expected a name");
    if (!base.empty() && base != n.Scalar()) {
      throw ConfigurationError(user_src + ": preset '" + n.Scalar() + "' conflicts with --preset " + base);
    }
    base = n.Scalar();
  }
  if (!base.empty()) {
    Reader(cfg, "preset:" + base).apply(load_yaml(preset_text(base), "preset:" + base));
  }
  if (user) Reader(cfg, user_src).apply(user);
  validate_config(cfg);
  return cfg;
}

}  // namespace detail

/// Builds a configuration from an optional preset and an optional user file.
/// A `preset:` key in the file is applied before the file's own settings.
inline PipelineConfig load_config(const std::string& preset, const std::filesystem::path& file = {}) {
  YAML::Node user;
  std::string user_src;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigurationError("cannot read config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    user_src = file.string();
    user = detail::load_yaml(ss.str(), user_src);
  }
  return detail::build_config(preset, user, user_src);
}

/// Same as load_config with the user settings given as text.
inline PipelineConfig load_config_text(const std::string& text, const std::string& source = "<string>",
                                       const std::string& preset = "") {
  return detail::build_config(preset, detail::load_yaml(text, source), source);
}

// ---------------------------------------------------------------------------
// Materialisation

inline Grid make_grid(const PipelineConfig& c) {
  return Grid(c.grid.nx, c.grid.ny, c.grid.nz, c.grid.cell_size, parse_axis(c.grid.fiber_axis));
}

inline CalibrationWoodParams calibration_params(const std::map<std::string, double>& overrides,
                                                const PipelineConfig* cfg = nullptr) {
  CalibrationWoodParams p;
  const std::map<std::string, double*> slots{
      {"delta0", &p.delta0}, {"E_delta", &p.E_delta}, {"a_fiber", &p.a_fiber}, {"a_perp", &p.a_perp},
      {"lambda0", &p.lambda0}, {"lambda1", &p.lambda1}, {"b_fiber", &p.b_fiber}, {"b_perp", &p.b_perp},
      {"rho_d", &p.rho_d}, {"c_dry", &p.c_dry}, {"c_water", &p.c_water}, {"k_m", &p.k_m},
      {"alpha", &p.alpha}, {"dh_v", &p.dh_v}, {"x_s", &p.x_s}};
  for (const auto& [k, v] : overrides) {
    auto it = slots.find(k);
    if (it == slots.end()) {
      const std::string at = cfg ? cfg->where("material.params." + k) + ": " : std::string();
      throw ConfigurationError(at + "material.params." + k + ": unknown calibration-wood parameter");
    }
    *it->second = v;
  }
  return p;
}

inline std::shared_ptr<const MaterialModel> make_material(const PipelineConfig& c) {
  if (c.material.id != "calibration-wood-v1") {
    throw ConfigurationError(c.where("material.id") + ": material.id: unknown material model '" + c.material.id +
                             "' (available: calibration-wood-v1)");
  }
  try {
    return std::make_shared<CalibrationWood>(calibration_params(c.material.params, &c));
  } catch (const InvalidArgument& e) {
    throw ConfigurationError(c.where("material.params") + ": material.params: " + e.what());
  }
}

inline AmbientConditions make_ambient(const PipelineConfig& c) {
  return AmbientConditions(c.ambient.schedule, c.ambient.interpolation == "linear"
                                                   ? AmbientConditions::Interpolation::Linear
                                                   : AmbientConditions::Interpolation::Constant);
}

inline AmbientConditions make_gramian_ambient(const PipelineConfig& c) {
  return AmbientConditions::constant(c.gramian.T_inf, c.gramian.rho_inf);
}

inline SurfaceMask make_mask(const PipelineConfig& c, const Grid& g) {
  const MaskSpec& m = c.mask;
  const std::string at = c.where("mask.type") + ": mask: ";
  try {
    if (m.type == "centered") return centered_face_mask(g, parse_face(m.face), m.nu, m.nv);
    if (m.type == "rectangle") return face_rectangle_mask(g, parse_face(m.face), m.u0, m.u1, m.v0, m.v1);
    if (m.type == "cells") return SurfaceMask(g, m.cells);
    if (m.type == "single") return single_cell_mask(g, m.cell);
  } catch (const InvalidArgument& e) {
    throw ConfigurationError(at + e.what());
  }
  throw ConfigurationError(at + "unknown type '" + m.type + "' (centered, rectangle, cells, single)");
}

inline PerturbationScheme make_scheme(const PipelineConfig& c) {
  PerturbationScheme s;
  s.magnitudes = c.gramian.magnitudes;
  return s;
}

inline SamplingOptions make_sampling(const PipelineConfig& c) {
  SamplingOptions so;
  so.dt = c.gramian.dt;
  so.m_f = c.gramian.m_f;
  so.settle_tol = c.gramian.settle_tol;
  so.rtol = c.gramian.rtol;
  so.atol_rel = c.gramian.atol_rel;
  return so;
}

inline OdeOptions make_rom_tolerances(const PipelineConfig& c) {
  OdeOptions o;
  o.rtol = c.rom.rtol;
  o.atol = c.rom.atol;
  return o;
}

/// Filter settings in SI coefficient units: Q and P0 are scaled from the
/// configured coefficient unit to m^3.
inline EkfConfig make_ekf_config(const PipelineConfig& c, int n, double P0) {
  const double u = c.ekf.coefficient_unit_volume;
  EkfConfig e;
  e.Q = c.ekf.Q * u * Eigen::MatrixXd::Identity(n, n);
  e.P0 = P0 * u * Eigen::MatrixXd::Identity(n, n);
  e.R = c.ekf.R;
  e.measurement_interval = c.ekf.measurement_interval;
  e.jacobian_step = c.ekf.jacobian_step;
  e.ode.rtol = c.ekf.rtol;
  e.ode.atol = c.ekf.atol;
  return e;
}

// ---------------------------------------------------------------------------
// Validation

inline void validate_config(const PipelineConfig& c) {
  auto bad = [&](const std::string& key, const std::string& msg) {
    throw ConfigurationError(c.where(key) + ": " + key + ": " + msg);
  };
  if (c.grid.nx < 1 || c.grid.ny < 1 || c.grid.nz < 1) bad("grid.nx", "grid dimensions must be >= 1");
  if (!(c.grid.cell_size > 0)) bad("grid.cell_size", "must be > 0");
  try {
    parse_axis(c.grid.fiber_axis);
  } catch (const InvalidArgument& e) {
    bad("grid.fiber_axis", e.what());
  }
  if (c.ambient.interpolation != "constant" && c.ambient.interpolation != "linear") {
    bad("ambient.interpolation", "expected constant or linear");
  }
  try {
    make_ambient(c);
  } catch (const InvalidArgument& e) {
    bad("ambient.schedule", e.what());
  }
  if (!(c.initial.x0 >= 0)) bad("initial.x0", "must be >= 0");
  if (!(c.initial.T0 > 0)) bad("initial.T0", "must be > 0 K");
  for (double x : c.initial.sweep) {
    if (!(x >= 0)) bad("initial.sweep", "initial moistures must be >= 0");
  }
  if (!(c.simulation.t_end >= 0)) bad("simulation.t_end", "must be >= 0");
  if (c.simulation.snapshots < 1) bad("simulation.snapshots", "must be >= 1");
  if (c.simulation.t_end > 0 && c.simulation.snapshots < 2) {
    bad("simulation.snapshots", "a nonzero horizon needs at least 2 snapshots");
  }
  if (!(c.simulation.dt >= 0)) bad("simulation.dt", "must be >= 0 (0 selects the stable maximum)");
  if (!(c.simulation.safety > 0 && c.simulation.safety <= 1)) bad("simulation.safety", "must be in (0, 1]");
  if (!(c.pod.threshold > 0 && c.pod.threshold <= 1)) bad("pod.threshold", "must be in (0, 1]");
  if (c.pod.n_x < 0 || c.pod.n_T < 0) bad("pod.n_x", "orders must be >= 0 (0 = use threshold)");
  if (!(c.rom.rtol > 0 && c.rom.atol > 0)) bad("rom.rtol", "tolerances must be > 0");
  try {
    make_scheme(c).validate();
  } catch (const InvalidArgument& e) {
    bad("gramian.magnitudes", e.what());
  }
  try {
    make_sampling(c).validate();
  } catch (const InvalidArgument& e) {
    bad("gramian.m_f", e.what());
  }
  for (int n : c.gramian.orders) {
    if (n < 2 || n % 2 != 0) bad("gramian.orders", "orders must be even and >= 2 (split equally between fields)");
  }
  if (!(c.gramian.T_inf > 0 && c.gramian.rho_inf >= 0)) bad("gramian.T_inf", "invalid Gramian ambient");
  if (!(c.ekf.measurement_interval > 0)) bad("ekf.measurement_interval", "must be > 0");
  if (!(c.ekf.horizon > 0)) bad("ekf.horizon", "must be > 0");
  if (!(c.ekf.Q >= 0)) bad("ekf.Q", "must be >= 0");
  if (!(c.ekf.R > 0)) bad("ekf.R", "must be > 0");
  if (!(c.ekf.coefficient_unit_volume > 0)) bad("ekf.coefficient_unit_volume", "must be > 0");
  if (!(c.ekf.rtol > 0 && c.ekf.atol > 0)) bad("ekf.rtol", "tolerances must be > 0");
  for (const auto& s : c.ekf.scenarios) {
    if (s.init != "guess" && s.init != "truth") bad("ekf.scenarios", "init must be guess or truth");
    if (!(s.P0 >= 0)) bad("ekf.scenarios", "P0 must be >= 0");
    if (!(s.x_guess >= 0)) bad("ekf.scenarios", "x_guess must be >= 0");
  }
  if (c.output_dir.empty()) bad("output.dir", "must not be empty");
  const Grid g = make_grid(c);
  make_material(c);
  make_mask(c, g);
}

// ---------------------------------------------------------------------------
// Canonical text and section hashes

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string list(const std::vector<T>& v) {
  std::string s = "[";
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) s += ", ";
    if constexpr (std::is_integral_v<T>) {
      s += std::to_string(v[k]);
    } else {
      s += num(v[k]);
    }
  }
  return s + "]";
}

}  // namespace detail

/// Resolved configuration as YAML, one string per top-level section.
/// The text is deterministic and is what section hashes are computed from.
inline std::map<std::string, std::string> canonical_sections(const PipelineConfig& c) {
  using detail::list;
  using detail::num;
  std::map<std::string, std::string> out;
  std::ostringstream os;
  auto take = [&](const std::string& name) {
    out[name] = os.str();
    os.str("");
  };
  os << "grid:\n  nx: " << c.grid.nx << "\n  ny: " << c.grid.ny << "\n  nz: " << c.grid.nz
     << "\n  cell_size: " << num(c.grid.cell_size) << "\n  fiber_axis: " << c.grid.fiber_axis << "\n";
  take("grid");
  os << "material:\n  id: " << c.material.id << "\n  params:";
  if (c.material.params.empty()) os << " {}";
  os << "\n";
  for (const auto& [k, v] : c.material.params) os << "    " << k << ": " << num(v) << "\n";
  take("material");
  os << "ambient:\n  interpolation: " << c.ambient.interpolation << "\n  schedule:\n";
  for (const auto& p : c.ambient.schedule) {
    os << "    - {t: " << num(p.t) << ", T_inf: " << num(p.T_inf) << ", rho_inf: " << num(p.rho_inf) << "}\n";
  }
  take("ambient");
  os << "initial:\n  x0: " << num(c.initial.x0) << "\n  T0: " << num(c.initial.T0)
     << "\n  sweep: " << list(c.initial.sweep) << "\n";
  take("initial");
  os << "simulation:\n  t_end: " << num(c.simulation.t_end) << "\n  snapshots: " << c.simulation.snapshots
     << "\n  dt: " << num(c.simulation.dt) << "\n  safety: " << num(c.simulation.safety)
     << "\n  clamp_tolerance: " << num(c.simulation.clamp_tolerance) << "\n";
  take("simulation");
  os << "pod:\n  threshold: " << num(c.pod.threshold) << "\n  n_x: " << c.pod.n_x << "\n  n_T: " << c.pod.n_T
     << "\n  rank_tol: " << num(c.pod.rank_tol) << "\n";
  take("pod");
  os << "rom:\n  rtol: " << num(c.rom.rtol) << "\n  atol: " << num(c.rom.atol) << "\n";
  take("rom");
  os << "gramian:\n  magnitudes: " << list(c.gramian.magnitudes) << "\n  dt: " << num(c.gramian.dt)
     << "\n  m_f: " << c.gramian.m_f << "\n  settle_tol: " << num(c.gramian.settle_tol)
     << "\n  rtol: " << num(c.gramian.rtol) << "\n  atol_rel: " << num(c.gramian.atol_rel)
     << "\n  T_inf: " << num(c.gramian.T_inf) << "\n  rho_inf: " << num(c.gramian.rho_inf)
     << "\n  orders: " << list(c.gramian.orders) << "\n";
  take("gramian");
  os << "mask:\n  type: " << c.mask.type << "\n  face: \"" << c.mask.face << "\"\n  nu: " << c.mask.nu
     << "\n  nv: " << c.mask.nv << "\n  u0: " << c.mask.u0 << "\n  u1: " << c.mask.u1 << "\n  v0: " << c.mask.v0
     << "\n  v1: " << c.mask.v1 << "\n  cells: " << list(c.mask.cells) << "\n  cell: " << c.mask.cell << "\n";
  take("mask");
  os << "ekf:\n  measurement_interval: " << num(c.ekf.measurement_interval) << "\n  horizon: " << num(c.ekf.horizon)
     << "\n  Q: " << num(c.ekf.Q) << "\n  R: " << num(c.ekf.R)
     << "\n  coefficient_unit_volume: " << num(c.ekf.coefficient_unit_volume)
     << "\n  jacobian_step: " << num(c.ekf.jacobian_step) << "\n  rtol: " << num(c.ekf.rtol)
     << "\n  atol: " << num(c.ekf.atol) << "\n  noise: " << (c.ekf.noise ? "true" : "false") << "\n  scenarios:\n";
  for (const auto& sc : c.ekf.scenarios) {
    os << "    - {name: " << sc.name << ", init: " << sc.init << ", x_guess: " << num(sc.x_guess)
       << ", P0: " << num(sc.P0) << "}\n";
  }
  take("ekf");
  os << "output:\n  dir: " << c.output_dir << "\n";
  take("output");
  os << "seed: " << c.seed << "\n";
  take("seed");
  return out;
}

inline std::string to_yaml(const PipelineConfig& c) {
  static const char* order[] = {"grid", "material", "ambient", "initial", "simulation", "pod", "rom",
                                "gramian", "mask", "ekf", "output", "seed"};
  const auto sec = canonical_sections(c);
  std::string s;
  for (const char* k : order) s += sec.at(k);
  return s;
}

/// SHA-256 over the named sections, in the given order.
inline std::string section_hash(const PipelineConfig& c, std::initializer_list<const char*> names) {
  const auto sec = canonical_sections(c);
  Sha256 h;
  for (const char* n : names) h.update(sec.at(n));
  return h.hex();
}

}  // namespace dryobs::pipeline
