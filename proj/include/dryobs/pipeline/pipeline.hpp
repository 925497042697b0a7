#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dryobs/ekf.hpp"
#include "dryobs/errors.hpp"
#include "dryobs/fvm.hpp"
#include "dryobs/gramian.hpp"
#include "dryobs/io.hpp"
#include "dryobs/parallel.hpp"
#include "dryobs/pipeline/config.hpp"
#include "dryobs/pipeline/hash.hpp"
#include "dryobs/pod.hpp"
#include "dryobs/rom.hpp"

namespace dryobs::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

inline std::string compiler_id() {
#if defined(__clang__)
  return std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  return "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__) + "." +
         std::to_string(__GNUC_PATCHLEVEL__);
#else
  return "unknown";
#endif
}

// ---------------------------------------------------------------------------
// Manifest and stage cache

struct StageRecord {
  std::string key;
  double seconds = 0.0;
  std::vector<std::string> files;  // relative to the output directory
};

class Manifest {
 public:
  static constexpr const char* kName = "manifest.json";

  explicit Manifest(fs::path dir) : dir_(std::move(dir)) {
    const fs::path p = dir_ / kName;
    if (!fs::exists(p)) return;
    try {
      std::ifstream in(p);
      const json j = json::parse(in);
      for (const auto& [name, s] : j.at("stages").items()) {
        StageRecord r;
        r.key = s.at("key").get<std::string>();
        r.seconds = s.at("seconds").get<double>();
        r.files = s.at("files").get<std::vector<std::string>>();
        stages_[name] = r;
      }
      for (const auto& [f, h] : j.at("files").items()) hashes_[f] = h.get<std::string>();
    } catch (const std::exception&) {
      stages_.clear();
      hashes_.clear();
    }
  }

  /// True if `stage` was produced with `key` and its files are unchanged on disk.
  bool fresh(const std::string& stage, const std::string& key) const {
    auto it = stages_.find(stage);
    if (it == stages_.end() || it->second.key != key) return false;
    for (const auto& f : it->second.files) {
      const fs::path p = dir_ / f;
      auto h = hashes_.find(f);
      if (!fs::exists(p) || h == hashes_.end() || sha256_file(p) != h->second) return false;
    }
    return true;
  }

  void record(const std::string& stage, StageRecord r) { stages_[stage] = std::move(r); }

  /// Rewrites the manifest, hashing every file currently in the output directory.
  void save(const std::string& config_hash) {
    hashes_.clear();
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir_)) {
      if (!e.is_regular_file()) continue;
      const std::string rel = fs::relative(e.path(), dir_).generic_string();
      if (rel == kName) continue;
      files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    json j;
    j["config_hash"] = config_hash;
    j["versions"] = {{"dryobs", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                   "." + std::to_string(EIGEN_MINOR_VERSION)},
                     {"compiler", compiler_id()}};
    j["files"] = json::object();
    for (const auto& f : files) {
      hashes_[f] = sha256_file(dir_ / f);
      j["files"][f] = hashes_[f];
    }
    j["stages"] = json::object();
    for (const auto& [name, r] : stages_) {
      j["stages"][name] = {{"key", r.key}, {"seconds", r.seconds}, {"files", r.files}};
    }
    std::ofstream out(dir_ / kName);
    out << j.dump(2) << '\n';
  }

  const std::map<std::string, StageRecord>& stages() const { return stages_; }
  const std::map<std::string, std::string>& hashes() const { return hashes_; }

 private:
  fs::path dir_;
  std::map<std::string, StageRecord> stages_;
  std::map<std::string, std::string> hashes_;
};

struct Context {
  PipelineConfig cfg;
  fs::path out;
  bool force = false;
  std::ostream* log = &std::cerr;

  Grid grid() const { return make_grid(cfg); }
  std::shared_ptr<const MaterialModel> material() const { return make_material(cfg); }
  std::ostream& say() const { return *log; }
};

namespace detail {

inline std::string x0_label(double x0) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x0);
  return buf;
}

inline std::string snapshot_name(double x0) { return "snapshots/x0_" + x0_label(x0) + ".snap"; }

/// Sweep values with the training value first and duplicates removed.
inline std::vector<double> simulated_x0(const PipelineConfig& c) {
  std::vector<double> v{c.initial.x0};
  for (double x : c.initial.sweep) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  }
  return v;
}

struct Plan {
  double dt = 0.0;
  int record_every = 1;
};

/// Step size dividing `interval` into equal stable steps.
inline Plan sampling_plan(const Grid& g, const MaterialModel& mat, double interval, double dt_request,
                          double safety) {
  const double dt_max = max_stable_dt(g, mat, safety);
  const double want = dt_request > 0 ? dt_request : dt_max;
  if (interval <= 0) return {want, 1};
  const int per = std::max(1, static_cast<int>(std::ceil(interval / want - 1e-9)));
  // An explicit request larger than the bound is passed through so integrate() reports it.
  return {dt_request > dt_max ? dt_request : interval / per, per};
}

template <class Fn>
double timed(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw ConfigurationError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

inline json matrix_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) {
      const double v = M(i, k);
      r.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    }
    rows.push_back(r);
  }
  return rows;
}

inline json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v[i]) ? json(v[i]) : json(nullptr));
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage keys

inline std::string simulate_key(const PipelineConfig& c) {
  return section_hash(c, {"grid", "material", "ambient", "initial", "simulation"});
}
inline std::string pod_key(const PipelineConfig& c) { return sha256(simulate_key(c) + section_hash(c, {"pod"})); }
inline std::string rom_key(const PipelineConfig& c) { return sha256(pod_key(c) + section_hash(c, {"rom"})); }
inline std::string gramian_key(const PipelineConfig& c) {
  return sha256(pod_key(c) + section_hash(c, {"gramian", "mask"}));
}
inline std::string order_study_key(const PipelineConfig& c) {
  return sha256(simulate_key(c) + section_hash(c, {"pod", "gramian", "mask"}));
}
inline std::string sweep_key(const PipelineConfig& c) { return sha256(pod_key(c) + section_hash(c, {"gramian"})); }
inline std::string ekf_key(const PipelineConfig& c) {
  return sha256(pod_key(c) + section_hash(c, {"ekf", "mask", "seed"}));
}

// ---------------------------------------------------------------------------
// Loaded artifacts

inline io::BasisFile load_basis(const Context& ctx) { return io::read_basis(ctx.out / "basis.bin"); }

inline CombinedBasis combined(const io::BasisFile& b) { return combine(b.moisture, b.temperature); }

/// Basis with n/2 modes per field taken from the stored decomposition.
inline CombinedBasis combined_order(const io::BasisFile& b, int n_x, int n_T) {
  if (n_x > b.moisture.rank() || n_T > b.temperature.rank()) {
    throw InvalidArgument("requested order exceeds the snapshot rank");
  }
  return CombinedBasis(b.moisture.mean, b.moisture.all_modes.leftCols(n_x), b.temperature.mean,
                       b.temperature.all_modes.leftCols(n_T), b.moisture.cell_volume);
}

/// ROM steady state for the Gramian ambient, started from the projected
/// uniform sorption equilibrium.
inline Eigen::VectorXd gramian_steady_state(const RomOperators& ops, const MaterialModel& mat,
                                            const PipelineConfig& c) {
  const double x_eq = mat.equilibrium_moisture(c.gramian.T_inf, c.gramian.rho_inf);
  const StateVector z = uniform_state(ops.grid, x_eq, c.gramian.T_inf);
  return rom_steady_state(project(z, ops.basis), ops).c;
}

// ---------------------------------------------------------------------------
// Stages

class Pipeline {
 public:
  explicit Pipeline(Context ctx) : ctx_(std::move(ctx)), manifest_(ctx_.out) {
    fs::create_directories(ctx_.out);
    std::ofstream(ctx_.out / "config.resolved.yaml") << to_yaml(ctx_.cfg);
  }

  ~Pipeline() {
    try {
      manifest_.save(sha256(to_yaml(ctx_.cfg)));
    } catch (...) {
    }
  }

  const Context& context() const { return ctx_; }
  Manifest& manifest() { return manifest_; }

  void simulate() {
    run_stage("simulate", simulate_key(ctx_.cfg), [&](StageRecord& rec) { do_simulate(rec); });
  }

  void pod() {
    simulate();
    run_stage("pod", pod_key(ctx_.cfg), [&](StageRecord& rec) { do_pod(rec); });
  }

  void rom() {
    pod();
    run_stage("rom", rom_key(ctx_.cfg), [&](StageRecord& rec) { do_rom(rec); });
  }

  void gramian(bool order_study) {
    pod();
    run_stage("gramian", gramian_key(ctx_.cfg), [&](StageRecord& rec) { do_gramian(rec); });
    if (order_study) {
      run_stage("order_study", order_study_key(ctx_.cfg), [&](StageRecord& rec) { do_order_study(rec); });
    }
  }

  void sweep() {
    pod();
    run_stage("sweep", sweep_key(ctx_.cfg), [&](StageRecord& rec) { do_sweep(rec); });
  }

  void ekf() {
    pod();
    run_stage("ekf", ekf_key(ctx_.cfg), [&](StageRecord& rec) { do_ekf(rec); });
  }

 private:
  template <class Fn>
  void run_stage(const std::string& name, const std::string& key, Fn&& fn) {
    if (!ctx_.force && manifest_.fresh(name, key)) {
      ctx_.say() << "[" << name << "] up to date\n";
      return;
    }
    ctx_.say() << "[" << name << "] running\n";
    StageRecord rec;
    rec.key = key;
    rec.seconds = detail::timed([&] { fn(rec); });
    std::sort(rec.files.begin(), rec.files.end());
    ctx_.say() << "[" << name << "] done in " << rec.seconds << " s\n";
    manifest_.record(name, rec);
    manifest_.save(sha256(to_yaml(ctx_.cfg)));
  }

  fs::path path(const std::string& rel) const { return ctx_.out / rel; }

  void do_simulate(StageRecord& rec) {
    const PipelineConfig& c = ctx_.cfg;
    const Grid g = ctx_.grid();
    const auto mat = ctx_.material();
    const auto amb = make_ambient(c);
    const auto xs = detail::simulated_x0(c);
    const int intervals = c.simulation.snapshots - 1;
    const detail::Plan plan =
        intervals > 0 ? detail::sampling_plan(g, *mat, c.simulation.t_end / intervals, c.simulation.dt,
                                              c.simulation.safety)
                      : detail::Plan{c.simulation.dt > 0 ? c.simulation.dt : max_stable_dt(g, *mat), 1};
    IntegrateOptions opt;
    opt.safety = c.simulation.safety;
    opt.clamp_tolerance = c.simulation.clamp_tolerance;
    std::vector<Trajectory> runs(xs.size());
    parallel_for(static_cast<int>(xs.size()), [&](int k) {
      runs[k] = integrate(uniform_state(g, xs[k], c.initial.T0), g, *mat, amb, {0.0, c.simulation.t_end}, plan.dt,
                          plan.record_every, opt);
    });
    fs::create_directories(path("snapshots"));
    for (std::size_t k = 0; k < xs.size(); ++k) {
      io::write_snapshots(path(detail::snapshot_name(xs[k])), g, mat->id(), runs[k]);
      rec.files.push_back(detail::snapshot_name(xs[k]));
      if (runs[k].clamped_moisture > 0) {
        ctx_.say() << "  x0=" << xs[k] << ": " << runs[k].clamped_moisture << " round-off clamps of negative moisture\n";
      }
    }
    io::CsvWriter w(path("total_moisture.csv"));
    std::vector<std::string> head{"t"};
    for (double x : xs) head.push_back("X_x0_" + detail::x0_label(x));
    w.header(head);
    for (std::size_t j = 0; j < runs[0].size(); ++j) {
      std::vector<double> row{runs[0].times[j]};
      for (const auto& r : runs) row.push_back(total_moisture(r.states[j], g));
      w.row(row);
    }
    rec.files.push_back("total_moisture.csv");
    ctx_.say() << "  " << xs.size() << " runs, " << runs[0].size() << " snapshots each, dt = " << plan.dt << " s\n";
  }

  void do_pod(StageRecord& rec) {
    const PipelineConfig& c = ctx_.cfg;
    const io::SnapshotFile sf = io::read_snapshots(path(detail::snapshot_name(c.initial.x0)));
    PodBasis px = compute_pod(sf.field(FieldId::Moisture), c.pod.rank_tol);
    PodBasis pT = compute_pod(sf.field(FieldId::Temperature), c.pod.rank_tol);
    auto pick = [&](PodBasis& b, int requested, const char* key) {
      if (requested == 0) {
        b.cutoff = choose_cutoff(b, c.pod.threshold);
      } else if (requested > b.rank()) {
        throw ConfigurationError(c.where(key) + ": " + key + ": " + std::to_string(requested) +
                                 " modes requested but the snapshots have rank " + std::to_string(b.rank()));
      } else {
        b.cutoff = requested;
      }
    };
    pick(px, c.pod.n_x, "pod.n_x");
    pick(pT, c.pod.n_T, "pod.n_T");
    io::write_basis(path("basis.bin"), px, pT, sf.grid.fingerprint());
    rec.files.push_back("basis.bin");

    io::CsvWriter w(path("spectrum.csv"));
    w.header({"k", "sigma_x", "energy_x", "sigma_T", "energy_T"});
    const int rows = std::max(px.rank(), pT.rank());
    for (int k = 1; k <= rows; ++k) {
      auto cell = [](const PodBasis& b, int k, bool energy_col) {
        if (k > b.rank()) return std::string();
        return io::fmt(energy_col ? energy(b, k) : b.singular_values[k - 1]);
      };
      w.row(std::vector<std::string>{std::to_string(k), cell(px, k, false), cell(px, k, true), cell(pT, k, false),
                                     cell(pT, k, true)});
    }
    rec.files.push_back("spectrum.csv");
    ctx_.say() << "  rank " << px.rank() << " / " << pT.rank() << "; n_x = " << px.cutoff << " (E = "
               << energy(px, px.cutoff) << "), n_T = " << pT.cutoff << " (E = " << energy(pT, pT.cutoff) << ")\n";
    const int thr_x = choose_cutoff(px, c.pod.threshold), thr_T = choose_cutoff(pT, c.pod.threshold);
    ctx_.say() << "  threshold " << c.pod.threshold << " selects n_x = " << thr_x << ", n_T = " << thr_T << "\n";
  }

  void do_rom(StageRecord& rec) {
    const PipelineConfig& c = ctx_.cfg;
    const io::BasisFile bf = load_basis(ctx_);
    const CombinedBasis basis = combined(bf);
    const Grid g = ctx_.grid();
    const RomOperators ops = assemble(basis, g, ctx_.material(), make_ambient(c));
    const auto xs = detail::simulated_x0(c);
    struct Result {
      io::SnapshotFile truth;
      RomTrajectory rom;
      EstimationErrors err;
    };
    std::vector<Result> res(xs.size());
    parallel_for(static_cast<int>(xs.size()), [&](int k) {
      res[k].truth = io::read_snapshots(path(detail::snapshot_name(xs[k])));
      const Trajectory tr = res[k].truth.trajectory();
      res[k].rom = integrate_rom(project_initial(tr.states.front(), basis), ops, tr.times, make_rom_tolerances(c));
      res[k].err = estimation_errors(tr.states, res[k].rom.coefficients, basis);
    });

    io::CsvWriter we(path("rom_errors.csv"));
    we.header({"x0", "eps_T", "eps_x", "eps_X"});
    for (std::size_t k = 0; k < xs.size(); ++k) {
      we.row({xs[k], res[k].err.eps_T, res[k].err.eps_x, res[k].err.eps_X});
      ctx_.say() << "  x0=" << xs[k] << ": eps_T=" << res[k].err.eps_T << " eps_x=" << res[k].err.eps_x
                 << " eps_X=" << res[k].err.eps_X << "\n";
    }
    rec.files.push_back("rom_errors.csv");

    // Coefficients of the training run next to the projected snapshots.
    const int n = basis.order();
    io::CsvWriter wc(path("rom_coefficients.csv"));
    std::vector<std::string> head{"t"};
    for (int i = 1; i <= n; ++i) head.push_back("c_" + std::to_string(i));
    for (int i = 1; i <= n; ++i) head.push_back("ref_" + std::to_string(i));
    wc.header(head);
    const Result& r0 = res.front();
    for (Eigen::Index j = 0; j < r0.truth.states.cols(); ++j) {
      const Eigen::VectorXd ref = project(Eigen::VectorXd(r0.truth.states.col(j)), basis);
      std::vector<double> row{r0.truth.times[static_cast<std::size_t>(j)]};
      for (int i = 0; i < n; ++i) row.push_back(r0.rom.coefficients[static_cast<std::size_t>(j)][i]);
      for (int i = 0; i < n; ++i) row.push_back(ref[i]);
      wc.row(row);
    }
    rec.files.push_back("rom_coefficients.csv");

    io::CsvWriter wx(path("rom_total_moisture.csv"));
    head = {"t"};
    for (double x : xs) {
      head.push_back("X_fvm_x0_" + detail::x0_label(x));
      head.push_back("X_rom_x0_" + detail::x0_label(x));
    }
    wx.header(head);
    for (std::size_t j = 0; j < r0.truth.times.size(); ++j) {
      std::vector<double> row{r0.truth.times[j]};
      for (const auto& r : res) {
        row.push_back(r.truth.states.col(static_cast<Eigen::Index>(j)).head(g.cell_count()).mean());
        row.push_back(rom_total_moisture(r.rom.coefficients[j], basis));
      }
      wx.row(row);
    }
    rec.files.push_back("rom_total_moisture.csv");
  }

  void do_gramian(StageRecord& rec) {
    const PipelineConfig& c = ctx_.cfg;
    const CombinedBasis basis = combined(load_basis(ctx_));
    const Grid g = ctx_.grid();
    const auto mat = ctx_.material();
    const RomOperators ops = assemble(basis, g, mat, make_gramian_ambient(c));
    const SurfaceMask mask = make_mask(c, g);
    const Eigen::VectorXd c_ss = gramian_steady_state(ops, *mat, c);
    const GramianResult r = reduced_gramian(ops, mask, make_scheme(c), c_ss, make_sampling(c));
    const GramianEigs e = gramian_eigs(r, basis);
    json j;
    j["order"] = {{"n_x", basis.n_x()}, {"n_T", basis.n_T()}};
    j["kappa"] = r.kappa;
    j["min_eigenvalue"] = e.min_eigenvalue;
    j["positive_definite"] = e.positive_definite;
    j["eigenvalues"] = detail::vector_json(r.eigenvalues);
    j["eigenvectors"] = detail::matrix_json(r.eigenvectors);
    j["semi_axes"] = detail::matrix_json(r.semi_axes);
    j["W"] = detail::matrix_json(r.W);
    j["c_ss"] = detail::vector_json(r.c_ss);
    j["mask"] = r.mask;
    j["scheme"] = {{"magnitudes", r.scheme.magnitudes}, {"directions", r.scheme.r()}};
    j["sampling"] = {{"dt", r.sampling.dt}, {"m_f", r.sampling.m_f}, {"settle_tol", r.sampling.settle_tol},
                     {"rtol", r.sampling.rtol}, {"atol_rel", r.sampling.atol_rel}};
    j["ambient"] = {{"T_inf", c.gramian.T_inf}, {"rho_inf", c.gramian.rho_inf}};
    j["rhs_evaluations"] = r.rhs_evals;
    detail::write_json(path("gramian.json"), j);
    rec.files.push_back("gramian.json");
    io::CsvWriter w(path("gramian_eigenvalues.csv"));
    w.header({"k", "eigenvalue"});
    for (Eigen::Index k = 0; k < r.eigenvalues.size(); ++k) w.row({static_cast<double>(k + 1), r.eigenvalues[k]});
    rec.files.push_back("gramian_eigenvalues.csv");
    ctx_.say() << "  kappa = " << r.kappa << ", min eigenvalue = " << e.min_eigenvalue << " (mask of " << mask.size()
               << " cells)\n";
  }

  void do_order_study(StageRecord& rec) {
    const PipelineConfig& c = ctx_.cfg;
    const io::BasisFile bf = load_basis(ctx_);
    const Grid g = ctx_.grid();
    const auto mat = ctx_.material();
    const SurfaceMask mask = make_mask(c, g);
    struct Row {
      int n = 0;
      double kappa = std::numeric_limits<double>::quiet_NaN();
      double min_eig = std::numeric_limits<double>::quiet_NaN();
      std::string status = "ok";
    };
    std::vector<Row> rows;
    for (int n : c.gramian.orders) {
      Row row;
      row.n = n;
      const double secs = detail::timed([&] {
        try {
          const CombinedBasis basis = combined_order(bf, n / 2, n / 2);
          const RomOperators ops = assemble(basis, g, mat, make_gramian_ambient(c));
          const Eigen::VectorXd c_ss = gramian_steady_state(ops, *mat, c);
          const GramianResult r = reduced_gramian(ops, mask, make_scheme(c), c_ss, make_sampling(c));
          row.kappa = r.kappa;
          row.min_eig = r.min_eigenvalue();
        } catch (const InvalidArgument& e) {
          row.status = std::string("skipped: ") + e.what();
        } catch (const NumericalError& e) {
          row.status = std::string("failed: ") + e.what();
        }
      });
      ctx_.say() << "  n=" << n << ": kappa=" << row.kappa << " (" << row.status << ", " << secs << " s)\n";
      rows.push_back(row);
    }
    double ref = std::numeric_limits<double>::quiet_NaN();
    int ref_n = 0;
    for (const auto& r : rows) {
      if (r.status == "ok" && r.n >= ref_n) {
        ref = r.kappa;
        ref_n = r.n;
      }
    }
    io::CsvWriter w(path("order_study.csv"));
    w.header({"n", "n_x", "n_T", "kappa", "relative_to_reference", "min_eigenvalue", "status"});
    bool band3 = true;
    for (const auto& r : rows) {
      const double rel = r.kappa / ref - 1.0;
      if (r.status == "ok" && std::abs(rel) > 0.03) band3 = false;
      std::string status = r.status;
      std::replace(status.begin(), status.end(), ',', ';');
      w.row(std::vector<std::string>{std::to_string(r.n), std::to_string(r.n / 2), std::to_string(r.n / 2),
                                     io::fmt(r.kappa), io::fmt(rel), io::fmt(r.min_eig), status});
    }
    rec.files.push_back("order_study.csv");
    ctx_.say() << "  reference kappa(" << ref_n << ") = " << ref << "; all stable orders within +-3%: "
               << (band3 ? "yes" : "no") << "\n";
  }

  void do_sweep(StageRecord& rec) {
    const PipelineConfig& c = ctx_.cfg;
    const CombinedBasis basis = combined(load_basis(ctx_));
    const Grid g = ctx_.grid();
    const auto mat = ctx_.material();
    const RomOperators ops = assemble(basis, g, mat, make_gramian_ambient(c));
    const Eigen::VectorXd c_ss = gramian_steady_state(ops, *mat, c);
    const PositionSweepResult r = position_sweep(ops, make_scheme(c), c_ss, make_sampling(c));
    io::CsvWriter w(path("sweep.csv"));
    w.header({"cell", "i", "j", "k", "faces", "class", "kappa"});
    double fo_sum = 0, other_sum = 0;
    int fo_n = 0, other_n = 0;
    const Axis fiber = g.fiber_axis();
    for (const auto& e : r.entries) {
      w.row(std::vector<std::string>{std::to_string(e.cell), std::to_string(e.ijk.i), std::to_string(e.ijk.j),
                                     std::to_string(e.ijk.k), e.faces, e.surface_class, io::fmt(e.kappa)});
      if (e.surface_class != "face") continue;
      if (face_axis(g.normals(e.cell).front()) == fiber) {
        fo_sum += e.kappa;
        ++fo_n;
      } else {
        other_sum += e.kappa;
        ++other_n;
      }
    }
    rec.files.push_back("sweep.csv");
    json j;
    j["cells"] = r.entries.size();
    j["mean_kappa_fiber_orthogonal_faces"] = fo_n ? fo_sum / fo_n : 0.0;
    j["mean_kappa_other_faces"] = other_n ? other_sum / other_n : 0.0;
    j["best_cell"] = r.entries.empty() ? -1 : r.entries[static_cast<std::size_t>(r.ranking.front())].cell;
    j["rhs_evaluations"] = r.rhs_evals;
    detail::write_json(path("sweep_summary.json"), j);
    rec.files.push_back("sweep_summary.json");
    ctx_.say() << "  " << r.entries.size() << " surface cells; mean kappa fiber-orthogonal faces "
               << j["mean_kappa_fiber_orthogonal_faces"].get<double>() << ", other faces "
               << j["mean_kappa_other_faces"].get<double>() << "\n";
  }

  void do_ekf(StageRecord& rec) {
    const PipelineConfig& c = ctx_.cfg;
    const CombinedBasis basis = combined(load_basis(ctx_));
    const Grid g = ctx_.grid();
    const auto mat = ctx_.material();
    const RomOperators ops = assemble(basis, g, mat, make_ambient(c));
    const SurfaceMask mask = make_mask(c, g);

    // Truth run sampled at the measurement cadence.
    const double iv = c.ekf.measurement_interval;
    const double count = c.ekf.horizon / iv;
    if (std::abs(count - std::round(count)) > 1e-9 * count) {
      throw ConfigurationError(c.where("ekf.horizon") + ": ekf.horizon must be a multiple of the measurement interval");
    }
    const detail::Plan plan = detail::sampling_plan(g, *mat, iv, 0.0, c.simulation.safety);
    const Trajectory truth = integrate(uniform_state(g, c.initial.x0, c.initial.T0), g, *mat, make_ambient(c),
                                       {0.0, c.ekf.horizon}, plan.dt, plan.record_every);
    MeasurementStream stream;
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> noise(0.0, std::sqrt(c.ekf.R));
    for (std::size_t k = 0; k < truth.size(); ++k) {
      stream.times.push_back(truth.times[k]);
      stream.values.push_back(measure_output(truth.states[k], g, mask) + (c.ekf.noise ? noise(rng) : 0.0));
    }
    std::vector<double> X_true;
    for (const auto& z : truth.states) X_true.push_back(total_moisture(z, g));
    const auto [lo, hi] = std::minmax_element(X_true.begin(), X_true.end());
    const double X_range = *hi - *lo;

    io::CsvWriter ws(path("ekf_summary.csv"));
    ws.header({"scenario", "eps_T", "eps_x", "eps_X", "convergence_time"});
    json summary = json::array();
    for (const ScenarioSpec& sc : c.ekf.scenarios) {
      const EkfConfig ecfg = make_ekf_config(c, basis.order(), sc.P0);
      const Eigen::VectorXd c0 = sc.init == "truth" ? project(truth.states.front(), basis)
                                                    : init_from_measurement(stream.values.front(), sc.x_guess, basis);
      const FilterRun run = run_filter(stream, c0, 0.0, ecfg, ops, mask);
      const EstimationErrors err = estimation_errors(truth.states, run.estimates, basis);
      const auto tc = convergence_time(run.times, X_true, run.total_moisture);

      const std::string name = "ekf_" + sc.name + ".csv";
      io::CsvWriter w(path(name));
      w.header({"t", "w", "innovation", "X_hat", "X_true", "eps_X_to_date"});
      double sq = 0.0;
      for (std::size_t k = 0; k < run.times.size(); ++k) {
        sq += std::pow(run.total_moisture[k] - X_true[k], 2);
        w.row({run.times[k], stream.values[k], run.innovations[k], run.total_moisture[k], X_true[k],
               std::sqrt(sq / static_cast<double>(k + 1)) / X_range});
      }
      rec.files.push_back(name);
      ws.row(std::vector<std::string>{sc.name, io::fmt(err.eps_T), io::fmt(err.eps_x), io::fmt(err.eps_X),
                                      tc ? io::fmt(*tc) : std::string("never")});
      double mean_step = 0.0, max_step = 0.0;
      for (std::size_t k = 1; k < run.step_seconds.size(); ++k) {
        mean_step += run.step_seconds[k];
        max_step = std::max(max_step, run.step_seconds[k]);
      }
      mean_step /= std::max<std::size_t>(1, run.step_seconds.size() - 1);
      summary.push_back({{"scenario", sc.name},
                         {"eps_T", err.eps_T},
                         {"eps_x", err.eps_x},
                         {"eps_X", err.eps_X},
                         {"convergence_time", tc ? json(*tc) : json(nullptr)},
                         {"mean_step_seconds", mean_step},
                         {"max_step_seconds", max_step},
                         {"updates", run.times.size() - 1}});
      ctx_.say() << "  " << sc.name << ": eps_T=" << err.eps_T << " eps_x=" << err.eps_x << " eps_X=" << err.eps_X
                 << " t_conv=" << (tc ? io::fmt(*tc) : std::string("never")) << " s, mean step " << mean_step
                 << " s\n";
    }
    rec.files.push_back("ekf_summary.csv");
    detail::write_json(path("ekf_summary.json"), summary);
    rec.files.push_back("ekf_summary.json");
  }

  Context ctx_;
  Manifest manifest_;
};

}  // namespace dryobs::pipeline
