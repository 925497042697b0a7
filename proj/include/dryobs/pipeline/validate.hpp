#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dryobs/ekf.hpp"
#include "dryobs/fvm.hpp"
#include "dryobs/gramian.hpp"
#include "dryobs/io.hpp"
#include "dryobs/oracles.hpp"
#include "dryobs/pipeline/config.hpp"
#include "dryobs/pipeline/pipeline.hpp"
#include "dryobs/pod.hpp"
#include "dryobs/rom.hpp"

namespace dryobs::pipeline {

/// One measured quantity compared against a threshold.
struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  /// "<=" or ">=" for a bound, "in" for the closed interval [threshold, upper].
  std::string relation = "<=";
  double upper = 0.0;
  bool pass = false;
  std::string note;

  static Check at_most(std::string name, double value, double limit, std::string note = {}) {
    return {std::move(name), value, limit, "<=", 0.0, value <= limit, std::move(note)};
  }
  static Check at_least(std::string name, double value, double limit, std::string note = {}) {
    return {std::move(name), value, limit, ">=", 0.0, value >= limit, std::move(note)};
  }
  static Check within(std::string name, double value, double lo, double hi, std::string note = {}) {
    return {std::move(name), value, lo, "in", hi, value >= lo && value <= hi, std::move(note)};
  }
  static Check failed(std::string name, std::string why) {
    Check c;
    c.name = std::move(name);
    c.value = std::numeric_limits<double>::quiet_NaN();
    c.note = std::move(why);
    return c;
  }

  std::string bound() const {
    std::ostringstream os;
    os << std::setprecision(10);
    if (relation == "in") {
      os << "[" << threshold << ", " << upper << "]";
    } else {
      os << relation << " " << threshold;
    }
    return os.str();
  }
};

struct ValidationReport {
  std::vector<Check> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return !checks.empty();
  }

  void print(std::ostream& os) const {
    for (const auto& c : checks) {
      os << (c.pass ? "PASS " : "FAIL ") << std::left << std::setw(44) << c.name << std::right << std::setw(13)
         << std::setprecision(4) << c.value << "  " << c.bound();
      if (!c.note.empty()) os << "  (" << c.note << ")";
      os << "\n";
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : checks) {
      nlohmann::json j{{"name", c.name}, {"relation", c.relation}, {"threshold", c.threshold}, {"pass", c.pass}};
      j["value"] = std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json(nullptr);
      if (c.relation == "in") j["upper"] = c.upper;
      if (!c.note.empty()) j["note"] = c.note;
      a.push_back(j);
    }
    return {{"passed", passed()}, {"checks", a}};
  }
};

// ---------------------------------------------------------------------------
// Desk-scale problem: a 4 x 4 x 2 particle with the default material.

inline constexpr const char* kDeskOverrides = R"yaml(preset: paper-5
grid: {nx: 4, ny: 4, nz: 2}
initial: {sweep: [0.8, 0.6]}
simulation: {t_end: 300.0, snapshots: 61}
pod: {n_x: 3, n_T: 3}
gramian: {m_f: 400000, orders: []}
mask: {type: centered, face: x-, nu: 2, nv: 2}
ekf: {horizon: 300.0}
)yaml";

inline PipelineConfig desk_config(const std::filesystem::path& out) {
  PipelineConfig c = load_config_text(kDeskOverrides, "desk");
  c.output_dir = out.string();
  return c;
}

/// Runs the desk pipeline into `out` (all stages except the order study and sweep).
inline void run_desk_pipeline(const std::filesystem::path& out, std::ostream& log) {
  Context ctx;
  ctx.cfg = desk_config(out);
  ctx.out = out;
  ctx.force = true;
  ctx.log = &log;
  Pipeline p(ctx);
  p.rom();
  p.gramian(false);
  p.ekf();
}

// ---------------------------------------------------------------------------
// Individual checks

/// max |dV Phi^T Phi - I| for each field of a stored basis, over all stored modes.
inline Check check_orthonormality(const io::BasisFile& b) {
  double worst = 0.0;
  for (const PodBasis* p : {&b.moisture, &b.temperature}) {
    const Eigen::MatrixXd G = p->cell_volume * p->all_modes.transpose() * p->all_modes;
    worst = std::max(worst, (G - Eigen::MatrixXd::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff());
  }
  return Check::at_most("pod.mode_orthonormality", worst, 1e-10);
}

/// Largest increase between consecutive singular values (0 when nonincreasing).
inline Check check_spectrum_monotone(const io::BasisFile& b) {
  double worst = 0.0;
  for (const PodBasis* p : {&b.moisture, &b.temperature}) {
    const Eigen::VectorXd& s = p->raw_spectrum;
    for (Eigen::Index k = 1; k < s.size(); ++k) worst = std::max(worst, s[k] - s[k - 1]);
  }
  return Check::at_most("pod.spectrum_nonincreasing", worst, 0.0);
}

/// Random admissible state on `g`.
inline StateVector random_state(const Grid& g, std::mt19937_64& rng, double x_lo = 0.3, double x_hi = 0.8,
                                double T_lo = 290.0, double T_hi = 350.0) {
  std::uniform_real_distribution<double> ux(x_lo, x_hi), uT(T_lo, T_hi);
  const int n = g.cell_count();
  StateVector z(2 * n);
  for (int i = 0; i < n; ++i) z[i] = ux(rng);
  for (int i = 0; i < n; ++i) z[n + i] = uT(rng);
  return z;
}

/// Insulated particle (no surface transfer): moisture content is conserved and
/// the capacity-weighted heat rate sums to zero.
inline std::vector<Check> check_insulated_conservation(std::uint64_t seed) {
  const Grid g = build_grid(4, 4, 2, 1e-3);
  CalibrationWoodParams p;
  p.k_m = 0.0;
  p.alpha = 0.0;
  const CalibrationWood mat(p);
  const auto amb = AmbientConditions::constant(353.15, 0.005);
  std::mt19937_64 rng(seed);
  const StateVector z0 = random_state(g, rng);
  const Trajectory tr = integrate(z0, g, mat, amb, {0.0, 20.0}, max_stable_dt(g, mat), 10);
  const double X0 = total_moisture(z0, g);
  double drift = 0.0;
  for (const auto& z : tr.states) drift = std::max(drift, std::abs(total_moisture(z, g) - X0) / X0);

  const int n = g.cell_count();
  const StateVector f = rhs(z0, g, mat, amb, 0.0);
  double net = 0.0, gross = 0.0;
  for (int i = 0; i < n; ++i) {
    const double q = mat.heat_capacity(z0[i]) * f[n + i];
    net += q;
    gross += std::abs(q);
  }
  return {Check::at_most("fvm.insulated_moisture_conservation", drift, 1e-10, "relative drift over 20 s"),
          Check::at_most("fvm.insulated_heat_balance", std::abs(net) / gross, 1e-10, "sum s_i dT_i/dt / sum |.|")};
}

/// rom_rhs(c) against dV Phi^T f(Phi c + z_bar) on states near the snapshots.
inline Check check_galerkin(const RomOperators& ops, const Eigen::MatrixXd& snapshots, int samples,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, snapshots.cols() - 1);
  std::normal_distribution<double> nd;
  const int N = ops.grid.cell_count();
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    StateVector z = snapshots.col(pick(rng));
    for (int i = 0; i < N; ++i) {
      z[i] += 0.01 * nd(rng);
      z[N + i] += 0.5 * nd(rng);
    }
    const Eigen::VectorXd c = project(z, ops.basis);
    const StateVector zr = reconstruct(c, ops.basis);
    const Eigen::VectorXd ref = ops.basis.weighted_transpose(rhs(zr, ops.grid, *ops.material, ops.ambient, 0.0));
    const Eigen::VectorXd got = rom_rhs(c, ops, 0.0);
    worst = std::max(worst, (got - ref).norm() / ref.norm());
  }
  return Check::at_most("rom.galerkin_consistency", worst, 1e-9, std::to_string(samples) + " states");
}

/// Empirical and reduced Gramians of a linear rod against the Lyapunov oracle,
/// once per perturbation magnitude.
inline std::vector<Check> check_linear_rod(int N = 16) {
  const auto rod = oracle::LinearRod::make(N);
  SamplingOptions so;
  so.dt = 0.005;
  so.m_f = 20000;
  const Eigen::MatrixXd G_sampled = rod.gramian_sampled(so.dt);
  const Eigen::MatrixXd G_cont = rod.gramian_continuous();
  const double dV = rod.cell_volume;
  const Eigen::MatrixXd U = oracle::random_orthogonal(N, 7);
  const Eigen::MatrixXd Phi = U / std::sqrt(dV);
  const Eigen::MatrixXd Ar = U.transpose() * rod.A * U;
  const Eigen::RowVectorXd H = rod.C * Phi;
  const std::vector<Eigen::MatrixXd> D{-Eigen::MatrixXd::Identity(N, N), Eigen::MatrixXd::Identity(N, N)};
  auto full = [&](double, const Eigen::Ref<const Eigen::MatrixXd>& Z) { return Eigen::MatrixXd(rod.A * Z); };
  auto reduced = [&](double, const Eigen::Ref<const Eigen::MatrixXd>& C) { return Eigen::MatrixXd(Ar * C); };

  double worst_full = 0.0, worst_red = 0.0;
  for (double ht : PerturbationScheme{}.magnitudes) {
    const Eigen::MatrixXd G = empirical_gramian_full(full, rod.C, Eigen::VectorXd::Zero(N), D, {ht / std::sqrt(dV)}, so);
    const Eigen::MatrixXd W = empirical_gramian_full(reduced, H, Eigen::VectorXd::Zero(N), D, {ht}, so);
    worst_full = std::max(worst_full, oracle::relative_frobenius(G, G_sampled));
    worst_red = std::max(worst_red, oracle::relative_frobenius(dV * dV * Phi * W * Phi.transpose(), G_sampled));
  }
  std::ostringstream note;
  note << std::setprecision(3) << "sampled Lyapunov; continuous solution differs by "
       << oracle::relative_frobenius(G_sampled, G_cont) << " at dt = " << so.dt;
  return {Check::at_most("gramian.linear_rod_full_order", worst_full, 1e-6, note.str()),
          Check::at_most("gramian.linear_rod_reduced", worst_red, 1e-6, "all magnitudes")};
}

/// D^T D = I and the trailing directions leave the ROM coefficients unchanged.
inline std::vector<Check> check_perturbation_matrix(const CombinedBasis& basis) {
  double orth = 0.0, null = 0.0;
  const int M = basis.state_size(), n = basis.order();
  const Eigen::MatrixXd U = std::sqrt(basis.cell_volume()) * basis.phi();
  for (int l = 1; l <= 2; ++l) {
    const Eigen::MatrixXd D = build_perturbation_matrix(basis, l);
    orth = std::max(orth, (D.transpose() * D - Eigen::MatrixXd::Identity(M, M)).cwiseAbs().maxCoeff());
    if (n < M) null = std::max(null, (U.transpose() * D.rightCols(M - n)).cwiseAbs().maxCoeff());
  }
  return {Check::at_most("gramian.perturbation_matrix_orthonormal", orth, 1e-10),
          Check::at_most("gramian.perturbation_matrix_null_directions", null, 1e-10, "max |Phi^T H| sqrt(dV)")};
}

/// Eigenpairs of the densified lifted Gramian against those of dV W.
inline std::vector<Check> check_lifted_eigs(const GramianResult& r, const CombinedBasis& basis) {
  const GramianEigs e = gramian_eigs(r, basis);
  const Eigen::MatrixXd G = lift_gramian(r, basis).dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const Eigen::Index n = r.eigenvalues.size(), M = G.rows();
  const Eigen::VectorXd lam = es.eigenvalues().reverse();
  const Eigen::MatrixXd V = es.eigenvectors().rowwise().reverse();
  const double top = std::abs(lam[0]);
  double val = 0.0, cos_worst = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    val = std::max(val, std::abs(lam[k] - e.eigenvalues[k]) / std::abs(e.eigenvalues[k]));
    cos_worst = std::min(cos_worst, std::abs(V.col(k).dot(e.lifted_vectors.col(k))));
  }
  double rest = 0.0;
  for (Eigen::Index k = n; k < M; ++k) rest = std::max(rest, std::abs(lam[k]) / top);
  return {Check::at_most("gramian.lifted_eigenvalues", val, 1e-10),
          Check::at_least("gramian.lifted_eigenvector_cosine", cos_worst, 1.0 - 1e-10),
          Check::at_most("gramian.lifted_null_eigenvalues", rest, 1e-12, "relative to the largest")};
}

/// Well-separated synthetic SPD Gramian, for algebraic checks that hold for any W.
inline GramianResult synthetic_gramian(int n, double cell_volume, std::uint64_t seed) {
  const Eigen::MatrixXd Q = oracle::random_orthogonal(n, seed);
  Eigen::VectorXd d(n);
  for (int k = 0; k < n; ++k) d[k] = std::pow(10.0, -0.5 * k);
  GramianResult r;
  r.cell_volume = cell_volume;
  r.W = Q * d.asDiagonal() * Q.transpose() / cell_volume;
  analyse_gramian(r);
  return r;
}

/// Synthetic two-field basis with `n_per_field` modes on `cells` cells.
inline CombinedBasis synthetic_basis(int cells, int n_per_field, double cell_volume, std::uint64_t seed) {
  const Eigen::MatrixXd Qx = oracle::random_orthogonal(cells, seed);
  const Eigen::MatrixXd QT = oracle::random_orthogonal(cells, seed + 1);
  const double s = 1.0 / std::sqrt(cell_volume);
  return CombinedBasis(Eigen::VectorXd::Constant(cells, 0.5), s * Qx.leftCols(n_per_field),
                       Eigen::VectorXd::Constant(cells, 320.0), s * QT.leftCols(n_per_field), cell_volume);
}

/// Ratio of successive central-difference Jacobian changes under step halving.
inline Check check_richardson(const RomOperators& ops, const Eigen::VectorXd& c, double step) {
  const Eigen::MatrixXd J1 = rom_jacobian(c, ops, 0.0, step);
  const Eigen::MatrixXd J2 = rom_jacobian(c, ops, 0.0, step / 2);
  const Eigen::MatrixXd J4 = rom_jacobian(c, ops, 0.0, step / 4);
  const double ratio = (J1 - J2).norm() / (J2 - J4).norm();
  std::ostringstream note;
  note << "steps " << step << ", " << step / 2 << ", " << step / 4;
  return Check::within("ekf.jacobian_richardson_ratio", ratio, 3.5, 4.5, note.str());
}

/// Symmetry and positive semidefiniteness of every covariance of a filter run.
inline std::vector<Check> check_covariances(const FilterRun& run) {
  double asym = 0.0, neg = 0.0;
  for (const auto& P : run.covariances) {
    const double scale = std::max(P.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    asym = std::max(asym, (P - P.transpose()).cwiseAbs().maxCoeff() / scale);
    const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff();
    neg = std::max(neg, -lmin / scale);
  }
  return {Check::at_most("ekf.covariance_symmetry", asym, 1e-12, std::to_string(run.covariances.size()) + " steps"),
          Check::at_most("ekf.covariance_negative_eigenvalue", std::max(neg, 0.0), 1e-10, "relative to max |P|")};
}

/// Byte comparison of every CSV file produced in two runs.
inline Check check_determinism(const std::filesystem::path& a, const std::filesystem::path& b) {
  namespace fs = std::filesystem;
  int compared = 0, differing = 0;
  std::string first;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext != ".csv") continue;
    const fs::path rel = fs::relative(e.path(), a);
    ++compared;
    if (!fs::exists(b / rel) || sha256_file(e.path()) != sha256_file(b / rel)) {
      ++differing;
      if (first.empty()) first = rel.string();
    }
  }
  Check c = Check::at_most("pipeline.csv_determinism", differing, 0.0,
                           std::to_string(compared) + " files compared" + (first.empty() ? "" : "; first: " + first));
  if (compared == 0) c.pass = false;
  return c;
}

/// Every file in the directory is listed in the manifest with a matching hash.
inline Check check_manifest(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(dir / Manifest::kName);
  if (!in) return Check::failed("pipeline.manifest_complete", "manifest missing");
  const auto j = nlohmann::json::parse(in);
  int bad = 0, files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel == Manifest::kName) continue;
    ++files;
    if (!j["files"].contains(rel) || j["files"][rel].get<std::string>() != sha256_file(e.path())) ++bad;
  }
  return Check::at_most("pipeline.manifest_complete", bad, 0.0, std::to_string(files) + " files");
}

// ---------------------------------------------------------------------------
// Suites

struct ValidateOptions {
  bool linear_only = false;
  /// Optional basis file checked in place of the desk basis.
  std::filesystem::path basis;
  std::filesystem::path work_dir;
  std::ostream* log = &std::cerr;
};

inline ValidationReport run_validation(const ValidateOptions& opt) {
  namespace fs = std::filesystem;
  ValidationReport rep;
  auto add = [&rep](std::vector<Check> cs) {
    for (auto& c : cs) rep.checks.push_back(std::move(c));
  };
  auto guarded = [&](const std::string& name, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      rep.checks.push_back(Check::failed(name, e.what()));
    }
  };

  if (!opt.basis.empty()) {
    guarded("pod.basis_file", [&] {
      const io::BasisFile b = io::read_basis(opt.basis);
      add({check_orthonormality(b), check_spectrum_monotone(b)});
    });
  }

  guarded("gramian.linear_rod", [&] { add(check_linear_rod()); });
  guarded("gramian.synthetic_algebra", [&] {
    const CombinedBasis b = synthetic_basis(16, 5, 1e-9, 11);
    add(check_perturbation_matrix(b));
    add(check_lifted_eigs(synthetic_gramian(b.order(), b.cell_volume(), 12), b));
  });
  if (opt.linear_only) return rep;

  guarded("fvm.insulated", [&] { add(check_insulated_conservation(3)); });

  const fs::path work = opt.work_dir.empty() ? fs::temp_directory_path() / "dryobs-validate" : opt.work_dir;
  const fs::path run_a = work / "run_a", run_b = work / "run_b";
  guarded("pipeline.desk_run", [&] {
    fs::remove_all(run_a);
    fs::remove_all(run_b);
    run_desk_pipeline(run_a, *opt.log);
    run_desk_pipeline(run_b, *opt.log);
    rep.checks.push_back(check_determinism(run_a, run_b));
    rep.checks.push_back(check_manifest(run_a));
  });
  if (!fs::exists(run_a / "basis.bin")) return rep;

  guarded("desk.invariants", [&] {
    const PipelineConfig cfg = desk_config(run_a);
    const io::BasisFile bf = io::read_basis(run_a / "basis.bin");
    if (opt.basis.empty()) add({check_orthonormality(bf), check_spectrum_monotone(bf)});
    const CombinedBasis basis = combined(bf);
    const Grid g = make_grid(cfg);
    const RomOperators ops = assemble(basis, g, make_material(cfg), make_ambient(cfg));
    const io::SnapshotFile snaps = io::read_snapshots(run_a / detail::snapshot_name(cfg.initial.x0));
    rep.checks.push_back(check_galerkin(ops, snaps.states, 100, 5));
    add(check_perturbation_matrix(basis));

    const Eigen::VectorXd c_mid = project(StateVector(snaps.states.col(snaps.states.cols() / 4)), basis);
    rep.checks.push_back(check_richardson(ops, c_mid, 2e-6));

    MeasurementStream stream;
    const SurfaceMask mask = make_mask(cfg, g);
    for (Eigen::Index j = 0; j < snaps.states.cols(); ++j) {
      stream.times.push_back(snaps.times[static_cast<std::size_t>(j)]);
      stream.values.push_back(measure_output(snaps.states.col(j), g, mask));
    }
    const ScenarioSpec& sc = cfg.ekf.scenarios.front();
    const FilterRun run = run_filter(stream, init_from_measurement(stream.values.front(), sc.x_guess, basis), 0.0,
                                     make_ekf_config(cfg, basis.order(), sc.P0), ops, mask);
    add(check_covariances(run));
  });
  return rep;
}

}  // namespace dryobs::pipeline
