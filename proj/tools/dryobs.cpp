#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dryobs/errors.hpp"
#include "dryobs/pipeline/config.hpp"
#include "dryobs/pipeline/pipeline.hpp"
#include "dryobs/pipeline/validate.hpp"

namespace fs = std::filesystem;
using namespace dryobs;
using namespace dryobs::pipeline;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumerical = 3, kValidation = 4 };

struct Common {
  std::string config;
  std::string out;
  std::string preset;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "YAML configuration file");
  cmd->add_option("--out", c.out, "output directory (overrides output.dir)");
  cmd->add_option("--preset", c.preset, "built-in preset applied before --config")->check(CLI::IsMember(preset_names()));
  cmd->add_flag("--force", c.force, "rerun stages even if their cached outputs are current");
}

Context make_context(const Common& c) {
  if (c.config.empty() && c.preset.empty()) {
    throw ConfigurationError("no configuration: pass --config <file> and/or --preset paper-5");
  }
  Context ctx;
  ctx.cfg = load_config(c.preset, c.config);
  if (!c.out.empty()) ctx.cfg.output_dir = c.out;
  ctx.out = ctx.cfg.output_dir;
  ctx.force = c.force;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drying wood particle: simulation, model reduction, observability and state estimation"};
  app.require_subcommand(1);

  Common common;
  bool order_study = false;
  bool linear_only = false;
  std::string basis_file;

  auto* simulate = app.add_subcommand("simulate", "full-order simulations for every initial moisture");
  auto* pod = app.add_subcommand("pod", "POD bases and singular-value spectra");
  auto* rom = app.add_subcommand("rom", "reduced model trajectories and errors");
  auto* gramian = app.add_subcommand("gramian", "reduced observability Gramian for the configured mask");
  auto* sweep = app.add_subcommand("sweep", "observability measure for every single surface cell");
  auto* ekf = app.add_subcommand("ekf", "extended Kalman filter scenarios");
  auto* validate = app.add_subcommand("validate", "invariant and oracle checks at desk scale");
  for (auto* cmd : {simulate, pod, rom, gramian, sweep, ekf, validate}) add_common(cmd, common);
  gramian->add_flag("--order-study", order_study, "also compute the measure for every configured order");
  validate->add_flag("--linear-only", linear_only, "only the linear-oracle and algebraic checks");
  validate->add_option("--basis", basis_file, "basis file to check for orthonormality");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      ValidateOptions opt;
      opt.linear_only = linear_only;
      opt.basis = basis_file;
      fs::path out = common.out.empty() ? fs::path("validate") : fs::path(common.out);
      if (!common.config.empty() || !common.preset.empty()) {
        const PipelineConfig cfg = load_config(common.preset, common.config);
        if (common.out.empty()) out = cfg.output_dir;
      }
      fs::create_directories(out);
      opt.work_dir = out / "work";
      const ValidationReport rep = run_validation(opt);
      rep.print(std::cout);
      std::ofstream(out / "validate_report.json") << rep.to_json().dump(2) << '\n';
      std::cout << (rep.passed() ? "all checks passed" : "validation FAILED") << "\n";
      return rep.passed() ? kOk : kValidation;
    }

    Pipeline p(make_context(common));
    if (simulate->parsed()) p.simulate();
    if (pod->parsed()) p.pod();
    if (rom->parsed()) p.rom();
    if (gramian->parsed()) p.gramian(order_study);
    if (sweep->parsed()) p.sweep();
    if (ekf->parsed()) p.ekf();
    return kOk;
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
}
