#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eulerspec/eulerspec.hpp"

namespace es = eulerspec;

namespace {

struct Flags {
  std::string config_file;
  std::string flow;
  std::vector<std::string> params;
  std::vector<std::string> tols;
  double window{0.0};
  std::string out;
  long long seed{-1};
  int resolution{0};
  int period_samples{0};
  int hypothesis_resolution{0};
  int operator_grid{0};
  std::string level;
};

std::pair<std::string, double> key_value(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) es::fail(es::ErrorKind::invalid_argument, "expected key=value, got '" + s + "'");
  try {
    std::size_t used = 0;
    const std::string v = s.substr(eq + 1);
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return {s.substr(0, eq), x};
  } catch (const std::exception&) {
    es::fail(es::ErrorKind::invalid_argument, "'" + s + "': value is not a number");
  }
}

void add_run_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_file, "JSON config file; flags override its fields");
  cmd->add_option("--flow", f.flow, "catalog id (rigid, radial_cos, couette, shear_quadratic, cellular, annulus_shear) or grid file");
  cmd->add_option("--param", f.params, "flow parameter key=value (repeatable)");
  cmd->add_option("--tol", f.tols, "tolerance override key=value (repeatable)");
  cmd->add_option("--window", f.window, "spectral window half-width (default 20)");
  cmd->add_option("--out", f.out, "output directory (default out)");
  cmd->add_option("--seed", f.seed, "seed for randomized probes");
  cmd->add_option("--resolution", f.resolution, "fixed-point scan / index-set resolution (>= 64)");
  cmd->add_option("--period-samples", f.period_samples, "Chebyshev period samples per family (>= 16)");
  cmd->add_option("--hypothesis-resolution", f.hypothesis_resolution, "coarse classification grid for Hypothesis (H)");
  cmd->add_option("--operator-grid", f.operator_grid, "operator grid size n (n x n cells)");
}

es::RunConfig build_config(const Flags& f) {
  es::RunConfig c = f.config_file.empty() ? es::RunConfig{} : es::RunConfig::from_json(es::read_json_file(f.config_file));
  if (!f.flow.empty()) c.flow = f.flow;
  for (const auto& p : f.params) c.params[key_value(p).first] = key_value(p).second;
  for (const auto& t : f.tols) c.tolerances[key_value(t).first] = key_value(t).second;
  if (f.window != 0.0) c.window = f.window;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.seed >= 0) c.seed = static_cast<std::uint64_t>(f.seed);
  if (f.resolution) c.resolution = f.resolution;
  if (f.period_samples) c.period_samples = f.period_samples;
  if (f.hypothesis_resolution) c.hypothesis_resolution = f.hypothesis_resolution;
  if (f.operator_grid) c.operator_grid = f.operator_grid;
  if (!f.level.empty()) c.validation = es::parse_validation_level(f.level);
  return c;
}

void summarize(const es::RunReport& r) {
  std::cout << "flow: " << r.config.flow << "  status: " << r.status() << "  (" << r.config.hash() << ")\n";
  for (const auto& s : r.stages)
    std::cout << "  stage " << s.name << ": " << s.status << (s.message.empty() ? "" : " - " + s.message) << "\n";
  if (r.index_set)
    for (const auto& f : r.index_set->families)
      std::cout << "  family " << f.component_id << ": psi in (" << f.psi_lo() << ", " << f.psi_hi() << ")\n";
  for (const auto& pf : r.period_functions)
    std::cout << "  family " << pf.family_id << ": T in [" << pf.T_lo << ", " << (pf.unbounded ? "inf" : std::to_string(pf.T_hi))
              << "]" << (pf.any_flagged() ? " (flagged samples)" : "") << "\n";
  if (r.hypothesis)
    std::cout << "  hypothesis (H): " << r.hypothesis->fraction << " -> " << r.hypothesis->refined_fraction
              << (r.hypothesis->satisfied ? " (satisfied)" : " (not satisfied)") << "\n";
  if (r.spectrum) {
    std::cout << "  spectrum: " << es::to_string(r.spectrum->shape);
    if (r.gaps) std::cout << ", " << r.gaps->total_in_window << " gaps in window" << (r.gaps->total ? ", " + std::to_string(*r.gaps->total) + " total" : "");
    if (r.unit_circle) std::cout << ", unit_circle=" << (*r.unit_circle ? "true" : "false");
    std::cout << "\n";
  }
  for (const auto& c : r.checks)
    std::cout << "  check " << c.name << ": " << (c.pass ? "pass" : "FAIL") << " (" << c.value << " vs " << c.threshold << ")\n";
  for (const auto& w : r.warnings) std::cerr << "warning [" << w.stage << "]: " << w.message << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Essential spectrum of the linearized 2D Euler operator from streamline periods"};
  app.set_version_flag("--version", std::string(EULERSPEC_VERSION));
  app.require_subcommand(1);

  Flags af, vf;
  auto* analyze = app.add_subcommand("analyze", "field -> topology -> periods -> spectrum; writes report.json and CSVs");
  add_run_flags(analyze, af);
  auto* validate = app.add_subcommand("validate", "analyze plus operator checks");
  add_run_flags(validate, vf);
  validate->add_option("--level", vf.level, "structural or full")->check(CLI::IsMember({"structural", "full"}));

  std::string report_file, plot_out;
  auto* plot = app.add_subcommand("plot-data", "regenerate CSV plot data from a report");
  plot->add_option("--report", report_file, "report.json")->required();
  plot->add_option("--out", plot_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plot) {
      for (const auto& p : es::emit_plot_data(es::read_json_file(report_file), plot_out)) std::cout << p << "\n";
      return 0;
    }
    es::RunReport r;
    if (*analyze) {
      r = es::run_analyze(build_config(af));
    } else {
      es::RunConfig c = build_config(vf);
      if (c.validation == es::ValidationLevel::off) c.validation = es::ValidationLevel::structural;
      r = es::run_validate(c);
    }
    summarize(r);
    std::cout << "  wrote " << r.config.output_dir << "/report.json\n";
    return r.exit_status();
  } catch (const es::Error& e) {
    std::cerr << "error (" << es::to_string(e.kind()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
