#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eulerspec/domain.hpp"
#include "eulerspec/error.hpp"
#include "eulerspec/flow_topology.hpp"
#include "eulerspec/operator_lab.hpp"
#include "eulerspec/period.hpp"
#include "eulerspec/serialize.hpp"
#include "eulerspec/spectrum.hpp"
#include "eulerspec/stream_field.hpp"

#ifndef EULERSPEC_VERSION
#define EULERSPEC_VERSION "0.1.0"
#endif

namespace eulerspec {

enum class ValidationLevel { off, structural, full };

inline const char* to_string(ValidationLevel v) {
  switch (v) {
    case ValidationLevel::off: return "off";
    case ValidationLevel::structural: return "structural";
    case ValidationLevel::full: return "full";
  }
  return "unknown";
}

inline ValidationLevel parse_validation_level(const std::string& s) {
  for (auto v : {ValidationLevel::off, ValidationLevel::structural, ValidationLevel::full})
    if (s == to_string(v)) return v;
  fail(ErrorKind::invalid_argument, "unknown validation level '" + s + "' (expected off, structural or full)");
}

/// Tolerance override keys (see Tolerances).
inline const std::vector<std::string>& tolerance_keys() {
  static const std::vector<std::string> k{"newton_tol",   "closure_rel",   "level_rel",      "degeneracy_tol",
                                          "guard_rel",    "trace_rtol",    "classify_rtol",  "max_time_factor"};
  return k;
}

inline Tolerances apply_overrides(Tolerances t, const std::map<std::string, double>& o) {
  for (const auto& [k, v] : o) {
    require(std::isfinite(v) && v > 0.0, "tolerance '" + k + "' must be positive");
    if (k == "newton_tol") t.newton_tol = v;
    else if (k == "closure_rel") t.closure_rel = v;
    else if (k == "level_rel") t.level_rel = v;
    else if (k == "degeneracy_tol") t.degeneracy_tol = v;
    else if (k == "guard_rel") t.guard_rel = v;
    else if (k == "trace_rtol") t.trace_rtol = v;
    else if (k == "classify_rtol") t.classify_rtol = v;
    else if (k == "max_time_factor") t.max_time_factor = v;
    else fail(ErrorKind::invalid_argument, "unknown tolerance '" + k + "'");
  }
  return t;
}

struct RunConfig {
  std::string flow{"shear_quadratic"};  // catalog id or grid file path
  ParamMap params;                      // flow parameters (grid files: domain parameters)
  std::map<std::string, double> tolerances;
  double window{20.0};
  ValidationLevel validation{ValidationLevel::off};
  std::string output_dir{"out"};
  std::uint64_t seed{12345};
  int resolution{64};             // fixed-point scan and index-set seeding
  int period_samples{32};         // Chebyshev samples per family
  int hypothesis_resolution{64};  // coarse node grid; refined is twice this
  int operator_grid{32};          // operator_lab grid is operator_grid x operator_grid

  void validate() const {
    require(!flow.empty(), "config: flow must be given");
    require(std::isfinite(window) && window > 0.0, "config: window must be positive");
    require(resolution >= 64, "config: resolution must be at least 64");
    require(period_samples >= 16, "config: period_samples must be at least 16");
    require(hypothesis_resolution >= 8, "config: hypothesis_resolution must be at least 8");
    require(operator_grid >= 16, "config: operator_grid must be at least 16");
    (void)apply_overrides({}, tolerances);
  }

  Json to_json() const {
    Json p = Json::object(), t = Json::object();
    for (const auto& [k, v] : params) p[k] = v;
    for (const auto& [k, v] : tolerances) t[k] = v;
    return {{"flow", flow},
            {"params", p},
            {"tolerances", t},
            {"window", window},
            {"validation", to_string(validation)},
            {"output_dir", output_dir},
            {"seed", seed},
            {"resolution", resolution},
            {"period_samples", period_samples},
            {"hypothesis_resolution", hypothesis_resolution},
            {"operator_grid", operator_grid}};
  }

  static RunConfig from_json(const Json& j) {
    require(j.is_object(), "config: expected a JSON object");
    static const std::vector<std::string> known{"flow",       "params",         "tolerances",     "window",
                                                "validation", "output_dir",     "seed",           "resolution",
                                                "period_samples", "hypothesis_resolution", "operator_grid"};
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end())
        fail(ErrorKind::invalid_argument, "config: unknown key '" + k + "'");
    RunConfig c;
    try {
      if (j.contains("flow")) c.flow = j["flow"].get<std::string>();
      if (j.contains("params"))
        for (const auto& [k, v] : j["params"].items()) c.params[k] = v.get<double>();
      if (j.contains("tolerances"))
        for (const auto& [k, v] : j["tolerances"].items()) c.tolerances[k] = v.get<double>();
      if (j.contains("window")) c.window = j["window"].get<double>();
      if (j.contains("validation")) c.validation = parse_validation_level(j["validation"].get<std::string>());
      if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
      if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
      if (j.contains("resolution")) c.resolution = j["resolution"].get<int>();
      if (j.contains("period_samples")) c.period_samples = j["period_samples"].get<int>();
      if (j.contains("hypothesis_resolution")) c.hypothesis_resolution = j["hypothesis_resolution"].get<int>();
      if (j.contains("operator_grid")) c.operator_grid = j["operator_grid"].get<int>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::invalid_argument, std::string("config: ") + e.what());
    }
    return c;
  }

  /// FNV-1a (64-bit) of the canonical config JSON.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json().dump()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a64:") + buf;
  }
};

/// Domain for a grid file: extents come from the header; the annulus also
/// needs r_in among the parameters.
inline DomainSpec grid_domain(const GridData& g, const ParamMap& params) {
  const double xs = (g.nx - 1) * g.dx, ys = (g.ny - 1) * g.dy;
  switch (g.kind) {
    case DomainKind::disk: return DomainSpec::disk(0.5 * xs);
    case DomainKind::annulus: {
      auto it = params.find("r_in");
      require(it != params.end(), "grid: annulus grids need --param r_in=<value>");
      return DomainSpec::annulus(it->second, 0.5 * xs);
    }
    case DomainKind::cylinder: return DomainSpec::cylinder(g.nx * g.dx, g.y0, g.y0 + ys);
    case DomainKind::torus: return DomainSpec::torus(g.nx * g.dx, g.ny * g.dy);
    case DomainKind::rectangle: return DomainSpec::rectangle(g.x0, g.x0 + xs, g.y0, g.y0 + ys);
  }
  fail(ErrorKind::invalid_argument, "grid: unsupported domain kind");
}

inline StreamField make_field(const RunConfig& c) {
  const auto& names = builtin_flow_names();
  if (std::find(names.begin(), names.end(), c.flow) != names.end()) return make_builtin_flow(c.flow, c.params);
  if (!std::filesystem::exists(c.flow))
    fail(ErrorKind::invalid_argument, "flow '" + c.flow + "' is neither a catalog id nor an existing grid file");
  const GridData g = read_grid_file(c.flow);
  return load_grid_field(g, grid_domain(g, c.params));
}

struct StageRecord {
  std::string name;
  std::string status;  // ok | partial | failed | skipped
  std::string message;
  double seconds{0.0};
};

struct Warning {
  std::string stage;
  std::string message;
};

struct Check {
  std::string name;
  bool pass{false};
  double value{NAN};
  double threshold{NAN};
  std::string detail;
};

struct RunReport {
  RunConfig config;
  std::optional<StreamField> field;
  std::optional<FixedPointSet> fixed_points;
  std::optional<IndexSet> index_set;
  std::optional<HypothesisH> hypothesis;
  std::vector<PeriodFunction> period_functions;
  std::optional<SpectrumSet> spectrum;
  std::optional<GapReport> gaps;
  std::optional<bool> unit_circle;
  std::vector<Json> evidence;  // membership witnesses at band midpoints
  std::optional<OperatorReport> operator_report;
  std::vector<WeylResult> weyl;
  std::vector<CoareaResult> coarea;
  std::vector<Check> checks;
  std::vector<StageRecord> stages;
  std::vector<Warning> warnings;

  bool failed() const {
    return std::any_of(stages.begin(), stages.end(), [](const StageRecord& s) { return s.status == "failed"; }) ||
           std::any_of(checks.begin(), checks.end(), [](const Check& c) { return !c.pass; });
  }
  bool partial() const {
    return std::any_of(period_functions.begin(), period_functions.end(), [](const PeriodFunction& p) { return p.any_flagged(); }) ||
           std::any_of(stages.begin(), stages.end(), [](const StageRecord& s) { return s.status == "partial"; });
  }
  /// 0 success, 2 partial (flagged samples or partial stages), 1 failure.
  int exit_status() const { return failed() ? 1 : partial() ? 2 : 0; }
  std::string status() const { return failed() ? "failure" : partial() ? "partial" : "success"; }

  Json to_json(bool with_timing = true) const {
    Json j;
    j["tool"] = {{"name", "eulerspec"}, {"version", EULERSPEC_VERSION}};
    j["config"] = config.to_json();
    j["config_hash"] = config.hash();
    j["status"] = status();
    Json st = Json::array();
    for (const auto& s : stages) st.push_back({{"name", s.name}, {"status", s.status}, {"message", s.message}});
    j["stages"] = st;
    Json w = Json::array();
    for (const auto& x : warnings) w.push_back({{"stage", x.stage}, {"message", x.message}});
    j["warnings"] = w;
    if (field) {
      Json p = Json::object();
      for (const auto& [k, v] : field->params()) p[k] = v;
      j["field"] = {{"name", field->name()},
                    {"source", field->source_kind() == SourceKind::analytic ? "analytic" : "grid"},
                    {"domain", to_string(field->domain().kind())},
                    {"params", p},
                    {"regularity_note", field->regularity_note()}};
    }
    if (fixed_points) j["fixed_points"] = eulerspec::to_json(*fixed_points);
    if (index_set) j["index_set"] = eulerspec::to_json(*index_set);
    if (hypothesis) j["hypothesis_H"] = eulerspec::to_json(*hypothesis);
    if (!period_functions.empty()) {
      Json a = Json::array();
      for (const auto& pf : period_functions) a.push_back(eulerspec::to_json(pf));
      j["period_functions"] = a;
    }
    if (spectrum) {
      j["spectrum"] = eulerspec::to_json(*spectrum, gaps, unit_circle);
      j["spectrum"]["evidence"] = evidence;
    }
    if (operator_report) {
      j["operator_report"] = eulerspec::to_json(*operator_report, weyl);
      Json c = Json::array();
      for (const auto& r : coarea) {
        Json rg = Json::array();
        for (const auto& x : r.ranges) rg.push_back({{"family", x.family}, {"rho_lo", x.rho_lo}, {"rho_hi", x.rho_hi}});
        c.push_back({{"lhs", r.lhs}, {"rhs", r.rhs}, {"rel_error", r.rel_error}, {"ranges", rg}});
      }
      j["operator_report"]["coarea"] = c;
    }
    if (!checks.empty() || config.validation != ValidationLevel::off) {
      Json c = Json::array();
      for (const auto& x : checks)
        c.push_back({{"name", x.name},
                     {"pass", x.pass},
                     {"value", detail::num(x.value)},
                     {"threshold", detail::num(x.threshold)},
                     {"detail", x.detail}});
      j["validation"] = {{"level", to_string(config.validation)}, {"checks", c}};
    }
    if (with_timing) {
      Json t = Json::object();
      for (const auto& s : stages) t[s.name] = s.seconds;
      j["timing"] = t;
    }
    return j;
  }
};

namespace detail {

/// Runs one stage, recording status and time. Returns false when it failed.
inline bool run_stage(RunReport& r, const std::string& name, const std::function<void(StageRecord&)>& body) {
  StageRecord rec;
  rec.name = name;
  rec.status = "ok";
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(rec);
  } catch (const Error& e) {
    rec.status = "failed";
    rec.message = std::string(to_string(e.kind())) + ": " + e.what();
    r.warnings.push_back({name, rec.message});
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.message = e.what();
    r.warnings.push_back({name, rec.message});
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.stages.push_back(rec);
  return rec.status != "failed";
}

inline void skip_stage(RunReport& r, const std::string& name, const std::string& why) {
  r.stages.push_back({name, "skipped", why, 0.0});
}

/// Co-area ranges: family ranges trimmed slightly; ends where periods are
/// unbounded are trimmed by 5% so the check stays on bounded periods.
inline std::vector<CoareaRange> coarea_ranges(const std::vector<PeriodFunction>& pfs) {
  std::vector<CoareaRange> out;
  for (const auto& pf : pfs) {
    const double w = pf.b - pf.a;
    out.push_back({pf.family_id, pf.a + (pf.lo_end.unbounded ? 0.05 : 1e-4) * w,
                   pf.b - (pf.hi_end.unbounded ? 0.05 : 1e-4) * w});
  }
  return out;
}

inline void validation_stage(RunReport& r, const Tolerances& tol) {
  const StreamField& field = *r.field;
  const RunConfig& c = r.config;
  const DomainSpec& dom = field.domain();
  const bool curved = dom.kind() == DomainKind::disk || dom.kind() == DomainKind::annulus;
  ValidationLevel level = c.validation;
  const Grid2D grid = Grid2D::make(dom, c.operator_grid, c.operator_grid);
  if (grid.size() > kMaxDenseDimension && level == ValidationLevel::full) {
    level = ValidationLevel::structural;
    r.warnings.push_back({"validation", "grid dimension " + std::to_string(grid.size()) +
                                            " exceeds the dense cap; running the structural subset"});
  }
  const DiscreteOperator L0 = discretize_L0(field, grid);
  const DiscreteOperator K = discretize_K(field, grid);
  DiagnosticsOptions dopt;
  dopt.seed = c.seed;
  dopt.eigenvalues = level == ValidationLevel::full;
  dopt.singular_values = level == ValidationLevel::full;
  OperatorReport rep = grid.size() <= kMaxDenseDimension ? operator_diagnostics(L0, K, grid, dopt) : OperatorReport{};
  if (grid.size() > kMaxDenseDimension) rep.skewness_norm = skewness(*L0.sparse);
  for (const auto& n : L0.notes) rep.notes.push_back(n);
  for (const auto& n : K.notes) rep.notes.push_back(n);

  const double skew_tol = curved ? 1e-6 : 1e-10;
  r.checks.push_back({"skewness", rep.skewness_norm < skew_tol, rep.skewness_norm, skew_tol,
                      curved ? "masked curved boundary: relaxed threshold" : ""});
  r.checks.push_back({"zero_mean_range", rep.zero_mean_residual < 1e-8, rep.zero_mean_residual, 1e-8,
                      std::to_string(dopt.probes) + " random probes"});

  if (!r.period_functions.empty() && r.index_set) {
    double worst = 0.0;
    const std::vector<TestFunction> fns{TestFunction::one, TestFunction::psi, TestFunction::bump};
    auto res = coarea_check(field, *r.index_set, r.period_functions, fns, grid, coarea_ranges(r.period_functions),
                            CoareaOptions{tol});
    for (std::size_t q = 0; q < fns.size(); ++q) {
      worst = std::max(worst, res[q].rel_error);
      r.checks.push_back({std::string("coarea_") + to_string(fns[q]), res[q].rel_error < 1e-3, res[q].rel_error, 1e-3, ""});
      r.coarea.push_back(res[q]);
    }
    rep.coarea_error = worst;
  }

  if (level == ValidationLevel::full) {
    r.checks.push_back({"eigen_real_parts", rep.eig_info_L0 == 0 && rep.max_abs_real_L0 < 1e-8, rep.max_abs_real_L0,
                        1e-8, rep.eig_info_L0 == 0 ? "" : "dgeev incomplete"});
    if (rep.k_singular_values.empty() || rep.k_singular_values.front() == 0.0) {
      r.checks.push_back({"k_singular_decay", true, 0.0, 1.0, "K = 0"});
    } else {
      bool mono = true;
      for (std::size_t k = 1; k < rep.k_singular_values.size(); ++k)
        mono = mono && rep.k_singular_values[k] <= rep.k_singular_values[k - 1];
      r.checks.push_back({"k_singular_decay", mono && rep.sv_tail_ratio < 1.0, rep.sv_tail_ratio, 1.0,
                          "sigma_32 / sigma_8"});
    }
    // Weyl packets on the first bounded family: mid-range level, k = 1, three widths.
    for (const auto& pf : r.period_functions) {
      if (pf.unbounded) continue;
      const OrbitFamily* fam = nullptr;
      for (const auto& f : r.index_set->families)
        if (f.component_id == pf.family_id) fam = &f;
      if (!fam) continue;
      const double rho = 0.5 * (pf.a + pf.b);
      const double d0 = (pf.b - pf.a) / 30.0;
      std::vector<WeylResult> curve;
      for (int h = 0; h < 3; ++h) {
        curve.push_back(weyl_residual(field, *fam, {pf.family_id, rho, 1, d0 / (1 << h)}, pf, WeylOptions{tol}));
        r.weyl.push_back(curve.back());
      }
      const bool iso = pf.T_lo > 0.0 && (pf.T_hi - pf.T_lo) / pf.T_lo < 1e-6;
      if (iso) {
        double worst = 0.0;
        for (const auto& w : curve) worst = std::max(worst, w.residual);
        r.checks.push_back({"weyl_exact", worst < 1e-8, worst, 1e-8, "isochronous family: exact eigenfunctions"});
      } else {
        const double q = std::max(curve[1].residual / curve[0].residual, curve[2].residual / curve[1].residual);
        r.checks.push_back({"weyl_decay", q <= 0.7, q, 0.7, "residual(delta/2)/residual(delta), two halvings"});
        const double rel = curve[2].residual / std::abs(curve[2].lambda);
        r.checks.push_back({"weyl_certify", rel < 0.05, rel, 0.05, "finest residual / |lambda|"});
      }
      break;
    }
  }
  r.operator_report = std::move(rep);
}

}  // namespace detail

/// field -> topology -> Hypothesis (H) -> periods -> spectrum [-> validation].
/// A failed stage skips everything downstream; the report keeps what finished.
inline RunReport run_pipeline(const RunConfig& config) {
  RunReport r;
  r.config = config;
  config.validate();
  const Tolerances tol = apply_overrides({}, config.tolerances);

  bool ok = detail::run_stage(r, "field", [&](StageRecord&) { r.field = make_field(config); });
  ok = ok && detail::run_stage(r, "topology", [&](StageRecord& s) {
         r.fixed_points = find_fixed_points(*r.field, config.resolution, tol);
         r.index_set = build_index_set(*r.field, *r.fixed_points, config.resolution, IndexSetOptions{tol});
         for (const auto& d : r.index_set->diagnostics) r.warnings.push_back({"topology", d});
         if (r.index_set->families.empty()) fail(ErrorKind::numerical_failure, "no periodic-orbit families found");
         s.message = std::to_string(r.index_set->families.size()) + " families";
       });
  if (ok) {
    detail::run_stage(r, "hypothesis_H", [&](StageRecord& s) {
      r.hypothesis = hypothesis_h(*r.field, config.hypothesis_resolution, tol);
      if (!r.hypothesis->satisfied) {
        s.status = "partial";
        r.warnings.push_back({"hypothesis_H", "aperiodic fraction does not decrease under refinement"});
      }
    });
  } else {
    detail::skip_stage(r, "hypothesis_H", "topology failed");
  }
  ok = ok && detail::run_stage(r, "periods", [&](StageRecord& s) {
         PeriodOptions po;
         po.tol = tol;
         for (const auto& fam : r.index_set->families) {
           r.period_functions.push_back(sample_period_function(*r.field, fam, config.period_samples, po));
           if (r.period_functions.back().any_flagged()) {
             s.status = "partial";
             r.warnings.push_back({"periods", "family " + std::to_string(fam.component_id) + " has flagged samples"});
           }
         }
       });
  ok = ok && detail::run_stage(r, "spectrum", [&](StageRecord&) {
         SpectrumOptions so;
         so.aperiodic_positive_measure = r.hypothesis && !r.hypothesis->satisfied;
         r.spectrum = assemble_spectrum(r.period_functions, config.window, so);
         r.unit_circle = unit_circle_predicate(r.period_functions);
         if (r.spectrum->shape != SpectrumShape::full_line) r.gaps = gap_report(*r.spectrum, r.period_functions);
         int n = 0;
         for (const auto& b : r.spectrum->bands) {
           if (b.lo <= 0.0 || n >= 4) continue;
           const double mid = 0.5 * (b.lo + b.hi);
           const double eps = std::max(1e-6, 0.25 * (b.hi - b.lo));
           r.evidence.push_back(to_json(membership(r.period_functions, mid, eps), mid, eps));
           ++n;
         }
       });
  if (!ok) {
    for (const char* s : {"periods", "spectrum", "validation"})
      if (std::none_of(r.stages.begin(), r.stages.end(), [&](const StageRecord& x) { return x.name == s; }))
        detail::skip_stage(r, s, "an earlier stage failed");
    return r;
  }
  if (config.validation != ValidationLevel::off)
    detail::run_stage(r, "validation", [&](StageRecord&) { detail::validation_stage(r, tol); });
  return r;
}

/// Writes periods.csv, bands.csv, gaps.csv and, when present, weyl.csv and
/// eigenvalues.csv. Returns the written paths.
inline std::vector<std::string> emit_plot_data(const Json& report, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create '" + out_dir + "': " + ec.message());
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& text) {
    const std::string p = (std::filesystem::path(out_dir) / name).string();
    write_text(p, text);
    files.push_back(p);
  };
  put("periods.csv", periods_csv(report));
  put("bands.csv", bands_csv(report));
  put("gaps.csv", gaps_csv(report));
  if (report.contains("operator_report")) {
    put("weyl.csv", weyl_csv(report));
    put("eigenvalues.csv", eigenvalues_csv(report));
  }
  return files;
}

/// Runs the pipeline and writes report.json plus plot data into output_dir.
inline RunReport run_analyze(const RunConfig& config) {
  RunReport r = run_pipeline(config);
  const Json j = r.to_json();
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create '" + config.output_dir + "': " + ec.message());
  write_text((std::filesystem::path(config.output_dir) / "report.json").string(), j.dump(2) + "\n");
  emit_plot_data(j, config.output_dir);
  return r;
}

/// run_analyze with validation forced on (structural when unset).
inline RunReport run_validate(RunConfig config) {
  if (config.validation == ValidationLevel::off) config.validation = ValidationLevel::structural;
  return run_analyze(config);
}

}  // namespace eulerspec
