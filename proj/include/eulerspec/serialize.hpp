#pragma once

#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "eulerspec/error.hpp"
#include "eulerspec/flow_topology.hpp"
#include "eulerspec/operator_lab.hpp"
#include "eulerspec/period.hpp"
#include "eulerspec/spectrum.hpp"

namespace eulerspec {

using Json = nlohmann::ordered_json;

namespace detail {

/// Non-finite numbers become null (JSON has no inf/nan).
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json point(Vec2 p) { return Json::array({p.x, p.y}); }

inline Json strings(const std::vector<std::string>& v) {
  Json a = Json::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

inline double get_num(const Json& j, double fallback = NAN) { return j.is_number() ? j.get<double>() : fallback; }

/// Shortest round-trip decimal form, as used in the JSON output.
inline std::string fmt(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  return Json(v).dump();
}

}  // namespace detail

inline Json to_json(const Endpoint& e) {
  return {{"value", detail::num(e.value)}, {"kind", to_string(e.kind)}, {"elliptic", e.elliptic}, {"detail", e.detail}};
}

inline Json to_json(const FixedPointSet& f) {
  Json pts = Json::array();
  for (const auto& p : f.points)
    pts.push_back({{"location", detail::point(p.location)},
                   {"classification", p.isolated ? to_string(p.classification) : "fixed_curve"},
                   {"psi", p.psi},
                   {"hessian_det", p.hessian_det},
                   {"grad_norm", p.grad_norm},
                   {"on_boundary", p.on_boundary},
                   {"curve_id", p.curve_id}});
  Json unres = Json::array();
  for (const auto& u : f.unresolved) unres.push_back({{"location", detail::point(u.center)}, {"reason", u.reason}});
  return {{"points", pts}, {"curve_count", f.curve_count}, {"unresolved", unres}, {"diagnostics", detail::strings(f.diagnostics)}};
}

inline Json to_json(const IndexSet& s) {
  Json fams = Json::array();
  for (const auto& f : s.families) {
    Json seeds = Json::array();
    for (const auto& p : f.representative_seeds) seeds.push_back(detail::point(p));
    fams.push_back({{"component_id", f.component_id},
                    {"psi_range", Json::array({detail::num(f.psi_lo()), detail::num(f.psi_hi())})},
                    {"endpoints", {{"lo", to_json(f.lo)}, {"hi", to_json(f.hi)}}},
                    {"orientation", f.orientation},
                    {"source", f.source},
                    {"seeds", seeds}});
  }
  return {{"families", fams}, {"topology_note", s.topology_note}, {"diagnostics", detail::strings(s.diagnostics)}};
}

inline Json to_json(const EndpointEvidence& e) {
  Json d = Json::array(), t = Json::array();
  for (double v : e.distances) d.push_back(detail::num(v));
  for (double v : e.periods) t.push_back(detail::num(v));
  return {{"unbounded", e.unbounded}, {"criterion", e.criterion}, {"distances", d}, {"periods", t}, {"margin", detail::num(e.margin)}};
}

inline Json to_json(const PeriodFunction& pf) {
  Json samples = Json::array();
  for (const auto& p : pf.points)
    samples.push_back({{"rho", p.rho},
                       {"T_ode", detail::num(p.ode.T)},
                       {"err_ode", detail::num(p.ode.err_est)},
                       {"T_contour", detail::num(p.contour.T)},
                       {"err_contour", detail::num(p.contour.err_est)},
                       {"flagged", p.flagged},
                       {"note", p.note}});
  return {{"family", pf.family_id},
          {"psi_range", Json::array({pf.a, pf.b})},
          {"T_lo", detail::num(pf.T_lo)},
          {"T_hi", detail::num(pf.T_hi)},
          {"unbounded", pf.unbounded},
          {"flagged", pf.any_flagged()},
          {"ends", {{"lo", to_json(pf.lo_end)}, {"hi", to_json(pf.hi_end)}}},
          {"samples", samples},
          {"notes", detail::strings(pf.notes)}};
}

inline Json to_json(const Band& b) {
  Json c = Json::array();
  for (const auto& k : b.contributors) c.push_back({{"family", k.family}, {"k", k.k}});
  return {{"lo", b.lo}, {"hi", b.hi}, {"contributors", c}};
}

/// {shape, window, bands, gaps, gap_total, unit_circle, notes}; gaps are
/// omitted (null total) for the full line.
inline Json to_json(const SpectrumSet& s, const std::optional<GapReport>& g, std::optional<bool> unit_circle) {
  Json j;
  j["shape"] = to_string(s.shape);
  j["window"] = s.window;
  j["lattice_step"] = s.shape == SpectrumShape::lattice ? Json(s.lattice_step) : Json(nullptr);
  Json bands = Json::array();
  for (const auto& b : s.bands) bands.push_back(to_json(b));
  j["bands"] = bands;
  Json gaps = Json::array();
  if (g)
    for (const auto& x : g->gaps) gaps.push_back({{"lo", x.lo}, {"hi", x.hi}});
  j["gaps"] = gaps;
  j["gaps_in_window"] = g ? Json(g->total_in_window) : Json(nullptr);
  j["gap_total"] = g && g->total ? Json(*g->total) : Json(nullptr);
  j["gap_total_closed_form"] = g && g->closed_form_total ? Json(*g->closed_form_total) : Json(nullptr);
  j["gap_total_finite"] = g ? Json(g->finite_total) : Json(false);
  j["unit_circle"] = unit_circle ? Json(*unit_circle) : Json(nullptr);
  j["notes"] = detail::strings(s.notes);
  return j;
}

inline Json to_json(const Membership& m, double lambda, double eps) {
  Json w = Json::array();
  for (const auto& e : m.evidence)
    w.push_back({{"family", e.family}, {"k", e.k}, {"rho_lo", e.rho_lo}, {"rho_hi", e.rho_hi}, {"mu", e.mu}});
  return {{"lambda", lambda}, {"eps", eps}, {"member", m.member}, {"witnesses", w}};
}

inline Json to_json(const HypothesisH& h) {
  return {{"resolution", h.resolution},
          {"refined_resolution", h.refined_resolution},
          {"fraction", h.fraction},
          {"refined_fraction", h.refined_fraction},
          {"satisfied", h.satisfied}};
}

inline Json to_json(const WeylResult& w) {
  return {{"delta", w.delta}, {"residual", detail::num(w.residual)}, {"lambda", w.lambda}, {"k", w.k}, {"rho", w.rho}};
}

inline Json eigen_json(const std::vector<std::complex<double>>& v) {
  Json a = Json::array();
  for (const auto& z : v) a.push_back(Json::array({z.real(), z.imag()}));
  return a;
}

inline Json to_json(const OperatorReport& r, const std::vector<WeylResult>& weyl = {}) {
  Json sv = Json::array();
  for (double s : r.k_singular_values) sv.push_back(s);
  Json w = Json::array();
  for (const auto& x : weyl) w.push_back(to_json(x));
  return {{"skewness_norm", r.skewness_norm},
          {"zero_mean_residual", r.zero_mean_residual},
          {"max_abs_real_L0", r.max_abs_real_L0},
          {"max_abs_real_Lvor", r.max_abs_real_Lvor},
          {"eig_info", {{"L0", r.eig_info_L0}, {"Lvor", r.eig_info_Lvor}}},
          {"k_singular_values", sv},
          {"sv_tail_ratio", detail::num(r.sv_tail_ratio)},
          {"coarea_error", detail::num(r.coarea_error)},
          {"weyl_residuals", w},
          {"eig_samples", {{"L0", eigen_json(r.eig_L0)}, {"Lvor", eigen_json(r.eig_Lvor)}}},
          {"notes", detail::strings(r.notes)}};
}

// ---------------------------------------------------------------------------
// CSV writers (work from the JSON report so plot data can be regenerated)
// ---------------------------------------------------------------------------

/// family,rho,T,method,err_est,flagged
inline std::string periods_csv(const Json& report) {
  std::ostringstream o;
  o << "family,rho,T,method,err_est,flagged\n";
  if (!report.contains("period_functions")) return o.str();
  for (const auto& pf : report["period_functions"]) {
    const int fam = pf["family"].get<int>();
    for (const auto& s : pf["samples"]) {
      const std::string fl = s["flagged"].get<bool>() ? "1" : "0";
      o << fam << ',' << detail::fmt(s["rho"].get<double>()) << ',' << detail::fmt(detail::get_num(s["T_ode"])) << ",ode_return,"
        << detail::fmt(detail::get_num(s["err_ode"])) << ',' << fl << '\n';
      o << fam << ',' << detail::fmt(s["rho"].get<double>()) << ',' << detail::fmt(detail::get_num(s["T_contour"]))
        << ",contour_integral," << detail::fmt(detail::get_num(s["err_contour"])) << ',' << fl << '\n';
    }
  }
  return o.str();
}

/// kind,lo,hi,contributors  (kind = band | point | full_line; contributors as family:k;...)
inline std::string bands_csv(const Json& report) {
  std::ostringstream o;
  o << "kind,lo,hi,contributors\n";
  if (!report.contains("spectrum")) return o.str();
  const Json& s = report["spectrum"];
  if (s["shape"] == "full_line") {
    o << "full_line," << detail::fmt(-s["window"].get<double>()) << ',' << detail::fmt(s["window"].get<double>()) << ",\n";
    return o.str();
  }
  for (const auto& b : s["bands"]) {
    const double lo = b["lo"].get<double>(), hi = b["hi"].get<double>();
    o << (lo == hi ? "point" : "band") << ',' << detail::fmt(lo) << ',' << detail::fmt(hi) << ',';
    bool first = true;
    for (const auto& c : b["contributors"]) {
      o << (first ? "" : ";") << c["family"].get<int>() << ':' << c["k"].get<long>();
      first = false;
    }
    o << '\n';
  }
  return o.str();
}

/// lo,hi
inline std::string gaps_csv(const Json& report) {
  std::ostringstream o;
  o << "lo,hi\n";
  if (!report.contains("spectrum")) return o.str();
  for (const auto& g : report["spectrum"]["gaps"]) o << detail::fmt(g["lo"].get<double>()) << ',' << detail::fmt(g["hi"].get<double>()) << '\n';
  return o.str();
}

/// delta,residual,lambda,k,rho
inline std::string weyl_csv(const Json& report) {
  std::ostringstream o;
  o << "delta,residual,lambda,k,rho\n";
  if (!report.contains("operator_report")) return o.str();
  for (const auto& w : report["operator_report"]["weyl_residuals"])
    o << detail::fmt(w["delta"].get<double>()) << ',' << detail::fmt(detail::get_num(w["residual"])) << ','
      << detail::fmt(w["lambda"].get<double>()) << ',' << w["k"].get<int>() << ',' << detail::fmt(w["rho"].get<double>()) << '\n';
  return o.str();
}

/// matrix,re,im
inline std::string eigenvalues_csv(const Json& report) {
  std::ostringstream o;
  o << "matrix,re,im\n";
  if (!report.contains("operator_report")) return o.str();
  for (const char* m : {"L0", "Lvor"})
    for (const auto& z : report["operator_report"]["eig_samples"][m])
      o << m << ',' << detail::fmt(z[0].get<double>()) << ',' << detail::fmt(z[1].get<double>()) << '\n';
  return o.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  f << text;
  if (!f) fail(ErrorKind::io, "write to '" + path + "' failed");
}

inline Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open '" + path + "'");
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, "'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace eulerspec
