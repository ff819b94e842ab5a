// Acceptance gates: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "eulerspec/eulerspec.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace eulerspec;
using support::index_of;
using support::periods_of;
using support::rel;
constexpr double pi = std::numbers::pi;

namespace tol {
constexpr double endpoint = 1e-6;
constexpr double index_seconds = 30.0;
constexpr double period_ode = 1e-6;
constexpr double period_contour = 1e-3;
constexpr double period_seconds = 60.0;
constexpr double hausdorff = 1e-6;
constexpr double skew = 1e-10;
constexpr double real_part = 1e-8;
constexpr double zero_mean = 1e-8;
constexpr double coarea = 1e-3;
constexpr double coarea_seconds = 120.0;
constexpr double weyl_ratio = 0.7;
constexpr double weyl_final = 0.05;
constexpr double weyl_exact = 1e-8;
constexpr double aperiodic_fraction = 0.02;
}  // namespace tol

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Outcome {
  bool pass{true};
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [" << what << "]";
    }
  }
};

int failures = 0;

void gate(int id, const char* name, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  if (!o.pass) ++failures;
  std::printf("%s %d %s (%.1f s)%s\n", o.pass ? "PASS" : "FAIL", id, name, seconds_since(t0), o.detail.str().c_str());
  std::fflush(stdout);
}

std::vector<oracle::Interval> positive_part(const SpectrumSet& s) {
  std::vector<oracle::Interval> out;
  for (const auto& b : s.bands)
    if (b.lo > 0.0) out.push_back({b.lo, b.hi});
  return out;
}

double contour_period(const StreamField& f, Vec2 seed) {
  return period_contour(f, support::orbit_polyline(f, seed)).T;
}

void index_set_gate(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto f = make_builtin_flow("radial_cos");
  const auto idx = index_of(f);
  const double t = seconds_since(t0);
  o.require(idx.families.size() == 2, "family count " + std::to_string(idx.families.size()));
  if (idx.families.size() == 2) o.require(idx.families[0].component_id != idx.families[1].component_id, "disjoint");
  double worst = 0.0;
  for (const auto& fam : idx.families)
    worst = std::max({worst, std::abs(fam.psi_lo() + 1.0), std::abs(fam.psi_hi() - 1.0)});
  o.require(worst < tol::endpoint, "endpoint error");
  o.require(t < tol::index_seconds, "runtime");
  o.detail << " endpoint err " << worst << ", " << t << " s";
}

void period_gate(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_ode = 0.0, worst_contour = 0.0;
  auto check = [&](const StreamField& f, Vec2 seed, double T) {
    worst_ode = std::max(worst_ode, rel(period_ode(f, seed).T, T));
    worst_contour = std::max(worst_contour, rel(contour_period(f, seed), T));
  };
  const auto rigid = make_builtin_flow("rigid");
  const auto shear = make_builtin_flow("shear_quadratic");
  const auto rc = make_builtin_flow("radial_cos");
  for (int k = 0; k < 20; ++k) {
    const double s = (k + 0.5) / 20.0;
    const double r = 0.05 + 0.9 * s;
    check(rigid, {r * std::cos(7.0 * s), r * std::sin(7.0 * s)}, oracle::rigid_period());
    const double L = 1.0 + 9.0 * s;
    check(make_builtin_flow("couette", {{"L", L}}), {0.3 * L, 0.2 + 0.6 * s}, oracle::couette_period(L));
    const double y = 1.02 + 0.96 * s;
    check(shear, {2.0 * s, y}, oracle::shear_period(y));
    // ten radii on each side of the fixed circle r = pi
    const double rr = k < 10 ? 0.2 + 2.6 * (k + 0.5) / 10.0 : pi + 0.3 + 2.6 * (k - 9.5) / 10.0;
    check(rc, {rr * std::cos(1.0 + k), rr * std::sin(1.0 + k)}, oracle::radial_cos_period(rr));
  }
  const double t = seconds_since(t0);
  o.require(worst_ode < tol::period_ode, "ode");
  o.require(worst_contour < tol::period_contour, "contour");
  o.require(t < tol::period_seconds, "runtime");
  o.detail << " ode " << worst_ode << ", contour " << worst_contour << ", " << t << " s";
}

void spectrum_gate(Outcome& o) {
  const double window = 20.0;
  RunConfig c;
  c.flow = "shear_quadratic";
  c.window = window;
  const auto r = run_pipeline(c);
  o.require(r.spectrum.has_value(), "shear pipeline");
  double worst = 0.0;
  if (r.spectrum) {
    const auto ref = oracle::sampled_bands({{pi, 2 * pi}}, window);
    worst = oracle::hausdorff(positive_part(*r.spectrum), ref.runs);
    o.require(r.gaps && r.gaps->total == 2 * oracle::sampled_positive_gaps(pi, 2 * pi), "shear gap count");
  }
  int mismatched = 0;
  for (auto [a, b] : oracle::synthetic_ranges(25, 20240601)) {
    const std::vector<PeriodFunction> pfs{PeriodFunction::from_range(a, b)};
    const auto s = assemble_spectrum(pfs, window);
    const auto g = gap_report(s, pfs);
    const auto ref = oracle::sampled_bands({{a, b}}, window);
    worst = std::max(worst, oracle::hausdorff(positive_part(s), ref.runs));
    const long sampled = oracle::sampled_positive_gaps(a, b);
    if (g.total_in_window != 2 * static_cast<long>(ref.runs.size()) || !g.total || *g.total != 2 * sampled ||
        !g.closed_form_total || *g.closed_form_total != *g.total)
      ++mismatched;
  }
  const auto pf = PeriodFunction::from_range(3.0, 4.0);
  const auto g34 = gap_report(assemble_spectrum({pf}, window), {pf});
  o.require(g34.total == 6 && oracle::sampled_positive_gaps(3.0, 4.0) == 3, "[3,4] closed form");
  o.require(worst < tol::hausdorff, "hausdorff");
  o.require(mismatched == 0, std::to_string(mismatched) + " gap-count mismatches");
  o.detail << " hausdorff " << worst << ", 25 synthetic ranges";
}

void branch_gate(Outcome& o) {
  RunConfig c;
  c.flow = "radial_cos";
  const auto rc = run_pipeline(c);
  o.require(rc.spectrum && rc.spectrum->shape == SpectrumShape::full_line, "radial_cos full_line");
  c.flow = "couette";
  const double L = 5.0;
  c.params = {{"L", L}};
  const auto cou = run_pipeline(c);
  const bool lattice = cou.spectrum && cou.spectrum->shape == SpectrumShape::lattice;
  o.require(lattice, "couette lattice");
  if (lattice) o.require(std::abs(cou.spectrum->lattice_step - 2 * pi / L) < 1e-9, "lattice step");
  o.require(cou.unit_circle == false, "couette unit circle");
  c.flow = "shear_quadratic";
  c.params.clear();
  const auto sh = run_pipeline(c);
  o.require(sh.unit_circle == true, "shear unit circle");
  o.require(sh.gaps && sh.gaps->total && *sh.gaps->total >= 2, "shear gaps");
  if (sh.gaps && sh.gaps->total) o.detail << " shear gaps " << *sh.gaps->total;
}

void operator_gate(Outcome& o) {
  double skew = 0.0, re = 0.0, zm = 0.0, tail = NAN;
  for (auto f : {make_builtin_flow("couette"), make_builtin_flow("shear_quadratic"),
                 make_builtin_flow("cellular", {{"torus", 1.0}})}) {
    const auto g = Grid2D::make(f.domain(), 32, 32);
    DiagnosticsOptions opt;
    opt.probes = 100;
    opt.seed = 1;
    const auto rep = operator_diagnostics(discretize_L0(f, g), discretize_K(f, g), g, opt);
    o.require(rep.eig_info_L0 == 0 && rep.eig_info_Lvor == 0, "eigensolver");
    skew = std::max(skew, rep.skewness_norm);
    re = std::max(re, rep.max_abs_real_L0);
    zm = std::max(zm, rep.zero_mean_residual);
    if (f.domain().kind() == DomainKind::torus) tail = rep.sv_tail_ratio;
  }
  o.require(skew < tol::skew, "skewness");
  o.require(re < tol::real_part, "real parts");
  o.require(zm < tol::zero_mean, "zero mean");
  o.require(tail < 1.0, "singular value decay");
  o.detail << " skew " << skew << ", max|Re| " << re << ", zero-mean " << zm << ", s32/s8 " << tail;
}

void coarea_gate(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<TestFunction> fns{TestFunction::one, TestFunction::psi, TestFunction::bump};
  double worst = 0.0;
  for (const char* name : {"rigid", "shear_quadratic", "radial_cos"}) {
    const auto f = make_builtin_flow(name);
    const auto idx = index_of(f);
    const auto pfs = periods_of(f, idx, 16);
    std::vector<CoareaRange> ranges;
    if (std::string(name) == "radial_cos") {
      // the bounded-period part of the inner family: r < 2.5
      for (std::size_t k = 0; k < idx.families.size(); ++k)
        if (norm(idx.families[k].seed_at(f, 0.5)) < pi)
          ranges.push_back({idx.families[k].component_id, std::cos(2.5), 1.0 - 1e-4 * 2.0});
      o.require(ranges.size() == 1, "inner family");
    }
    for (const auto& r : coarea_check(f, idx, pfs, fns, Grid2D::make(f.domain(), 32, 32), ranges))
      worst = std::max(worst, r.rel_error);
  }
  const double t = seconds_since(t0);
  o.require(worst < tol::coarea, "relative error");
  o.require(t < tol::coarea_seconds, "runtime");
  o.detail << " worst rel " << worst << ", " << t << " s";
}

void weyl_gate(Outcome& o) {
  const auto f = make_builtin_flow("shear_quadratic");
  const auto idx = index_of(f);
  const auto pfs = periods_of(f, idx);
  const auto& fam = idx.families.at(0);
  double worst_ratio = 0.0, worst_final = 0.0;
  for (auto [rho, k] : {std::pair{0.8, 1}, {1.125, 1}, {1.125, 2}, {1.5, 3}, {1.8, 1}}) {
    double prev = NAN, last = 0.0, lambda = 0.0;
    for (double d : {0.05, 0.025, 0.0125}) {
      const auto r = weyl_residual(f, fam, {fam.component_id, rho, k, d}, pfs[0]);
      if (!std::isnan(prev)) worst_ratio = std::max(worst_ratio, r.residual / prev);
      prev = last = r.residual;
      lambda = r.lambda;
    }
    worst_final = std::max(worst_final, last / std::abs(lambda));
  }
  const auto c = make_builtin_flow("couette");
  const auto cidx = index_of(c);
  const auto cpf = periods_of(c, cidx, 16);
  double couette = 0.0;
  for (double d : {0.3, 0.1, 0.01})
    for (int k : {1, 4})
      couette = std::max(couette, weyl_residual(c, cidx.families.at(0), {cidx.families[0].component_id, 0.5, k, d}, cpf[0]).residual);
  o.require(worst_ratio <= tol::weyl_ratio, "halving ratio");
  o.require(worst_final < tol::weyl_final, "finest residual");
  o.require(couette < tol::weyl_exact, "couette");
  o.detail << " worst ratio " << worst_ratio << ", finest/|lambda| " << worst_final << ", couette " << couette;
}

void hypothesis_gate(Outcome& o) {
  const auto h = hypothesis_h(make_builtin_flow("cellular"), 64);
  o.require(h.refined_fraction < h.fraction, "decrease");
  o.require(h.refined_fraction < tol::aperiodic_fraction, "final fraction");
  for (const char* name : {"rigid", "shear_quadratic"}) {
    const auto z = hypothesis_h(make_builtin_flow(name), 64);
    o.require(z.fraction == 0.0 && z.refined_fraction == 0.0, std::string(name) + " nonzero");
  }
  o.detail << " cellular " << h.fraction << " -> " << h.refined_fraction;
}

void determinism_gate(Outcome& o) {
  RunConfig c;
  c.flow = "cellular";
  c.seed = 7;
  c.validation = ValidationLevel::structural;
  c.period_samples = 16;
  c.hypothesis_resolution = 16;
  const std::string a = run_pipeline(c).to_json(false).dump();
  const std::string b = run_pipeline(c).to_json(false).dump();
  o.require(a == b, "reports differ");
  o.detail << " " << a.size() << " bytes";
}

}  // namespace

int main() {
  gate(1, "index set of cos r on the 2 pi disk", index_set_gate);
  gate(2, "period oracles", period_gate);
  gate(3, "spectrum vs sampled oracle", spectrum_gate);
  gate(4, "full-line and lattice branches", branch_gate);
  gate(5, "structural operator checks", operator_gate);
  gate(6, "co-area identity", coarea_gate);
  gate(7, "Weyl certification", weyl_gate);
  gate(8, "aperiodic-set test", hypothesis_gate);
  gate(9, "determinism", determinism_gate);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
