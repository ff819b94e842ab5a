#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eulerspec/domain.hpp"
#include "eulerspec/error.hpp"
#include "eulerspec/geometry.hpp"
#include "eulerspec/ode.hpp"
#include "eulerspec/parallel.hpp"
#include "eulerspec/stream_field.hpp"

namespace eulerspec {

/// Topology tolerances. Relative entries are scaled by the field's diameter,
/// oscillation, or maximum gradient (see FieldScales).
struct Tolerances {
  double newton_tol{1e-10};       // absolute |grad psi| at accepted fixed points
  double closure_rel{1e-7};       // x diameter
  double level_rel{1e-8};         // x osc(psi)
  double degeneracy_tol{1e-8};    // |det H| below this x |H|_F^2 is degenerate
  double guard_rel{1e-8};         // fixed-point guard, x max |grad psi|
  double trace_rtol{1e-11};       // orbits used for periods and geometry
  double classify_rtol{1e-8};     // orbits used for cell labels and topology checks
  double max_time_factor{1e4};    // max_time = factor x diameter / median speed
};

struct FieldScales {
  double diameter{1.0};
  double psi_min{0.0};
  double psi_max{0.0};
  double osc{0.0};
  double max_grad{0.0};
  double median_speed{0.0};

  double closure_tol(const Tolerances& t) const { return t.closure_rel * diameter; }
  double level_tol(const Tolerances& t) const { return t.level_rel * std::max(osc, 1e-300); }
  double guard(const Tolerances& t) const { return t.guard_rel * std::max(max_grad, 1e-300); }
};

/// Scales estimated from a 96x96 sample of interior points.
inline FieldScales field_scales(const StreamField& field, int n = 96) {
  const DomainSpec& dom = field.domain();
  const Box& b = dom.box();
  FieldScales s;
  s.diameter = dom.diameter();
  s.psi_min = INFINITY;
  s.psi_max = -INFINITY;
  std::vector<double> speeds;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Vec2 p{b.xmin + b.width() * (i + 0.5) / n, b.ymin + b.height() * (j + 0.5) / n};
      if (!dom.contains(p)) continue;
      const double v = field.psi(p);
      const double g = norm(field.grad(p));
      s.psi_min = std::min(s.psi_min, v);
      s.psi_max = std::max(s.psi_max, v);
      s.max_grad = std::max(s.max_grad, g);
      speeds.push_back(g);
    }
  }
  for (const auto& bs : dom.boundary_samples(64)) {
    const double v = field.psi(bs.point);
    s.psi_min = std::min(s.psi_min, v);
    s.psi_max = std::max(s.psi_max, v);
  }
  s.osc = s.psi_max - s.psi_min;
  if (!speeds.empty()) {
    auto mid = speeds.begin() + static_cast<std::ptrdiff_t>(speeds.size() / 2);
    std::nth_element(speeds.begin(), mid, speeds.end());
    s.median_speed = *mid;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Orbit tracing
// ---------------------------------------------------------------------------

struct TraceCaps {
  double max_time{INFINITY};
  double max_arclength{INFINITY};
  long max_steps{2'000'000};
};

inline TraceCaps default_caps(const FieldScales& s, const Tolerances& t) {
  TraceCaps c;
  const double speed = s.median_speed > 0.0 ? s.median_speed : std::max(s.max_grad, 1e-300);
  c.max_time = t.max_time_factor * s.diameter / speed;
  c.max_arclength = 1e3 * s.diameter;
  return c;
}

struct TraceOptions {
  double rtol{1e-11};
  double closure_tol{1e-7};
  double return_radius{1e-3};
  double fixed_point_guard{0.0};
  int subdivide{1};             // polyline points per accepted step
  bool exact_arclength{false};  // Gauss quadrature of speed instead of chord sums
  bool keep_dense{false};       // retain per-step interpolants
};

inline TraceOptions trace_options(const FieldScales& s, const Tolerances& t, double rtol) {
  TraceOptions o;
  o.rtol = rtol;
  o.closure_tol = s.closure_tol(t);
  o.return_radius = 1e-3 * s.diameter;
  o.fixed_point_guard = s.guard(t);
  return o;
}

/// Looser closure suited to classification-accuracy traces.
inline TraceOptions classify_options(const FieldScales& s, const Tolerances& t) {
  TraceOptions o = trace_options(s, t, t.classify_rtol);
  o.closure_tol = std::max(o.closure_tol, 1e-5 * s.diameter);
  return o;
}

enum class OrbitKind { periodic, fixed, aperiodic_or_long };

inline const char* to_string(OrbitKind k) {
  switch (k) {
    case OrbitKind::periodic: return "periodic";
    case OrbitKind::fixed: return "fixed";
    case OrbitKind::aperiodic_or_long: return "aperiodic_or_long";
  }
  return "unknown";
}

struct OrbitTrace {
  Vec2 seed;
  OrbitKind kind{OrbitKind::aperiodic_or_long};
  std::vector<Vec2> polyline;  // unwrapped; closes up to a period shift when periodic
  double psi_value{0.0};
  double arclength{0.0};
  double time{0.0};            // return time when periodic, elapsed time otherwise
  double closure_error{INFINITY};
  double psi_drift{0.0};       // max |psi - psi(seed)| over the polyline
  long steps{0};
  std::string diagnostic;
  std::vector<Dopri5::Dense> dense;  // only with keep_dense

  /// Position at time t in [0, time] from the retained interpolants.
  Vec2 position_at(double t) const {
    require(!dense.empty(), "position_at: trace was run without keep_dense");
    auto it = std::upper_bound(dense.begin(), dense.end(), t,
                               [](double v, const Dopri5::Dense& d) { return v < d.t0; });
    const auto& d = it == dense.begin() ? dense.front() : *std::prev(it);
    return d.at(std::clamp((t - d.t0) / d.h, 0.0, 1.0));
  }
};

/// Integrates x' = perp(grad psi)(x) from the seed until the first return to
/// the section through the seed along grad psi, crossing in the original
/// direction. Throws invalid_argument when the seed is at a fixed point.
inline OrbitTrace trace_orbit(const StreamField& field, Vec2 seed, const TraceCaps& caps, const TraceOptions& opt) {
  const DomainSpec& dom = field.domain();
  if (!dom.contains(seed, 1e-9 * dom.diameter())) fail(ErrorKind::out_of_domain, "trace_orbit: seed outside the domain");
  const Vec2 g0 = field.grad(seed);
  if (norm(g0) <= opt.fixed_point_guard) fail(ErrorKind::invalid_argument, "trace_orbit: seed at or near a fixed point");

  OrbitTrace tr;
  tr.seed = seed;
  tr.psi_value = field.psi(seed);
  tr.polyline.push_back(seed);
  const Vec2 that = normalized(perp(g0));

  Dopri5::Options dopt;
  dopt.rtol = opt.rtol;
  dopt.atol = 1e-2 * opt.rtol * dom.diameter();
  Dopri5 ode([&field](Vec2 y) { return field.velocity(y); }, seed, 0.0, dopt);

  auto speed_arc = [&](const Dopri5::Dense& d, double th0, double th1) {
    if (!opt.exact_arclength) {
      return norm(d.at(th1) - d.at(th0));
    }
    static constexpr double x[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
    static constexpr double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    double s = 0.0;
    for (int q = 0; q < 3; ++q) {
      const double th = th0 + 0.5 * (th1 - th0) * (x[q] + 1.0);
      s += w[q] * norm(field.velocity(d.at(th)));
    }
    return 0.5 * (th1 - th0) * d.h * s;
  };
  auto track_drift = [&](Vec2 p) { tr.psi_drift = std::max(tr.psi_drift, std::abs(field.psi(p) - tr.psi_value)); };

  const int sub = std::max(1, opt.subdivide);
  const double max_step_length = 0.05 * dom.diameter();
  while (true) {
    if (ode.t() >= caps.max_time || tr.arclength >= caps.max_arclength || tr.steps >= caps.max_steps) {
      tr.kind = OrbitKind::aperiodic_or_long;
      tr.diagnostic = "cap exhausted (time " + std::to_string(ode.t()) + ", arclength " + std::to_string(tr.arclength) + ")";
      tr.time = ode.t();
      return tr;
    }
    const Vec2 y0 = ode.y();
    const Vec2 m0 = dom.min_image(y0 - seed);
    // Straight orbits carry no truncation error; the length cap keeps one
    // step from skipping over the return.
    ode.set_hmax(max_step_length / std::max(norm(ode.slope()), 1e-300));
    const double s0 = dot(that, m0);
    if (!ode.step()) {
      tr.kind = OrbitKind::aperiodic_or_long;
      tr.diagnostic = "step-size underflow";
      tr.time = ode.t();
      return tr;
    }
    ++tr.steps;
    const auto& d = ode.dense();
    if (opt.keep_dense) tr.dense.push_back(d);
    auto sec = [&](double th) { return dot(that, m0 + (d.at(th) - y0)); };
    const double s1 = sec(1.0);

    if (s0 < 0.0 && s1 >= 0.0) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 80 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        (sec(mid) < 0.0 ? lo : hi) = mid;
      }
      const double th = hi;
      const Vec2 pc = d.at(th);
      const Vec2 disp = m0 + (pc - y0);
      if (norm(disp) <= opt.return_radius) {
        for (int k = 1; k < sub; ++k) {
          const double a = th * k / sub;
          tr.polyline.push_back(d.at(a));
        }
        tr.arclength += speed_arc(d, 0.0, th);
        tr.polyline.push_back(pc);
        track_drift(pc);
        tr.time = d.t0 + th * d.h;
        tr.closure_error = norm(disp);
        if (tr.closure_error <= opt.closure_tol) {
          tr.kind = OrbitKind::periodic;
        } else {
          tr.kind = OrbitKind::aperiodic_or_long;
          std::ostringstream os;
          os << "returned to the section with closure error " << tr.closure_error;
          tr.diagnostic = os.str();
        }
        return tr;
      }
    }
    for (int k = 1; k < sub; ++k) tr.polyline.push_back(d.at(static_cast<double>(k) / sub));
    tr.polyline.push_back(ode.y());
    tr.arclength += speed_arc(d, 0.0, 1.0);
    track_drift(ode.y());
    if (norm(ode.slope()) < opt.fixed_point_guard) {
      tr.kind = OrbitKind::aperiodic_or_long;
      tr.diagnostic = "approached a fixed point";
      tr.time = ode.t();
      return tr;
    }
  }
}

/// Minimum distance from p to a polyline, using periodic minimum images.
inline double polyline_distance(const DomainSpec& dom, Vec2 p, const std::vector<Vec2>& line) {
  if (line.empty()) return INFINITY;
  double best = norm(dom.min_image(line.front() - p));
  for (std::size_t i = 1; i < line.size(); ++i) {
    const Vec2 a = dom.min_image(line[i - 1] - p);
    const Vec2 ab = line[i] - line[i - 1];
    const double L2 = dot(ab, ab);
    const double t = L2 > 0.0 ? std::clamp(-dot(a, ab) / L2, 0.0, 1.0) : 0.0;
    best = std::min(best, norm(a + t * ab));
  }
  return best;
}

/// Symmetric Hausdorff distance between two polylines (vertices to segments).
inline double polyline_hausdorff(const DomainSpec& dom, const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  double h = 0.0;
  for (const Vec2& p : a) h = std::max(h, polyline_distance(dom, p, b));
  for (const Vec2& p : b) h = std::max(h, polyline_distance(dom, p, a));
  return h;
}

// ---------------------------------------------------------------------------
// Fixed points
// ---------------------------------------------------------------------------

enum class CriticalKind { elliptic, hyperbolic, degenerate };

inline const char* to_string(CriticalKind k) {
  switch (k) {
    case CriticalKind::elliptic: return "elliptic";
    case CriticalKind::hyperbolic: return "hyperbolic";
    case CriticalKind::degenerate: return "degenerate";
  }
  return "unknown";
}

struct CriticalPoint {
  Vec2 location;
  CriticalKind classification{CriticalKind::degenerate};
  double hessian_det{0.0};
  double psi{0.0};
  double grad_norm{0.0};
  bool on_boundary{false};
  bool isolated{true};  // false for samples of a curve of fixed points
  int curve_id{-1};
};

struct UnresolvedCell {
  Vec2 center;
  std::string reason;
};

struct FixedPointSet {
  std::vector<CriticalPoint> points;
  std::vector<UnresolvedCell> unresolved;
  int curve_count{0};
  double cell_diagonal{0.0};
  std::vector<std::string> diagnostics;

  std::vector<CriticalPoint> isolated() const {
    std::vector<CriticalPoint> out;
    for (const auto& p : points)
      if (p.isolated) out.push_back(p);
    return out;
  }
  std::vector<CriticalPoint> curve(int id) const {
    std::vector<CriticalPoint> out;
    for (const auto& p : points)
      if (p.curve_id == id) out.push_back(p);
    return out;
  }
};

inline CriticalKind classify_hessian(const Sym2& h, double degeneracy_tol, double* det_out = nullptr) {
  const double det = h.det();
  if (det_out) *det_out = det;
  const double f2 = h.frobenius() * h.frobenius();
  if (f2 == 0.0 || std::abs(det) <= degeneracy_tol * f2) return CriticalKind::degenerate;
  return det > 0.0 ? CriticalKind::elliptic : CriticalKind::hyperbolic;
}

namespace detail {

/// Newton with a pseudo-inverse Hessian and backtracking on |grad|.
inline std::optional<Vec2> newton_fixed_point(const StreamField& f, Vec2 x, double tol, double max_move) {
  const Vec2 start = x;
  Vec2 g = f.grad(x);
  for (int it = 0; it < 80; ++it) {
    const double gn = norm(g);
    if (gn < tol) return x;
    const Sym2 h = f.hessian(x);
    const auto e = h.eigen();
    const double lmax = std::max(std::abs(e.lambda[0]), std::abs(e.lambda[1]));
    if (!(lmax > 0.0)) return std::nullopt;
    Vec2 step{};
    for (int k = 0; k < 2; ++k) {
      if (std::abs(e.lambda[k]) > 1e-10 * lmax) step += e.vec[k] * (dot(e.vec[k], g) / e.lambda[k]);
    }
    double a = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls, a *= 0.5) {
      const Vec2 xn = x - a * step;
      const Vec2 gnew = f.grad(xn);
      if (norm(gnew) < gn) {
        x = xn;
        g = gnew;
        improved = true;
        break;
      }
    }
    if (!improved) return norm(g) < tol ? std::optional<Vec2>(x) : std::nullopt;
    if (norm(f.domain().min_image(x - start)) > max_move) return std::nullopt;
  }
  return norm(g) < tol ? std::optional<Vec2>(x) : std::nullopt;
}

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Scans a scan_resolution^2 cell grid of the bounding box for cells where
/// both gradient components change sign, then polishes each flagged cell by
/// Newton. Limits are deduplicated; clusters of three or more distinct limits
/// within two cell diagonals are reported as one non-isolated curve.
inline FixedPointSet find_fixed_points(const StreamField& field, int scan_resolution, const Tolerances& tol = {}) {
  require(scan_resolution >= 32, "find_fixed_points: scan_resolution must be at least 32");
  const DomainSpec& dom = field.domain();
  const Box& b = dom.box();
  const int n = scan_resolution;
  const double hx = b.width() / n, hy = b.height() / n;
  const double diag = std::hypot(hx, hy);
  FixedPointSet out;
  out.cell_diagonal = diag;

  const int nxn = dom.periodic_x() ? n : n + 1;
  const int nyn = dom.periodic_y() ? n : n + 1;
  std::vector<Vec2> g(static_cast<std::size_t>(nxn) * nyn);
  for (int j = 0; j < nyn; ++j)
    for (int i = 0; i < nxn; ++i) g[static_cast<std::size_t>(j) * nxn + i] = field.grad({b.xmin + i * hx, b.ymin + j * hy});
  auto node = [&](int i, int j) { return g[static_cast<std::size_t>(j % nyn) * nxn + (i % nxn)]; };
  // Components this small count as zero, so zeros on grid lines (sin(pi) ~ 1e-16) are bracketed.
  double gmax = 0.0;
  for (const Vec2& v : g) gmax = std::max({gmax, std::abs(v.x), std::abs(v.y)});
  const double zero = 1e-13 * gmax;

  // Cell must touch the domain: some corner or the center inside (with one cell of slack).
  std::vector<Vec2> starts;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Vec2 c{b.xmin + (i + 0.5) * hx, b.ymin + (j + 0.5) * hy};
      if (!dom.contains(c, diag)) continue;
      double gxmin = INFINITY, gxmax = -INFINITY, gymin = INFINITY, gymax = -INFINITY;
      for (int dj = 0; dj < 2; ++dj) {
        for (int di = 0; di < 2; ++di) {
          const Vec2 v = node(i + di, j + dj);
          gxmin = std::min(gxmin, v.x);
          gxmax = std::max(gxmax, v.x);
          gymin = std::min(gymin, v.y);
          gymax = std::max(gymax, v.y);
        }
      }
      if (gxmin <= zero && gxmax >= -zero && gymin <= zero && gymax >= -zero) starts.push_back(c);
    }
  }

  const double slack = 1e-9 * dom.diameter();
  auto limits = parallel_map<std::optional<Vec2>>(starts.size(), [&](std::size_t k) {
    return detail::newton_fixed_point(field, starts[k], tol.newton_tol, 0.25 * dom.diameter());
  });

  std::vector<Vec2> pts;
  const double dedup = 1e-6 * diag;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    if (!limits[k]) {
      out.unresolved.push_back({starts[k], "Newton did not converge"});
      continue;
    }
    const Vec2 x = dom.wrap(*limits[k]);
    if (!dom.contains(x, slack)) continue;
    bool dup = false;
    for (const Vec2& q : pts) dup = dup || norm(dom.min_image(q - x)) < dedup;
    if (!dup) pts.push_back(x);
  }
  // Unresolved cells whose center lies next to an accepted limit are not reported.
  std::erase_if(out.unresolved, [&](const UnresolvedCell& c) {
    for (const Vec2& q : pts)
      if (norm(dom.min_image(q - c.center)) < diag) return true;
    return false;
  });

  detail::DisjointSets ds(pts.size());
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t c = a + 1; c < pts.size(); ++c)
      if (norm(dom.min_image(pts[a] - pts[c])) < 2.0 * diag) ds.unite(static_cast<int>(a), static_cast<int>(c));
  std::vector<int> size(pts.size(), 0), curve_of(pts.size(), -1);
  for (std::size_t a = 0; a < pts.size(); ++a) ++size[ds.find(static_cast<int>(a))];

  for (std::size_t a = 0; a < pts.size(); ++a) {
    CriticalPoint cp;
    cp.location = pts[a];
    cp.psi = field.psi(pts[a]);
    cp.grad_norm = norm(field.grad(pts[a]));
    cp.classification = classify_hessian(field.hessian(pts[a]), tol.degeneracy_tol, &cp.hessian_det);
    cp.on_boundary = dom.has_boundary() && dom.distance_to_boundary(pts[a]) <= 1e-6 * dom.diameter();
    const int root = ds.find(static_cast<int>(a));
    if (size[root] >= 3) {
      if (curve_of[root] < 0) curve_of[root] = out.curve_count++;
      cp.isolated = false;
      cp.curve_id = curve_of[root];
    }
    out.points.push_back(cp);
  }
  for (const auto& cp : out.points) {
    if (cp.isolated && cp.classification == CriticalKind::degenerate) {
      std::ostringstream os;
      os << "degenerate isolated critical point at (" << cp.location.x << ", " << cp.location.y
         << "); family discovery near its critical value is best-effort";
      out.diagnostics.push_back(os.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index set
// ---------------------------------------------------------------------------

enum class EndpointKind { critical_value, boundary_value, separatrix_estimate };

inline const char* to_string(EndpointKind k) {
  switch (k) {
    case EndpointKind::critical_value: return "critical_value";
    case EndpointKind::boundary_value: return "boundary_value";
    case EndpointKind::separatrix_estimate: return "separatrix_estimate";
  }
  return "unknown";
}

struct Endpoint {
  double value{0.0};
  EndpointKind kind{EndpointKind::critical_value};
  bool elliptic{false};  // the orbits shrink to an elliptic point here
  std::string detail;
};

/// A gradient arc crossing every orbit of a family once, with strictly
/// monotone psi along its vertices.
struct Transversal {
  std::vector<Vec2> points;
  std::vector<double> psi;
};

struct OrbitFamily {
  int component_id{0};
  Endpoint lo;
  Endpoint hi;
  std::vector<Vec2> representative_seeds;
  int orientation{1};  // +1 counterclockwise (or +x drift on periodic domains)
  Transversal transversal;
  std::string source;

  double psi_lo() const { return lo.value; }
  double psi_hi() const { return hi.value; }
  bool contains(double rho) const { return rho > lo.value && rho < hi.value; }

  /// Point on the transversal with psi = rho (interpolated, then Newton-polished).
  Vec2 seed_at(const StreamField& field, double rho) const {
    if (!(rho > lo.value && rho < hi.value)) {
      std::ostringstream os;
      os << "seed_at: rho " << rho << " outside family range (" << lo.value << ", " << hi.value << ")";
      fail(ErrorKind::invalid_argument, os.str());
    }
    const auto& P = transversal.points;
    const auto& V = transversal.psi;
    const bool inc = V.back() > V.front();
    std::size_t k = 0;
    for (; k + 2 < V.size(); ++k) {
      const double a = V[k + 1];
      if (inc ? rho <= a : rho >= a) break;
    }
    const double v0 = V[k], v1 = V[k + 1];
    const double t = v1 != v0 ? std::clamp((rho - v0) / (v1 - v0), 0.0, 1.0) : 0.5;
    Vec2 x = P[k] + t * (P[k + 1] - P[k]);
    const DomainSpec& dom = field.domain();
    double mean_seg = 0.0;
    for (std::size_t i = 0; i + 1 < P.size(); ++i) mean_seg += norm(P[i + 1] - P[i]);
    mean_seg /= static_cast<double>(std::max<std::size_t>(1, P.size() - 1));
    const double cap = 0.5 * std::max(norm(P[k + 1] - P[k]), mean_seg) + 1e-6 * dom.diameter();
    for (int it = 0; it < 80; ++it) {
      const double r = rho - field.psi(x);
      if (std::abs(r) <= 1e-15 * std::max(1.0, std::abs(rho))) break;
      const Vec2 g = field.grad(x);
      const double g2 = dot(g, g);
      if (g2 == 0.0) break;
      Vec2 step = g * (r / g2);
      if (norm(step) > cap) step = normalized(step) * cap;
      Vec2 xn = x + step;
      int guard = 0;
      while (!dom.contains(xn) && guard++ < 40) xn = x + (step *= 0.5);
      x = xn;
    }
    return dom.wrap(x);
  }
};

struct IndexSet {
  std::vector<OrbitFamily> families;
  std::string topology_note{"each family is one open interval of the disjoint union; ranges are never merged"};
  std::vector<std::string> diagnostics;
};

namespace detail {

enum class ArcStop { boundary, critical, length };

struct GradientArc {
  std::vector<Vec2> points;
  std::vector<double> psi;
  ArcStop stop{ArcStop::length};
};

/// RK4 on x' = sigma grad/|grad| in arclength, from x0, until the domain
/// boundary, a vanishing gradient, or loss of monotonicity in psi.
inline GradientArc gradient_arc(const StreamField& f, Vec2 x0, int sigma, double h, double guard, double max_len) {
  const DomainSpec& dom = f.domain();
  auto dir = [&](Vec2 x) {
    const Vec2 g = f.grad(x);
    const double n = norm(g);
    return n > 0.0 ? g * (sigma / n) : Vec2{};
  };
  GradientArc arc;
  Vec2 x = x0;
  double v = f.psi(x);
  arc.points.push_back(x);
  arc.psi.push_back(v);
  const int max_steps = static_cast<int>(std::ceil(max_len / h));
  for (int s = 0; s < max_steps; ++s) {
    if (norm(f.grad(x)) < guard) {
      arc.stop = ArcStop::critical;
      return arc;
    }
    const Vec2 k1 = dir(x);
    const Vec2 k2 = dir(x + 0.5 * h * k1);
    const Vec2 k3 = dir(x + 0.5 * h * k2);
    const Vec2 k4 = dir(x + h * k3);
    Vec2 xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!dom.contains(xn)) {
      double lo = 0.0, hi = 1.0;
      const Vec2 d = xn - x;
      for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (lo + hi);
        (dom.contains(x + m * d) ? lo : hi) = m;
      }
      const Vec2 xb = x + lo * d;
      const double vb = f.psi(xb);
      if (sigma * (vb - v) > 0.0) {
        arc.points.push_back(xb);
        arc.psi.push_back(vb);
      }
      arc.stop = ArcStop::boundary;
      return arc;
    }
    const double vn = f.psi(xn);
    if (!(sigma * (vn - v) > 0.0)) {
      arc.stop = ArcStop::critical;
      return arc;
    }
    x = xn;
    v = vn;
    arc.points.push_back(x);
    arc.psi.push_back(v);
  }
  arc.stop = ArcStop::length;
  return arc;
}

struct ArcSource {
  Vec2 origin;       // first transversal vertex
  Endpoint start;    // endpoint data at the origin
  Vec2 first;        // point where the gradient arc starts
  int sigma{1};
  std::string label;
};

}  // namespace detail

struct IndexSetOptions {
  Tolerances tol{};
  int boundary_seeds_per_component{4};
  int curve_seeds{4};
};

/// Builds the index set: gradient arcs are walked from elliptic points,
/// boundary components, curves of fixed points, and saddles; each arc is split
/// at saddle levels whose orbit is not periodic; duplicate arcs through the
/// same orbit family are discarded. Families keep their own intervals even
/// when ranges coincide.
inline IndexSet build_index_set(const StreamField& field, const FixedPointSet& fps, int resolution,
                                const IndexSetOptions& opts = {}) {
  require(resolution >= 64, "build_index_set: resolution must be at least 64");
  const DomainSpec& dom = field.domain();
  const FieldScales sc = field_scales(field);
  const Tolerances& tol = opts.tol;
  const double diam = dom.diameter();
  const double eps = 1e-4 * diam;
  const double h = diam / (8.0 * resolution);
  const double guard = sc.guard(tol);
  const double level = sc.level_tol(tol);
  const TraceCaps caps = default_caps(sc, tol);
  TraceOptions copt = classify_options(sc, tol);
  copt.subdivide = 8;

  IndexSet out;
  if (sc.osc <= 0.0 || sc.max_grad <= 0.0) {
    out.diagnostics.push_back("no periodic orbits found: the stream function is constant");
    return out;
  }

  std::vector<detail::ArcSource> sources;
  auto endpoint_for = [&](const CriticalPoint& cp) {
    Endpoint e;
    e.value = cp.psi;
    e.kind = EndpointKind::critical_value;
    e.elliptic = cp.isolated && cp.classification == CriticalKind::elliptic;
    e.detail = cp.isolated ? to_string(cp.classification) : "fixed_curve";
    if (cp.on_boundary) e.detail += "_on_boundary";
    return e;
  };
  auto add_from = [&](const CriticalPoint& cp, Vec2 v, const std::string& label) {
    const Vec2 p = cp.location + eps * v;
    if (!dom.contains(p)) return;
    const double dv = field.psi(p) - cp.psi;
    if (dv == 0.0) return;
    sources.push_back({cp.location, endpoint_for(cp), dom.wrap(p), dv > 0.0 ? 1 : -1, label});
  };

  for (const auto& cp : fps.points) {
    if (cp.isolated && cp.classification == CriticalKind::elliptic && !cp.on_boundary) {
      const auto e = field.hessian(cp.location).eigen();
      add_from(cp, e.vec[1], "elliptic point");
    }
  }
  for (int c = 0; c < fps.curve_count; ++c) {
    const auto pts = fps.curve(c);
    const int m = std::min<int>(opts.curve_seeds, static_cast<int>(pts.size()));
    for (int s = 0; s < m; ++s) {
      const auto& cp = pts[static_cast<std::size_t>(s) * pts.size() / m];
      const auto e = field.hessian(cp.location).eigen();
      const Vec2 v = std::abs(e.lambda[1]) >= std::abs(e.lambda[0]) ? e.vec[1] : e.vec[0];
      add_from(cp, v, "fixed-point curve");
      add_from(cp, -v, "fixed-point curve");
    }
  }
  if (dom.has_boundary()) {
    const int m = opts.boundary_seeds_per_component;
    for (const auto& bs : dom.boundary_samples(m)) {
      Vec2 p = bs.point - eps * bs.normal;
      if (!dom.contains(p)) continue;
      const Vec2 g = field.grad(p);
      if (norm(g) < guard) continue;
      const int sigma = dot(g, -bs.normal) > 0.0 ? 1 : -1;
      Endpoint e;
      e.value = field.psi(bs.point);
      e.kind = EndpointKind::boundary_value;
      e.detail = "boundary " + dom.boundary_components()[static_cast<std::size_t>(bs.component)].label;
      for (const auto& cp : fps.points) {
        if (norm(dom.min_image(cp.location - bs.point)) < 2.0 * fps.cell_diagonal) {
          e = endpoint_for(cp);
          break;
        }
      }
      sources.push_back({bs.point, e, p, sigma, "boundary"});
    }
  }
  for (const auto& cp : fps.points) {
    if (cp.isolated && cp.classification != CriticalKind::elliptic) {
      const auto e = field.hessian(cp.location).eigen();
      for (const Vec2& v : {e.vec[0], e.vec[1]}) {
        add_from(cp, v, "saddle");
        add_from(cp, -v, "saddle");
      }
    }
  }

  // Critical values where an arc may have to be split.
  std::vector<double> split_values;
  for (const auto& cp : fps.points)
    if (!(cp.isolated && cp.classification == CriticalKind::elliptic)) split_values.push_back(cp.psi);
  std::sort(split_values.begin(), split_values.end());
  split_values.erase(std::unique(split_values.begin(), split_values.end(),
                                 [&](double a, double b) { return std::abs(a - b) <= level; }),
                     split_values.end());

  auto nearest_critical = [&](Vec2 x, double radius) -> const CriticalPoint* {
    const CriticalPoint* best = nullptr;
    double bd = radius;
    for (const auto& cp : fps.points) {
      const double d = norm(dom.min_image(cp.location - x));
      if (d < bd) {
        bd = d;
        best = &cp;
      }
    }
    return best;
  };

  auto make_family = [&](const Transversal& tv, Endpoint a, Endpoint b, const std::string& label) {
    OrbitFamily f;
    f.transversal = tv;
    if (tv.psi.back() < tv.psi.front()) {
      std::reverse(f.transversal.points.begin(), f.transversal.points.end());
      std::reverse(f.transversal.psi.begin(), f.transversal.psi.end());
    }
    if (a.value > b.value) std::swap(a, b);
    f.lo = a;
    f.hi = b;
    f.source = label;
    // Endpoint vertices carry the exact endpoint values.
    f.transversal.psi.front() = f.lo.value;
    f.transversal.psi.back() = f.hi.value;
    return f;
  };

  for (const auto& src : sources) {
    auto arc = detail::gradient_arc(field, src.first, src.sigma, h, guard, 10.0 * diam);
    Transversal tv;
    tv.points.push_back(src.origin);
    tv.psi.push_back(src.start.value);
    for (std::size_t k = 0; k < arc.points.size(); ++k) {
      if (src.sigma * (arc.psi[k] - tv.psi.back()) > 0.0) {
        tv.points.push_back(arc.points[k]);
        tv.psi.push_back(arc.psi[k]);
      }
    }
    if (tv.points.size() < 3) continue;

    Endpoint end;
    const Vec2 xe = tv.points.back();
    end.value = tv.psi.back();
    const double snap = 4.0 * h + 2.0 * fps.cell_diagonal;
    if (arc.stop == detail::ArcStop::boundary) {
      end.kind = EndpointKind::boundary_value;
      end.detail = "boundary";
      if (const CriticalPoint* cp = nearest_critical(xe, 2.0 * fps.cell_diagonal)) {
        if (std::abs(cp->psi - end.value) <= 1e-6 * sc.osc) end = endpoint_for(*cp);
      }
    } else if (const CriticalPoint* cp = nearest_critical(xe, snap)) {
      end = endpoint_for(*cp);
    } else {
      end.kind = EndpointKind::separatrix_estimate;
      end.detail = arc.stop == detail::ArcStop::length ? "arc length cap" : "gradient vanished without a nearby fixed point";
    }
    if (src.sigma * (end.value - tv.psi.front()) <= level) continue;
    // Keep transversal vertices strictly inside the endpoint value.
    while (tv.psi.size() > 2 && src.sigma * (end.value - tv.psi.back()) <= 0.0) {
      tv.points.pop_back();
      tv.psi.pop_back();
    }
    tv.points.push_back(xe);
    tv.psi.push_back(end.value);

    OrbitFamily whole = make_family(tv, src.start, end, src.label);

    // Split at saddle levels whose orbit is not periodic.
    std::vector<OrbitFamily> pieces;
    std::vector<std::pair<double, Endpoint>> cuts;
    for (double c : split_values) {
      if (c - whole.lo.value <= 1e3 * level || whole.hi.value - c <= 1e3 * level) continue;
      const Vec2 p = whole.seed_at(field, c);
      bool periodic = false;
      try {
        periodic = trace_orbit(field, p, caps, copt).kind == OrbitKind::periodic;
      } catch (const Error&) {
      }
      if (!periodic) {
        Endpoint e;
        e.value = c;
        e.kind = EndpointKind::critical_value;
        e.detail = "separatrix level";
        cuts.push_back({c, e});
      }
    }
    if (cuts.empty()) {
      pieces.push_back(whole);
    } else {
      Endpoint prev = whole.lo;
      cuts.push_back({whole.hi.value, whole.hi});
      for (const auto& [c, e] : cuts) {
        Transversal sub;
        for (std::size_t k = 0; k < whole.transversal.psi.size(); ++k) {
          const double v = whole.transversal.psi[k];
          if (v >= prev.value && v <= c) {
            sub.points.push_back(whole.transversal.points[k]);
            sub.psi.push_back(v);
          }
        }
        // Pin the cut ends on the transversal.
        auto pin = [&](double v) {
          const double span = whole.hi.value - whole.lo.value;
          const double inside = std::clamp(v, whole.lo.value + 1e-12 * span, whole.hi.value - 1e-12 * span);
          return whole.seed_at(field, inside);
        };
        if (sub.psi.empty() || sub.psi.front() != prev.value) {
          sub.points.insert(sub.points.begin(), pin(prev.value));
          sub.psi.insert(sub.psi.begin(), prev.value);
        }
        if (sub.psi.back() != c) {
          sub.points.push_back(pin(c));
          sub.psi.push_back(c);
        }
        if (sub.psi.size() >= 2 && c - prev.value > 1e3 * level) pieces.push_back(make_family(sub, prev, e, src.label));
        prev = e;
      }
    }

    for (auto& cand : pieces) {
      const double mid = 0.5 * (cand.lo.value + cand.hi.value);
      const Vec2 p = cand.seed_at(field, mid);
      OrbitTrace mt;
      try {
        mt = trace_orbit(field, p, caps, copt);
      } catch (const Error&) {
        continue;
      }
      if (mt.kind != OrbitKind::periodic) {
        out.diagnostics.push_back("discarded a " + cand.source + " arc whose mid-level orbit is not periodic");
        continue;
      }
      bool duplicate = false;
      for (const auto& ex : out.families) {
        if (!ex.contains(mid)) continue;
        const Vec2 q = ex.seed_at(field, mid);
        if (norm(dom.min_image(p - q)) < 1e-4 * diam || polyline_distance(dom, q, mt.polyline) < 1e-4 * diam) {
          duplicate = true;
          break;
        }
      }
      if (duplicate) continue;

      // Orientation from the mid-level orbit.
      const Vec2 shift = mt.polyline.back() - mt.polyline.front();
      if (norm(shift) > 0.5 * std::min(dom.box().width(), dom.box().height())) {
        cand.orientation = (std::abs(shift.x) >= std::abs(shift.y) ? shift.x : shift.y) > 0.0 ? 1 : -1;
      } else {
        double area2 = 0.0;
        for (std::size_t k = 1; k < mt.polyline.size(); ++k) area2 += cross(mt.polyline[k - 1], mt.polyline[k]);
        cand.orientation = area2 >= 0.0 ? 1 : -1;
      }
      cand.representative_seeds.clear();
      for (int j = 0; j < resolution; ++j) {
        const double rho = cand.lo.value + (cand.hi.value - cand.lo.value) * (j + 0.5) / resolution;
        cand.representative_seeds.push_back(cand.seed_at(field, rho));
      }
      cand.component_id = static_cast<int>(out.families.size());
      out.families.push_back(std::move(cand));
    }
  }

  for (const auto& f : out.families) {
    for (const Endpoint* e : {&f.lo, &f.hi}) {
      if (e->detail.find("degenerate") != std::string::npos) {
        out.diagnostics.push_back("family " + std::to_string(f.component_id) +
                                  " ends at a degenerate critical value; endpoint behavior is implementation-defined");
      }
    }
  }
  if (out.families.empty()) out.diagnostics.push_back("no periodic orbits found");
  for (const auto& d : fps.diagnostics) out.diagnostics.push_back(d);
  return out;
}

// ---------------------------------------------------------------------------
// Hypothesis (H)
// ---------------------------------------------------------------------------

enum class CellLabel { fixed, periodic, aperiodic, unresolved };

inline const char* to_string(CellLabel l) {
  switch (l) {
    case CellLabel::fixed: return "fixed";
    case CellLabel::periodic: return "periodic";
    case CellLabel::aperiodic: return "aperiodic";
    case CellLabel::unresolved: return "unresolved";
  }
  return "unknown";
}

/// Node-sampled labels over the domain. Bounded directions include both edge
/// nodes with trapezoid weights; periodic directions use n equal nodes.
struct ClassificationGrid {
  int resolution{0};
  std::vector<Vec2> nodes;
  std::vector<double> weights;  // quadrature weights of nodes inside the domain
  std::vector<CellLabel> labels;
  double cell_area{0.0};

  double total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
  double fraction(CellLabel l) const {
    double s = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == l) s += weights[k];
    return s / total_weight();
  }
};

inline ClassificationGrid classify_grid(const StreamField& field, int n, const Tolerances& tol = {}) {
  require(n >= 8, "classify_grid: resolution must be at least 8");
  const DomainSpec& dom = field.domain();
  const Box& b = dom.box();
  const FieldScales sc = field_scales(field);
  const TraceCaps caps = default_caps(sc, tol);
  const TraceOptions opt = classify_options(sc, tol);
  const double guard = sc.guard(tol);

  ClassificationGrid g;
  g.resolution = n;
  const double hx = b.width() / n, hy = b.height() / n;
  g.cell_area = hx * hy;
  const int nxn = dom.periodic_x() ? n : n + 1;
  const int nyn = dom.periodic_y() ? n : n + 1;
  for (int j = 0; j < nyn; ++j) {
    for (int i = 0; i < nxn; ++i) {
      const Vec2 p{b.xmin + i * hx, b.ymin + j * hy};
      if (!dom.contains(p)) continue;
      double w = g.cell_area;
      if (!dom.periodic_x() && (i == 0 || i == n)) w *= 0.5;
      if (!dom.periodic_y() && (j == 0 || j == n)) w *= 0.5;
      g.nodes.push_back(p);
      g.weights.push_back(w);
    }
  }
  g.labels = parallel_map<CellLabel>(g.nodes.size(), [&](std::size_t k) {
    const Vec2 p = g.nodes[k];
    if (norm(field.grad(p)) <= guard) return CellLabel::fixed;
    try {
      const auto tr = trace_orbit(field, p, caps, opt);
      return tr.kind == OrbitKind::periodic ? CellLabel::periodic : CellLabel::aperiodic;
    } catch (const Error&) {
      return CellLabel::unresolved;
    }
  });
  return g;
}

/// (area labeled aperiodic + unresolved) / total area.
inline double aperiodic_measure(const ClassificationGrid& grid) {
  return grid.fraction(CellLabel::aperiodic) + grid.fraction(CellLabel::unresolved);
}

struct HypothesisH {
  int resolution{0};
  int refined_resolution{0};
  double fraction{0.0};
  double refined_fraction{0.0};
  bool satisfied{false};
};

/// Measures the aperiodic fraction at n and 2n. Satisfied when the refined
/// fraction is zero or has dropped to at most 3/4 of the coarse one.
inline HypothesisH hypothesis_h(const StreamField& field, int n, const Tolerances& tol = {}) {
  HypothesisH h;
  h.resolution = n;
  h.refined_resolution = 2 * n;
  h.fraction = aperiodic_measure(classify_grid(field, n, tol));
  h.refined_fraction = aperiodic_measure(classify_grid(field, 2 * n, tol));
  h.satisfied = h.refined_fraction == 0.0 || h.refined_fraction <= 0.75 * h.fraction;
  return h;
}

}  // namespace eulerspec
