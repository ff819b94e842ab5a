#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "eulerspec/error.hpp"
#include "eulerspec/flow_topology.hpp"
#include "eulerspec/parallel.hpp"
#include "eulerspec/stream_field.hpp"

namespace eulerspec {

enum class PeriodMethod { ode_return, contour_integral };

inline const char* to_string(PeriodMethod m) {
  return m == PeriodMethod::ode_return ? "ode_return" : "contour_integral";
}

struct PeriodSample {
  double rho{0.0};
  double T{0.0};
  PeriodMethod method{PeriodMethod::ode_return};
  double err_est{0.0};
};

struct PeriodOptions {
  Tolerances tol{};
  int max_refine_levels{16};    // endpoint refinement at distances (b-a) 4^-m
  int max_samples{320};
  double densify_rel{0.05};     // adjacent samples differing by more get a midpoint
  double cap_factor{1e3};       // unbounded: T above cap_factor x median ...
  double growth_factor{1.5};    // ... growing by this much under two more refinements
  double log_ratio{0.8};        // successive increment ratio signalling logarithmic growth
  int contour_subdivide{4};
  double agree_rel{1e-5};       // cross-check also requires |T_ode - T_contour| / T below this
};

namespace detail {

struct OdePeriod {
  PeriodSample sample;
  OrbitTrace trace;  // finer-tolerance trace, polyline subdivided for contour use
};

inline OdePeriod period_ode_full(const StreamField& field, Vec2 seed, const FieldScales& sc, const Tolerances& tol,
                                 int subdivide) {
  const TraceCaps caps = default_caps(sc, tol);
  TraceOptions fine = trace_options(sc, tol, tol.trace_rtol);
  fine.subdivide = subdivide;
  TraceOptions coarse = trace_options(sc, tol, 10.0 * tol.trace_rtol);
  coarse.closure_tol *= 10.0;
  OdePeriod r;
  r.trace = trace_orbit(field, seed, caps, fine);
  if (r.trace.kind != OrbitKind::periodic) {
    fail(ErrorKind::invalid_argument, "period_ode: seed is not on a periodic orbit (" + r.trace.diagnostic + ")");
  }
  const OrbitTrace c = trace_orbit(field, seed, caps, coarse);
  const double T = r.trace.time;
  double err = 1e-14 * T;
  if (c.kind == OrbitKind::periodic) err = std::max(err, std::abs(c.time - T));
  else err = std::max(err, 1e-8 * T);
  r.sample = {field.psi(seed), T, PeriodMethod::ode_return, err};
  return r;
}

inline double midpoint_contour(const StreamField& field, const std::vector<Vec2>& poly, std::size_t stride,
                               double guard) {
  const DomainSpec& dom = field.domain();
  double T = 0.0;
  std::size_t i = 0;
  while (i + 1 < poly.size()) {
    const std::size_t j = std::min(i + stride, poly.size() - 1);
    const Vec2 seg = dom.min_image(poly[j] - poly[i]);
    const Vec2 mid = poly[i] + 0.5 * seg;
    const double g = norm(field.grad(mid));
    if (std::min({g, norm(field.grad(poly[i])), norm(field.grad(poly[j]))}) < guard)
      fail(ErrorKind::numerical_failure, "period_contour: orbit grazes a fixed point");
    T += norm(seg) / g;
    i = j;
  }
  return T;
}

}  // namespace detail

/// Return time to the Poincare section through the seed; err_est is the
/// change under a tenfold looser integrator tolerance.
inline PeriodSample period_ode(const StreamField& field, Vec2 seed, const Tolerances& tol = {}) {
  const FieldScales sc = field_scales(field);
  return detail::period_ode_full(field, seed, sc, tol, 1).sample;
}

inline PeriodSample period_ode(const StreamField& field, Vec2 seed, const FieldScales& sc, const Tolerances& tol) {
  return detail::period_ode_full(field, seed, sc, tol, 1).sample;
}

/// Midpoint rule for the integral of ds / |grad psi| over a closed polyline,
/// with a Richardson error estimate against every other vertex.
inline PeriodSample period_contour(const StreamField& field, const std::vector<Vec2>& polyline,
                                   const Tolerances& tol = {}, const FieldScales* scales = nullptr) {
  require(polyline.size() >= 5, "period_contour: polyline needs at least 5 points");
  const FieldScales sc = scales ? *scales : field_scales(field);
  const DomainSpec& dom = field.domain();
  const double closure = norm(dom.min_image(polyline.back() - polyline.front()));
  if (closure > 10.0 * sc.closure_tol(tol) + 1e-12 * sc.diameter)
    fail(ErrorKind::invalid_argument, "period_contour: polyline is not closed");
  const double rho = field.psi(polyline.front());
  double drift = 0.0;
  for (const Vec2& p : polyline) drift = std::max(drift, std::abs(field.psi(p) - rho));
  if (drift > 100.0 * sc.level_tol(tol))
    fail(ErrorKind::invalid_argument, "period_contour: stream function varies along the polyline");
  const double guard = sc.guard(tol);
  const double T = detail::midpoint_contour(field, polyline, 1, guard);
  const double Th = detail::midpoint_contour(field, polyline, 2, guard);
  return {rho, T, PeriodMethod::contour_integral, std::abs(T - Th) / 3.0};
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    require(n >= 2 && y_.size() == n, "Pchip: need at least two knots");
    d_.assign(n, 0.0);
    std::vector<double> h(n - 1), del(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = x_[k + 1] - x_[k];
      require(h[k] > 0.0, "Pchip: knots must be strictly increasing");
      del[k] = (y_[k + 1] - y_[k]) / h[k];
    }
    if (n == 2) {
      d_[0] = d_[1] = del[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (del[k - 1] * del[k] <= 0.0) continue;
      const double w1 = 2.0 * h[k] + h[k - 1], w2 = h[k] + 2.0 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
    }
    d_[0] = end_slope(h[0], h[1], del[0], del[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
  }

  bool empty() const { return x_.empty(); }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }
  std::size_t segments() const { return x_.empty() ? 0 : x_.size() - 1; }

  double eval_segment(std::size_t k, double t) const {
    const double h = x_[k + 1] - x_[k];
    const double s = (t - x_[k]) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y_[k] + (s3 - 2 * s2 + s) * h * d_[k] + (-2 * s3 + 3 * s2) * y_[k + 1] +
           (s3 - s2) * h * d_[k + 1];
  }

  double operator()(double t) const {
    const std::size_t k = segment_of(t);
    return eval_segment(k, std::clamp(t, x_[k], x_[k + 1]));
  }

  std::size_t segment_of(double t) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), t);
    std::size_t k = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    return std::min(k, x_.size() - 2);
  }

  /// Exact integral over [a, b] within segment k (3-point Gauss, cubic integrand).
  double integrate_segment(std::size_t k, double a, double b) const {
    static constexpr double gx[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
    static constexpr double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    double s = 0.0;
    for (int q = 0; q < 3; ++q) s += gw[q] * eval_segment(k, 0.5 * (a + b) + 0.5 * (b - a) * gx[q]);
    return 0.5 * (b - a) * s;
  }

 private:
  static double end_slope(double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) d = 0.0;
    else if (d0 * d1 <= 0.0 && std::abs(d) > std::abs(3.0 * d0)) d = 3.0 * d0;
    return d;
  }

  std::vector<double> x_, y_, d_;
};

/// Period data for one end of a family's range, ordered outward.
struct EndpointEvidence {
  bool unbounded{false};
  std::string criterion;             // which test fired, or why the end is bounded
  std::vector<double> distances;     // rho distance to the endpoint per level
  std::vector<double> periods;       // T per level (NaN where the trace hit a cap)
  double margin{0.0};                // last increment, used to widen the range
};

struct PeriodPoint {
  double rho{0.0};
  PeriodSample ode;
  PeriodSample contour;
  bool flagged{false};
  std::string note;
};

/// Sampled period function of one family with monotone interpolant and tails.
class PeriodFunction {
 public:
  int family_id{0};
  double a{0.0};  // psi_range
  double b{0.0};
  std::vector<PeriodPoint> points;  // rho-sorted
  double T_lo{0.0};
  double T_hi{0.0};                 // +infinity when unbounded
  bool unbounded{false};
  EndpointEvidence lo_end;
  EndpointEvidence hi_end;
  std::vector<std::string> notes;

  /// Synthetic family with T rising linearly from T_lo to T_hi over rho in (0, 1).
  static PeriodFunction from_range(double T_lo, double T_hi, int family_id = 0) {
    require(T_lo >= 0.0 && T_hi >= T_lo && std::isfinite(T_hi), "from_range: need 0 <= T_lo <= T_hi < inf");
    PeriodFunction pf;
    pf.family_id = family_id;
    pf.a = 0.0;
    pf.b = 1.0;
    pf.T_lo = T_lo;
    pf.T_hi = T_hi;
    pf.points.push_back({0.0, {0.0, T_lo, PeriodMethod::ode_return, 0.0}, {0.0, T_lo, PeriodMethod::contour_integral, 0.0}, false, {}});
    pf.points.push_back({1.0, {1.0, T_hi, PeriodMethod::ode_return, 0.0}, {1.0, T_hi, PeriodMethod::contour_integral, 0.0}, false, {}});
    pf.finalize_interpolant();
    return pf;
  }

  /// Synthetic unbounded family (spectral tests).
  static PeriodFunction unbounded_family(double T_lo, int family_id = 0) {
    PeriodFunction pf = from_range(T_lo, T_lo + 1.0, family_id);
    pf.unbounded = true;
    pf.T_hi = INFINITY;
    return pf;
  }

  bool any_flagged() const {
    return std::any_of(points.begin(), points.end(), [](const PeriodPoint& p) { return p.flagged; });
  }

  /// Interpolated T(rho) inside the range, with tails beyond the outermost samples.
  double operator()(double rho) const {
    for (const auto& p : pieces_)
      if (rho >= p.r0 && rho <= p.r1) return p.eval(*this, rho);
    return rho < a ? pieces_.front().eval(*this, pieces_.front().r0) : pieces_.back().eval(*this, pieces_.back().r1);
  }

  /// Rebuild interpolant and tails from the unflagged ODE samples.
  void finalize_interpolant() {
    std::vector<double> x, y;
    for (const auto& p : points) {
      if (p.flagged) continue;
      if (!x.empty() && p.rho <= x.back()) continue;
      x.push_back(p.rho);
      y.push_back(p.ode.T);
    }
    require(x.size() >= 2, "PeriodFunction: need at least two valid samples");
    interp_ = Pchip(x, y);
    pieces_.clear();
    auto tail = [&](bool at_lo) {
      Piece t;
      t.kind = Piece::constant;
      const bool unb = at_lo ? lo_end.unbounded : hi_end.unbounded;
      const double edge = at_lo ? a : b;
      const std::size_t i0 = at_lo ? 0 : x.size() - 1;
      const std::size_t i1 = at_lo ? 1 : x.size() - 2;
      t.r0 = at_lo ? a : x.back();
      t.r1 = at_lo ? x.front() : b;
      t.c = y[i0];
      if (unb) {
        const double d0 = std::abs(x[i0] - edge), d1 = std::abs(x[i1] - edge);
        const double alpha = (d0 > 0.0 && d1 > d0 && y[i0] > y[i1]) ? std::log(y[i0] / y[i1]) / std::log(d1 / d0) : 0.0;
        if (alpha > 0.0) {
          t.kind = Piece::power;
          t.alpha = alpha;
          t.c = y[i0] * std::pow(d0, alpha);
          t.edge = edge;
        }
      }
      return t;
    };
    if (x.front() > a) pieces_.push_back(tail(true));
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
      Piece p;
      p.kind = Piece::cubic;
      p.seg = k;
      p.r0 = x[k];
      p.r1 = x[k + 1];
      pieces_.push_back(p);
    }
    if (x.back() < b) pieces_.push_back(tail(false));
  }

  /// Integral of T/(2 pi) over [r0, r1] restricted to pieces; infinite when
  /// an unbounded tail is not integrable.
  double integral(double r0, double r1) const {
    double s = 0.0;
    for (const auto& p : pieces_) {
      const double lo = std::max(r0, p.r0), hi = std::min(r1, p.r1);
      if (hi > lo) s += p.integrate(*this, lo, hi);
    }
    return s / (2.0 * std::numbers::pi);
  }

  /// mu of {rho in (r0, r1) : T(rho) in (t1, t2)}; pieces are monotone, so
  /// each contributes one interval found by bisection. Witness intervals are
  /// appended to `where` when given.
  double preimage_measure(double t1, double t2, double r0, double r1,
                          std::vector<std::pair<double, double>>* where = nullptr) const {
    double mu = 0.0;
    for (const auto& p : pieces_) {
      const double lo = std::max(r0, p.r0), hi = std::min(r1, p.r1);
      if (!(hi > lo)) continue;
      const double Ta = p.eval(*this, lo), Tb = p.eval(*this, hi);
      if (std::max(Ta, Tb) <= t1 || std::min(Ta, Tb) >= t2) continue;
      const bool inc = Tb >= Ta;
      // first rho where T crosses a level, for a monotone piece
      auto cross = [&](double level) {
        double l = lo, h = hi;
        for (int it = 0; it < 200 && h - l > 1e-15 * std::max(1.0, std::abs(h)); ++it) {
          const double m = 0.5 * (l + h);
          const bool above = p.eval(*this, m) >= level;
          ((above == inc) ? h : l) = m;
        }
        return 0.5 * (l + h);
      };
      double s0 = lo, s1 = hi;
      if (inc) {
        if (Ta <= t1) s0 = cross(t1);
        if (Tb >= t2) s1 = cross(t2);
      } else {
        if (Ta >= t2) s0 = cross(t2);
        if (Tb <= t1) s1 = cross(t1);
      }
      if (s1 > s0) {
        const double m = p.integrate(*this, s0, s1) / (2.0 * std::numbers::pi);
        if (m > 0.0) {
          mu += m;
          if (where) where->push_back({s0, s1});
        }
      }
    }
    return mu;
  }

  double sample_min() const {
    double m = INFINITY;
    for (const auto& p : points)
      if (!p.flagged) m = std::min(m, p.ode.T);
    return m;
  }
  double sample_max() const {
    double m = 0.0;
    for (const auto& p : points)
      if (!p.flagged) m = std::max(m, p.ode.T);
    return m;
  }

 private:
  struct Piece {
    enum Kind { cubic, constant, power } kind{cubic};
    double r0{0.0}, r1{0.0};
    std::size_t seg{0};
    double c{0.0}, alpha{0.0}, edge{0.0};

    double eval(const PeriodFunction& pf, double r) const {
      switch (kind) {
        case cubic: return pf.interp_.eval_segment(seg, r);
        case constant: return c;
        case power: {
          const double d = std::max(std::abs(r - edge), 1e-300);
          return c * std::pow(d, -alpha);
        }
      }
      return c;
    }
    double integrate(const PeriodFunction& pf, double lo, double hi) const {
      switch (kind) {
        case cubic: return pf.interp_.integrate_segment(seg, lo, hi);
        case constant: return c * (hi - lo);
        case power: {
          if (alpha >= 1.0) return INFINITY;
          const double d0 = std::abs(lo - edge), d1 = std::abs(hi - edge);
          const double e = 1.0 - alpha;
          return c * std::abs(std::pow(d1, e) - std::pow(d0, e)) / e;
        }
      }
      return 0.0;
    }
  };

  Pchip interp_;
  std::vector<Piece> pieces_;
};

/// mu over a rho interval inside the family range: integral of T/(2 pi).
inline double mu_measure(const PeriodFunction& pf, double r0, double r1) {
  const double slack = 1e-12 * std::max(1.0, std::abs(pf.b - pf.a));
  if (r0 < pf.a - slack || r1 > pf.b + slack || r0 > r1)
    fail(ErrorKind::invalid_argument, "mu_measure: interval outside the family's psi range");
  if (r1 == r0) return 0.0;
  return pf.integral(std::max(r0, pf.a), std::min(r1, pf.b));
}

namespace detail {

inline PeriodPoint compute_point(const StreamField& field, const OrbitFamily& fam, double rho, const FieldScales& sc,
                                 const PeriodOptions& opt) {
  PeriodPoint pt;
  pt.rho = rho;
  const Vec2 seed = fam.seed_at(field, rho);
  OdePeriod op = period_ode_full(field, seed, sc, opt.tol, opt.contour_subdivide);
  pt.ode = op.sample;
  pt.ode.rho = rho;
  pt.contour = period_contour(field, op.trace.polyline, opt.tol, &sc);
  pt.contour.rho = rho;
  auto agree = [&] {
    const double d = std::abs(pt.ode.T - pt.contour.T);
    return d <= 10.0 * std::max(pt.ode.err_est, pt.contour.err_est) && d <= opt.agree_rel * pt.ode.T;
  };
  if (!agree()) {
    // One local refinement: denser polyline for the contour rule.
    const OdePeriod fine = period_ode_full(field, seed, sc, opt.tol, 16 * opt.contour_subdivide);
    pt.contour = period_contour(field, fine.trace.polyline, opt.tol, &sc);
    pt.contour.rho = rho;
    if (!agree()) {
      pt.flagged = true;
      std::ostringstream os;
      os << "methods disagree: T_ode=" << pt.ode.T << " T_contour=" << pt.contour.T;
      pt.note = os.str();
    } else {
      pt.note = "contour refined once";
    }
  }
  return pt;
}

}  // namespace detail

/// Samples T over a family at Chebyshev points plus geometric refinement toward
/// each end, densifying where neighbors differ by more than densify_rel.
inline PeriodFunction sample_period_function(const StreamField& field, const OrbitFamily& fam, int n,
                                             const PeriodOptions& opt = {}) {
  require(n >= 16, "sample_period_function: n must be at least 16");
  const FieldScales sc = field_scales(field);
  const double a = fam.psi_lo(), b = fam.psi_hi(), w = b - a;
  PeriodFunction pf;
  pf.family_id = fam.component_id;
  pf.a = a;
  pf.b = b;

  std::vector<double> rhos(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rhos[i] = 0.5 * (a + b) - 0.5 * w * std::cos(std::numbers::pi * (i + 0.5) / n);
  auto safe_point = [&](double rho) -> std::optional<PeriodPoint> {
    try {
      return detail::compute_point(field, fam, rho, sc, opt);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  auto cheb = parallel_map<std::optional<PeriodPoint>>(rhos.size(), [&](std::size_t i) { return safe_point(rhos[i]); });
  for (std::size_t i = 0; i < cheb.size(); ++i) {
    if (cheb[i]) pf.points.push_back(*cheb[i]);
    else pf.notes.push_back("no periodic orbit at Chebyshev rho=" + std::to_string(rhos[i]));
  }
  double median = 0.0;
  {
    std::vector<double> ts;
    for (const auto& p : pf.points) ts.push_back(p.ode.T);
    if (ts.empty()) fail(ErrorKind::numerical_failure, "sample_period_function: no periodic samples in the family");
    std::nth_element(ts.begin(), ts.begin() + static_cast<std::ptrdiff_t>(ts.size() / 2), ts.end());
    median = ts[ts.size() / 2];
  }

  auto refine_end = [&](bool at_lo) {
    EndpointEvidence ev;
    const Endpoint& ep = at_lo ? fam.lo : fam.hi;
    const double d0 = at_lo ? rhos.front() - a : b - rhos.back();
    double prev_T = NAN;
    std::vector<double> incs;
    int over_cap = -1;  // level index at which T first exceeded the cap
    for (int m = 1; m <= opt.max_refine_levels; ++m) {
      const double d = w * std::pow(4.0, -m);
      if (d >= d0) continue;
      const double rho = at_lo ? a + d : b - d;
      auto pt = safe_point(rho);
      ev.distances.push_back(d);
      if (!pt) {
        ev.periods.push_back(NAN);
        const bool growing = incs.size() >= 1 && incs.back() > 0.0;
        if (growing) {
          ev.unbounded = true;
          ev.criterion = "trace hit the integration cap after growing periods";
        } else {
          ev.criterion = "no periodic orbit at refinement distance " + std::to_string(d);
        }
        break;
      }
      pf.points.push_back(*pt);
      const double T = pt->ode.T;
      ev.periods.push_back(T);
      if (std::isfinite(prev_T)) incs.push_back(T - prev_T);
      prev_T = T;
      if (over_cap < 0 && T > opt.cap_factor * median) over_cap = static_cast<int>(ev.periods.size()) - 1;
      if (over_cap >= 0 && static_cast<int>(ev.periods.size()) - 1 >= over_cap + 2) {
        const auto& P = ev.periods;
        const std::size_t k = P.size() - 1;
        if (P[k] >= opt.growth_factor * P[k - 1] && P[k - 1] >= opt.growth_factor * P[k - 2]) {
          ev.unbounded = true;
          ev.criterion = "period exceeded cap x median and grew under two further refinements";
          break;
        }
      }
      if (incs.size() >= 2 && !ep.elliptic) {
        // logarithmic divergence at a separatrix: increments stay comparable
        const std::size_t k = incs.size() - 1;
        const bool log_like = incs.size() >= 3 && incs[k] > 0.0 && incs[k - 1] > 0.0 && incs[k - 2] > 0.0 &&
                              incs[k] >= opt.log_ratio * incs[k - 1] && incs[k - 1] >= opt.log_ratio * incs[k - 2];
        if (log_like && m == opt.max_refine_levels) {
          ev.unbounded = true;
          ev.criterion = "logarithmic growth toward a separatrix (non-decaying increments)";
          break;
        }
      }
      if (incs.size() >= 2 && std::abs(incs.back()) <= 1e-9 * T && std::abs(incs[incs.size() - 2]) <= 1e-7 * T) {
        ev.criterion = "converged";
        break;
      }
    }
    if (!ev.unbounded) {
      if (ev.criterion.empty()) ev.criterion = "bounded at the refinement floor";
      ev.margin = incs.empty() ? 0.0 : std::abs(incs.back());
    }
    return ev;
  };
  pf.lo_end = refine_end(true);
  pf.hi_end = refine_end(false);
  pf.unbounded = pf.lo_end.unbounded || pf.hi_end.unbounded;

  auto by_rho = [](const PeriodPoint& p, const PeriodPoint& q) { return p.rho < q.rho; };
  std::sort(pf.points.begin(), pf.points.end(), by_rho);

  // Densify between neighbors that differ by more than densify_rel, except in
  // the refinement tails of an unbounded end.
  const double floor = 1e-12 * w;
  for (int pass = 0; pass < 8 && static_cast<int>(pf.points.size()) < opt.max_samples; ++pass) {
    std::vector<double> mids;
    for (std::size_t k = 0; k + 1 < pf.points.size(); ++k) {
      const auto& p = pf.points[k];
      const auto& q = pf.points[k + 1];
      if (q.rho - p.rho <= floor) continue;
      if (pf.lo_end.unbounded && q.rho <= rhos.front()) continue;
      if (pf.hi_end.unbounded && p.rho >= rhos.back()) continue;
      if (std::abs(q.ode.T - p.ode.T) > opt.densify_rel * std::min(p.ode.T, q.ode.T)) mids.push_back(0.5 * (p.rho + q.rho));
    }
    if (mids.empty()) break;
    const std::size_t room = static_cast<std::size_t>(opt.max_samples) - pf.points.size();
    if (mids.size() > room) mids.resize(room);
    auto extra = parallel_map<std::optional<PeriodPoint>>(mids.size(), [&](std::size_t i) { return safe_point(mids[i]); });
    for (auto& e : extra)
      if (e) pf.points.push_back(*e);
    std::sort(pf.points.begin(), pf.points.end(), by_rho);
  }

  // Range with extrapolation margins at bounded ends.
  double tmin = INFINITY, tmax = 0.0;
  std::size_t imin = 0, imax = 0, first = pf.points.size(), last = 0;
  for (std::size_t k = 0; k < pf.points.size(); ++k) {
    const auto& p = pf.points[k];
    if (p.flagged) {
      pf.notes.push_back("flagged sample at rho=" + std::to_string(p.rho) + ": " + p.note);
      continue;
    }
    first = std::min(first, k);
    last = k;
    if (p.ode.T < tmin) tmin = p.ode.T, imin = k;
    if (p.ode.T > tmax) tmax = p.ode.T, imax = k;
  }
  if (first > last) fail(ErrorKind::numerical_failure, "sample_period_function: every sample was flagged");
  auto margin_at = [&](std::size_t k) {
    double m = pf.points[k].ode.err_est;
    if (k == first && !pf.lo_end.unbounded) m = std::max(m, pf.lo_end.margin);
    if (k == last && !pf.hi_end.unbounded) m = std::max(m, pf.hi_end.margin);
    return m;
  };
  pf.T_lo = std::max(0.0, tmin - margin_at(imin));
  pf.T_hi = pf.unbounded ? INFINITY : tmax + margin_at(imax);
  pf.finalize_interpolant();
  return pf;
}

}  // namespace eulerspec
