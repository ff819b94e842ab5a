#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "eulerspec/error.hpp"
#include "eulerspec/period.hpp"

namespace eulerspec {

enum class SpectrumShape { full_line, lattice, bands };

inline const char* to_string(SpectrumShape s) {
  switch (s) {
    case SpectrumShape::full_line: return "full_line";
    case SpectrumShape::lattice: return "lattice";
    case SpectrumShape::bands: return "bands";
  }
  return "unknown";
}

struct Contribution {
  int family{0};
  long k{0};
  friend bool operator==(const Contribution&, const Contribution&) = default;
};

/// Closed interval [lo, hi] of the imaginary coordinate.
struct Band {
  double lo{0.0};
  double hi{0.0};
  std::vector<Contribution> contributors;
};

struct SpectrumSet {
  SpectrumShape shape{SpectrumShape::bands};
  double window{20.0};
  double lattice_step{0.0};
  std::vector<Band> bands;  // sorted, disjoint, symmetric, inside [-window, window]
  std::vector<std::string> notes;

  bool contains(double lambda, double slack = 0.0) const {
    for (const auto& b : bands)
      if (lambda >= b.lo - slack && lambda <= b.hi + slack) return true;
    return false;
  }
};

struct SpectrumOptions {
  double isochronous_rel{1e-6};  // (T_hi - T_lo)/T_lo below this is one period
  double merge_rel{1e-12};       // closed bands touching within this merge
  bool aperiodic_positive_measure{false};
};

namespace detail {

inline std::vector<Band> merge_bands(std::vector<Band> v, double merge_rel) {
  std::sort(v.begin(), v.end(), [](const Band& a, const Band& b) { return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi); });
  std::vector<Band> out;
  for (auto& b : v) {
    if (!out.empty()) {
      Band& c = out.back();
      const double tol = merge_rel * std::max({1.0, std::abs(c.hi), std::abs(b.lo)});
      if (b.lo <= c.hi + tol) {
        c.hi = std::max(c.hi, b.hi);
        for (const auto& k : b.contributors)
          if (std::find(c.contributors.begin(), c.contributors.end(), k) == c.contributors.end()) c.contributors.push_back(k);
        continue;
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

/// Positive-side bands of all families for 0 < lambda <= upto.
inline std::vector<Band> positive_bands(const std::vector<PeriodFunction>& pfs, double upto) {
  std::vector<Band> v;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (const auto& pf : pfs) {
    for (long k = 1;; ++k) {
      const double lo = two_pi * k / pf.T_hi;
      if (lo > upto) break;
      const double hi = pf.T_lo > 0.0 ? two_pi * k / pf.T_lo : INFINITY;
      v.push_back({lo, std::min(hi, upto), {{pf.family_id, k}}});
      if (!std::isfinite(hi)) break;
    }
  }
  return v;
}

inline std::vector<Band> mirror(const std::vector<Band>& pos, const std::vector<Contribution>& zero) {
  std::vector<Band> all;
  for (auto it = pos.rbegin(); it != pos.rend(); ++it) {
    Band m{-it->hi, -it->lo, {}};
    for (const auto& c : it->contributors) m.contributors.push_back({c.family, -c.k});
    all.push_back(m);
  }
  all.push_back({0.0, 0.0, zero});
  for (const auto& b : pos) all.push_back(b);
  return all;
}

}  // namespace detail

/// Essential spectrum on the imaginary axis from period ranges: the full line
/// when any family has unbounded periods (or aperiodic orbits carry positive
/// measure), the lattice (2 pi / T*) Z when every family has the same single
/// period, otherwise the union of bands [2 pi k / T_hi, 2 pi k / T_lo].
inline SpectrumSet assemble_spectrum(const std::vector<PeriodFunction>& pfs, double window,
                                     const SpectrumOptions& opt = {}) {
  require(!pfs.empty(), "assemble_spectrum: empty family list");
  require(window > 0.0 && std::isfinite(window), "assemble_spectrum: window must be positive");
  SpectrumSet s;
  s.window = window;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  const bool any_unbounded = std::any_of(pfs.begin(), pfs.end(), [](const PeriodFunction& p) { return p.unbounded; });
  if (any_unbounded || opt.aperiodic_positive_measure) {
    s.shape = SpectrumShape::full_line;
    s.bands = {{-window, window, {}}};
    s.notes.push_back(any_unbounded ? "a family has unbounded periods (arbitrarily long trajectories): full line"
                                    : "aperiodic orbits carry positive measure: full line");
    return s;
  }

  std::vector<Contribution> zero;
  for (const auto& pf : pfs) zero.push_back({pf.family_id, 0});

  const auto iso = [&](const PeriodFunction& p) { return p.T_lo > 0.0 && (p.T_hi - p.T_lo) / p.T_lo < opt.isochronous_rel; };
  if (std::all_of(pfs.begin(), pfs.end(), iso)) {
    double tmin = INFINITY, tmax = 0.0;
    for (const auto& p : pfs) {
      tmin = std::min(tmin, 0.5 * (p.T_lo + p.T_hi));
      tmax = std::max(tmax, 0.5 * (p.T_lo + p.T_hi));
    }
    if ((tmax - tmin) / tmin < opt.isochronous_rel) {
      const double T = 0.5 * (tmin + tmax);
      s.shape = SpectrumShape::lattice;
      s.lattice_step = two_pi / T;
      std::vector<Band> pos;
      for (long k = 1; k * s.lattice_step <= window; ++k) {
        Band b{k * s.lattice_step, k * s.lattice_step, {}};
        for (const auto& pf : pfs) b.contributors.push_back({pf.family_id, k});
        pos.push_back(b);
      }
      s.bands = detail::mirror(pos, zero);
      s.notes.push_back("isochronous: every orbit has period " + std::to_string(T));
      return s;
    }
  }

  s.shape = SpectrumShape::bands;
  auto pos = detail::merge_bands(detail::positive_bands(pfs, window), opt.merge_rel);
  s.bands = detail::mirror(pos, zero);
  if (std::any_of(pfs.begin(), pfs.end(), [](const PeriodFunction& p) { return p.T_lo == 0.0; }))
    s.notes.push_back("T_lo = 0: bands extend to infinity");
  return s;
}

struct Gap {
  double lo{0.0};
  double hi{0.0};
};

struct GapReport {
  std::vector<Gap> gaps;           // inside the window, open intervals
  long total_in_window{0};
  bool finite_total{false};
  std::optional<long> total;       // all gaps on the line, when finite
  std::optional<long> closed_form_total;  // single-family formula
};

/// Positive-axis gaps of one family: #{k >= 0 : k T_hi < (k+1) T_lo}.
inline long closed_form_positive_gaps(double T_lo, double T_hi) {
  require(T_hi > T_lo && std::isfinite(T_hi), "closed_form_positive_gaps: need T_lo < T_hi < inf");
  if (T_lo <= 0.0) return 1;
  const double q = T_lo / (T_hi - T_lo);
  const double c = std::ceil(q);
  // k < q strictly
  return static_cast<long>(c == q ? q : c);
}

inline GapReport gap_report(const SpectrumSet& s, const std::vector<PeriodFunction>& pfs = {}) {
  if (s.shape == SpectrumShape::full_line) fail(ErrorKind::not_applicable, "gap_report: full-line spectrum has no gaps");
  GapReport r;
  for (std::size_t k = 0; k + 1 < s.bands.size(); ++k) r.gaps.push_back({s.bands[k].hi, s.bands[k + 1].lo});
  r.total_in_window = static_cast<long>(r.gaps.size());
  if (s.shape == SpectrumShape::lattice) {
    r.finite_total = false;
    return r;
  }
  r.finite_total = true;
  if (pfs.empty()) return r;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  // All gaps lie below the point where some family's bands start to overlap.
  double onset = INFINITY;
  for (const auto& pf : pfs) {
    const long K = pf.T_hi > pf.T_lo ? closed_form_positive_gaps(pf.T_lo, pf.T_hi) : 0;
    if (pf.T_hi > pf.T_lo) onset = std::min(onset, two_pi * std::max(K, 1L) / pf.T_hi);
  }
  if (!std::isfinite(onset)) {
    r.finite_total = false;
    return r;
  }
  const double upto = onset * (1.0 + 1e-9) + 1.0;
  auto pos = detail::merge_bands(detail::positive_bands(pfs, upto), 1e-12);
  long count = 0;
  double prev = 0.0;
  for (const auto& b : pos) {
    if (b.lo > prev * (1.0 + 1e-12) + 1e-300) ++count;
    prev = std::max(prev, b.hi);
  }
  r.total = 2 * count;
  if (pfs.size() == 1 && pfs[0].T_hi > pfs[0].T_lo) r.closed_form_total = 2 * closed_form_positive_gaps(pfs[0].T_lo, pfs[0].T_hi);
  return r;
}

struct MembershipWitness {
  int family{0};
  long k{0};
  double rho_lo{0.0};
  double rho_hi{0.0};
  double mu{0.0};
};

struct Membership {
  bool member{false};
  std::vector<MembershipWitness> evidence;
};

/// lambda (imaginary coordinate) is within eps of the spectrum iff, for some
/// family and integer k, the set {rho : |2 pi k / T(rho) - lambda| < eps} has
/// positive mu-measure.
inline Membership membership(const std::vector<PeriodFunction>& pfs, double lambda, double eps,
                             std::size_t max_witnesses = 8) {
  require(eps > 0.0, "membership: eps must be positive");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Membership m;
  const double l = std::abs(lambda);
  const int sign = lambda < 0.0 ? -1 : 1;
  for (const auto& pf : pfs) {
    if (l < eps) {
      const double mu = pf.integral(pf.a, pf.b);
      if (mu > 0.0) m.evidence.push_back({pf.family_id, 0, pf.a, pf.b, mu});
    }
    const double tmax_data = pf.unbounded ? INFINITY : pf.T_hi;
    const double kmax_d = (l + eps) * tmax_data / two_pi + 1.0;
    const long kmax = std::isfinite(kmax_d) ? static_cast<long>(kmax_d) : 1'000'000L;
    const long kmin = std::max(1L, static_cast<long>(std::floor((l - eps) * pf.T_lo / two_pi)));
    for (long k = kmin; k <= kmax && m.evidence.size() < max_witnesses; ++k) {
      const double t1 = two_pi * k / (l + eps);
      const double t2 = l - eps > 0.0 ? two_pi * k / (l - eps) : INFINITY;
      if (t1 > tmax_data && std::isfinite(tmax_data)) break;
      std::vector<std::pair<double, double>> where;
      const double mu = pf.preimage_measure(t1, t2, pf.a, pf.b, &where);
      if (mu > 0.0) {
        m.evidence.push_back({pf.family_id, sign * k, where.front().first, where.back().second, mu});
        if (pf.unbounded) break;
      }
    }
  }
  m.member = !m.evidence.empty();
  if (m.evidence.size() > max_witnesses) m.evidence.resize(max_witnesses);
  return m;
}

/// True iff the global period range is nondegenerate or some family is unbounded.
inline bool unit_circle_predicate(const std::vector<PeriodFunction>& pfs, double rel_tol = 1e-6) {
  require(!pfs.empty(), "unit_circle_predicate: need at least one family");
  double tmin = INFINITY, tmax = 0.0;
  for (const auto& p : pfs) {
    if (p.unbounded) return true;
    tmin = std::min(tmin, p.T_lo);
    tmax = std::max(tmax, p.T_hi);
  }
  return tmin <= 0.0 || (tmax - tmin) / tmin >= rel_tol;
}

}  // namespace eulerspec
