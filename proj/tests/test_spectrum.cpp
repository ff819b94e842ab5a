#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "eulerspec/eulerspec.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace eulerspec;
constexpr double pi = std::numbers::pi;

namespace {

std::vector<oracle::Interval> positive_part(const SpectrumSet& s) {
  std::vector<oracle::Interval> out;
  for (const auto& b : s.bands)
    if (b.lo > 0.0) out.push_back({b.lo, b.hi});
  return out;
}

void expect_well_formed(const SpectrumSet& s) {
  ASSERT_FALSE(s.bands.empty());
  EXPECT_TRUE(s.contains(0.0));
  const std::size_t n = s.bands.size();
  for (std::size_t k = 0; k < n; ++k) {
    EXPECT_LE(s.bands[k].lo, s.bands[k].hi);
    EXPECT_GE(s.bands[k].lo, -s.window);
    EXPECT_LE(s.bands[k].hi, s.window);
    if (k + 1 < n) {
      EXPECT_LT(s.bands[k].hi, s.bands[k + 1].lo);
    }
    // exact mirror symmetry
    EXPECT_EQ(s.bands[k].lo, -s.bands[n - 1 - k].hi);
    EXPECT_EQ(s.bands[k].hi, -s.bands[n - 1 - k].lo);
  }
}

}  // namespace

TEST(Assemble, ShearBands) {
  const auto s = assemble_spectrum({PeriodFunction::from_range(pi, 2 * pi)}, 20.0);
  EXPECT_EQ(s.shape, SpectrumShape::bands);
  expect_well_formed(s);
  ASSERT_EQ(s.bands.size(), 3u);
  EXPECT_NEAR(s.bands[2].lo, 1.0, 1e-14);
  EXPECT_EQ(s.bands[2].hi, 20.0);
  EXPECT_EQ(s.bands[1].lo, 0.0);
  EXPECT_EQ(s.bands[1].hi, 0.0);
  // provenance: k = 1 .. 20 contribute to [1, 20]
  EXPECT_EQ(s.bands[2].contributors.front().k, 1);
  EXPECT_EQ(s.bands[2].contributors.back().k, 20);
  const auto g = gap_report(s, {PeriodFunction::from_range(pi, 2 * pi)});
  ASSERT_EQ(g.gaps.size(), 2u);
  EXPECT_NEAR(g.gaps[0].lo, -1.0, 1e-14);
  EXPECT_EQ(g.gaps[0].hi, 0.0);
  EXPECT_EQ(g.total.value(), 2);
  EXPECT_EQ(g.closed_form_total.value(), 2);
}

TEST(Assemble, ShearMatchesBruteForceOracle) {
  const auto s = assemble_spectrum({PeriodFunction::from_range(pi, 2 * pi)}, 20.0);
  const auto o = oracle::sampled_bands({{pi, 2 * pi}}, 20.0);
  EXPECT_LT(oracle::hausdorff(positive_part(s), o.runs), 1e-6);
}

TEST(Assemble, CouetteLattice) {
  const auto s = assemble_spectrum({PeriodFunction::from_range(2 * pi, 2 * pi)}, 20.0);
  EXPECT_EQ(s.shape, SpectrumShape::lattice);
  EXPECT_NEAR(s.lattice_step, 1.0, 1e-14);
  expect_well_formed(s);
  EXPECT_EQ(s.bands.size(), 41u);
  for (const auto& b : s.bands) {
    EXPECT_EQ(b.lo, b.hi);
    EXPECT_NEAR(b.lo, std::round(b.lo), 1e-12);
  }
  const auto g = gap_report(s);
  EXPECT_FALSE(g.finite_total);
  EXPECT_EQ(g.total_in_window, 40);
  EXPECT_FALSE(g.total.has_value());
}

TEST(Assemble, NearlyIsochronousSpreadIsALattice) {
  const auto s = assemble_spectrum({PeriodFunction::from_range(2 * pi, 2 * pi * (1 + 1e-9))}, 5.0);
  EXPECT_EQ(s.shape, SpectrumShape::lattice);
}

TEST(Assemble, UnboundedFamilyGivesFullLine) {
  const auto s = assemble_spectrum({PeriodFunction::unbounded_family(2 * pi)}, 20.0);
  EXPECT_EQ(s.shape, SpectrumShape::full_line);
  ASSERT_EQ(s.bands.size(), 1u);
  EXPECT_EQ(s.bands[0].lo, -20.0);
  EXPECT_EQ(s.bands[0].hi, 20.0);
  EXPECT_FALSE(s.notes.empty());
  EXPECT_THROW(gap_report(s), Error);
}

TEST(Assemble, PositiveAperiodicMeasureGivesFullLine) {
  SpectrumOptions o;
  o.aperiodic_positive_measure = true;
  EXPECT_EQ(assemble_spectrum({PeriodFunction::from_range(pi, 2 * pi)}, 20.0, o).shape, SpectrumShape::full_line);
}

TEST(Assemble, ZeroMinimalPeriod) {
  const double Tmax = 2.0;
  const auto s = assemble_spectrum({PeriodFunction::from_range(0.0, Tmax)}, 20.0);
  expect_well_formed(s);
  ASSERT_EQ(s.bands.size(), 3u);
  EXPECT_NEAR(s.bands[2].lo, 2 * pi / Tmax, 1e-14);
  EXPECT_EQ(s.bands[2].hi, 20.0);
  EXPECT_EQ(gap_report(s, {PeriodFunction::from_range(0.0, Tmax)}).total.value(), 2);
}

TEST(Assemble, Errors) {
  EXPECT_THROW(assemble_spectrum({}, 20.0), Error);
  EXPECT_THROW(assemble_spectrum({PeriodFunction::from_range(1, 2)}, 0.0), Error);
  EXPECT_THROW(assemble_spectrum({PeriodFunction::from_range(1, 2)}, -3.0), Error);
}

TEST(Assemble, MultiFamilyUnionKeepsProvenance) {
  const std::vector<PeriodFunction> pfs{PeriodFunction::from_range(3.0, 3.1, 0), PeriodFunction::from_range(5.0, 5.2, 1)};
  const auto s = assemble_spectrum(pfs, 6.0);
  expect_well_formed(s);
  const auto o = oracle::sampled_bands({{3.0, 3.1}, {5.0, 5.2}}, 6.0);
  EXPECT_LT(oracle::hausdorff(positive_part(s), o.runs), 1e-9);
  // zero band carries one k = 0 entry per family
  const auto& zero = s.bands[s.bands.size() / 2];
  EXPECT_EQ(zero.lo, 0.0);
  ASSERT_EQ(zero.contributors.size(), 2u);
  EXPECT_EQ(zero.contributors[0].family, 0);
  EXPECT_EQ(zero.contributors[1].family, 1);
}

TEST(Gaps, ClosedFormExamples) {
  EXPECT_EQ(closed_form_positive_gaps(pi, 2 * pi), 1);
  EXPECT_EQ(closed_form_positive_gaps(3.0, 4.0), 3);
  EXPECT_EQ(closed_form_positive_gaps(1.0, 1.5), 2);
  const auto pf = PeriodFunction::from_range(3.0, 4.0);
  const auto g = gap_report(assemble_spectrum({pf}, 20.0), {pf});
  EXPECT_EQ(g.total.value(), 6);
  EXPECT_EQ(g.closed_form_total.value(), 6);
  EXPECT_EQ(g.total_in_window, 6);
  EXPECT_EQ(oracle::sampled_positive_gaps(3.0, 4.0), 3);
}

TEST(Gaps, InterleaveWithBands) {
  const auto pf = PeriodFunction::from_range(2.0, 2.9);
  const auto s = assemble_spectrum({pf}, 20.0);
  const auto g = gap_report(s, {pf});
  ASSERT_EQ(g.gaps.size() + 1, s.bands.size());
  for (std::size_t k = 0; k < g.gaps.size(); ++k) {
    EXPECT_EQ(g.gaps[k].lo, s.bands[k].hi);
    EXPECT_EQ(g.gaps[k].hi, s.bands[k + 1].lo);
  }
}

TEST(Gaps, SyntheticRangesMatchTheSampledOracle) {
  const auto ranges = oracle::synthetic_ranges(10, 4242);
  for (auto [a, b] : ranges) {
    const auto pf = PeriodFunction::from_range(a, b);
    const auto s = assemble_spectrum({pf}, 20.0);
    const auto g = gap_report(s, {pf});
    const auto o = oracle::sampled_bands({{a, b}}, 20.0);
    EXPECT_LT(oracle::hausdorff(positive_part(s), o.runs), 1e-6) << a << " " << b;
    EXPECT_EQ(g.total_in_window, 2 * static_cast<long>(o.runs.size())) << a << " " << b;
    EXPECT_EQ(g.total.value(), 2 * oracle::sampled_positive_gaps(a, b)) << a << " " << b;
    EXPECT_EQ(g.total.value(), g.closed_form_total.value());
  }
}

TEST(Membership, Examples) {
  const std::vector<PeriodFunction> sh{PeriodFunction::from_range(pi, 2 * pi)};
  const auto m0 = membership(sh, 0.0, 0.01);
  EXPECT_TRUE(m0.member);
  EXPECT_EQ(m0.evidence.front().k, 0);
  const auto m1 = membership(sh, 1.5, 0.01);
  EXPECT_TRUE(m1.member);
  EXPECT_EQ(m1.evidence.front().k, 1);
  EXPECT_GT(m1.evidence.front().mu, 0.0);
  EXPECT_FALSE(membership(sh, 0.5, 0.01).member);
  EXPECT_TRUE(membership(sh, -1.5, 0.01).member);
  EXPECT_EQ(membership(sh, -1.5, 0.01).evidence.front().k, -1);
  EXPECT_THROW(membership(sh, 1.0, 0.0), Error);
}

TEST(Membership, BandInteriorsInGapMidpointsOut) {
  for (auto [a, b] : oracle::synthetic_ranges(6, 77)) {
    const std::vector<PeriodFunction> pfs{PeriodFunction::from_range(a, b)};
    const auto s = assemble_spectrum(pfs, 20.0);
    for (const auto& band : s.bands) {
      if (band.hi <= band.lo) continue;
      const double w = band.hi - band.lo;
      for (double t : {0.1, 0.5, 0.9}) EXPECT_TRUE(membership(pfs, band.lo + t * w, 1e-3 * w).member);
    }
    for (const auto& gap : gap_report(s, pfs).gaps) {
      const double w = gap.hi - gap.lo;
      EXPECT_FALSE(membership(pfs, 0.5 * (gap.lo + gap.hi), 0.2 * w).member) << a << " " << b;
    }
  }
}

TEST(Spectrum, ScalingCovariance) {
  // c psi has periods T / c, so every band endpoint scales by c
  for (double c : {0.5, 2.0}) {
    const auto s = assemble_spectrum({PeriodFunction::from_range(2.0, 2.9)}, 20.0);
    const auto t = assemble_spectrum({PeriodFunction::from_range(2.0 / c, 2.9 / c)}, 20.0 * c);
    ASSERT_EQ(s.bands.size(), t.bands.size());
    for (std::size_t k = 0; k < s.bands.size(); ++k) {
      EXPECT_NEAR(t.bands[k].lo, c * s.bands[k].lo, 1e-8);
      EXPECT_NEAR(t.bands[k].hi, c * s.bands[k].hi, 1e-8);
    }
  }
}

TEST(Spectrum, ScalingCovarianceOnComputedPeriods) {
  const auto f = make_builtin_flow("shear_quadratic");
  for (double c : {0.5, 2.0}) {
    const auto g = f.scaled(c);
    const auto pf = support::periods_of(f, support::index_of(f), 16);
    const auto pg = support::periods_of(g, support::index_of(g), 16);
    const auto s = assemble_spectrum(pf, 10.0);
    const auto t = assemble_spectrum(pg, 10.0 * c);
    ASSERT_EQ(s.bands.size(), t.bands.size());
    for (std::size_t k = 0; k < s.bands.size(); ++k) {
      EXPECT_NEAR(t.bands[k].lo, c * s.bands[k].lo, 1e-8);
      EXPECT_NEAR(t.bands[k].hi, c * s.bands[k].hi, 1e-8);
    }
  }
}

TEST(Spectrum, EnlargingRangesOnlyAddsPoints) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto [a, b] : oracle::synthetic_ranges(8, 9)) {
    const auto s = assemble_spectrum({PeriodFunction::from_range(a, b)}, 20.0);
    const auto t = assemble_spectrum({PeriodFunction::from_range(a * (1 - 0.1 * u(rng)), b * (1 + 0.1 * u(rng)))}, 20.0);
    for (const auto& band : s.bands)
      for (double x : {0.0, 0.3, 0.7, 1.0}) EXPECT_TRUE(t.contains(band.lo + x * (band.hi - band.lo)));
  }
}

TEST(UnitCircle, Predicate) {
  EXPECT_TRUE(unit_circle_predicate({PeriodFunction::from_range(pi, 2 * pi)}));
  EXPECT_FALSE(unit_circle_predicate({PeriodFunction::from_range(2 * pi, 2 * pi)}));
  EXPECT_TRUE(unit_circle_predicate({PeriodFunction::unbounded_family(2 * pi)}));
  // two isochronous families with different periods
  EXPECT_TRUE(unit_circle_predicate({PeriodFunction::from_range(2, 2, 0), PeriodFunction::from_range(3, 3, 1)}));
  EXPECT_THROW(unit_circle_predicate({}), Error);
}
