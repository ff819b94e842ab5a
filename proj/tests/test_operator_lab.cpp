#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "eulerspec/eulerspec.hpp"
#include "support.hpp"

using namespace eulerspec;
using support::index_of;
using support::periods_of;
constexpr double pi = std::numbers::pi;

namespace {

Eigen::VectorXd random_vector(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = N(rng);
  return v;
}

double max_abs_real(const std::vector<std::complex<double>>& ev) {
  double m = 0.0;
  for (auto z : ev) m = std::max(m, std::abs(z.real()));
  return m;
}

// Smooth function of psi supported away from the boundary of the unit disk.
double f_of_psi(double psi) {
  const double s = psi / 0.3;
  return s < 1.0 ? std::exp(-1.0 / (1.0 - s * s)) : 0.0;
}

double invariant_residual(int n) {
  const auto f = make_builtin_flow("rigid");
  const auto g = Grid2D::make(f.domain(), n, n);
  const auto L = discretize_L0(f, g);
  const Eigen::VectorXd v = g.sample([&](Vec2 p) { return f_of_psi(f.psi(p)); });
  return g.l2(L.apply(v)) / g.l2(v);
}

}  // namespace

TEST(Grid2D, WeightsSumToTheDomainArea) {
  for (const auto& name : builtin_flow_names()) {
    const auto f = make_builtin_flow(name);
    const auto g = Grid2D::make(f.domain(), 24, 20);
    EXPECT_NEAR(g.weight() * g.size(), f.domain().area(), 1e-12 * f.domain().area()) << name;
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(g.size());
    EXPECT_NEAR(g.inner(one, one), f.domain().area(), 1e-12 * f.domain().area());
  }
  EXPECT_THROW(Grid2D::make(DomainSpec::disk(1), 8, 32), Error);
}

TEST(Grid2D, PeriodicIndexWraps) {
  const auto g = Grid2D::make(DomainSpec::cylinder(1, 0, 1), 16, 16);
  EXPECT_EQ(g.index(-1, 3), g.index(15, 3));
  EXPECT_EQ(g.index(16, 3), g.index(0, 3));
  EXPECT_EQ(g.index(3, -1), -1);
}

TEST(L0, CouetteEigenvaluesMatchTheDiscreteSymbol) {
  const auto f = make_builtin_flow("couette");
  const int nx = 64, ny = 16;
  const auto g = Grid2D::make(f.domain(), nx, ny);
  const auto L = discretize_L0(f, g);
  EXPECT_EQ(skewness(*L.sparse), 0.0);
  const auto ev = lapack::eigenvalues(L.dense());
  ASSERT_EQ(ev.info, 0);
  std::vector<double> got, want;
  for (auto z : ev.values) {
    EXPECT_LT(std::abs(z.real()), 1e-10);
    got.push_back(z.imag());
  }
  for (int m = 0; m < nx; ++m)
    for (int j = 0; j < ny; ++j) want.push_back(-std::sin(2 * pi * m / nx) / g.hx());
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-10);
}

TEST(L0, ConstantFieldGivesTheZeroOperator) {
  const auto dom = DomainSpec::cylinder(2 * pi, 0, 1);
  const auto f = load_grid_field(sample_grid(dom, 32, 32, [](Vec2) { return 1.5; }), dom);
  const auto g = Grid2D::make(dom, 16, 16);
  // the spline gradient of a constant array is zero up to rounding
  EXPECT_LT(discretize_L0(f, g).sparse->norm(), 1e-20);
  const Eigen::VectorXd v = random_vector(g.size(), 3);
  EXPECT_LT(discretize_K(f, g).apply(v).norm(), 1e-20 * v.norm());
}

TEST(L0, RigidDiskIsSkewAndAnnihilatesFunctionsOfPsi) {
  const auto f = make_builtin_flow("rigid");
  const auto g = Grid2D::make(f.domain(), 64, 64);
  EXPECT_LT(skewness(*discretize_L0(f, g).sparse), 1e-10);
  const double r32 = invariant_residual(32), r64 = invariant_residual(64);
  EXPECT_LT(r64, 0.5 * r32) << r32 << " -> " << r64;
}

TEST(L0, ShearEigenvaluesAreImaginary) {
  const auto f = make_builtin_flow("shear_quadratic");
  const auto g = Grid2D::make(f.domain(), 64, 32);
  const auto ev = lapack::eigenvalues(discretize_L0(f, g).dense());
  ASSERT_EQ(ev.info, 0);
  EXPECT_LT(max_abs_real(ev.values), 1e-10);
}

TEST(L0, SkewOnPeriodicGridsForAllFlows) {
  for (auto f : {make_builtin_flow("couette"), make_builtin_flow("shear_quadratic"),
                 make_builtin_flow("cellular", {{"torus", 1.0}})}) {
    const auto g = Grid2D::make(f.domain(), 32, 24);
    EXPECT_LT(skewness(*discretize_L0(f, g).sparse), 1e-10) << f.name();
  }
}

TEST(L0, TangencyIsRequiredOnBoundedDomains) {
  // psi = x on the unit square pushes fluid through the top and bottom
  const auto dom = DomainSpec::rectangle(0, 1, 0, 1);
  const auto f = load_grid_field(sample_grid(dom, 16, 16, [](Vec2 p) { return p.x; }), dom);
  EXPECT_THROW(discretize_L0(f, Grid2D::make(dom, 16, 16)), Error);
}

TEST(K, VanishesForConstantVorticity) {
  for (const char* name : {"couette", "shear_quadratic", "rigid"}) {
    const auto f = make_builtin_flow(name);
    const auto g = Grid2D::make(f.domain(), 32, 16);
    const auto K = discretize_K(f, g);
    ASSERT_TRUE(K.sparse.has_value()) << name;
    EXPECT_EQ(K.sparse->nonZeros(), 0) << name;
    EXPECT_FALSE(K.notes.empty());
  }
}

TEST(K, CouetteEigenvaluesOfL0PlusKEqualL0) {
  const auto f = make_builtin_flow("couette");
  const auto g = Grid2D::make(f.domain(), 32, 16);
  DiagnosticsOptions o;
  o.singular_values = false;
  const auto r = operator_diagnostics(discretize_L0(f, g), discretize_K(f, g), g, o);
  ASSERT_EQ(r.eig_L0.size(), r.eig_Lvor.size());
  for (std::size_t k = 0; k < r.eig_L0.size(); ++k) EXPECT_EQ(r.eig_L0[k], r.eig_Lvor[k]);
}

TEST(K, RangeHasZeroMeanForDeltaLikeBumps) {
  for (const auto& name : builtin_flow_names()) {
    const auto f = make_builtin_flow(name);
    const auto g = Grid2D::make(f.domain(), 24, 24);
    const auto K = discretize_K(f, g);
    const Vec2 c = f.domain().kind() == DomainKind::disk || f.domain().kind() == DomainKind::annulus
                       ? Vec2{0.6 * f.domain().r_out(), 0.1}
                       : Vec2{f.domain().box().xmin + 0.3 * f.domain().box().width(),
                              f.domain().box().ymin + 0.4 * f.domain().box().height()};
    const double s = 2 * g.hx();
    const Eigen::VectorXd w = g.sample([&](Vec2 p) { return std::exp(-dot(p - c, p - c) / (2 * s * s)); });
    const Eigen::VectorXd out = K.apply(w);
    EXPECT_LT(std::abs(g.weight() * out.sum()), 1e-8 * g.l2(w)) << name;
  }
}

TEST(K, IsLinear) {
  const auto f = make_builtin_flow("cellular");
  const auto g = Grid2D::make(f.domain(), 20, 20);
  const auto K = discretize_K(f, g);
  const auto u = random_vector(g.size(), 1), v = random_vector(g.size(), 2);
  const Eigen::VectorXd lhs = K.apply(2.5 * u - 0.75 * v);
  const Eigen::VectorXd rhs = 2.5 * K.apply(u) - 0.75 * K.apply(v);
  EXPECT_LT((lhs - rhs).norm(), 1e-10 * rhs.norm());
}

TEST(K, CellularSingularValuesDecay) {
  const auto f = make_builtin_flow("cellular");
  const auto g = Grid2D::make(f.domain(), 48, 48);
  DiagnosticsOptions o;
  o.eigenvalues = false;
  const auto r = operator_diagnostics(discretize_L0(f, g), discretize_K(f, g), g, o);
  ASSERT_EQ(r.k_singular_values.size(), 64u);
  for (std::size_t k = 1; k < r.k_singular_values.size(); ++k)
    EXPECT_LE(r.k_singular_values[k], r.k_singular_values[k - 1]);
  EXPECT_LT(r.sv_tail_ratio, 1.0);
  EXPECT_LT(r.zero_mean_residual, 1e-8);
}

TEST(Poisson, AnnulusConstraintsHold) {
  const auto dom = DomainSpec::annulus(1, 2);
  const auto g = Grid2D::make(dom, 48, 48);
  const ConstrainedPoisson P(g);
  EXPECT_EQ(P.components(), 2);
  Eigen::VectorXd w = random_vector(g.size(), 8);
  w.array() -= g.mean(w);
  const auto s = P.solve(w);
  EXPECT_FALSE(s.projected);
  const auto r = P.residuals(s, w);
  EXPECT_LT(r.flux, 1e-8);
  EXPECT_LT(r.laplace, 1e-8 * w.cwiseAbs().maxCoeff() / (g.hx() * g.hx()) + 1e-8);
  EXPECT_LT(r.mean, 1e-8);
  EXPECT_EQ(r.boundary, 0.0);
  // every exterior neighbor reads its component constant
  for (int n = 0; n < g.size(); ++n) {
    const int i = g.ci(n), j = g.cj(n);
    for (auto [di, dj] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      if (g.index(i + di, j + dj) >= 0) continue;
      const double v = P.value(s, i + di, j + dj);
      EXPECT_TRUE(v == s.constants[0] || v == s.constants[1]);
    }
  }
}

TEST(Poisson, NonZeroMeanInputIsProjectedAndFlagged) {
  const auto g = Grid2D::make(DomainSpec::torus(2 * pi, 2 * pi), 16, 16);
  const ConstrainedPoisson P(g);
  EXPECT_EQ(P.components(), 0);
  Eigen::VectorXd w = random_vector(g.size(), 4);
  w.array() += 3.0;
  const auto s = P.solve(w);
  EXPECT_TRUE(s.projected);
  EXPECT_NEAR(s.removed_mean, g.mean(w), 1e-14);
  EXPECT_LT(P.residuals(s, w).laplace, 1e-8);
}

TEST(Diagnostics, PeriodicGridsPassStructuralChecks) {
  for (auto f : {make_builtin_flow("shear_quadratic"), make_builtin_flow("cellular", {{"torus", 1.0}})}) {
    const auto g = Grid2D::make(f.domain(), 24, 24);
    const auto r = operator_diagnostics(discretize_L0(f, g), discretize_K(f, g), g);
    EXPECT_LT(r.skewness_norm, 1e-10) << f.name();
    EXPECT_EQ(r.eig_info_L0, 0);
    EXPECT_EQ(r.eig_info_Lvor, 0);
    EXPECT_LT(r.max_abs_real_L0, 1e-8) << f.name();
    EXPECT_LT(r.zero_mean_residual, 1e-8) << f.name();
  }
}

// Imaginary parts of the discrete L0 eigenvalues against the lattice from the
// computed periods, at 64 x 64 with tolerance ten grid spacings.
TEST(Diagnostics, EigenvaluesLieNearThePredictedLattice) {
  for (const char* name : {"couette", "rigid"}) {
    const auto f = make_builtin_flow(name);
    const auto pfs = periods_of(f, index_of(f), 16);
    const auto spec = assemble_spectrum(pfs, 1e3);
    ASSERT_EQ(spec.shape, SpectrumShape::lattice) << name;
    const double step = spec.lattice_step;
    const auto g = Grid2D::make(f.domain(), 64, 64);
    const auto ev = lapack::eigenvalues(discretize_L0(f, g).dense());
    ASSERT_EQ(ev.info, 0);
    double worst = 0.0;
    std::size_t outside = 0;
    for (auto z : ev.values) {
      const double d = std::abs(z.imag() - step * std::round(z.imag() / step));
      worst = std::max(worst, d);
      if (d > 10 * g.hx()) ++outside;
    }
    EXPECT_LE(worst, 10 * g.hx()) << name << ": " << outside << " of " << ev.values.size()
                                  << " eigenvalues farther than 10h from the lattice";
  }
}

TEST(Coarea, ClosedFormExamples) {
  const auto sh = make_builtin_flow("shear_quadratic");
  const auto ish = index_of(sh);
  const auto psh = periods_of(sh, ish);
  const auto r1 = coarea_check(sh, ish, psh, TestFunction::one, Grid2D::make(sh.domain(), 32, 32));
  EXPECT_NEAR(r1.lhs, 2 * pi, 2e-3 * 2 * pi);
  EXPECT_NEAR(r1.rhs, 2 * pi, 2e-3 * 2 * pi);
  EXPECT_LT(r1.rel_error, 1e-3);

  const auto rg = make_builtin_flow("rigid");
  const auto irg = index_of(rg);
  const auto prg = periods_of(rg, irg);
  const auto res = coarea_check(rg, irg, prg, {TestFunction::one, TestFunction::psi}, Grid2D::make(rg.domain(), 32, 32));
  EXPECT_NEAR(res[0].lhs, pi, 2e-3 * pi);
  EXPECT_NEAR(res[0].rhs, pi, 2e-3 * pi);
  EXPECT_LT(res[0].rel_error, 1e-3);
  EXPECT_NEAR(res[1].lhs, pi / 12, 2e-3 * pi / 12);
  EXPECT_NEAR(res[1].rhs, pi / 12, 2e-3 * pi / 12);
  EXPECT_LT(res[1].rel_error, 1e-3);
}

TEST(Coarea, HoldsForAllTestFunctionsOnAllCatalogFlows) {
  for (const auto& name : builtin_flow_names()) {
    const auto f = make_builtin_flow(name);
    const auto idx = index_of(f);
    const auto pfs = periods_of(f, idx, 16);
    const auto res = coarea_check(f, idx, pfs, {TestFunction::one, TestFunction::psi, TestFunction::bump},
                                  Grid2D::make(f.domain(), 32, 32), detail::coarea_ranges(pfs));
    for (std::size_t q = 0; q < res.size(); ++q) EXPECT_LT(res[q].rel_error, 1e-3) << name << " f#" << q;
  }
}

TEST(Weyl, CouettePacketsAreExact) {
  const auto f = make_builtin_flow("couette");
  const auto idx = index_of(f);
  const auto pfs = periods_of(f, idx, 16);
  for (int k : {1, 3})
    for (double d : {0.2, 0.05, 0.0125}) {
      const auto r = weyl_residual(f, idx.families[0], {idx.families[0].component_id, 0.5, k, d}, pfs[0]);
      EXPECT_LT(r.residual, 1e-8) << k << " " << d;
      EXPECT_NEAR(r.lambda, k, 1e-9);
    }
}

TEST(Weyl, ShearResidualDecaysLinearlyAndScalesWithK) {
  const auto f = make_builtin_flow("shear_quadratic");
  const auto idx = index_of(f);
  const auto pfs = periods_of(f, idx);
  const auto& fam = idx.families[0];
  const double rho = 1.125;  // y = 1.5
  // lambda uses T from the period interpolant, not the closed form
  std::vector<double> res;
  for (double d : {0.05, 0.025, 0.0125}) {
    const auto r = weyl_residual(f, fam, {fam.component_id, rho, 1, d}, pfs[0]);
    EXPECT_NEAR(r.lambda, 1.5, 1e-5);
    res.push_back(r.residual);
  }
  EXPECT_LE(res[1] / res[0], 0.7);
  EXPECT_LE(res[2] / res[1], 0.7);
  const double k2 = weyl_residual(f, fam, {fam.component_id, rho, 2, 0.05}, pfs[0]).residual;
  const double ratio = k2 / res[0];
  EXPECT_GT(ratio, 2.0 / 1.5);
  EXPECT_LT(ratio, 2.0 * 1.5);
}

TEST(Weyl, AnnulusPacketsCertifyBandPoints) {
  const auto f = make_builtin_flow("annulus_shear");
  const auto idx = index_of(f);
  const auto pfs = periods_of(f, idx);
  const auto& fam = idx.families[0];
  for (auto [rho, k] : {std::pair{0.8, 1}, {1.5, 1}, {2.4, 2}, {3.0, 1}, {1.2, 3}}) {
    const double d0 = 0.1;
    double prev = INFINITY, last = 0.0, lambda = 0.0;
    for (double d : {d0, d0 / 2, d0 / 4}) {
      const auto r = weyl_residual(f, fam, {fam.component_id, rho, k, d}, pfs[0]);
      if (std::isfinite(prev)) {
        EXPECT_LE(r.residual / prev, 0.7) << rho << " " << k;
      }
      prev = last = r.residual;
      lambda = r.lambda;
    }
    EXPECT_LT(last, 0.05 * std::abs(lambda)) << rho << " " << k;
    // T = 2 pi / r^2 with rho = r^4 / 4, up to interpolant error
    EXPECT_NEAR(lambda, k * std::sqrt(4 * rho), 5e-5 * lambda);
  }
}

TEST(Weyl, TubeMustStayInsideTheFamily) {
  const auto f = make_builtin_flow("shear_quadratic");
  const auto idx = index_of(f);
  const auto pfs = periods_of(f, idx, 16);
  EXPECT_THROW(weyl_residual(f, idx.families[0], {0, 0.55, 1, 0.1}, pfs[0]), Error);
  EXPECT_THROW(weyl_residual(f, idx.families[0], {0, 1.0, 1, 0.0}, pfs[0]), Error);
}
