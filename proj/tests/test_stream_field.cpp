#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "eulerspec/eulerspec.hpp"

using namespace eulerspec;
constexpr double pi = std::numbers::pi;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no eulerspec::Error thrown";
  return ErrorKind::io;
}

std::vector<Vec2> interior_points(const DomainSpec& dom, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  const Box& b = dom.box();
  std::uniform_real_distribution<double> ux(b.xmin, b.xmax), uy(b.ymin, b.ymax);
  std::vector<Vec2> out;
  while (static_cast<int>(out.size()) < n) {
    const Vec2 p{ux(rng), uy(rng)};
    if (dom.contains(p)) out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(Domain, RejectsInvalidParameters) {
  EXPECT_EQ(kind_of([] { DomainSpec::disk(0.0); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { DomainSpec::annulus(2.0, 1.0); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { DomainSpec::annulus(0.0, 1.0); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { DomainSpec::cylinder(-1.0, 0.0, 1.0); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { DomainSpec::cylinder(1.0, 1.0, 1.0); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { DomainSpec::torus(1.0, 0.0); }), ErrorKind::invalid_argument);
}

TEST(Domain, BoundaryComponentCountsMatchKind) {
  EXPECT_EQ(DomainSpec::disk(1).boundary_components().size(), 1u);
  EXPECT_EQ(DomainSpec::annulus(1, 2).boundary_components().size(), 2u);
  EXPECT_EQ(DomainSpec::cylinder(1, 0, 1).boundary_components().size(), 2u);
  EXPECT_EQ(DomainSpec::torus(1, 1).boundary_components().size(), 0u);
}

TEST(Domain, AreasAndWrapping) {
  EXPECT_NEAR(DomainSpec::disk(2).area(), 4 * pi, 1e-12);
  EXPECT_NEAR(DomainSpec::annulus(1, 2).area(), 3 * pi, 1e-12);
  EXPECT_NEAR(DomainSpec::cylinder(2 * pi, 1, 2).area(), 2 * pi, 1e-12);
  const auto t = DomainSpec::torus(2, 3);
  const Vec2 w = t.wrap({5.5, -1.0});
  EXPECT_NEAR(w.x, 1.5, 1e-15);
  EXPECT_NEAR(w.y, 2.0, 1e-15);
}

TEST(StreamField, CatalogExamples) {
  const auto rigid = make_builtin_flow("rigid", {{"R", 1.0}});
  auto s = rigid.eval({1.0, 0.0});
  EXPECT_DOUBLE_EQ(s.psi, 0.5);
  EXPECT_DOUBLE_EQ(s.grad.x, 1.0);
  EXPECT_DOUBLE_EQ(s.grad.y, 0.0);
  EXPECT_DOUBLE_EQ(s.velocity.x, 0.0);
  EXPECT_DOUBLE_EQ(s.velocity.y, 1.0);

  const auto rc = make_builtin_flow("radial_cos");
  EXPECT_NEAR(rc.domain().r_out(), 2 * pi, 1e-15);
  s = rc.eval({pi / 2, 0.0});
  EXPECT_NEAR(s.psi, 0.0, 1e-15);
  EXPECT_NEAR(norm(s.grad), 1.0, 1e-15);
  EXPECT_NEAR(norm(s.velocity), 1.0, 1e-15);
  EXPECT_NEAR(rc.eval({3.0, 4.0}).psi, std::cos(5.0), 1e-15);

  const auto cou = make_builtin_flow("couette");
  for (Vec2 p : {Vec2{0.3, 0.2}, Vec2{5.0, 0.9}}) {
    s = cou.eval(p);
    EXPECT_DOUBLE_EQ(s.velocity.x, -1.0);
    EXPECT_DOUBLE_EQ(s.velocity.y, 0.0);
  }

  const auto sh = make_builtin_flow("shear_quadratic", {{"L", 2 * pi}, {"a", 1.0}, {"b", 2.0}});
  s = sh.eval({1.0, 1.5});
  EXPECT_DOUBLE_EQ(s.psi, 1.125);
  EXPECT_DOUBLE_EQ(s.velocity.x, -1.5);
  EXPECT_DOUBLE_EQ(s.velocity.y, 0.0);
}

TEST(StreamField, ErrorKinds) {
  EXPECT_EQ(kind_of([] { make_builtin_flow("vortex_street"); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { make_builtin_flow("rigid", {{"R", -1.0}}); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { make_builtin_flow("rigid", {{"L", 1.0}}); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { make_builtin_flow("shear_quadratic", {{"a", 2.0}, {"b", 1.0}}); }),
            ErrorKind::invalid_argument);
  const auto rigid = make_builtin_flow("rigid");
  EXPECT_EQ(kind_of([&] { rigid.eval({2.0, 0.0}); }), ErrorKind::out_of_domain);
  EXPECT_EQ(kind_of([&] { rigid.eval({NAN, 0.0}); }), ErrorKind::out_of_domain);
  const auto torus = make_builtin_flow("cellular", {{"torus", 1.0}});
  EXPECT_EQ(kind_of([&] { boundary_tangency_residual(torus, 64); }), ErrorKind::not_applicable);
}

TEST(StreamField, PerpOrthogonalityAndSpeedForAllCatalogFlows) {
  for (const auto& name : builtin_flow_names()) {
    const auto f = make_builtin_flow(name);
    for (Vec2 p : interior_points(f.domain(), 200, 7)) {
      const auto s = f.eval(p);
      EXPECT_EQ(dot(s.velocity, s.grad), 0.0) << name;
      EXPECT_EQ(norm(s.velocity), norm(s.grad)) << name;
    }
  }
}

TEST(StreamField, AddingConstantShiftsPsiOnly) {
  for (const auto& name : builtin_flow_names()) {
    const auto f = make_builtin_flow(name);
    const auto g = f.shifted(3.25);
    for (Vec2 p : interior_points(f.domain(), 50, 11)) {
      const auto a = f.eval(p), b = g.eval(p);
      EXPECT_NEAR(b.psi - a.psi, 3.25, 1e-14) << name;
      EXPECT_EQ(a.grad.x, b.grad.x);
      EXPECT_EQ(a.grad.y, b.grad.y);
      EXPECT_EQ(a.velocity.x, b.velocity.x);
    }
  }
}

TEST(StreamField, PeriodicWrappingAgrees) {
  for (auto f : {make_builtin_flow("couette"), make_builtin_flow("shear_quadratic"),
                 make_builtin_flow("cellular", {{"torus", 1.0}})}) {
    const double Lx = f.domain().period_x();
    for (Vec2 p : interior_points(f.domain(), 50, 3)) {
      const auto a = f.eval(p), b = f.eval({p.x + Lx, p.y}), c = f.eval({p.x - 3 * Lx, p.y});
      EXPECT_NEAR(a.psi, b.psi, 1e-12);
      EXPECT_NEAR(a.grad.x, b.grad.x, 1e-12);
      EXPECT_NEAR(a.grad.y, c.grad.y, 1e-12);
      if (f.domain().periodic_y()) {
        EXPECT_NEAR(a.psi, f.eval({p.x, p.y + f.domain().period_y()}).psi, 1e-12);
      }
    }
  }
}

TEST(StreamField, ScalingMultipliesVelocity) {
  const auto f = make_builtin_flow("radial_cos");
  const auto g = f.scaled(-2.0);
  const auto a = f.eval({1.0, 2.0}), b = g.eval({1.0, 2.0});
  EXPECT_NEAR(b.psi, -2.0 * a.psi, 1e-15);
  EXPECT_NEAR(b.velocity.x, -2.0 * a.velocity.x, 1e-15);
}

TEST(StreamField, CatalogFlowsAreTangentToTheBoundary) {
  for (const auto& name : builtin_flow_names()) {
    const auto f = make_builtin_flow(name);
    if (!f.domain().has_boundary()) continue;
    EXPECT_LT(boundary_tangency_residual(f, 256), 1e-12) << name;
  }
}

TEST(StreamField, CatalogVorticityMatchesLaplacian) {
  // omega0 = -Laplacian(psi) by central differences of psi
  const double h = 1e-4;
  for (const auto& name : builtin_flow_names()) {
    const auto f = make_builtin_flow(name);
    for (Vec2 p : interior_points(f.domain(), 20, 5)) {
      if (f.domain().distance_to_boundary(p) < 2 * h) continue;
      const double lap = (f.psi({p.x + h, p.y}) + f.psi({p.x - h, p.y}) + f.psi({p.x, p.y + h}) +
                          f.psi({p.x, p.y - h}) - 4 * f.psi(p)) / (h * h);
      EXPECT_NEAR(f.vorticity(p), -lap, 1e-5 * std::max(1.0, std::abs(lap))) << name;
      const auto H = f.hessian(p);
      EXPECT_NEAR(H.xx + H.yy, lap, 1e-5 * std::max(1.0, std::abs(lap))) << name;
    }
  }
}

TEST(GridField, CosRadiusOn256GridIsAccurate) {
  const auto dom = DomainSpec::disk(2 * pi);
  const auto g = sample_grid(dom, 256, 256, [](Vec2 p) { return std::cos(norm(p)); });
  const auto f = load_grid_field(g, dom);
  double worst = 0.0;
  for (Vec2 p : interior_points(dom, 2000, 19)) {
    if (norm(p) < 0.2) continue;  // cos r is not smooth at the origin in x, y
    worst = std::max(worst, std::abs(f.eval(p).psi - std::cos(norm(p))));
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_LT(boundary_tangency_residual(f, 256), 1e-5);
  for (Vec2 p : interior_points(dom, 200, 23)) {
    const auto s = f.eval(p);
    EXPECT_LE(std::abs(dot(s.velocity, s.grad)), 1e-10);
  }
}

TEST(GridField, ConstantArrayHasZeroGradient) {
  const auto dom = DomainSpec::rectangle(0, 1, 0, 1);
  const auto f = load_grid_field(sample_grid(dom, 20, 20, [](Vec2) { return 4.0; }), dom);
  for (Vec2 p : interior_points(dom, 100, 1)) {
    const auto s = f.eval(p);
    EXPECT_DOUBLE_EQ(s.psi, 4.0);
    // spline weights sum to one only up to rounding
    EXPECT_LT(norm(s.grad), 1e-13 * 4.0);
  }
}

TEST(GridField, CylinderShearVelocity) {
  const auto dom = DomainSpec::cylinder(2 * pi, 1, 2);
  const auto f = load_grid_field(sample_grid(dom, 64, 64, [](Vec2 p) { return 0.5 * p.y * p.y; }), dom);
  for (Vec2 p : interior_points(dom, 200, 2)) EXPECT_NEAR(f.eval(p).velocity.x, -p.y, 1e-6);
  EXPECT_NEAR(f.eval({0.0, 1.5}).psi, f.eval({2 * pi, 1.5}).psi, 1e-14);
}

TEST(GridField, FileRoundTrip) {
  const auto dom = DomainSpec::torus(2 * pi, 2 * pi);
  const auto g = sample_grid(dom, 32, 32, [](Vec2 p) { return std::sin(p.x) * std::sin(p.y); });
  std::stringstream ss;
  write_grid(ss, g);
  const auto h = parse_grid(ss);
  EXPECT_EQ(h.kind, DomainKind::torus);
  EXPECT_EQ(h.nx, 32);
  ASSERT_EQ(h.values.size(), g.values.size());
  for (std::size_t i = 0; i < g.values.size(); ++i) EXPECT_EQ(h.values[i], g.values[i]);
}

TEST(GridField, RejectsBadGrids) {
  const auto dom = DomainSpec::rectangle(0, 1, 0, 1);
  auto g = sample_grid(dom, 16, 16, [](Vec2 p) { return p.x; });
  auto bad = g;
  bad.values.pop_back();
  EXPECT_EQ(kind_of([&] { load_grid_field(bad, dom); }), ErrorKind::invalid_argument);
  bad = g;
  bad.values[5] = NAN;
  EXPECT_EQ(kind_of([&] { load_grid_field(bad, dom); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([&] { load_grid_field(g, DomainSpec::disk(0.5)); }), ErrorKind::invalid_argument);
  bad = g;
  bad.dx *= 0.5;
  EXPECT_EQ(kind_of([&] { load_grid_field(bad, dom); }), ErrorKind::invalid_argument);
  std::stringstream junk("grid v1 kind=rectangle nx=2\n1 2 3 4\n");
  EXPECT_EQ(kind_of([&] { parse_grid(junk); }), ErrorKind::io);
  std::stringstream wrong("hello\n");
  EXPECT_EQ(kind_of([&] { parse_grid(wrong); }), ErrorKind::io);
}
