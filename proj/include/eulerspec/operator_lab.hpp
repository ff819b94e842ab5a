#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "eulerspec/domain.hpp"
#include "eulerspec/error.hpp"
#include "eulerspec/flow_topology.hpp"
#include "eulerspec/lapack.hpp"
#include "eulerspec/period.hpp"
#include "eulerspec/stream_field.hpp"

namespace eulerspec {

constexpr int kMaxDenseDimension = 4096;

/// Cell-centered grid on the bounding box; cells whose center lies in the
/// domain are active. Periodic directions wrap. Every active cell carries the
/// same weight area / N, so weights sum to the domain area.
class Grid2D {
 public:
  static Grid2D make(const DomainSpec& dom, int nx, int ny) {
    require(nx >= 16 && ny >= 16, "Grid2D: resolution must be at least 16x16");
    Grid2D g(dom);
    g.nx_ = nx;
    g.ny_ = ny;
    const Box& b = dom.box();
    g.hx_ = b.width() / nx;
    g.hy_ = b.height() / ny;
    g.index_.assign(static_cast<std::size_t>(nx) * ny, -1);
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        if (!dom.contains(g.center(i, j))) continue;
        g.index_[static_cast<std::size_t>(j) * nx + i] = static_cast<int>(g.ci_.size());
        g.ci_.push_back(i);
        g.cj_.push_back(j);
      }
    }
    require(!g.ci_.empty(), "Grid2D: no active cells");
    g.weight_ = dom.area() / static_cast<double>(g.ci_.size());
    return g;
  }

  const DomainSpec& domain() const { return dom_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  int size() const { return static_cast<int>(ci_.size()); }
  double weight() const { return weight_; }
  int ci(int n) const { return ci_[static_cast<std::size_t>(n)]; }
  int cj(int n) const { return cj_[static_cast<std::size_t>(n)]; }

  Vec2 center(int i, int j) const {
    return {dom_.box().xmin + (i + 0.5) * hx_, dom_.box().ymin + (j + 0.5) * hy_};
  }
  Vec2 point(int n) const { return center(ci(n), cj(n)); }

  /// Active index of cell (i, j) after periodic wrapping, or -1.
  int index(int i, int j) const {
    if (dom_.periodic_x()) i = ((i % nx_) + nx_) % nx_;
    if (dom_.periodic_y()) j = ((j % ny_) + ny_) % ny_;
    if (i < 0 || i >= nx_ || j < 0 || j >= ny_) return -1;
    return index_[static_cast<std::size_t>(j) * nx_ + i];
  }

  /// Samples a function at active cell centers.
  template <class F>
  Eigen::VectorXd sample(F&& f) const {
    Eigen::VectorXd v(size());
    for (int n = 0; n < size(); ++n) v[n] = f(point(n));
    return v;
  }

  double mean(const Eigen::VectorXd& v) const { return v.sum() / static_cast<double>(size()); }
  double inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return weight_ * a.dot(b); }
  double l2(const Eigen::VectorXd& v) const { return std::sqrt(weight_ * v.squaredNorm()); }

 private:
  explicit Grid2D(DomainSpec d) : dom_(std::move(d)) {}
  DomainSpec dom_;
  int nx_{0}, ny_{0};
  double hx_{0.0}, hy_{0.0};
  double weight_{0.0};
  std::vector<int> index_, ci_, cj_;
};

/// Linear operator on grid vectors with an optional sparse realization.
struct DiscreteOperator {
  std::string name;
  int dimension{0};
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply_fn;
  std::optional<Eigen::SparseMatrix<double>> sparse;
  std::vector<std::string> notes;

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    require(v.size() == dimension, name + ": dimension mismatch");
    return sparse ? Eigen::VectorXd(*sparse * v) : apply_fn(v);
  }

  /// Dense matrix (column-by-column when only the action is known).
  Eigen::MatrixXd dense() const {
    require(dimension <= kMaxDenseDimension, name + ": dimension exceeds the dense cap");
    if (sparse) return Eigen::MatrixXd(*sparse);
    Eigen::MatrixXd m(dimension, dimension);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dimension);
    for (int c = 0; c < dimension; ++c) {
      e[c] = 1.0;
      m.col(c) = apply_fn(e);
      e[c] = 0.0;
    }
    return m;
  }
};

/// Skew-symmetric advection: the average of u.grad and div(u .) with centered
/// differences. Neighbors outside the domain contribute nothing, which keeps
/// the matrix exactly antisymmetric.
inline DiscreteOperator discretize_L0(const StreamField& field, const Grid2D& grid) {
  const DomainSpec& dom = field.domain();
  if (dom.has_boundary()) {
    const FieldScales sc = field_scales(field);
    const double res = boundary_tangency_residual(field, 64);
    if (res > 1e-6 * std::max(sc.max_grad, 1e-300))
      fail(ErrorKind::invalid_argument, "discretize_L0: velocity is not tangent to the boundary");
  }
  const int N = grid.size();
  std::vector<Vec2> u(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) u[static_cast<std::size_t>(n)] = field.velocity(grid.point(n));
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(N) * 4);
  const double cx = 1.0 / (4.0 * grid.hx()), cy = 1.0 / (4.0 * grid.hy());
  for (int p = 0; p < N; ++p) {
    const int i = grid.ci(p), j = grid.cj(p);
    const Vec2 up = u[static_cast<std::size_t>(p)];
    if (int e = grid.index(i + 1, j); e >= 0 && e != p) trip.emplace_back(p, e, (up.x + u[static_cast<std::size_t>(e)].x) * cx);
    if (int w = grid.index(i - 1, j); w >= 0 && w != p) trip.emplace_back(p, w, -(up.x + u[static_cast<std::size_t>(w)].x) * cx);
    if (int nn = grid.index(i, j + 1); nn >= 0 && nn != p) trip.emplace_back(p, nn, (up.y + u[static_cast<std::size_t>(nn)].y) * cy);
    if (int s = grid.index(i, j - 1); s >= 0 && s != p) trip.emplace_back(p, s, -(up.y + u[static_cast<std::size_t>(s)].y) * cy);
  }
  Eigen::SparseMatrix<double> m(N, N);
  m.setFromTriplets(trip.begin(), trip.end());
  DiscreteOperator op;
  op.name = "L0";
  op.dimension = N;
  op.sparse = std::move(m);
  if (dom.kind() == DomainKind::disk || dom.kind() == DomainKind::annulus)
    op.notes.push_back("masked curved boundary: stencils truncated at the mask");
  return op;
}

/// Constrained Poisson solve for Laplacian(phi) = omega: phi equals an unknown
/// constant on each boundary component, the outward flux through each
/// component vanishes, and phi has zero mean. A multiplier on every row makes
/// the bordered system square; it vanishes for zero-mean input.
class ConstrainedPoisson {
 public:
  struct Solution {
    Eigen::VectorXd phi;
    std::vector<double> constants;
    double multiplier{0.0};
    bool projected{false};  // input mean was removed
    double removed_mean{0.0};
  };

  explicit ConstrainedPoisson(const Grid2D& grid) : grid_(grid) {
    const DomainSpec& dom = grid.domain();
    N_ = grid.size();
    C_ = static_cast<int>(dom.boundary_components().size());
    const int dim = N_ + C_ + 1;
    const double ax = 1.0 / (grid.hx() * grid.hx()), ay = 1.0 / (grid.hy() * grid.hy());
    std::vector<Eigen::Triplet<double>> t;
    for (int p = 0; p < N_; ++p) {
      const int i = grid.ci(p), j = grid.cj(p);
      double diag = 0.0;
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int q = 0; q < 4; ++q) {
        const double a = q < 2 ? ax : ay;
        diag -= a;
        const int nb = grid.index(i + di[q], j + dj[q]);
        if (nb >= 0) {
          t.emplace_back(p, nb, a);
        } else {
          const int k = ghost_component(i + di[q], j + dj[q]);
          t.emplace_back(p, N_ + k, a);
          // flux row k: (c_k - phi_p) * (h_perp / h)
          const double r = q < 2 ? grid.hy() / grid.hx() : grid.hx() / grid.hy();
          t.emplace_back(N_ + k, N_ + k, r);
          t.emplace_back(N_ + k, p, -r);
        }
      }
      t.emplace_back(p, p, diag);
      t.emplace_back(p, N_ + C_, 1.0);
      t.emplace_back(N_ + C_, p, 1.0 / N_);
    }
    A_.resize(dim, dim);
    A_.setFromTriplets(t.begin(), t.end());
    A_.makeCompressed();
    lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>>();
    lu_->compute(A_);
    if (lu_->info() != Eigen::Success)
      fail(ErrorKind::numerical_failure, "ConstrainedPoisson: singular bordered system (" + std::to_string(C_) +
                                             " boundary constants, " + std::to_string(N_) + " cells)");
  }

  int components() const { return C_; }
  const Eigen::SparseMatrix<double>& system() const { return A_; }

  Solution solve(const Eigen::VectorXd& omega) const {
    require(omega.size() == N_, "ConstrainedPoisson: dimension mismatch");
    Solution s;
    s.removed_mean = grid_.mean(omega);
    const double scale = omega.cwiseAbs().maxCoeff();
    s.projected = std::abs(s.removed_mean) > 1e-14 * std::max(scale, 1e-300);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N_ + C_ + 1);
    rhs.head(N_) = omega.array() - s.removed_mean;
    const Eigen::VectorXd x = lu_->solve(rhs);
    if (lu_->info() != Eigen::Success) fail(ErrorKind::numerical_failure, "ConstrainedPoisson: solve failed");
    s.phi = x.head(N_);
    for (int k = 0; k < C_; ++k) s.constants.push_back(x[N_ + k]);
    s.multiplier = x[N_ + C_];
    return s;
  }

  /// phi at cell (i, j), or the boundary constant for cells outside the domain.
  double value(const Solution& s, int i, int j) const {
    const int n = grid_.index(i, j);
    if (n >= 0) return s.phi[n];
    return s.constants[static_cast<std::size_t>(ghost_component(i, j))];
  }

  struct Residuals {
    double laplace{0.0};   // max |A phi - (omega - mean)| over cell rows
    double flux{0.0};      // max |net flux| over components
    double mean{0.0};      // |mean(phi)|
    double boundary{0.0};  // max spread of ghost values within a component (exactly 0)
  };

  Residuals residuals(const Solution& s, const Eigen::VectorXd& omega) const {
    Eigen::VectorXd x(N_ + C_ + 1);
    x.head(N_) = s.phi;
    for (int k = 0; k < C_; ++k) x[N_ + k] = s.constants[static_cast<std::size_t>(k)];
    x[N_ + C_] = s.multiplier;
    const Eigen::VectorXd r = A_ * x;
    Residuals out;
    out.laplace = (r.head(N_).array() - (omega.array() - s.removed_mean)).abs().maxCoeff();
    for (int k = 0; k < C_; ++k) out.flux = std::max(out.flux, std::abs(r[N_ + k]));
    out.mean = std::abs(r[N_ + C_]);
    return out;
  }

 private:
  int ghost_component(int i, int j) const {
    if (C_ == 0) fail(ErrorKind::numerical_failure, "ConstrainedPoisson: ghost cell on a domain without boundary");
    return std::clamp(grid_.domain().outside_component(grid_.center(i, j)), 0, C_ - 1);
  }

  Grid2D grid_;
  int N_{0}, C_{0};
  Eigen::SparseMatrix<double> A_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>> lu_;
};

/// K omega = -grad(omega0) . perp(grad(Laplacian^-1 omega)), written in flux
/// form -div(omega0 perp(grad phi)) with zero flux through boundary faces, so
/// the range has exactly zero mean.
inline DiscreteOperator discretize_K(const StreamField& field, const Grid2D& grid) {
  auto poisson = std::make_shared<ConstrainedPoisson>(grid);
  const int N = grid.size();
  // vorticity at east and north faces of each active cell
  std::vector<double> we(static_cast<std::size_t>(N)), wn(static_cast<std::size_t>(N));
  bool zero = true;
  for (int p = 0; p < N; ++p) {
    const Vec2 c = grid.point(p);
    we[static_cast<std::size_t>(p)] = field.vorticity(c + Vec2{0.5 * grid.hx(), 0.0});
    wn[static_cast<std::size_t>(p)] = field.vorticity(c + Vec2{0.0, 0.5 * grid.hy()});
    zero = zero && we[static_cast<std::size_t>(p)] == 0.0 && wn[static_cast<std::size_t>(p)] == 0.0;
  }
  // Constant vorticity has zero gradient; the flux form reproduces K = 0 only
  // away from the boundary, so it is handled exactly here.
  double wmin = INFINITY, wmax = -INFINITY;
  for (int p = 0; p < N; ++p) {
    wmin = std::min({wmin, we[static_cast<std::size_t>(p)], wn[static_cast<std::size_t>(p)]});
    wmax = std::max({wmax, we[static_cast<std::size_t>(p)], wn[static_cast<std::size_t>(p)]});
  }
  const bool constant = wmax - wmin <= 1e-14 * std::max(1.0, std::abs(wmax));
  DiscreteOperator op;
  op.name = "K";
  op.dimension = N;
  if (zero || constant) {
    op.sparse = Eigen::SparseMatrix<double>(N, N);
    op.notes.push_back("vorticity is constant: K = 0");
    return op;
  }
  const Grid2D g = grid;
  op.apply_fn = [poisson, g, we, wn, N](const Eigen::VectorXd& omega) {
    const auto sol = poisson->solve(omega);
    const double hx = g.hx(), hy = g.hy();
    auto val = [&](int i, int j) { return poisson->value(sol, i, j); };
    auto dphidx = [&](int i, int j) { return (val(i + 1, j) - val(i - 1, j)) / (2.0 * hx); };
    auto dphidy = [&](int i, int j) { return (val(i, j + 1) - val(i, j - 1)) / (2.0 * hy); };
    std::vector<double> fe(static_cast<std::size_t>(N), 0.0), fn(static_cast<std::size_t>(N), 0.0);
    for (int p = 0; p < N; ++p) {
      const int i = g.ci(p), j = g.cj(p);
      if (int e = g.index(i + 1, j); e >= 0) {
        const double phiy = 0.5 * (dphidy(i, j) + dphidy(i + 1, j));
        fe[static_cast<std::size_t>(p)] = we[static_cast<std::size_t>(p)] * (-phiy) * hy;
      }
      if (int n = g.index(i, j + 1); n >= 0) {
        const double phix = 0.5 * (dphidx(i, j) + dphidx(i, j + 1));
        fn[static_cast<std::size_t>(p)] = wn[static_cast<std::size_t>(p)] * phix * hx;
      }
    }
    Eigen::VectorXd out(N);
    for (int p = 0; p < N; ++p) {
      const int i = g.ci(p), j = g.cj(p);
      double div = fe[static_cast<std::size_t>(p)] + fn[static_cast<std::size_t>(p)];
      if (int w = g.index(i - 1, j); w >= 0) div -= fe[static_cast<std::size_t>(w)];
      if (int s = g.index(i, j - 1); s >= 0) div -= fn[static_cast<std::size_t>(s)];
      out[p] = -div / (hx * hy);
    }
    return out;
  };
  return op;
}

struct OperatorReport {
  double skewness_norm{0.0};
  std::vector<std::complex<double>> eig_L0;
  std::vector<std::complex<double>> eig_Lvor;
  int eig_info_L0{0};
  int eig_info_Lvor{0};
  double max_abs_real_L0{0.0};
  double max_abs_real_Lvor{0.0};
  double zero_mean_residual{0.0};
  bool zero_mean_projected{false};
  std::vector<double> k_singular_values;  // top 64, decreasing
  double sv_tail_ratio{NAN};              // sigma_32 / sigma_8
  double coarea_error{NAN};
  std::vector<std::string> notes;
};

struct DiagnosticsOptions {
  bool eigenvalues{true};
  bool singular_values{true};
  int probes{100};
  unsigned long long seed{12345};
};

/// ||M + M^T||_F / ||M||_F (0 for the zero matrix).
inline double skewness(const Eigen::SparseMatrix<double>& m) {
  const Eigen::SparseMatrix<double> mt = m.transpose();
  const double nm = m.norm();
  return nm == 0.0 ? 0.0 : Eigen::SparseMatrix<double>(m + mt).norm() / nm;
}

inline double skewness(const Eigen::MatrixXd& m) {
  const double nm = m.norm();
  return nm == 0.0 ? 0.0 : (m + m.transpose()).norm() / nm;
}

inline OperatorReport operator_diagnostics(const DiscreteOperator& L0, const DiscreteOperator& K, const Grid2D& grid,
                                           const DiagnosticsOptions& opt = {}) {
  require(L0.dimension == K.dimension && L0.dimension == grid.size(), "operator_diagnostics: dimension mismatch");
  OperatorReport r;
  const Eigen::MatrixXd M = L0.dense();
  r.skewness_norm = skewness(M);

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  for (int t = 0; t < opt.probes; ++t) {
    Eigen::VectorXd w(grid.size());
    for (int n = 0; n < grid.size(); ++n) w[n] = nd(rng);
    w.array() -= grid.mean(w);
    const Eigen::VectorXd kw = K.apply(w);
    r.zero_mean_residual = std::max(r.zero_mean_residual, std::abs(grid.weight() * kw.sum()) / grid.l2(w));
  }

  Eigen::MatrixXd Kd;
  if (opt.eigenvalues || opt.singular_values) Kd = K.dense();
  if (opt.eigenvalues) {
    auto e0 = lapack::eigenvalues(M);
    r.eig_L0 = e0.values;
    r.eig_info_L0 = e0.info;
    if (e0.info != 0) r.notes.push_back("dgeev did not fully converge for L0 (info=" + std::to_string(e0.info) + ")");
    auto e1 = lapack::eigenvalues(M + Kd);
    r.eig_Lvor = e1.values;
    r.eig_info_Lvor = e1.info;
    if (e1.info != 0) r.notes.push_back("dgeev did not fully converge for L0+K (info=" + std::to_string(e1.info) + ")");
    for (const auto& z : r.eig_L0) r.max_abs_real_L0 = std::max(r.max_abs_real_L0, std::abs(z.real()));
    for (const auto& z : r.eig_Lvor) r.max_abs_real_Lvor = std::max(r.max_abs_real_Lvor, std::abs(z.real()));
  }
  if (opt.singular_values) {
    auto sv = lapack::singular_values(Kd);
    if (sv.info != 0) r.notes.push_back("dgesdd did not converge for K (info=" + std::to_string(sv.info) + ")");
    r.k_singular_values.assign(sv.values.begin(), sv.values.begin() + std::min<std::ptrdiff_t>(64, static_cast<std::ptrdiff_t>(sv.values.size())));
    if (r.k_singular_values.size() >= 32 && r.k_singular_values[7] > 0.0)
      r.sv_tail_ratio = r.k_singular_values[31] / r.k_singular_values[7];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Co-area identity
// ---------------------------------------------------------------------------

enum class TestFunction { one, psi, bump };

inline const char* to_string(TestFunction f) {
  switch (f) {
    case TestFunction::one: return "one";
    case TestFunction::psi: return "psi";
    case TestFunction::bump: return "bump";
  }
  return "unknown";
}

inline TestFunction parse_test_function(const std::string& s) {
  for (auto f : {TestFunction::one, TestFunction::psi, TestFunction::bump})
    if (s == to_string(f)) return f;
  fail(ErrorKind::invalid_argument, "unknown test function '" + s + "'");
}

/// f evaluated at p: 1, psi, or a Gaussian of width diameter/8 at the domain center.
inline double test_function_value(const StreamField& field, TestFunction f, Vec2 p) {
  switch (f) {
    case TestFunction::one: return 1.0;
    case TestFunction::psi: return field.psi(p);
    case TestFunction::bump: {
      const DomainSpec& dom = field.domain();
      const double s = dom.diameter() / 8.0;
      const Vec2 d = dom.min_image(p - dom.center());
      return std::exp(-dot(d, d) / (2.0 * s * s));
    }
  }
  return 0.0;
}

struct CoareaRange {
  int family{0};
  double rho_lo{0.0};
  double rho_hi{0.0};
};

struct CoareaResult {
  double lhs{0.0};
  double rhs{0.0};
  double rel_error{0.0};
  std::vector<CoareaRange> ranges;
};

struct CoareaOptions {
  Tolerances tol{};
  double trim_rel{1e-4};  // default ranges: family range shrunk by this fraction at each end
  int max_depth{9};       // adaptive subdivision depth for the area integral
  int rho_panels{24};
};

namespace detail {

/// Parity of upward-ray crossings with a closed (possibly wrapping) polyline.
class RayParity {
 public:
  RayParity(const DomainSpec& dom, const std::vector<Vec2>& line, int bins = 512) : dom_(dom) {
    const Box& b = dom.box();
    x0_ = b.xmin;
    w_ = b.width();
    bins_ = bins;
    cells_.resize(static_cast<std::size_t>(bins));
    for (std::size_t k = 0; k + 1 < line.size(); ++k) {
      Vec2 a = dom.wrap(line[k]);
      Vec2 d = dom.min_image(line[k + 1] - line[k]);
      segs_.push_back({a, a + d});
      add(static_cast<int>(segs_.size()) - 1);
    }
    // close the loop
    if (line.size() >= 2) {
      Vec2 a = dom.wrap(line.back());
      Vec2 d = dom.min_image(line.front() - line.back());
      if (norm(d) > 0.0) {
        segs_.push_back({a, a + d});
        add(static_cast<int>(segs_.size()) - 1);
      }
    }
  }

  bool odd(Vec2 p) const {
    p = dom_.wrap(p);
    int count = 0;
    const int bi = bin(p.x);
    for (int s : cells_[static_cast<std::size_t>(bi)]) {
      for (double shift : shifts()) {
        const Vec2 a = segs_[static_cast<std::size_t>(s)].first + Vec2{shift, 0.0};
        const Vec2 c = segs_[static_cast<std::size_t>(s)].second + Vec2{shift, 0.0};
        if ((a.x <= p.x) == (c.x <= p.x)) continue;
        const double y = a.y + (p.x - a.x) * (c.y - a.y) / (c.x - a.x);
        if (y > p.y) ++count;
      }
    }
    return count % 2 == 1;
  }

 private:
  std::vector<double> shifts() const {
    if (dom_.periodic_x()) return {0.0, w_, -w_};
    return {0.0};
  }
  int bin(double x) const {
    return std::clamp(static_cast<int>(std::floor((x - x0_) / w_ * bins_)), 0, bins_ - 1);
  }
  void add(int s) {
    const auto& [a, c] = segs_[static_cast<std::size_t>(s)];
    for (double shift : shifts()) {
      double lo = std::min(a.x, c.x) + shift, hi = std::max(a.x, c.x) + shift;
      if (hi < x0_ || lo > x0_ + w_) continue;
      const int b0 = bin(std::max(lo, x0_)), b1 = bin(std::min(hi, x0_ + w_));
      for (int b = b0; b <= b1; ++b) {
        auto& v = cells_[static_cast<std::size_t>(b)];
        if (v.empty() || v.back() != s) v.push_back(s);
      }
    }
  }

  DomainSpec dom_;
  double x0_{0.0}, w_{1.0};
  int bins_{1};
  std::vector<std::pair<Vec2, Vec2>> segs_;
  std::vector<std::vector<int>> cells_;
};

}  // namespace detail

/// Compares the area integral of f^2 over the orbit regions with the co-area
/// form: the integral over rho of the contour integral of f^2 / |grad psi|.
/// Default ranges are the families' psi ranges trimmed by trim_rel. Several
/// test functions share the orbit traces and the adaptive partition.
inline std::vector<CoareaResult> coarea_check(const StreamField& field, const IndexSet& index,
                                              const std::vector<PeriodFunction>& pfs,
                                              const std::vector<TestFunction>& fns, const Grid2D& grid,
                                              std::vector<CoareaRange> ranges = {}, const CoareaOptions& opt = {}) {
  require(!fns.empty(), "coarea_check: no test functions");
  const std::size_t F = fns.size();
  const DomainSpec& dom = field.domain();
  const FieldScales sc = field_scales(field);
  if (ranges.empty()) {
    for (const auto& pf : pfs) {
      const double e = opt.trim_rel * (pf.b - pf.a);
      ranges.push_back({pf.family_id, pf.a + e, pf.b - e});
    }
  }
  auto family = [&](int id) -> const OrbitFamily& {
    for (const auto& f : index.families)
      if (f.component_id == id) return f;
    fail(ErrorKind::invalid_argument, "coarea_check: unknown family " + std::to_string(id));
  };
  const TraceCaps caps = default_caps(sc, opt.tol);
  TraceOptions to = trace_options(sc, opt.tol, opt.tol.trace_rtol);
  to.subdivide = 8;
  auto orbit = [&](const OrbitFamily& f, double rho) {
    const auto tr = trace_orbit(field, f.seed_at(field, rho), caps, to);
    if (tr.kind != OrbitKind::periodic)
      fail(ErrorKind::numerical_failure, "coarea_check: orbit at rho=" + std::to_string(rho) + " is not periodic");
    return tr;
  };
  auto f2 = [&](Vec2 p, std::vector<double>& out) {
    for (std::size_t q = 0; q < F; ++q) {
      const double v = test_function_value(field, fns[q], p);
      out[q] = v * v;
    }
  };

  std::vector<CoareaResult> res(F);
  for (auto& r : res) r.ranges = ranges;

  // Right-hand side: Gauss-Legendre panels clustered toward both ends.
  static constexpr double gx[6] = {-0.9324695142031521, -0.6612093864662645, -0.2386191860831969,
                                   0.2386191860831969,  0.6612093864662645,  0.9324695142031521};
  static constexpr double gw[6] = {0.1713244923791704, 0.3607615730481386, 0.4679139345726910,
                                   0.4679139345726910, 0.3607615730481386, 0.1713244923791704};
  for (const auto& rg : ranges) {
    const OrbitFamily& f = family(rg.family);
    require(rg.rho_lo > f.psi_lo() && rg.rho_hi < f.psi_hi() && rg.rho_lo < rg.rho_hi,
            "coarea_check: range must lie inside the family");
    std::vector<double> nodes, weights;
    const int P = opt.rho_panels;
    for (int k = 0; k < P; ++k) {
      const double t0 = 0.5 * (1.0 - std::cos(std::numbers::pi * k / P));
      const double t1 = 0.5 * (1.0 - std::cos(std::numbers::pi * (k + 1) / P));
      const double r0 = rg.rho_lo + (rg.rho_hi - rg.rho_lo) * t0, r1 = rg.rho_lo + (rg.rho_hi - rg.rho_lo) * t1;
      for (int q = 0; q < 6; ++q) {
        nodes.push_back(0.5 * (r0 + r1) + 0.5 * (r1 - r0) * gx[q]);
        weights.push_back(0.5 * (r1 - r0) * gw[q]);
      }
    }
    auto vals = parallel_map<std::vector<double>>(nodes.size(), [&](std::size_t k) {
      const auto tr = orbit(f, nodes[k]);
      std::vector<double> s(F, 0.0), v(F);
      for (std::size_t i = 0; i + 1 < tr.polyline.size(); ++i) {
        const Vec2 seg = dom.min_image(tr.polyline[i + 1] - tr.polyline[i]);
        const Vec2 mid = tr.polyline[i] + 0.5 * seg;
        f2(mid, v);
        const double w = norm(seg) / norm(field.grad(mid));
        for (std::size_t q = 0; q < F; ++q) s[q] += w * v[q];
      }
      return s;
    });
    for (std::size_t k = 0; k < nodes.size(); ++k)
      for (std::size_t q = 0; q < F; ++q) res[q].rhs += weights[k] * vals[k][q];
  }

  // Left-hand side: adaptive tensor Gauss cubature over a parameter rectangle
  // (polar for disk and annulus), with the region indicator psi in range and
  // odd crossing parity between the two bounding orbits.
  struct Region {
    double lo, hi;
    detail::RayParity g1, g2;
  };
  std::vector<Region> regions;
  for (const auto& rg : ranges) {
    const OrbitFamily& f = family(rg.family);
    regions.push_back({rg.rho_lo, rg.rho_hi, detail::RayParity(dom, orbit(f, rg.rho_lo).polyline),
                       detail::RayParity(dom, orbit(f, rg.rho_hi).polyline)});
  }
  auto indicator = [&](Vec2 p) {
    if (!dom.contains(p)) return 0.0;
    const double v = field.psi(p);
    for (const auto& r : regions)
      if (v > r.lo && v < r.hi && r.g1.odd(p) != r.g2.odd(p)) return 1.0;
    return 0.0;
  };

  const bool polar = dom.kind() == DomainKind::disk || dom.kind() == DomainKind::annulus;
  double u0, u1, v0, v1;
  if (polar) {
    u0 = dom.kind() == DomainKind::annulus ? dom.r_in() : 0.0;
    u1 = dom.r_out();
    v0 = 0.0;
    v1 = 2.0 * std::numbers::pi;
  } else {
    u0 = dom.box().xmin;
    u1 = dom.box().xmax;
    v0 = dom.box().ymin;
    v1 = dom.box().ymax;
  }
  auto map = [&](double u, double v) { return polar ? Vec2{u * std::cos(v), u * std::sin(v)} : Vec2{u, v}; };
  auto jac = [&](double u) { return polar ? u : 1.0; };
  static constexpr double qx[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
  static constexpr double qw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};

  using Acc = std::vector<double>;
  std::function<void(double, double, double, double, int, Acc&)> cell = [&](double a0, double a1, double b0,
                                                                              double b1, int depth, Acc& acc) {
    bool any0 = false, any1 = false;
    for (int j = 0; j <= 4; ++j)
      for (int i = 0; i <= 4; ++i) {
        const double ind = indicator(map(a0 + (a1 - a0) * i / 4.0, b0 + (b1 - b0) * j / 4.0));
        (ind > 0.0 ? any1 : any0) = true;
      }
    if (!any1 && depth > 0) return;
    if (any0 && any1 && depth < opt.max_depth) {
      const double am = 0.5 * (a0 + a1), bm = 0.5 * (b0 + b1);
      cell(a0, am, b0, bm, depth + 1, acc);
      cell(am, a1, b0, bm, depth + 1, acc);
      cell(a0, am, bm, b1, depth + 1, acc);
      cell(am, a1, bm, b1, depth + 1, acc);
      return;
    }
    const double area = 0.25 * (a1 - a0) * (b1 - b0);
    Acc vals(F);
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) {
        const double u = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * qx[i];
        const double v = 0.5 * (b0 + b1) + 0.5 * (b1 - b0) * qx[j];
        const Vec2 p = map(u, v);
        const double ind = any0 ? indicator(p) : 1.0;
        if (ind <= 0.0) continue;
        f2(p, vals);
        const double w = qw[i] * qw[j] * jac(u) * area;
        for (std::size_t q = 0; q < F; ++q) acc[q] += w * vals[q];
      }
  };
  const int nu = grid.nx(), nv = grid.ny();
  auto rows = parallel_map<Acc>(static_cast<std::size_t>(nv), [&](std::size_t j) {
    Acc acc(F, 0.0);
    for (int i = 0; i < nu; ++i)
      cell(u0 + (u1 - u0) * i / nu, u0 + (u1 - u0) * (i + 1) / nu, v0 + (v1 - v0) * static_cast<double>(j) / nv,
           v0 + (v1 - v0) * static_cast<double>(j + 1) / nv, 0, acc);
    return acc;
  });
  for (const auto& a : rows)
    for (std::size_t q = 0; q < F; ++q) res[q].lhs += a[q];
  for (auto& r : res) r.rel_error = std::abs(r.lhs - r.rhs) / std::max(std::abs(r.lhs), 1e-300);
  return res;
}

inline CoareaResult coarea_check(const StreamField& field, const IndexSet& index, const std::vector<PeriodFunction>& pfs,
                                 TestFunction fn, const Grid2D& grid, std::vector<CoareaRange> ranges = {},
                                 const CoareaOptions& opt = {}) {
  return coarea_check(field, index, pfs, std::vector<TestFunction>{fn}, grid, std::move(ranges), opt).front();
}

// ---------------------------------------------------------------------------
// Weyl packets
// ---------------------------------------------------------------------------

struct WeylPacket {
  int family{0};
  double rho{0.0};
  int k{1};
  double delta{0.05};
};

/// Smooth bump exp(-1/(1-s^2)) on (-1, 1).
inline double weyl_profile(double s) { return std::abs(s) < 1.0 ? std::exp(-1.0 / (1.0 - s * s)) : 0.0; }

struct WeylResult {
  double lambda{0.0};
  double residual{0.0};  // ||(L0 - i lambda) omega|| / ||omega||
  double delta{0.0};
  int k{0};
  double rho{0.0};
};

struct WeylOptions {
  Tolerances tol{};
  int panels{8};
  int samples_per_orbit{128};
};

/// omega = chi((psi - rho)/delta) exp(i k theta), with theta = 2 pi t / T(level)
/// the time of flight from the family transversal. Norms are evaluated level by
/// level (co-area), with L0 omega obtained by spectral differentiation in t.
inline WeylResult weyl_residual(const StreamField& field, const OrbitFamily& fam, const WeylPacket& packet,
                                const PeriodFunction& pf, const WeylOptions& opt = {}) {
  require(packet.delta > 0.0, "weyl_residual: delta must be positive");
  if (!(packet.rho - packet.delta > fam.psi_lo() && packet.rho + packet.delta < fam.psi_hi()))
    fail(ErrorKind::invalid_argument, "weyl_residual: tube leaves the family");
  const FieldScales sc = field_scales(field);
  const TraceCaps caps = default_caps(sc, opt.tol);
  TraceOptions to = trace_options(sc, opt.tol, opt.tol.trace_rtol);
  to.keep_dense = true;

  constexpr double two_pi = 2.0 * std::numbers::pi;
  WeylResult r;
  r.k = packet.k;
  r.rho = packet.rho;
  r.delta = packet.delta;
  r.lambda = two_pi * packet.k / pf(packet.rho);

  static constexpr double gx[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
  static constexpr double gw[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};
  std::vector<double> ss, ws;
  for (int p = 0; p < opt.panels; ++p) {
    const double a = -1.0 + 2.0 * p / opt.panels, b = -1.0 + 2.0 * (p + 1) / opt.panels;
    for (int q = 0; q < 4; ++q) {
      ss.push_back(0.5 * (a + b) + 0.5 * (b - a) * gx[q]);
      ws.push_back(0.5 * (b - a) * gw[q]);
    }
  }
  const int M = opt.samples_per_orbit;
  struct Level {
    double num{0.0}, den{0.0};
  };
  auto levels = parallel_map<Level>(ss.size(), [&](std::size_t idx) {
    const double rho = packet.rho + packet.delta * ss[idx];
    const double chi = weyl_profile(ss[idx]);
    const auto tr = trace_orbit(field, fam.seed_at(field, rho), caps, to);
    if (tr.kind != OrbitKind::periodic)
      fail(ErrorKind::numerical_failure, "weyl_residual: orbit at rho=" + std::to_string(rho) + " is not periodic");
    const double T = tr.time;
    // omega samples along the orbit at uniform times; theta = 2 pi t / T
    std::vector<std::complex<double>> w(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      const Vec2 x = tr.position_at(T * m / M);
      if (norm(field.grad(x)) < sc.guard(opt.tol))
        fail(ErrorKind::numerical_failure, "weyl_residual: packet grazes a fixed point");
      w[static_cast<std::size_t>(m)] = chi * std::polar(1.0, two_pi * packet.k * m / M);
    }
    // d/dt by DFT
    std::vector<std::complex<double>> c(static_cast<std::size_t>(M));
    for (int n = 0; n < M; ++n) {
      std::complex<double> s{};
      for (int m = 0; m < M; ++m) s += w[static_cast<std::size_t>(m)] * std::polar(1.0, -two_pi * n * m / M);
      c[static_cast<std::size_t>(n)] = s / static_cast<double>(M);
    }
    Level lv;
    for (int m = 0; m < M; ++m) {
      std::complex<double> d{};
      for (int n = 0; n < M; ++n) {
        const int freq = n <= M / 2 ? n : n - M;
        if (2 * std::abs(freq) == M) continue;
        d += c[static_cast<std::size_t>(n)] * std::complex<double>(0.0, two_pi * freq / T) *
             std::polar(1.0, two_pi * n * m / M);
      }
      const std::complex<double> res = d - std::complex<double>(0.0, r.lambda) * w[static_cast<std::size_t>(m)];
      lv.num += std::norm(res) * T / M;
      lv.den += std::norm(w[static_cast<std::size_t>(m)]) * T / M;
    }
    return lv;
  });
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    num += ws[i] * levels[i].num;
    den += ws[i] * levels[i].den;
  }
  r.residual = std::sqrt(num / den);
  return r;
}

}  // namespace eulerspec
