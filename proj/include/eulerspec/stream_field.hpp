#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eulerspec/domain.hpp"
#include "eulerspec/error.hpp"
#include "eulerspec/geometry.hpp"

namespace eulerspec {

using ParamMap = std::map<std::string, double>;

/// Pointwise evaluation of the steady stream function.
struct FieldSample {
  Vec2 point;
  double psi{0.0};
  Vec2 grad;
  Vec2 velocity;  // perp(grad) = (-psi_y, psi_x)
};

/// Evaluation backend. Implementations must accept any point of the closed
/// domain (already wrapped); the vorticity is omega0 = -Laplacian(psi).
class FieldSource {
 public:
  virtual ~FieldSource() = default;
  virtual double psi(Vec2 p) const = 0;
  virtual Vec2 grad(Vec2 p) const = 0;
  virtual Sym2 hessian(Vec2 p) const = 0;
  virtual double vorticity(Vec2 p) const = 0;
  virtual Vec2 vorticity_grad(Vec2 p) const = 0;
};

enum class SourceKind { analytic, grid };

/// Immutable steady stream function on a typed domain. Copies share the
/// backend, so concurrent read-only evaluation is safe.
class StreamField {
 public:
  StreamField(DomainSpec domain, std::shared_ptr<const FieldSource> source, SourceKind kind,
              std::string name, ParamMap params, std::string regularity_note)
      : domain_(std::move(domain)),
        source_(std::move(source)),
        kind_(kind),
        name_(std::move(name)),
        params_(std::move(params)),
        note_(std::move(regularity_note)) {}

  const DomainSpec& domain() const { return domain_; }
  SourceKind source_kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const ParamMap& params() const { return params_; }
  const std::string& regularity_note() const { return note_; }
  double scale() const { return scale_; }
  double shift() const { return shift_; }

  /// Checked evaluation: the point must lie in the closed domain.
  FieldSample eval(Vec2 p) const {
    const double slack = 1e-9 * domain_.diameter();
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !domain_.contains(p, slack)) {
      std::ostringstream os;
      os << "eval: point (" << p.x << ", " << p.y << ") outside the " << to_string(domain_.kind())
         << " domain";
      fail(ErrorKind::out_of_domain, os.str());
    }
    const Vec2 q = domain_.wrap(p);
    FieldSample s;
    s.point = q;
    s.psi = psi(q);
    s.grad = grad(q);
    s.velocity = perp(s.grad);
    return s;
  }

  // Unchecked accessors (periodic wrapping only) used by integrators, which may
  // probe a hair outside the domain.
  double psi(Vec2 p) const { return scale_ * source_->psi(domain_.wrap(p)) + shift_; }
  Vec2 grad(Vec2 p) const { return source_->grad(domain_.wrap(p)) * scale_; }
  Vec2 velocity(Vec2 p) const { return perp(grad(p)); }
  Sym2 hessian(Vec2 p) const {
    Sym2 h = source_->hessian(domain_.wrap(p));
    return {h.xx * scale_, h.xy * scale_, h.yy * scale_};
  }
  double vorticity(Vec2 p) const { return scale_ * source_->vorticity(domain_.wrap(p)); }
  Vec2 vorticity_grad(Vec2 p) const { return source_->vorticity_grad(domain_.wrap(p)) * scale_; }

  /// psi + c: values shift by c, derivatives unchanged.
  StreamField shifted(double c) const {
    StreamField f = *this;
    f.shift_ += c;
    return f;
  }

  /// c * psi: orbits unchanged, speeds scaled by c.
  StreamField scaled(double c) const {
    require(std::isfinite(c) && c != 0.0, "scaled: factor must be finite and nonzero");
    StreamField f = *this;
    f.scale_ *= c;
    f.shift_ *= c;
    return f;
  }

 private:
  DomainSpec domain_;
  std::shared_ptr<const FieldSource> source_;
  SourceKind kind_;
  std::string name_;
  ParamMap params_;
  std::string note_;
  double scale_{1.0};
  double shift_{0.0};
};

namespace detail {

/// psi = g(r) about the origin. g1_over_r and dlap carry the r -> 0 limits.
struct RadialProfile {
  std::function<double(double)> g, g1, g2, g1_over_r;
  std::function<double(double)> dlap;  // d/dr of Laplacian(psi) = d/dr (g'' + g'/r)
};

class RadialSource final : public FieldSource {
 public:
  explicit RadialSource(RadialProfile prof) : p_(std::move(prof)) {}
  double psi(Vec2 x) const override { return p_.g(norm(x)); }
  Vec2 grad(Vec2 x) const override { return x * p_.g1_over_r(norm(x)); }
  Sym2 hessian(Vec2 x) const override {
    const double r = norm(x);
    const double a = p_.g1_over_r(r);
    if (r < 1e-300) return {p_.g2(0.0), 0.0, p_.g2(0.0)};
    const double b = (p_.g2(r) - a) / (r * r);
    return {a + b * x.x * x.x, b * x.x * x.y, a + b * x.y * x.y};
  }
  double vorticity(Vec2 x) const override {
    const double r = norm(x);
    return -(p_.g2(r) + p_.g1_over_r(r));
  }
  Vec2 vorticity_grad(Vec2 x) const override {
    const double r = norm(x);
    if (r < 1e-300) return {};
    return x * (-p_.dlap(r) / r);
  }

 private:
  RadialProfile p_;
};

/// Stream functions given by closed-form callables of (x, y).
class CartesianSource final : public FieldSource {
 public:
  struct Forms {
    std::function<double(Vec2)> psi;
    std::function<Vec2(Vec2)> grad;
    std::function<Sym2(Vec2)> hessian;
    std::function<double(Vec2)> vorticity;
    std::function<Vec2(Vec2)> vorticity_grad;
  };
  explicit CartesianSource(Forms f) : f_(std::move(f)) {}
  double psi(Vec2 x) const override { return f_.psi(x); }
  Vec2 grad(Vec2 x) const override { return f_.grad(x); }
  Sym2 hessian(Vec2 x) const override { return f_.hessian(x); }
  double vorticity(Vec2 x) const override { return f_.vorticity(x); }
  Vec2 vorticity_grad(Vec2 x) const override { return f_.vorticity_grad(x); }

 private:
  Forms f_;
};

inline double param_or(const ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline void check_keys(const std::string& flow, const ParamMap& p, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(ErrorKind::invalid_argument, flow + ": unknown parameter '" + k + "'");
    if (!std::isfinite(v)) fail(ErrorKind::invalid_argument, flow + ": parameter '" + k + "' is not finite");
  }
}

}  // namespace detail

inline const std::vector<std::string>& builtin_flow_names() {
  static const std::vector<std::string> names{"rigid",           "radial_cos", "couette",
                                              "shear_quadratic", "cellular",   "annulus_shear"};
  return names;
}

/// Catalog of closed-form steady flows.
///
///   rigid           psi = r^2/2 on the disk of radius R (default 1)
///   radial_cos      psi = cos r on the disk of radius R (default 2 pi)
///   couette         psi = y on the cylinder [0,L] x [a,b] (defaults 2 pi, 0, 1)
///   shear_quadratic psi = y^2/2 on the cylinder (defaults 2 pi, 1, 2)
///   cellular        psi = sin x sin y on [0,pi]^2, or on the 2 pi torus with torus=1
///   annulus_shear   psi = r^p/p on the annulus r_in < r < r_out (defaults 1, 2, p = 4)
///
/// Every entry is a steady Euler solution (vorticity is a function of psi) and
/// is tangent to the boundary.
inline StreamField make_builtin_flow(const std::string& name, const ParamMap& params = {}) {
  using detail::param_or;
  constexpr double pi = std::numbers::pi;
  const std::string smooth = "closed form, C-infinity on the closed domain";

  if (name == "rigid") {
    detail::check_keys(name, params, {"R"});
    const double R = param_or(params, "R", 1.0);
    auto dom = DomainSpec::disk(R);
    detail::RadialProfile prof{
        [](double r) { return 0.5 * r * r; }, [](double r) { return r; }, [](double) { return 1.0; },
        [](double) { return 1.0; }, [](double) { return 0.0; }};
    return {dom, std::make_shared<detail::RadialSource>(prof), SourceKind::analytic, name, params, smooth};
  }
  if (name == "radial_cos") {
    detail::check_keys(name, params, {"R"});
    const double R = param_or(params, "R", 2.0 * pi);
    auto dom = DomainSpec::disk(R);
    detail::RadialProfile prof{
        [](double r) { return std::cos(r); },
        [](double r) { return -std::sin(r); },
        [](double r) { return -std::cos(r); },
        [](double r) {
          if (r < 1e-4) return -(1.0 - r * r / 6.0);
          return -std::sin(r) / r;
        },
        [](double r) {
          // d/dr(-cos r - sin r / r) = sin r + (sin r - r cos r) / r^2
          const double tail = r < 1e-3 ? r / 3.0 - r * r * r / 30.0
                                       : (std::sin(r) - r * std::cos(r)) / (r * r);
          return std::sin(r) + tail;
        }};
    return {dom, std::make_shared<detail::RadialSource>(prof), SourceKind::analytic, name, params, smooth};
  }
  if (name == "annulus_shear") {
    detail::check_keys(name, params, {"r_in", "r_out", "p"});
    const double r_in = param_or(params, "r_in", 1.0);
    const double r_out = param_or(params, "r_out", 2.0);
    const double p = param_or(params, "p", 4.0);
    require(p != 0.0, "annulus_shear: exponent p must be nonzero");
    auto dom = DomainSpec::annulus(r_in, r_out);
    detail::RadialProfile prof{
        [p](double r) { return std::pow(r, p) / p; },
        [p](double r) { return std::pow(r, p - 1.0); },
        [p](double r) { return (p - 1.0) * std::pow(r, p - 2.0); },
        [p](double r) { return std::pow(r, p - 2.0); },
        [p](double r) { return p * (p - 2.0) * std::pow(r, p - 3.0); }};
    return {dom, std::make_shared<detail::RadialSource>(prof), SourceKind::analytic, name, params, smooth};
  }
  if (name == "couette" || name == "shear_quadratic") {
    const bool quad = name == "shear_quadratic";
    detail::check_keys(name, params, {"L", "a", "b"});
    const double L = param_or(params, "L", 2.0 * pi);
    const double a = param_or(params, "a", quad ? 1.0 : 0.0);
    const double b = param_or(params, "b", quad ? 2.0 : 1.0);
    auto dom = DomainSpec::cylinder(L, a, b);
    detail::CartesianSource::Forms f;
    if (quad) {
      f.psi = [](Vec2 x) { return 0.5 * x.y * x.y; };
      f.grad = [](Vec2 x) { return Vec2{0.0, x.y}; };
      f.hessian = [](Vec2) { return Sym2{0.0, 0.0, 1.0}; };
      f.vorticity = [](Vec2) { return -1.0; };
    } else {
      f.psi = [](Vec2 x) { return x.y; };
      f.grad = [](Vec2) { return Vec2{0.0, 1.0}; };
      f.hessian = [](Vec2) { return Sym2{}; };
      f.vorticity = [](Vec2) { return 0.0; };
    }
    f.vorticity_grad = [](Vec2) { return Vec2{}; };
    return {dom, std::make_shared<detail::CartesianSource>(f), SourceKind::analytic, name, params, smooth};
  }
  if (name == "cellular") {
    detail::check_keys(name, params, {"torus"});
    const bool on_torus = param_or(params, "torus", 0.0) != 0.0;
    auto dom = on_torus ? DomainSpec::torus(2.0 * pi, 2.0 * pi) : DomainSpec::rectangle(0.0, pi, 0.0, pi);
    detail::CartesianSource::Forms f;
    f.psi = [](Vec2 x) { return std::sin(x.x) * std::sin(x.y); };
    f.grad = [](Vec2 x) { return Vec2{std::cos(x.x) * std::sin(x.y), std::sin(x.x) * std::cos(x.y)}; };
    f.hessian = [](Vec2 x) {
      const double s = std::sin(x.x) * std::sin(x.y);
      return Sym2{-s, std::cos(x.x) * std::cos(x.y), -s};
    };
    // Laplacian(psi) = -2 psi, so omega0 = 2 psi.
    f.vorticity = [](Vec2 x) { return 2.0 * std::sin(x.x) * std::sin(x.y); };
    f.vorticity_grad = [](Vec2 x) {
      return Vec2{2.0 * std::cos(x.x) * std::sin(x.y), 2.0 * std::sin(x.x) * std::cos(x.y)};
    };
    return {dom, std::make_shared<detail::CartesianSource>(f), SourceKind::analytic, name, params, smooth};
  }
  fail(ErrorKind::invalid_argument, "make_builtin_flow: unknown flow '" + name + "'");
}

// ---------------------------------------------------------------------------
// Sampled grids
// ---------------------------------------------------------------------------

/// A sampled stream function. Values are row-major with y varying slowest:
/// values[j * nx + i] = psi(x0 + i dx, y0 + j dy).
struct GridData {
  DomainKind kind{DomainKind::rectangle};
  int nx{0};
  int ny{0};
  double x0{0.0};
  double y0{0.0};
  double dx{0.0};
  double dy{0.0};
  std::vector<double> values;
};

/// Reads `grid v1 kind=<kind> nx=<int> ny=<int> x0=<f> y0=<f> dx=<f> dy=<f>`
/// followed by nx*ny whitespace-separated values.
inline GridData parse_grid(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::io, "grid: missing header line");
  std::istringstream hs(line);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != "grid" || version != "v1") fail(ErrorKind::io, "grid: header must start with 'grid v1'");
  std::map<std::string, std::string> kv;
  std::string tok;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorKind::io, "grid: malformed header token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"kind", "nx", "ny", "x0", "y0", "dx", "dy"}) {
    if (!kv.count(key)) fail(ErrorKind::io, std::string("grid: header missing '") + key + "'");
  }
  GridData g;
  try {
    g.kind = parse_domain_kind(kv["kind"]);
    g.nx = std::stoi(kv["nx"]);
    g.ny = std::stoi(kv["ny"]);
    g.x0 = std::stod(kv["x0"]);
    g.y0 = std::stod(kv["y0"]);
    g.dx = std::stod(kv["dx"]);
    g.dy = std::stod(kv["dy"]);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::io, std::string("grid: bad header value: ") + e.what());
  }
  if (g.nx <= 0 || g.ny <= 0) fail(ErrorKind::io, "grid: nx and ny must be positive");
  g.values.reserve(static_cast<std::size_t>(g.nx) * g.ny);
  std::string word;
  while (in >> word) {
    try {
      std::size_t used = 0;
      const double v = std::stod(word, &used);
      if (used != word.size()) throw std::invalid_argument(word);
      g.values.push_back(v);
    } catch (const std::exception&) {
      // stod rejects some spellings of non-finite values; keep them so the
      // finiteness check reports them uniformly.
      if (word == "nan" || word == "NaN" || word == "inf" || word == "-inf") {
        g.values.push_back(word[0] == 'n' || word[0] == 'N' ? NAN : (word[0] == '-' ? -INFINITY : INFINITY));
      } else {
        fail(ErrorKind::io, "grid: cannot parse value '" + word + "'");
      }
    }
  }
  return g;
}

inline GridData read_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "grid: cannot open '" + path + "'");
  return parse_grid(in);
}

inline void write_grid(std::ostream& out, const GridData& g) {
  out.precision(17);
  out << "grid v1 kind=" << to_string(g.kind) << " nx=" << g.nx << " ny=" << g.ny << " x0=" << g.x0
      << " y0=" << g.y0 << " dx=" << g.dx << " dy=" << g.dy << "\n";
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) out << (i ? " " : "") << g.values[static_cast<std::size_t>(j) * g.nx + i];
    out << "\n";
  }
}

/// Samples f on an nx x ny grid for the given domain: periodic directions use
/// nx points per period, bounded directions span the bounding box end to end.
template <class F>
GridData sample_grid(const DomainSpec& dom, int nx, int ny, F&& f) {
  GridData g;
  g.kind = dom.kind();
  g.nx = nx;
  g.ny = ny;
  const Box& b = dom.box();
  g.x0 = b.xmin;
  g.y0 = b.ymin;
  g.dx = dom.periodic_x() ? b.width() / nx : b.width() / (nx - 1);
  g.dy = dom.periodic_y() ? b.height() / ny : b.height() / (ny - 1);
  g.values.resize(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      g.values[static_cast<std::size_t>(j) * nx + i] = f(Vec2{g.x0 + i * g.dx, g.y0 + j * g.dy});
  return g;
}

namespace detail {

/// Fourth-order first derivative of a strided 1D sequence.
inline void fd_derivative(const double* f, int n, std::ptrdiff_t stride, double h, bool periodic, double* out) {
  auto at = [&](int i) { return f[static_cast<std::ptrdiff_t>(i) * stride]; };
  auto put = [&](int i, double v) { out[static_cast<std::ptrdiff_t>(i) * stride] = v; };
  const double s = 1.0 / (12.0 * h);
  if (periodic) {
    for (int i = 0; i < n; ++i) {
      auto w = [&](int k) { return at(((i + k) % n + n) % n); };
      put(i, (w(-2) - 8.0 * w(-1) + 8.0 * w(1) - w(2)) * s);
    }
    return;
  }
  for (int i = 2; i < n - 2; ++i) put(i, (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) * s);
  put(0, (-25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)) * s);
  put(1, (-3.0 * at(0) - 10.0 * at(1) + 18.0 * at(2) - 6.0 * at(3) + at(4)) * s);
  put(n - 1, -(-25.0 * at(n - 1) + 48.0 * at(n - 2) - 36.0 * at(n - 3) + 16.0 * at(n - 4) - 3.0 * at(n - 5)) * s);
  put(n - 2, -(-3.0 * at(n - 1) - 10.0 * at(n - 2) + 18.0 * at(n - 3) - 6.0 * at(n - 4) + at(n - 5)) * s);
}

/// Bicubic Hermite interpolant with finite-difference nodal derivatives. C1
/// across cells; second derivatives are cellwise.
class HermiteGrid {
 public:
  struct Jet {
    double f, fx, fy, fxx, fxy, fyy;
  };

  HermiteGrid() = default;
  HermiteGrid(const GridData& g, bool periodic_x, bool periodic_y)
      : nx_(g.nx), ny_(g.ny), x0_(g.x0), y0_(g.y0), dx_(g.dx), dy_(g.dy), px_(periodic_x), py_(periodic_y) {
    const std::size_t n = static_cast<std::size_t>(nx_) * ny_;
    f_ = g.values;
    fx_.assign(n, 0.0);
    fy_.assign(n, 0.0);
    fxy_.assign(n, 0.0);
    for (int j = 0; j < ny_; ++j) fd_derivative(&f_[static_cast<std::size_t>(j) * nx_], nx_, 1, dx_, px_, &fx_[static_cast<std::size_t>(j) * nx_]);
    for (int i = 0; i < nx_; ++i) {
      fd_derivative(&f_[i], ny_, nx_, dy_, py_, &fy_[i]);
      fd_derivative(&fx_[i], ny_, nx_, dy_, py_, &fxy_[i]);
    }
  }

  /// Nodal second derivatives by repeated differencing (used for -Laplacian).
  std::vector<double> nodal_laplacian() const {
    const std::size_t n = f_.size();
    std::vector<double> fxx(n), fyy(n);
    for (int j = 0; j < ny_; ++j) fd_derivative(&fx_[static_cast<std::size_t>(j) * nx_], nx_, 1, dx_, px_, &fxx[static_cast<std::size_t>(j) * nx_]);
    for (int i = 0; i < nx_; ++i) fd_derivative(&fy_[i], ny_, nx_, dy_, py_, &fyy[i]);
    for (std::size_t k = 0; k < n; ++k) fxx[k] += fyy[k];
    return fxx;
  }

  Jet eval(Vec2 p) const {
    int i = 0, j = 0;
    double t = 0.0, u = 0.0;
    locate(p.x, x0_, dx_, nx_, px_, i, t);
    locate(p.y, y0_, dy_, ny_, py_, j, u);
    const int i1 = px_ ? (i + 1) % nx_ : i + 1;
    const int j1 = py_ ? (j + 1) % ny_ : j + 1;
    const int ii[2] = {i, i1};
    const int jj[2] = {j, j1};

    double A[3][2], B[3][2], C[3][2], D[3][2];  // [derivative order][node]
    basis(t, A, B);
    basis(u, C, D);

    Jet r{};
    double* out[3][3] = {{&r.f, &r.fy, &r.fyy}, {&r.fx, &r.fxy, nullptr}, {&r.fxx, nullptr, nullptr}};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const std::size_t k = static_cast<std::size_t>(jj[b]) * nx_ + ii[a];
        const double F = f_[k], FX = fx_[k] * dx_, FY = fy_[k] * dy_, FXY = fxy_[k] * dx_ * dy_;
        for (int dt = 0; dt < 3; ++dt) {
          for (int du = 0; du + dt < 3; ++du) {
            const double v = F * A[dt][a] * C[du][b] + FX * B[dt][a] * C[du][b] + FY * A[dt][a] * D[du][b] +
                             FXY * B[dt][a] * D[du][b];
            *out[dt][du] += v / (std::pow(dx_, dt) * std::pow(dy_, du));
          }
        }
      }
    }
    return r;
  }

 private:
  static void basis(double t, double A[3][2], double B[3][2]) {
    const double t2 = t * t, t3 = t2 * t;
    A[0][0] = 2 * t3 - 3 * t2 + 1;
    A[0][1] = -2 * t3 + 3 * t2;
    B[0][0] = t3 - 2 * t2 + t;
    B[0][1] = t3 - t2;
    A[1][0] = 6 * t2 - 6 * t;
    A[1][1] = -6 * t2 + 6 * t;
    B[1][0] = 3 * t2 - 4 * t + 1;
    B[1][1] = 3 * t2 - 2 * t;
    A[2][0] = 12 * t - 6;
    A[2][1] = -12 * t + 6;
    B[2][0] = 6 * t - 4;
    B[2][1] = 6 * t - 2;
  }

  static void locate(double x, double x0, double h, int n, bool periodic, int& i, double& t) {
    double s = (x - x0) / h;
    if (periodic) {
      s = std::fmod(s, static_cast<double>(n));
      if (s < 0) s += n;
      i = std::min(static_cast<int>(std::floor(s)), n - 1);
    } else {
      s = std::clamp(s, 0.0, static_cast<double>(n - 1));
      i = std::min(static_cast<int>(std::floor(s)), n - 2);
    }
    t = s - i;
  }

  int nx_{0}, ny_{0};
  double x0_{0}, y0_{0}, dx_{1}, dy_{1};
  bool px_{false}, py_{false};
  std::vector<double> f_, fx_, fy_, fxy_;
};

class GridSource final : public FieldSource {
 public:
  GridSource(const GridData& g, bool px, bool py) : psi_(g, px, py) {
    GridData w = g;
    w.values = psi_.nodal_laplacian();
    for (double& v : w.values) v = -v;
    omega_ = HermiteGrid(w, px, py);
  }
  double psi(Vec2 p) const override { return psi_.eval(p).f; }
  Vec2 grad(Vec2 p) const override {
    const auto j = psi_.eval(p);
    return {j.fx, j.fy};
  }
  Sym2 hessian(Vec2 p) const override {
    const auto j = psi_.eval(p);
    return {j.fxx, j.fxy, j.fyy};
  }
  double vorticity(Vec2 p) const override { return omega_.eval(p).f; }
  Vec2 vorticity_grad(Vec2 p) const override {
    const auto j = omega_.eval(p);
    return {j.fx, j.fy};
  }

 private:
  HermiteGrid psi_;
  HermiteGrid omega_;
};

}  // namespace detail

/// Builds a C1 field from sampled values (bicubic Hermite with fourth-order
/// nodal derivatives; periodic directions wrap). Grids are user-asserted steady.
inline StreamField load_grid_field(const GridData& grid, const DomainSpec& domain) {
  if (grid.nx < 8 || grid.ny < 8) fail(ErrorKind::invalid_argument, "grid: dimensions must be at least 8x8");
  if (static_cast<std::size_t>(grid.nx) * grid.ny != grid.values.size()) {
    fail(ErrorKind::invalid_argument, "grid: header declares " + std::to_string(grid.nx) + "x" +
                                          std::to_string(grid.ny) + " but " + std::to_string(grid.values.size()) +
                                          " values were given");
  }
  if (!(grid.dx > 0.0) || !(grid.dy > 0.0)) fail(ErrorKind::invalid_argument, "grid: dx and dy must be positive");
  for (double v : grid.values)
    if (!std::isfinite(v)) fail(ErrorKind::invalid_argument, "grid: non-finite sample value");
  if (grid.kind != domain.kind()) {
    fail(ErrorKind::invalid_argument, std::string("grid: header kind '") + to_string(grid.kind) +
                                          "' does not match domain kind '" + to_string(domain.kind()) + "'");
  }
  const Box& b = domain.box();
  const double tol = 1e-9 * domain.diameter();
  auto check_axis = [&](bool periodic, double o, double h, int n, double lo, double hi, const char* axis) {
    if (periodic) {
      if (std::abs(n * h - (hi - lo)) > tol || std::abs(o - lo) > tol) {
        fail(ErrorKind::invalid_argument, std::string("grid: periodic ") + axis +
                                              " axis must have n*d equal to the period and start at the domain edge");
      }
    } else if (o > lo + tol || o + (n - 1) * h < hi - tol) {
      fail(ErrorKind::invalid_argument, std::string("grid: ") + axis + " axis does not cover the domain");
    }
  };
  check_axis(domain.periodic_x(), grid.x0, grid.dx, grid.nx, b.xmin, b.xmax, "x");
  check_axis(domain.periodic_y(), grid.y0, grid.dy, grid.ny, b.ymin, b.ymax, "y");

  auto src = std::make_shared<detail::GridSource>(grid, domain.periodic_x(), domain.periodic_y());
  ParamMap params{{"nx", grid.nx}, {"ny", grid.ny}, {"dx", grid.dx}, {"dy", grid.dy}};
  return {domain, src, SourceKind::grid, "grid", params,
          "piecewise bicubic Hermite (C1), user-asserted steady"};
}

/// Max over boundary samples of |perp(grad psi) . n|.
inline double boundary_tangency_residual(const StreamField& field, int n_samples) {
  const DomainSpec& dom = field.domain();
  if (!dom.has_boundary()) fail(ErrorKind::not_applicable, "boundary_tangency_residual: torus has no boundary");
  require(n_samples >= 16, "boundary_tangency_residual: need at least 16 samples per component");
  double worst = 0.0;
  for (const auto& s : dom.boundary_samples(n_samples)) {
    worst = std::max(worst, std::abs(dot(field.velocity(s.point), s.normal)));
  }
  return worst;
}

}  // namespace eulerspec
