#pragma once

#include <cmath>

namespace eulerspec {

/// Point or vector in the plane, in domain units.
struct Vec2 {
  double x{0.0};
  double y{0.0};

  constexpr Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
  friend constexpr Vec2 operator-(const Vec2& a) { return {-a.x, -a.y}; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }

/// Perpendicular gradient convention used throughout: perp(g) = (-g_y, g_x).
constexpr Vec2 perp(const Vec2& g) { return {-g.y, g.x}; }

inline Vec2 normalized(const Vec2& a) {
  const double n = norm(a);
  return n > 0.0 ? a * (1.0 / n) : Vec2{};
}

/// Symmetric 2x2 matrix (Hessian of the stream function).
struct Sym2 {
  double xx{0.0};
  double xy{0.0};
  double yy{0.0};

  constexpr double det() const { return xx * yy - xy * xy; }
  constexpr double trace() const { return xx + yy; }
  double frobenius() const { return std::sqrt(xx * xx + 2.0 * xy * xy + yy * yy); }
  constexpr Vec2 operator*(const Vec2& v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }

  struct Eigen2 {
    double lambda[2];  // ascending
    Vec2 vec[2];
  };

  /// Closed-form symmetric eigen-decomposition, eigenvalues ascending.
  Eigen2 eigen() const {
    const double m = 0.5 * (xx + yy);
    const double d = std::hypot(0.5 * (xx - yy), xy);
    Eigen2 e{};
    e.lambda[0] = m - d;
    e.lambda[1] = m + d;
    if (d == 0.0) {
      e.vec[0] = {1.0, 0.0};
      e.vec[1] = {0.0, 1.0};
      return e;
    }
    // Eigenvector for the larger eigenvalue; pick the better-conditioned form.
    Vec2 v1 = (xx >= yy) ? Vec2{e.lambda[1] - yy, xy} : Vec2{xy, e.lambda[1] - xx};
    v1 = normalized(v1);
    e.vec[1] = v1;
    e.vec[0] = perp(v1);
    return e;
  }
};

}  // namespace eulerspec
