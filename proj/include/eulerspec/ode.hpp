#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "eulerspec/geometry.hpp"

namespace eulerspec {

/// Dormand-Prince 5(4) for autonomous planar systems, with FSAL and the
/// standard fourth-order continuous extension over the last accepted step.
class Dopri5 {
 public:
  using Rhs = std::function<Vec2(Vec2)>;

  struct Options {
    double rtol{1e-10};
    double atol{1e-12};
    double h0{0.0};       // 0: automatic initial step
    double hmax{INFINITY};
    double hmin{1e-14};   // relative to max(1, |t|)
  };

  /// Coefficients of the dense interpolant over one step.
  struct Dense {
    double t0{0.0}, h{0.0};
    Vec2 r1, r2, r3, r4, r5;
    Vec2 at(double theta) const {
      const double t1 = 1.0 - theta;
      return r1 + theta * (r2 + t1 * (r3 + theta * (r4 + t1 * r5)));
    }
  };

  Dopri5(Rhs f, Vec2 y0, double t0, Options opt) : f_(std::move(f)), opt_(opt), t_(t0), y_(y0) {
    k1_ = f_(y_);
    h_ = opt_.h0 > 0.0 ? opt_.h0 : initial_step();
  }

  double t() const { return t_; }
  Vec2 y() const { return y_; }
  Vec2 slope() const { return k1_; }
  const Dense& dense() const { return dense_; }
  long evaluations() const { return nfev_; }
  void set_hmax(double h) { opt_.hmax = h; }

  /// Advance by one accepted step. Returns false on step-size underflow or a
  /// non-finite state.
  bool step() {
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                     a76 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;
    constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                     d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                     d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

    for (int attempt = 0; attempt < 200; ++attempt) {
      double h = std::min(h_, opt_.hmax);
      if (h < opt_.hmin * std::max(1.0, std::abs(t_))) return false;
      const Vec2 y = y_;
      const Vec2 k1 = k1_;
      const Vec2 k2 = f_(y + h * (a21 * k1));
      const Vec2 k3 = f_(y + h * (a31 * k1 + a32 * k2));
      const Vec2 k4 = f_(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
      const Vec2 k5 = f_(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const Vec2 k6 = f_(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const Vec2 y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      const Vec2 k7 = f_(y1);
      nfev_ += 6;
      const Vec2 err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      const double sx = opt_.atol + opt_.rtol * std::max(std::abs(y.x), std::abs(y1.x));
      const double sy = opt_.atol + opt_.rtol * std::max(std::abs(y.y), std::abs(y1.y));
      const double en = std::sqrt(0.5 * ((err.x / sx) * (err.x / sx) + (err.y / sy) * (err.y / sy)));
      if (!std::isfinite(en) || !std::isfinite(y1.x) || !std::isfinite(y1.y)) {
        h_ = 0.2 * h;
        continue;
      }
      const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      if (en <= 1.0) {
        const Vec2 ydiff = y1 - y;
        const Vec2 bspl = h * k1 - ydiff;
        dense_.t0 = t_;
        dense_.h = h;
        dense_.r1 = y;
        dense_.r2 = ydiff;
        dense_.r3 = bspl;
        dense_.r4 = ydiff - h * k7 - bspl;
        dense_.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        t_ += h;
        y_ = y1;
        k1_ = k7;
        h_ = h * fac;
        return true;
      }
      h_ = h * std::max(fac, 0.2);
    }
    return false;
  }

 private:
  double initial_step() {
    const double sc = opt_.atol + opt_.rtol * std::max(std::abs(y_.x), std::abs(y_.y));
    const double d0 = norm(y_) / sc, d1 = norm(k1_) / sc;
    double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    const Vec2 k = f_(y_ + h * k1_);
    ++nfev_;
    const double d2 = norm(k - k1_) / sc / h;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min({100.0 * h, h1, opt_.hmax});
  }

  Rhs f_;
  Options opt_;
  double t_;
  Vec2 y_;
  Vec2 k1_;
  double h_{0.0};
  Dense dense_;
  long nfev_{1};
};

}  // namespace eulerspec
