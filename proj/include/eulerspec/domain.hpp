#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "eulerspec/error.hpp"
#include "eulerspec/geometry.hpp"

namespace eulerspec {

enum class DomainKind { disk, annulus, cylinder, torus, rectangle };

inline const char* to_string(DomainKind k) {
  switch (k) {
    case DomainKind::disk: return "disk";
    case DomainKind::annulus: return "annulus";
    case DomainKind::cylinder: return "cylinder";
    case DomainKind::torus: return "torus";
    case DomainKind::rectangle: return "rectangle";
  }
  return "unknown";
}

inline DomainKind parse_domain_kind(const std::string& s) {
  for (auto k : {DomainKind::disk, DomainKind::annulus, DomainKind::cylinder, DomainKind::torus,
                 DomainKind::rectangle}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorKind::invalid_argument, "unknown domain kind '" + s + "'");
}

struct Box {
  double xmin{0.0};
  double xmax{0.0};
  double ymin{0.0};
  double ymax{0.0};
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

/// A labeled closed boundary curve Sigma_i.
struct BoundaryComponent {
  std::string label;
};

struct BoundarySample {
  Vec2 point;
  Vec2 normal;  // outward unit normal
  int component{0};
};

/// One of the admissible flow domains. Disk and annulus are centered at the
/// origin and handled in Cartesian coordinates; the cylinder is periodic in x.
class DomainSpec {
 public:
  static DomainSpec disk(double R) {
    require(R > 0.0 && std::isfinite(R), "disk: radius must be positive");
    DomainSpec d(DomainKind::disk);
    d.r_out_ = R;
    d.box_ = {-R, R, -R, R};
    d.components_ = {{"circle r=R"}};
    return d;
  }

  static DomainSpec annulus(double r_in, double r_out) {
    require(r_in > 0.0 && r_in < r_out && std::isfinite(r_out), "annulus: need 0 < r_in < r_out");
    DomainSpec d(DomainKind::annulus);
    d.r_in_ = r_in;
    d.r_out_ = r_out;
    d.box_ = {-r_out, r_out, -r_out, r_out};
    d.components_ = {{"inner circle"}, {"outer circle"}};
    return d;
  }

  static DomainSpec cylinder(double L, double a, double b) {
    require(L > 0.0 && std::isfinite(L), "cylinder: period L must be positive");
    require(a < b && std::isfinite(a) && std::isfinite(b), "cylinder: need a < b");
    DomainSpec d(DomainKind::cylinder);
    d.box_ = {0.0, L, a, b};
    d.components_ = {{"bottom y=a"}, {"top y=b"}};
    return d;
  }

  static DomainSpec torus(double Lx, double Ly) {
    require(Lx > 0.0 && Ly > 0.0 && std::isfinite(Lx) && std::isfinite(Ly),
            "torus: periods must be positive");
    DomainSpec d(DomainKind::torus);
    d.box_ = {0.0, Lx, 0.0, Ly};
    return d;
  }

  static DomainSpec rectangle(double x0, double x1, double y0, double y1) {
    require(x0 < x1 && y0 < y1, "rectangle: need x0 < x1 and y0 < y1");
    DomainSpec d(DomainKind::rectangle);
    d.box_ = {x0, x1, y0, y1};
    d.components_ = {{"perimeter"}};
    return d;
  }

  DomainKind kind() const { return kind_; }
  const Box& box() const { return box_; }
  double r_in() const { return r_in_; }
  double r_out() const { return r_out_; }
  const std::vector<BoundaryComponent>& boundary_components() const { return components_; }
  bool has_boundary() const { return !components_.empty(); }

  bool periodic_x() const { return kind_ == DomainKind::cylinder || kind_ == DomainKind::torus; }
  bool periodic_y() const { return kind_ == DomainKind::torus; }
  double period_x() const { return box_.width(); }
  double period_y() const { return box_.height(); }

  /// Wrap periodic coordinates into the fundamental cell.
  Vec2 wrap(Vec2 p) const {
    if (periodic_x()) p.x = wrap_into(p.x, box_.xmin, box_.width());
    if (periodic_y()) p.y = wrap_into(p.y, box_.ymin, box_.height());
    return p;
  }

  /// Reduce a displacement to its minimum periodic image.
  Vec2 min_image(Vec2 d) const {
    if (periodic_x()) d.x -= box_.width() * std::round(d.x / box_.width());
    if (periodic_y()) d.y -= box_.height() * std::round(d.y / box_.height());
    return d;
  }

  /// Membership in the closed domain (after wrapping), with absolute slack.
  bool contains(Vec2 p, double slack = 0.0) const {
    p = wrap(p);
    switch (kind_) {
      case DomainKind::disk: return std::hypot(p.x, p.y) <= r_out_ + slack;
      case DomainKind::annulus: {
        const double r = std::hypot(p.x, p.y);
        return r >= r_in_ - slack && r <= r_out_ + slack;
      }
      case DomainKind::cylinder: return p.y >= box_.ymin - slack && p.y <= box_.ymax + slack;
      case DomainKind::torus: return true;
      case DomainKind::rectangle:
        return p.x >= box_.xmin - slack && p.x <= box_.xmax + slack && p.y >= box_.ymin - slack &&
               p.y <= box_.ymax + slack;
    }
    return false;
  }

  /// Distance from an interior point to the boundary (infinity on the torus).
  double distance_to_boundary(Vec2 p) const {
    p = wrap(p);
    switch (kind_) {
      case DomainKind::disk: return std::abs(r_out_ - std::hypot(p.x, p.y));
      case DomainKind::annulus: {
        const double r = std::hypot(p.x, p.y);
        return std::min(std::abs(r - r_in_), std::abs(r_out_ - r));
      }
      case DomainKind::cylinder: return std::min(std::abs(p.y - box_.ymin), std::abs(box_.ymax - p.y));
      case DomainKind::torus: return INFINITY;
      case DomainKind::rectangle:
        return std::min({std::abs(p.x - box_.xmin), std::abs(box_.xmax - p.x), std::abs(p.y - box_.ymin),
                         std::abs(box_.ymax - p.y)});
    }
    return INFINITY;
  }

  /// Boundary component a point outside the domain is attached to.
  int outside_component(Vec2 p) const {
    p = wrap(p);
    switch (kind_) {
      case DomainKind::annulus: return std::hypot(p.x, p.y) < r_in_ ? 0 : 1;
      case DomainKind::cylinder: return p.y < 0.5 * (box_.ymin + box_.ymax) ? 0 : 1;
      case DomainKind::torus: return -1;
      default: return 0;
    }
  }

  double area() const {
    constexpr double pi = std::numbers::pi;
    switch (kind_) {
      case DomainKind::disk: return pi * r_out_ * r_out_;
      case DomainKind::annulus: return pi * (r_out_ * r_out_ - r_in_ * r_in_);
      default: return box_.width() * box_.height();
    }
  }

  /// Length scale used for tolerances and caps.
  double diameter() const {
    switch (kind_) {
      case DomainKind::disk:
      case DomainKind::annulus: return 2.0 * r_out_;
      default: return std::hypot(box_.width(), box_.height());
    }
  }

  /// Centroid-like reference point (center of the bounding box).
  Vec2 center() const { return {0.5 * (box_.xmin + box_.xmax), 0.5 * (box_.ymin + box_.ymax)}; }

  /// n samples per boundary component with outward normals. Rectangle samples
  /// avoid the corners, where the normal is undefined.
  std::vector<BoundarySample> boundary_samples(int n) const {
    require(n >= 1, "boundary_samples: n must be positive");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<BoundarySample> out;
    auto circle = [&](double r, int comp, double normal_sign) {
      for (int i = 0; i < n; ++i) {
        const double t = two_pi * (i + 0.5) / n;
        const Vec2 u{std::cos(t), std::sin(t)};
        out.push_back({u * r, u * normal_sign, comp});
      }
    };
    switch (kind_) {
      case DomainKind::disk: circle(r_out_, 0, 1.0); break;
      case DomainKind::annulus:
        circle(r_in_, 0, -1.0);
        circle(r_out_, 1, 1.0);
        break;
      case DomainKind::cylinder:
        for (int i = 0; i < n; ++i) {
          const double x = box_.xmin + box_.width() * (i + 0.5) / n;
          out.push_back({{x, box_.ymin}, {0.0, -1.0}, 0});
        }
        for (int i = 0; i < n; ++i) {
          const double x = box_.xmin + box_.width() * (i + 0.5) / n;
          out.push_back({{x, box_.ymax}, {0.0, 1.0}, 1});
        }
        break;
      case DomainKind::torus: break;
      case DomainKind::rectangle: {
        const double w = box_.width(), h = box_.height(), per = 2.0 * (w + h);
        for (int i = 0; i < n; ++i) {
          double s = per * (i + 0.5) / n;
          if (s < w) {
            out.push_back({{box_.xmin + s, box_.ymin}, {0.0, -1.0}, 0});
          } else if ((s -= w) < h) {
            out.push_back({{box_.xmax, box_.ymin + s}, {1.0, 0.0}, 0});
          } else if ((s -= h) < w) {
            out.push_back({{box_.xmax - s, box_.ymax}, {0.0, 1.0}, 0});
          } else {
            s -= w;
            out.push_back({{box_.xmin, box_.ymax - s}, {-1.0, 0.0}, 0});
          }
        }
        break;
      }
    }
    return out;
  }

 private:
  explicit DomainSpec(DomainKind k) : kind_(k) {}

  static double wrap_into(double v, double lo, double period) {
    double t = std::fmod(v - lo, period);
    if (t < 0.0) t += period;
    if (t >= period) t -= period;
    return lo + t;
  }

  DomainKind kind_;
  Box box_{};
  double r_in_{0.0};
  double r_out_{0.0};
  std::vector<BoundaryComponent> components_;
};

}  // namespace eulerspec
