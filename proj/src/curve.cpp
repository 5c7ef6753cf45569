#include "otrom/mesh.hpp"

#include <numbers>

namespace otrom {

namespace {

double unwrap_angle(double theta, double reference) {
  return reference + std::remainder(theta - reference, 2.0 * std::numbers::pi);
}

double bump_height(const std::array<double, 7>& p, double x) {
  const double x0 = p[3], x1 = p[4], h = p[5];
  if (x <= x0 || x >= x1) return p[2];
  const double s = std::sin(std::numbers::pi * (x - x0) / (x1 - x0));
  return p[2] + h * s * s;
}

double bump_slope(const std::array<double, 7>& p, double x) {
  const double x0 = p[3], x1 = p[4], h = p[5];
  if (x <= x0 || x >= x1) return 0.0;
  const double L = x1 - x0;
  return h * std::numbers::pi / L * std::sin(2.0 * std::numbers::pi * (x - x0) / L);
}

}  // namespace

std::string to_string(Curve::Kind kind) {
  switch (kind) {
    case Curve::Kind::line: return "line";
    case Curve::Kind::circle_arc: return "circle_arc";
    case Curve::Kind::ellipse_arc: return "ellipse_arc";
    case Curve::Kind::bump_graph: return "bump_graph";
  }
  return "line";
}

Curve::Kind curve_kind_from_string(const std::string& name) {
  if (name == "line") return Curve::Kind::line;
  if (name == "circle_arc") return Curve::Kind::circle_arc;
  if (name == "ellipse_arc") return Curve::Kind::ellipse_arc;
  if (name == "bump_graph") return Curve::Kind::bump_graph;
  throw InvalidInput("geometry", "unknown curve kind '" + name + "'");
}

Curve Curve::line(const Vec2& a, const Vec2& b) {
  Curve c;
  c.kind = Kind::line;
  c.params = {a.x(), a.y(), b.x(), b.y(), 0, 0, 0};
  return c;
}

Curve Curve::circle_arc(const Vec2& center, double r, double theta0, double theta1, double side) {
  Curve c;
  c.kind = Kind::circle_arc;
  c.params = {center.x(), center.y(), r, theta0, theta1, side, 0};
  return c;
}

Curve Curve::ellipse_arc(const Vec2& center, double a, double b, double theta0, double theta1,
                         double side) {
  Curve c;
  c.kind = Kind::ellipse_arc;
  c.params = {center.x(), center.y(), a, b, theta0, theta1, side};
  return c;
}

Curve Curve::bump_graph(double x_start, double x_end, double y0, double bump_x0, double bump_x1,
                        double height, double side) {
  Curve c;
  c.kind = Kind::bump_graph;
  c.params = {x_start, x_end, y0, bump_x0, bump_x1, height, side};
  return c;
}

double Curve::g(const Vec2& x) const {
  const auto& p = params;
  switch (kind) {
    case Kind::line: {
      const Vec2 a(p[0], p[1]), t = Vec2(p[2], p[3]) - a;
      const Vec2 n = Vec2(t.y(), -t.x()).normalized();
      return n.dot(x - a);
    }
    case Kind::circle_arc:
      return p[5] * ((x - Vec2(p[0], p[1])).norm() - p[2]);
    case Kind::ellipse_arc: {
      const Vec2 d = x - Vec2(p[0], p[1]);
      const double rho = std::hypot(d.x() / p[2], d.y() / p[3]);
      return p[6] * (rho - 1.0) * std::sqrt(p[2] * p[3]);
    }
    case Kind::bump_graph:
      return p[6] * (bump_height(p, x.x()) - x.y());
  }
  return 0.0;
}

Vec2 Curve::grad_g(const Vec2& x) const {
  const auto& p = params;
  switch (kind) {
    case Kind::line: {
      const Vec2 t = Vec2(p[2] - p[0], p[3] - p[1]);
      return Vec2(t.y(), -t.x()).normalized();
    }
    case Kind::circle_arc: {
      const Vec2 d = x - Vec2(p[0], p[1]);
      const double r = d.norm();
      return r > 0 ? Vec2(p[5] * d / r) : Vec2(0.0, 0.0);
    }
    case Kind::ellipse_arc: {
      const Vec2 d = x - Vec2(p[0], p[1]);
      const double rho = std::hypot(d.x() / p[2], d.y() / p[3]);
      if (rho == 0.0) return {0.0, 0.0};
      const double s = p[6] * std::sqrt(p[2] * p[3]) / rho;
      return {s * d.x() / (p[2] * p[2]), s * d.y() / (p[3] * p[3])};
    }
    case Kind::bump_graph:
      return {p[6] * bump_slope(p, x.x()), -p[6]};
  }
  return {0.0, 0.0};
}

double Curve::parameter(const Vec2& x) const {
  const auto& p = params;
  switch (kind) {
    case Kind::line: {
      const Vec2 a(p[0], p[1]), t = Vec2(p[2], p[3]) - a;
      return (x - a).dot(t) / t.squaredNorm();
    }
    case Kind::circle_arc: {
      const Vec2 d = x - Vec2(p[0], p[1]);
      const double th = unwrap_angle(std::atan2(d.y(), d.x()), 0.5 * (p[3] + p[4]));
      return (th - p[3]) / (p[4] - p[3]);
    }
    case Kind::ellipse_arc: {
      const Vec2 d = x - Vec2(p[0], p[1]);
      const double th =
          unwrap_angle(std::atan2(d.y() / p[3], d.x() / p[2]), 0.5 * (p[4] + p[5]));
      return (th - p[4]) / (p[5] - p[4]);
    }
    case Kind::bump_graph:
      return (x.x() - p[0]) / (p[1] - p[0]);
  }
  return 0.0;
}

Vec2 Curve::point_at(double t) const {
  const auto& p = params;
  switch (kind) {
    case Kind::line:
      return Vec2(p[0], p[1]) + t * Vec2(p[2] - p[0], p[3] - p[1]);
    case Kind::circle_arc: {
      const double th = p[3] + t * (p[4] - p[3]);
      return Vec2(p[0], p[1]) + p[2] * Vec2(std::cos(th), std::sin(th));
    }
    case Kind::ellipse_arc: {
      const double th = p[4] + t * (p[5] - p[4]);
      return Vec2(p[0] + p[2] * std::cos(th), p[1] + p[3] * std::sin(th));
    }
    case Kind::bump_graph: {
      const double x = p[0] + t * (p[1] - p[0]);
      return {x, bump_height(p, x)};
    }
  }
  return {0.0, 0.0};
}

Vec2 Curve::project(const Vec2& x) const {
  const double t = parameter(x);
  if (t < 0.0 || t > 1.0) return point_at(std::clamp(t, 0.0, 1.0));
  switch (kind) {
    case Kind::line:
      return point_at(t);
    case Kind::circle_arc: {
      const Vec2 c(params[0], params[1]);
      const Vec2 d = x - c;
      const double r = d.norm();
      return r > 0 ? Vec2(c + params[2] * d / r) : point_at(0.5);
    }
    case Kind::ellipse_arc:
    case Kind::bump_graph:
      return point_at(t);
  }
  return x;
}

std::string to_string(BoundaryKind kind) {
  switch (kind) {
    case BoundaryKind::wall: return "wall";
    case BoundaryKind::inflow: return "inflow";
    case BoundaryKind::outflow: return "outflow";
    case BoundaryKind::pressure_outlet: return "pressure_outlet";
    case BoundaryKind::symmetry: return "symmetry";
  }
  return "wall";
}

BoundaryKind boundary_kind_from_string(const std::string& name) {
  if (name == "wall") return BoundaryKind::wall;
  if (name == "inflow") return BoundaryKind::inflow;
  if (name == "outflow") return BoundaryKind::outflow;
  if (name == "pressure_outlet") return BoundaryKind::pressure_outlet;
  if (name == "symmetry") return BoundaryKind::symmetry;
  throw InvalidInput("geometry", "unknown boundary kind '" + name + "'");
}

}  // namespace otrom
