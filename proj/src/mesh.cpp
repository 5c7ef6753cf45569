#include "otrom/mesh.hpp"

#include <algorithm>
#include <map>
#include <numbers>
#include <set>

namespace otrom {

Mesh::Mesh(std::string case_name, ElementType type, int order, std::vector<Vec2> nodes,
           std::vector<int> connectivity, std::vector<BoundaryFace> boundary_faces,
           std::vector<BoundarySegment> segments, std::vector<Vec2> corners)
    : case_name_(std::move(case_name)),
      type_(type),
      order_(order),
      ref_(reference_element(type, order)),
      nodes_(std::move(nodes)),
      conn_(std::move(connectivity)),
      boundary_faces_(std::move(boundary_faces)),
      segments_(std::move(segments)),
      corners_(std::move(corners)) {
  n_local_ = ref_->n_nodes();
  require(conn_.size() % n_local_ == 0, "geometry", "connectivity size mismatch");
  for (int id : conn_)
    require(id >= 0 && id < n_nodes(), "geometry", "connectivity references a missing node");
  for (const auto& bf : boundary_faces_) {
    require(bf.element >= 0 && bf.element < n_elements(), "geometry", "bad boundary face element");
    require(bf.face >= 0 && bf.face < ref_->n_faces(), "geometry", "bad boundary face index");
    require(bf.segment >= 0 && bf.segment < static_cast<int>(segments_.size()), "geometry",
            "boundary face without a valid segment tag");
  }
}

Eigen::MatrixX2d Mesh::element_coords(int e) const {
  Eigen::MatrixX2d c(n_local_, 2);
  auto ids = element_nodes(e);
  for (int i = 0; i < n_local_; ++i) c.row(i) = nodes_[ids[i]].transpose();
  return c;
}

Mesh Mesh::with_nodes(std::vector<Vec2> nodes) const {
  require(nodes.size() == nodes_.size(), "geometry", "node count mismatch in with_nodes");
  Mesh m = *this;
  m.nodes_ = std::move(nodes);
  return m;
}

Mesh Mesh::with_boundary_faces(std::vector<BoundaryFace> faces) const {
  Mesh m = *this;
  m.boundary_faces_ = std::move(faces);
  return m;
}

std::vector<int> Mesh::boundary_nodes(int segment) const {
  std::set<int> ids;
  for (const auto& bf : boundary_faces_) {
    if (segment >= 0 && bf.segment != segment) continue;
    auto en = element_nodes(bf.element);
    for (int ln : ref_->face_nodes(bf.face)) ids.insert(en[ln]);
  }
  return {ids.begin(), ids.end()};
}

double Mesh::mean_edge_length() const {
  double sum = 0.0;
  int count = 0;
  const auto& vn = ref_->vertex_nodes();
  for (int e = 0; e < n_elements(); ++e) {
    auto en = element_nodes(e);
    for (std::size_t k = 0; k < vn.size(); ++k) {
      const Vec2& a = nodes_[en[vn[k]]];
      const Vec2& b = nodes_[en[vn[(k + 1) % vn.size()]]];
      sum += (b - a).norm();
      ++count;
    }
  }
  return count ? sum / count : 0.0;
}

double Mesh::diameter() const {
  Eigen::AlignedBox2d box;
  for (const auto& x : nodes_) box.extend(x);
  return box.isEmpty() ? 0.0 : box.diagonal().norm();
}

int Mesh::find_segment(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].name == name) return static_cast<int>(i);
  return -1;
}

Mesh elevate_order(const Mesh& mesh, int order) {
  require(order >= 1, "geometry", "polynomial order must be >= 1");
  const auto ref = reference_element(mesh.element_type(), order);
  const BasisTable tab = tabulate(mesh.reference(), ref->nodes());
  const double quantum = 1e-9 * std::max(mesh.diameter(), 1e-300);
  std::map<std::pair<std::int64_t, std::int64_t>, int> index;
  std::vector<Vec2> nodes;
  std::vector<int> conn;
  conn.reserve(static_cast<std::size_t>(mesh.n_elements()) * ref->n_nodes());
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixX2d X = tab.values * mesh.element_coords(e);
    for (int i = 0; i < ref->n_nodes(); ++i) {
      const Vec2 x = X.row(i).transpose();
      const auto kx = static_cast<std::int64_t>(std::llround(x.x() / quantum));
      const auto ky = static_cast<std::int64_t>(std::llround(x.y() / quantum));
      int id = -1;
      for (int dx = -1; dx <= 1 && id < 0; ++dx)
        for (int dy = -1; dy <= 1 && id < 0; ++dy)
          if (auto it = index.find({kx + dx, ky + dy}); it != index.end()) id = it->second;
      if (id < 0) {
        id = static_cast<int>(nodes.size());
        nodes.push_back(x);
        index[{kx, ky}] = id;
      }
      conn.push_back(id);
    }
  }
  return Mesh(mesh.case_name(), mesh.element_type(), order, std::move(nodes), std::move(conn),
              mesh.boundary_faces(), mesh.segments(), mesh.corners());
}

namespace {

using LogicalMap = std::function<Vec2(double s, double t)>;
// side: 0 = bottom (t = 0), 1 = right (s = 1), 2 = top (t = 1), 3 = left (s = 0);
// index = cell position along that side.
using SideTagger = std::function<int(int side, int index)>;

// Logical coordinate of lattice line I for n cells of order p, using the
// given per-element node distribution on [-1, 1].
double lattice_coordinate(int I, int n, int p, const std::vector<double>& local) {
  const int e = std::min(I / p, n - 1);
  const int i = I - e * p;
  return (e + 0.5 * (local[i] + 1.0)) / n;
}

Mesh structured_quads(const std::string& name, int nx, int ny, int p, const LogicalMap& map,
                      const SideTagger& tag, std::vector<BoundarySegment> segments,
                      std::vector<Vec2> corners) {
  std::vector<double> gll, w;
  gauss_lobatto(p + 1, gll, w);
  const int NX = nx * p + 1, NY = ny * p + 1;
  std::vector<Vec2> nodes(static_cast<std::size_t>(NX) * NY);
  for (int J = 0; J < NY; ++J)
    for (int I = 0; I < NX; ++I)
      nodes[I + NX * J] = map(lattice_coordinate(I, nx, p, gll), lattice_coordinate(J, ny, p, gll));
  std::vector<int> conn;
  std::vector<BoundaryFace> faces;
  for (int ey = 0; ey < ny; ++ey)
    for (int ex = 0; ex < nx; ++ex) {
      const int e = ex + nx * ey;
      for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p; ++i) conn.push_back((ex * p + i) + NX * (ey * p + j));
      if (ey == 0) faces.push_back({e, 0, tag(0, ex)});
      if (ex == nx - 1) faces.push_back({e, 1, tag(1, ey)});
      if (ey == ny - 1) faces.push_back({e, 2, tag(2, ex)});
      if (ex == 0) faces.push_back({e, 3, tag(3, ey)});
    }
  return Mesh(name, ElementType::quadrilateral, p, std::move(nodes), std::move(conn),
              std::move(faces), std::move(segments), std::move(corners));
}

Mesh structured_triangles(const std::string& name, int nx, int ny, int p, const LogicalMap& map,
                          const SideTagger& tag, std::vector<BoundarySegment> segments,
                          std::vector<Vec2> corners) {
  const int NX = nx * p + 1, NY = ny * p + 1;
  std::vector<Vec2> nodes(static_cast<std::size_t>(NX) * NY);
  for (int J = 0; J < NY; ++J)
    for (int I = 0; I < NX; ++I)
      nodes[I + NX * J] = map(double(I) / (NX - 1), double(J) / (NY - 1));
  std::vector<int> conn;
  std::vector<BoundaryFace> faces;
  // Straight-sided elements: high-order nodes sit affinely between the vertices.
  for (int ey = 0; ey < ny; ++ey)
    for (int ex = 0; ex < nx; ++ex) {
      const int I0 = ex * p, J0 = ey * p;
      const Vec2 v00 = nodes[I0 + NX * J0], v10 = nodes[I0 + p + NX * J0];
      const Vec2 v01 = nodes[I0 + NX * (J0 + p)], v11 = nodes[I0 + p + NX * (J0 + p)];
      for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p; ++i) {
          const double r = double(i) / p, s = double(j) / p;
          nodes[I0 + i + NX * (J0 + j)] = i + j <= p ? v00 + r * (v10 - v00) + s * (v01 - v00)
                                                     : v11 + (1 - r) * (v01 - v11) + (1 - s) * (v10 - v11);
        }
    }
  int e = 0;
  for (int ey = 0; ey < ny; ++ey)
    for (int ex = 0; ex < nx; ++ex) {
      const int I0 = ex * p, J0 = ey * p;
      // Lower triangle: local (i, j) -> lattice (I0 + i, J0 + j).
      for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p - j; ++i) conn.push_back((I0 + i) + NX * (J0 + j));
      if (ey == 0) faces.push_back({e, 0, tag(0, ex)});
      if (ex == 0) faces.push_back({e, 2, tag(3, ey)});
      ++e;
      // Upper triangle: local (i, j) -> lattice (I0 + p - i, J0 + p - j).
      for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p - j; ++i) conn.push_back((I0 + p - i) + NX * (J0 + p - j));
      if (ey == ny - 1) faces.push_back({e, 0, tag(2, ex)});
      if (ex == nx - 1) faces.push_back({e, 2, tag(1, ey)});
      ++e;
    }
  return Mesh(name, ElementType::triangle, p, std::move(nodes), std::move(conn), std::move(faces),
              std::move(segments), std::move(corners));
}

double param_or(const std::vector<double>& params, std::size_t i, double fallback) {
  return i < params.size() ? params[i] : fallback;
}

}  // namespace

Mesh build_case_mesh(const CaseDescriptor& desc, std::array<int, 2> resolution, int order) {
  const auto& name = desc.name;
  const int n1 = resolution[0], n2 = resolution[1];
  require(n1 >= 2 && n2 >= 2, "geometry",
          "degenerate resolution " + std::to_string(n1) + "x" + std::to_string(n2) +
              " (need at least 2 elements per direction)");
  require(order >= 1, "geometry", "polynomial order must be >= 1");
  constexpr double pi = std::numbers::pi;

  if (name == "cylinder" || name == "cylinder-annulus") {
    const double a = param_or(desc.params, 0, 3.0);
    const double b = param_or(desc.params, 1, 6.0);
    require(a > 1.0 && b > 1.0, "geometry", "outer ellipse must enclose the cylinder");
    // s: radial (wall -> inflow), t: angular from the top outflow to the bottom one.
    auto map = [a, b](double s, double t) {
      const double th = 0.5 * pi + pi * t;
      const Vec2 in(std::cos(th), std::sin(th));
      const Vec2 out(a * std::cos(th), b * std::sin(th));
      Vec2 x = (1.0 - s) * in + s * out;
      if (std::abs(x.x()) < 1e-15) x.x() = 0.0;
      return x;
    };
    std::vector<BoundarySegment> segs = {
        {"inflow", BoundaryKind::inflow,
         Curve::ellipse_arc({0, 0}, a, b, 0.5 * pi, 1.5 * pi, 1.0)},
        {"outflow_bottom", BoundaryKind::outflow, Curve::line({0, -b}, {0, -1})},
        {"wall", BoundaryKind::wall, Curve::circle_arc({0, 0}, 1.0, 1.5 * pi, 0.5 * pi, -1.0)},
        {"outflow_top", BoundaryKind::outflow, Curve::line({0, 1}, {0, b})},
    };
    auto tag = [](int side, int) {
      switch (side) {
        case 0: return 3;   // t = 0: top outflow
        case 1: return 0;   // s = 1: outer inflow
        case 2: return 1;   // t = 1: bottom outflow
        default: return 2;  // s = 0: cylinder wall
      }
    };
    return structured_quads("cylinder", n1, n2, order, map, tag, std::move(segs),
                            {{0, b}, {0, -b}, {0, -1}, {0, 1}});
  }

  if (name == "bump" || name == "bump-channel" || name == "channel" || name == "square") {
    const bool bump = name == "bump" || name == "bump-channel";
    const double L = bump ? 3.0 : param_or(desc.params, 0, 1.0);
    const double H = bump ? 1.0 : param_or(desc.params, 1, 1.0);
    const double h = bump ? param_or(desc.params, 0, 0.04) : 0.0;
    const bool pressure_outlet = !bump && param_or(desc.params, 2, 0.0) != 0.0;
    require(L > 0 && H > 0 && h >= 0 && h < H, "geometry", "invalid channel dimensions");
    const Curve bottom = Curve::bump_graph(0.0, L, 0.0, bump ? 1.0 : 0.0, bump ? 2.0 : L, h, -1.0);
    auto map = [bottom, L, H](double s, double t) {
      const Vec2 base = bottom.point_at(s);
      return Vec2(s * L, base.y() + t * (H - base.y()));
    };
    const BoundaryKind side_kind = pressure_outlet ? BoundaryKind::symmetry : BoundaryKind::wall;
    std::vector<BoundarySegment> segs = {
        {"bottom", side_kind, bump ? bottom : Curve::line({0, 0}, {L, 0})},
        {"outflow", pressure_outlet ? BoundaryKind::pressure_outlet : BoundaryKind::outflow,
         Curve::line({L, 0}, {L, H})},
        {"top", side_kind, Curve::line({L, H}, {0, H})},
        {"inflow", BoundaryKind::inflow, Curve::line({0, H}, {0, 0})},
    };
    auto tag = [](int side, int) { return side; };
    return structured_quads(bump ? "bump" : "channel", n1, n2, order, map, tag, std::move(segs),
                            {{0, 0}, {L, 0}, {L, H}, {0, H}});
  }

  if (name == "wedge" || name == "double-wedge") {
    const double t1 = std::tan(25.0 * pi / 180.0), t2 = std::tan(37.0 * pi / 180.0);
    const double x1 = 1.0, x2 = 1.5, H = param_or(desc.params, 0, 1.5);
    const double y1 = x1 * t1, y2 = y1 + (x2 - x1) * t2;
    require(H > y2, "geometry", "wedge height must clear the second ramp");
    const int c1 = std::clamp(static_cast<int>(std::lround(n1 * 2.0 / 3.0)), 1, n1 - 1);
    const int c2 = n1 - c1;
    auto wall_y = [=](double x) { return x <= x1 ? x * t1 : y1 + (x - x1) * t2; };
    auto map = [=](double s, double t) {
      const double c = s * n1;
      const double x = c <= c1 ? x1 * c / c1 : x1 + (x2 - x1) * (c - c1) / c2;
      const double yw = wall_y(x);
      return Vec2(x, yw + t * (H - yw));
    };
    std::vector<BoundarySegment> segs = {
        {"ramp1", BoundaryKind::wall, Curve::line({0, 0}, {x1, y1})},
        {"ramp2", BoundaryKind::wall, Curve::line({x1, y1}, {x2, y2})},
        {"outflow", BoundaryKind::outflow, Curve::line({x2, y2}, {x2, H})},
        {"inflow_top", BoundaryKind::inflow, Curve::line({x2, H}, {0, H})},
        {"inflow_left", BoundaryKind::inflow, Curve::line({0, H}, {0, 0})},
    };
    auto tag = [c1](int side, int index) {
      switch (side) {
        case 0: return index < c1 ? 0 : 1;
        case 1: return 2;
        case 2: return 3;
        default: return 4;
      }
    };
    return structured_triangles("wedge", n1, n2, order, map, tag, std::move(segs),
                                {{0, 0}, {x1, y1}, {x2, y2}, {x2, H}, {0, H}});
  }

  throw InvalidInput("geometry", "unknown case '" + name + "'");
}

}  // namespace otrom
