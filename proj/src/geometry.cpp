#include "otrom/mesh.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

namespace otrom {

namespace {
std::mutex log_mutex;
LogSink log_sink;
}  // namespace

void set_log_sink(LogSink sink) {
  std::lock_guard lock(log_mutex);
  log_sink = std::move(sink);
}

void log_message(const std::string& msg) {
  std::lock_guard lock(log_mutex);
  if (log_sink) log_sink(msg);
}

// ---------------------------------------------------------------------------
// Fields

Field make_field(const Mesh& mesh, Layout layout, int n_components, double fill) {
  Field f;
  f.layout = layout;
  const int rows = layout == Layout::continuous ? mesh.n_nodes() : mesh.n_elements() * mesh.n_local();
  f.values = Eigen::MatrixXd::Constant(rows, n_components, fill);
  return f;
}

Field nodal_field(const Mesh& mesh, int n_components,
                  const std::function<Eigen::VectorXd(const Vec2&)>& f) {
  Field out = make_field(mesh, Layout::continuous, n_components);
  for (int i = 0; i < mesh.n_nodes(); ++i) out.values.row(i) = f(mesh.nodes()[i]).transpose();
  return out;
}

void check_field(const Mesh& mesh, const Field& field) {
  const int rows =
      field.layout == Layout::continuous ? mesh.n_nodes() : mesh.n_elements() * mesh.n_local();
  require(field.n_rows() == rows, "geometry", "field does not live on this mesh");
  require(field.values.allFinite(), "geometry", "field has non-finite values");
}

Eigen::MatrixXd element_values(const Mesh& mesh, const Field& field, int e) {
  const int nl = mesh.n_local();
  if (field.layout == Layout::discontinuous) return field.values.middleRows(e * nl, nl);
  Eigen::MatrixXd v(nl, field.n_components());
  auto ids = mesh.element_nodes(e);
  for (int i = 0; i < nl; ++i) v.row(i) = field.values.row(ids[i]);
  return v;
}

Field to_discontinuous(const Mesh& mesh, const Field& field) {
  if (field.layout == Layout::discontinuous) return field;
  Field out = make_field(mesh, Layout::discontinuous, field.n_components());
  for (int e = 0; e < mesh.n_elements(); ++e)
    out.values.middleRows(e * mesh.n_local(), mesh.n_local()) = element_values(mesh, field, e);
  return out;
}

MeshMapping MeshMapping::identity(const Mesh& mesh, double parameter) {
  return {mesh.nodes(), parameter};
}

Mesh apply_mapping(const Mesh& reference, const MeshMapping& mapping) {
  return reference.with_nodes(mapping.phi);
}

// ---------------------------------------------------------------------------
// Element geometry

BasisTable tabulate(const ReferenceElement& ref, const std::vector<Vec2>& points) {
  BasisTable t;
  const int n = ref.n_nodes();
  t.values.resize(static_cast<Eigen::Index>(points.size()), n);
  t.grads.resize(points.size(), Eigen::MatrixX2d(n, 2));
  Eigen::VectorXd v(n);
  for (std::size_t q = 0; q < points.size(); ++q) {
    ref.eval_basis(points[q], v);
    t.values.row(static_cast<Eigen::Index>(q)) = v.transpose();
    ref.eval_gradient(points[q], t.grads[q]);
  }
  return t;
}

PointGeometry point_geometry(const Eigen::MatrixX2d& coords, const Eigen::VectorXd& values,
                             const Eigen::MatrixX2d& grads) {
  PointGeometry g;
  g.x = coords.transpose() * values;
  g.jac = coords.transpose() * grads;
  g.det = g.jac.determinant();
  g.inv = g.det != 0.0 ? Mat2(g.jac.inverse()) : Mat2::Zero();
  return g;
}

Eigen::VectorXd quadrature_integrate(const Mesh& mesh, const Field& field,
                                     const MeshMapping* mapping) {
  check_field(mesh, field);
  const Mesh* geom = &mesh;
  Mesh mapped;
  if (mapping) {
    mapped = apply_mapping(mesh, *mapping);
    geom = &mapped;
  }
  const auto& ref = mesh.reference();
  const auto& rule = ref.quadrature();
  const BasisTable tab = tabulate(ref, rule.points);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(field.n_components());
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixX2d X = geom->element_coords(e);
    const Eigen::MatrixXd V = element_values(mesh, field, e);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Eigen::VectorXd N = tab.values.row(q).transpose();
      const double det = (X.transpose() * tab.grads[q]).determinant();
      if (!(det > 0.0))
        throw TanglingError("nonpositive Jacobian in element " + std::to_string(e));
      total += rule.weights[q] * det * (V.transpose() * N);
    }
  }
  return total;
}

double domain_area(const Mesh& mesh, const MeshMapping* mapping) {
  return quadrature_integrate(mesh, make_field(mesh, Layout::continuous, 1, 1.0), mapping)[0];
}

Field average_duplicates(const Mesh& mesh, const Field& disc) {
  require(disc.layout == Layout::discontinuous, "geometry",
          "average_duplicates expects a discontinuous field");
  check_field(mesh, disc);
  Field out = make_field(mesh, Layout::continuous, disc.n_components());
  std::vector<int> count(mesh.n_nodes(), 0);
  const int nl = mesh.n_local();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    auto ids = mesh.element_nodes(e);
    for (int i = 0; i < nl; ++i) {
      out.values.row(ids[i]) += disc.values.row(e * nl + i);
      ++count[ids[i]];
    }
  }
  for (int n = 0; n < mesh.n_nodes(); ++n)
    if (count[n] > 0) out.values.row(n) /= count[n];
  return out;
}

MeshMapping average_duplicate_dofs(const Mesh& mesh, const Field& q, double parameter) {
  require(q.n_components() == 2, "geometry", "a mapping field has two components");
  const Field avg = average_duplicates(mesh, q);
  MeshMapping m;
  m.parameter = parameter;
  m.phi.resize(mesh.n_nodes());
  for (int n = 0; n < mesh.n_nodes(); ++n) m.phi[n] = avg.values.row(n).transpose();
  return m;
}

JacobianData mapping_jacobian(const Mesh& reference, const MeshMapping& mapping) {
  require(static_cast<int>(mapping.phi.size()) == reference.n_nodes(), "geometry",
          "mapping size does not match mesh");
  const auto& ref = reference.reference();
  const auto& rule = ref.quadrature();
  const BasisTable tab = tabulate(ref, rule.points);
  const Mesh mapped = apply_mapping(reference, mapping);
  JacobianData out;
  out.min_det = std::numeric_limits<double>::infinity();
  for (int e = 0; e < reference.n_elements(); ++e) {
    const Eigen::MatrixX2d X = reference.element_coords(e);
    const Eigen::MatrixX2d Y = mapped.element_coords(e);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Mat2 jx = X.transpose() * tab.grads[q];
      const Mat2 jy = Y.transpose() * tab.grads[q];
      const Mat2 g = jy * jx.inverse();
      out.grad.push_back(g);
      out.det.push_back(g.determinant());
      out.min_det = std::min(out.min_det, out.det.back());
    }
  }
  return out;
}

double min_geometric_jacobian(const Mesh& mesh) {
  const auto& ref = mesh.reference();
  const BasisTable tab = tabulate(ref, ref.quadrature().points);
  double m = std::numeric_limits<double>::infinity();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixX2d X = mesh.element_coords(e);
    for (const auto& g : tab.grads) m = std::min(m, (X.transpose() * g).determinant());
  }
  return m;
}

MeshMapping snap_corners(const Mesh& reference, const MeshMapping& mapping,
                         const std::vector<Vec2>& corners, double radius, SnapReport* report) {
  MeshMapping out = mapping;
  const auto& ref = reference.reference();
  // Boundary vertices and the boundary faces touching each one.
  std::map<int, std::vector<std::pair<int, int>>> vertex_faces;
  for (const auto& bf : reference.boundary_faces()) {
    const auto& fn = ref.face_nodes(bf.face);
    auto en = reference.element_nodes(bf.element);
    const int a = en[fn.front()], b = en[fn.back()];
    vertex_faces[a].emplace_back(a, b);
    vertex_faces[b].emplace_back(a, b);
  }
  SnapReport rep;
  for (const Vec2& corner : corners) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& [node, faces] : vertex_faces) {
      const double d = (mapping.phi[node] - corner).norm();
      if (d < best_dist) {
        best_dist = d;
        best = node;
      }
    }
    if (best < 0) continue;
    double r = radius;
    if (r <= 0.0) {
      double edge = 0.0;
      for (const auto& [a, b] : vertex_faces[best])
        edge = std::max(edge, (mapping.phi[a] - mapping.phi[b]).norm());
      r = 2.0 * edge;
    }
    if (best_dist <= r) {
      out.phi[best] = corner;
      ++rep.snapped;
    } else {
      ++rep.missed;
      std::ostringstream os;
      os << "snap_corners: no boundary node within " << r << " of corner (" << corner.x() << ", "
         << corner.y() << ")";
      log_message(os.str());
    }
  }
  if (report) *report = rep;
  const double min_det = min_geometric_jacobian(apply_mapping(reference, out));
  if (!(min_det > 0.0)) throw TanglingError("corner snapping produced a tangled element");
  return out;
}

// ---------------------------------------------------------------------------
// Point location

PointLocator::PointLocator(const Mesh& mesh) : mesh_(&mesh) {
  const int ne = mesh.n_elements();
  coords_.reserve(ne);
  boxes_.reserve(ne);
  for (int e = 0; e < ne; ++e) {
    coords_.push_back(mesh.element_coords(e));
    Eigen::AlignedBox2d box;
    for (int i = 0; i < coords_.back().rows(); ++i) box.extend(Vec2(coords_.back().row(i)));
    const Vec2 pad = 0.1 * box.sizes() + Vec2::Constant(1e-12);
    box.extend(Vec2(box.min() - pad));
    box.extend(Vec2(box.max() + pad));
    boxes_.push_back(box);
    bounds_.extend(box);
  }
  if (ne == 0) return;
  const int nb = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(ne))));
  nbx_ = nby_ = nb;
  buckets_.assign(static_cast<std::size_t>(nbx_) * nby_, {});
  const Vec2 size = bounds_.sizes();
  auto cell = [&](const Vec2& x, int& ix, int& iy) {
    ix = std::clamp(static_cast<int>((x.x() - bounds_.min().x()) / size.x() * nbx_), 0, nbx_ - 1);
    iy = std::clamp(static_cast<int>((x.y() - bounds_.min().y()) / size.y() * nby_), 0, nby_ - 1);
  };
  for (int e = 0; e < ne; ++e) {
    int x0, y0, x1, y1;
    cell(boxes_[e].min(), x0, y0);
    cell(boxes_[e].max(), x1, y1);
    for (int iy = y0; iy <= y1; ++iy)
      for (int ix = x0; ix <= x1; ++ix) buckets_[ix + nbx_ * iy].push_back(e);
  }
}

bool PointLocator::invert(int e, const Vec2& x, Vec2& xi) const {
  const auto& ref = mesh_->reference();
  const Eigen::MatrixX2d& X = coords_[e];
  const int n = ref.n_nodes();
  Eigen::VectorXd N(n);
  Eigen::MatrixX2d dN(n, 2);
  xi = ref.centroid();
  const double scale = std::max(boxes_[e].sizes().maxCoeff(), 1e-300);
  for (int it = 0; it < 20; ++it) {
    ref.eval_basis(xi, N);
    ref.eval_gradient(xi, dN);
    const Vec2 r = X.transpose() * N - x;
    if (r.norm() <= 1e-12 * scale) return true;
    const Mat2 J = X.transpose() * dN;
    const double det = J.determinant();
    if (!(std::abs(det) > 0.0)) return false;
    Vec2 step = J.inverse() * r;
    if (!step.allFinite()) return false;
    xi -= step;
    if (xi.norm() > 10.0) return false;
  }
  ref.eval_basis(xi, N);
  return (X.transpose() * N - x).norm() <= 1e-10 * scale;
}

PointLocator::Hit PointLocator::locate(const Vec2& x) const {
  Hit hit;
  const int ne = mesh_->n_elements();
  if (ne == 0) return hit;
  const auto& ref = mesh_->reference();
  const Vec2 size = bounds_.sizes();
  const int ix = std::clamp(static_cast<int>((x.x() - bounds_.min().x()) / size.x() * nbx_), 0, nbx_ - 1);
  const int iy = std::clamp(static_cast<int>((x.y() - bounds_.min().y()) / size.y() * nby_), 0, nby_ - 1);
  Vec2 xi;
  if (bounds_.contains(x)) {
    for (int e : buckets_[ix + nbx_ * iy]) {
      if (!boxes_[e].contains(x)) continue;
      if (invert(e, x, xi) && ref.contains(xi, 1e-10)) {
        hit.element = e;
        hit.xi = ref.clamp(xi);
        hit.distance = 0.0;
        return hit;
      }
    }
  }
  // Outside every element: nearest point by projected Newton iterations.
  const int n = ref.n_nodes();
  Eigen::VectorXd N(n);
  Eigen::MatrixX2d dN(n, 2);
  auto nearest_in = [&](int e, Vec2& best_xi) {
    const Eigen::MatrixX2d& X = coords_[e];
    Vec2 z = ref.centroid();
    for (int it = 0; it < 30; ++it) {
      ref.eval_basis(z, N);
      ref.eval_gradient(z, dN);
      const Vec2 r = X.transpose() * N - x;
      const Mat2 J = X.transpose() * dN;
      // Gauss-Newton step on |x(z) - x|^2, projected onto the element.
      const Mat2 JtJ = J.transpose() * J;
      if (!(std::abs(JtJ.determinant()) > 0.0)) break;
      const Vec2 step = JtJ.inverse() * (J.transpose() * r);
      const Vec2 znew = ref.clamp(z - step);
      if ((znew - z).norm() < 1e-14) {
        z = znew;
        break;
      }
      z = znew;
    }
    ref.eval_basis(z, N);
    best_xi = z;
    return (X.transpose() * N - x).norm();
  };
  auto consider = [&](int e) {
    Vec2 z;
    const double d = nearest_in(e, z);
    if (d < hit.distance || hit.element < 0) {
      hit.element = e;
      hit.xi = z;
      hit.distance = d;
    }
  };
  hit.distance = std::numeric_limits<double>::infinity();
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int bx = ix + dx, by = iy + dy;
      if (bx < 0 || by < 0 || bx >= nbx_ || by >= nby_) continue;
      for (int e : buckets_[bx + nbx_ * by]) consider(e);
    }
  const double bucket = std::min(size.x() / nbx_, size.y() / nby_);
  if (hit.element < 0 || hit.distance > bucket)
    for (int e = 0; e < ne; ++e) consider(e);
  if (hit.distance < 1e-13 * std::max(1.0, size.maxCoeff())) hit.distance = 0.0;
  return hit;
}

Eigen::MatrixXd interpolate_to_points(const PointLocator& locator, const Field& field,
                                      const std::vector<Vec2>& points, double tol) {
  const Mesh& mesh = locator.mesh();
  check_field(mesh, field);
  const auto& ref = mesh.reference();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), field.n_components());
  Eigen::VectorXd N(ref.n_nodes());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto hit = locator.locate(points[k]);
    if (hit.element < 0 || hit.distance > tol) {
      std::ostringstream os;
      os << "point (" << points[k].x() << ", " << points[k].y() << ") lies outside the mesh by "
         << hit.distance;
      throw InvalidInput("geometry", os.str());
    }
    ref.eval_basis(hit.xi, N);
    out.row(static_cast<Eigen::Index>(k)) =
        (element_values(mesh, field, hit.element).transpose() * N).transpose();
  }
  return out;
}

Eigen::MatrixXd interpolate_to_points(const Mesh& mesh, const Field& field,
                                      const std::vector<Vec2>& points, double tol) {
  const PointLocator locator(mesh);
  return interpolate_to_points(locator, field, points, tol);
}

int retag_boundary(const Mesh& reference, const MeshMapping& mapping, Mesh& mapped) {
  const auto& ref = reference.reference();
  const auto& segs = reference.segments();
  Eigen::VectorXd N(ref.n_nodes());
  std::vector<BoundaryFace> faces = reference.boundary_faces();
  int changed = 0;
  for (auto& bf : faces) {
    ref.eval_basis(ref.face_point(bf.face, 0.0), N);
    Vec2 mid = Vec2::Zero();
    auto en = reference.element_nodes(bf.element);
    for (int i = 0; i < ref.n_nodes(); ++i) mid += N[i] * mapping.phi[en[i]];
    int best = bf.segment;
    double best_d = (segs[bf.segment].curve.project(mid) - mid).norm();
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const double d = (segs[s].curve.project(mid) - mid).norm();
      if (d < best_d - 1e-12) {
        best_d = d;
        best = static_cast<int>(s);
      }
    }
    if (best != bf.segment) {
      std::ostringstream os;
      os << "retag: face (" << bf.element << ", " << bf.face << ") moved from "
         << segs[bf.segment].name << " to " << segs[best].name;
      log_message(os.str());
      bf.segment = best;
      ++changed;
    }
  }
  mapped = mapped.with_boundary_faces(std::move(faces));
  return changed;
}

}  // namespace otrom
