#pragma once

#include "otrom/reference_element.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace otrom {

enum class BoundaryKind { wall, inflow, outflow, pressure_outlet, symmetry };

std::string to_string(BoundaryKind kind);
BoundaryKind boundary_kind_from_string(const std::string& name);

/// Analytic boundary curve with an implicit description g(x) = 0.
///
/// g is positive outside the domain. Each curve also carries a parameter
/// t(x) that is in [0, 1] when x lies within the extent of the segment, which
/// is what the segment membership tests use.
struct Curve {
  enum class Kind { line, circle_arc, ellipse_arc, bump_graph };

  Kind kind = Kind::line;
  /// line:        (ax, ay, bx, by)
  /// circle_arc:  (cx, cy, radius, theta0, theta1, side)
  /// ellipse_arc: (cx, cy, a, b, theta0, theta1, side)
  /// bump_graph:  (x_start, x_end, y0, bump_x0, bump_x1, height, side)
  /// side = +1 when the domain lies inside the closed curve / below the
  /// graph, -1 otherwise.
  std::array<double, 7> params{};

  double g(const Vec2& x) const;
  Vec2 grad_g(const Vec2& x) const;
  double parameter(const Vec2& x) const;
  /// A point of the curve close to x (closest point for lines and circles,
  /// radial projection for ellipses, vertical projection for graphs).
  Vec2 project(const Vec2& x) const;
  Vec2 point_at(double t) const;

  static Curve line(const Vec2& a, const Vec2& b);
  static Curve circle_arc(const Vec2& c, double r, double theta0, double theta1, double side);
  static Curve ellipse_arc(const Vec2& c, double a, double b, double theta0, double theta1,
                           double side);
  static Curve bump_graph(double x_start, double x_end, double y0, double bump_x0, double bump_x1,
                          double height, double side);
};

std::string to_string(Curve::Kind kind);
Curve::Kind curve_kind_from_string(const std::string& name);

struct BoundarySegment {
  std::string name;
  BoundaryKind kind = BoundaryKind::wall;
  Curve curve;
};

struct BoundaryFace {
  int element = 0;
  int face = 0;
  int segment = 0;
};

/// High-order 2D mesh with a continuous (shared) node numbering.
///
/// The element geometry is isoparametric: node coordinates define the map
/// from the reference element. A mapped (r-adapted) mesh is the same object
/// with a different node array.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::string case_name, ElementType type, int order, std::vector<Vec2> nodes,
       std::vector<int> connectivity, std::vector<BoundaryFace> boundary_faces,
       std::vector<BoundarySegment> segments, std::vector<Vec2> corners);

  const std::string& case_name() const { return case_name_; }
  ElementType element_type() const { return type_; }
  int order() const { return order_; }
  const ReferenceElement& reference() const { return *ref_; }
  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  int n_elements() const { return n_local_ ? static_cast<int>(conn_.size()) / n_local_ : 0; }
  int n_local() const { return n_local_; }

  const std::vector<Vec2>& nodes() const { return nodes_; }
  const std::vector<int>& connectivity() const { return conn_; }
  std::span<const int> element_nodes(int e) const {
    return {conn_.data() + static_cast<std::size_t>(e) * n_local_, static_cast<std::size_t>(n_local_)};
  }
  const std::vector<BoundaryFace>& boundary_faces() const { return boundary_faces_; }
  const std::vector<BoundarySegment>& segments() const { return segments_; }
  const std::vector<Vec2>& corners() const { return corners_; }

  /// Node coordinates of element e, one row per local node.
  Eigen::MatrixX2d element_coords(int e) const;

  /// Same topology and boundary description, new node positions.
  Mesh with_nodes(std::vector<Vec2> nodes) const;
  /// Same geometry, new face-to-segment assignment.
  Mesh with_boundary_faces(std::vector<BoundaryFace> faces) const;

  /// Mesh node indices of the nodes lying on boundary faces of the given
  /// segment (all segments when segment < 0), sorted and unique.
  std::vector<int> boundary_nodes(int segment = -1) const;
  /// Mean length of element edges (vertex to vertex).
  double mean_edge_length() const;
  double diameter() const;
  int find_segment(const std::string& name) const;

 private:
  std::string case_name_;
  ElementType type_ = ElementType::quadrilateral;
  int order_ = 1;
  int n_local_ = 0;
  std::shared_ptr<const ReferenceElement> ref_;
  std::vector<Vec2> nodes_;
  std::vector<int> conn_;
  std::vector<BoundaryFace> boundary_faces_;
  std::vector<BoundarySegment> segments_;
  std::vector<Vec2> corners_;
};

struct CaseDescriptor {
  std::string name;
  /// Optional geometric overrides, by case (see build_case_mesh).
  std::vector<double> params;
};

/// Builds the structured reference mesh of a named case.
///
/// cylinder (cylinder-annulus): unit cylinder at the origin, region x <= 0
///   between the cylinder and an outer ellipse with semi-axes params[0..1]
///   (default 3, 6); resolution = (radial, angular).
/// bump (bump-channel): [0,3] x [0,1] with a sin^2 bump of height params[0]
///   (default 0.04) on [1, 2]; resolution = (x, y).
/// wedge (double-wedge): triangles over a 25/37 degree double ramp.
/// channel: rectangle [0, params[0]] x [0, params[1]] (default unit square)
///   with inflow left, outflow right and walls top and bottom; params[2] = 1
///   turns the outflow into a pressure outlet and the walls into symmetry
///   planes (quasi-1D duct).
Mesh build_case_mesh(const CaseDescriptor& desc, std::array<int, 2> resolution, int order);

/// Same elements and boundary description with polynomial order `order`;
/// the new nodes sample the existing element geometry.
Mesh elevate_order(const Mesh& mesh, int order);

// ---------------------------------------------------------------------------
// Fields and mappings

enum class Layout { continuous, discontinuous };

/// Nodal field. Continuous fields have one row per mesh node;
/// discontinuous fields one row per (element, local node) pair, element-major.
struct Field {
  Layout layout = Layout::continuous;
  Eigen::MatrixXd values;

  int n_components() const { return static_cast<int>(values.cols()); }
  int n_rows() const { return static_cast<int>(values.rows()); }
};

Field make_field(const Mesh& mesh, Layout layout, int n_components, double fill = 0.0);
/// Continuous field holding f evaluated at every mesh node.
Field nodal_field(const Mesh& mesh, int n_components,
                  const std::function<Eigen::VectorXd(const Vec2&)>& f);
void check_field(const Mesh& mesh, const Field& field);
/// Values at the local nodes of element e (n_local x m).
Eigen::MatrixXd element_values(const Mesh& mesh, const Field& field, int e);
Field to_discontinuous(const Mesh& mesh, const Field& field);

struct MeshMapping {
  std::vector<Vec2> phi;
  double parameter = 0.0;

  static MeshMapping identity(const Mesh& mesh, double parameter = 0.0);
};

/// Mapped mesh T^mu: reference topology with node positions phi.
Mesh apply_mapping(const Mesh& reference, const MeshMapping& mapping);

// ---------------------------------------------------------------------------
// Geometry operations

struct BasisTable {
  Eigen::MatrixXd values;                 // n_points x n_local
  std::vector<Eigen::MatrixX2d> grads;    // per point: n_local x 2 (reference)
};

BasisTable tabulate(const ReferenceElement& ref, const std::vector<Vec2>& points);

struct PointGeometry {
  Vec2 x;
  Mat2 jac;   // dx / dxi
  double det;
  Mat2 inv;   // dxi / dx
};

PointGeometry point_geometry(const Eigen::MatrixX2d& coords, const Eigen::VectorXd& values,
                             const Eigen::MatrixX2d& grads);

/// Integral of each component of `field` over the (optionally mapped) mesh.
Eigen::VectorXd quadrature_integrate(const Mesh& mesh, const Field& field,
                                     const MeshMapping* mapping = nullptr);
double domain_area(const Mesh& mesh, const MeshMapping* mapping = nullptr);

/// Arithmetic mean of all co-located values of a discontinuous field.
Field average_duplicates(const Mesh& mesh, const Field& discontinuous);
MeshMapping average_duplicate_dofs(const Mesh& mesh, const Field& discontinuous_map,
                                   double parameter = 0.0);

struct SnapReport {
  int snapped = 0;
  int missed = 0;
};

/// Moves, for each corner, the nearest mapped boundary vertex within radius
/// exactly onto the corner. radius <= 0 selects twice the local boundary edge
/// length. Throws TanglingError if the result has a nonpositive Jacobian.
MeshMapping snap_corners(const Mesh& reference, const MeshMapping& mapping,
                         const std::vector<Vec2>& corners, double radius = 0.0,
                         SnapReport* report = nullptr);

struct JacobianData {
  std::vector<Mat2> grad;    // grad phi, element-major over quadrature points
  std::vector<double> det;
  double min_det = 0.0;
};

JacobianData mapping_jacobian(const Mesh& reference, const MeshMapping& mapping);
/// Minimum of det(dx/dxi) over the default quadrature points.
double min_geometric_jacobian(const Mesh& mesh);

/// Locates points in a (possibly curved) mesh: bucket search on element
/// bounding boxes followed by a Newton inversion of the element map.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh);

  struct Hit {
    int element = -1;
    Vec2 xi;
    double distance = 0.0;  // 0 when the point is inside the element
  };

  /// Exact location, or the nearest element point when the point is outside
  /// the mesh. `element == -1` only for an empty mesh.
  Hit locate(const Vec2& x) const;

  const Mesh& mesh() const { return *mesh_; }

 private:
  bool invert(int e, const Vec2& x, Vec2& xi) const;

  const Mesh* mesh_;
  std::vector<Eigen::MatrixX2d> coords_;
  std::vector<Eigen::AlignedBox2d> boxes_;
  Eigen::AlignedBox2d bounds_;
  int nbx_ = 1, nby_ = 1;
  std::vector<std::vector<int>> buckets_;
};

/// Evaluates the piecewise-polynomial field at arbitrary points. Points
/// further than `tol` from the mesh raise InvalidInput; closer ones are
/// evaluated at the nearest mesh point.
Eigen::MatrixXd interpolate_to_points(const Mesh& mesh, const Field& field,
                                      const std::vector<Vec2>& points, double tol = 1e-8);
Eigen::MatrixXd interpolate_to_points(const PointLocator& locator, const Field& field,
                                      const std::vector<Vec2>& points, double tol = 1e-8);

/// Assigns each boundary face of the mapped mesh to the segment whose
/// implicit function is smallest in magnitude at the mapped face midpoint.
/// Returns the number of faces whose tag changed.
int retag_boundary(const Mesh& reference, const MeshMapping& mapping, Mesh& mapped);

// ---------------------------------------------------------------------------
// Persistence

void write_mesh(const std::filesystem::path& path, const Mesh& mesh);
Mesh read_mesh(const std::filesystem::path& path);

/// Snapshot format: text header (layout, rows, components, parameter) and
/// little-endian f64 values, row-major.
void write_field(const std::filesystem::path& path, const Field& field, double parameter = 0.0);
Field read_field(const std::filesystem::path& path, double* parameter = nullptr);

}  // namespace otrom
