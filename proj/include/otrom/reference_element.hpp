#pragma once

#include "otrom/core.hpp"

#include <memory>
#include <vector>

namespace otrom {

enum class ElementType { quadrilateral, triangle };

std::string to_string(ElementType type);
ElementType element_type_from_string(const std::string& name);

struct QuadratureRule {
  std::vector<Vec2> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
};

/// Gauss-Legendre nodes and weights on [-1, 1], exact for degree 2n-1.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w);
/// Gauss-Lobatto-Legendre nodes and weights on [-1, 1], exact for degree 2n-3.
void gauss_lobatto(int n, std::vector<double>& x, std::vector<double>& w);

/// Nodal Lagrange element of a given polynomial order.
///
/// Quadrilaterals live on [-1,1]^2 with a tensor grid of Gauss-Lobatto nodes,
/// numbered i + (p+1) j. Triangles live on the unit simplex with equispaced
/// nodes numbered row by row (j outer, i inner). Faces are numbered
/// counter-clockwise and their node lists follow the counter-clockwise
/// orientation of the element boundary.
class ReferenceElement {
 public:
  ReferenceElement(ElementType type, int order);

  ElementType type() const { return type_; }
  int order() const { return order_; }
  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  int n_faces() const { return type_ == ElementType::quadrilateral ? 4 : 3; }
  const std::vector<Vec2>& nodes() const { return nodes_; }
  const std::vector<int>& face_nodes(int face) const { return face_nodes_[face]; }
  /// Local indices of the element vertices, counter-clockwise.
  const std::vector<int>& vertex_nodes() const { return vertex_nodes_; }

  /// Reference coordinates of the face point at parameter s in [-1, 1]
  /// (s = -1 at the first face node, +1 at the last).
  Vec2 face_point(int face, double s) const;

  void eval_basis(const Vec2& xi, Eigen::Ref<Eigen::VectorXd> values) const;
  /// Reference gradients, one row per node.
  void eval_gradient(const Vec2& xi, Eigen::Ref<Eigen::MatrixX2d> grads) const;

  /// Default volume rule: p+1 Gauss points per direction (exact to 2p).
  const QuadratureRule& quadrature() const { return quadrature_; }
  QuadratureRule make_quadrature(int points_per_direction) const;

  bool contains(const Vec2& xi, double tol) const;
  Vec2 clamp(const Vec2& xi) const;
  Vec2 centroid() const;
  double reference_area() const { return type_ == ElementType::quadrilateral ? 4.0 : 0.5; }

 private:
  ElementType type_;
  int order_;
  std::vector<Vec2> nodes_;
  std::vector<std::vector<int>> face_nodes_;
  std::vector<int> vertex_nodes_;
  std::vector<double> line_nodes_;         // quads: 1D GLL nodes
  Eigen::MatrixXd monomial_to_nodal_;      // triangles: inverse Vandermonde
  QuadratureRule quadrature_;
};

/// Shared, immutable element instances (cached per type and order).
std::shared_ptr<const ReferenceElement> reference_element(ElementType type, int order);

}  // namespace otrom
