#pragma once

#include "otrom/mesh.hpp"

#include <Eigen/Sparse>

namespace otrom {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Geometric data of a continuous finite element space on a mesh: physical
/// basis gradients and weights at the volume quadrature points, plus the
/// boundary face quadrature. Points are indexed element-major,
/// k = e * n_qp() + q.
class FeSpace {
 public:
  explicit FeSpace(Mesh mesh);

  const Mesh& mesh() const { return mesh_; }
  const QuadratureRule& rule() const { return rule_; }
  const BasisTable& table() const { return table_; }
  int n_qp() const { return static_cast<int>(rule_.size()); }
  std::size_t n_points() const { return jw_.size(); }

  double jw(std::size_t k) const { return jw_[k]; }
  const Vec2& x(std::size_t k) const { return x_[k]; }
  /// Physical basis gradients (n_local x 2).
  const Eigen::MatrixX2d& grad(std::size_t k) const { return grad_[k]; }
  /// Jacobian dx/dxi.
  const Mat2& jac(std::size_t k) const { return jac_[k]; }

  SparseMatrix mass() const;
  SparseMatrix stiffness() const;
  /// Row i: integral of N_i times each column of the point values.
  Eigen::MatrixXd load(const Eigen::MatrixXd& at_points) const;
  Eigen::VectorXd lumped_mass() const;

  /// Field values at every quadrature point (n_points x m).
  Eigen::MatrixXd at_points(const Field& field) const;
  /// Field gradients at every quadrature point (n_points x 2m), columns
  /// (d/dx c0, d/dy c0, d/dx c1, ...).
  Eigen::MatrixXd gradient_at_points(const Field& field) const;
  /// Broken gradient evaluated at the element nodes (discontinuous, 2m columns).
  Field nodal_gradient(const Field& field) const;
  /// Broken gradient at the nodes, averaged over co-located copies.
  Field recovered_gradient(const Field& field) const;

  /// Square root of the integral of the squared row norm of point values.
  double l2_norm(const Eigen::MatrixXd& at_points) const;
  double integral(const Eigen::VectorXd& at_points) const;
  double area() const;

  struct FacePoint {
    int element = 0;
    int face = 0;
    int segment = 0;
    Vec2 xi;          // reference coordinates
    Vec2 x;
    Vec2 normal;      // outward unit normal
    double ds = 0.0;  // quadrature weight times arc-length Jacobian
    Eigen::VectorXd basis;  // element basis at the point
  };
  const std::vector<FacePoint>& boundary_points() const { return face_points_; }

 private:
  Mesh mesh_;
  QuadratureRule rule_;
  BasisTable table_;
  std::vector<double> jw_;
  std::vector<Vec2> x_;
  std::vector<Mat2> jac_;
  std::vector<Eigen::MatrixX2d> grad_;
  std::vector<FacePoint> face_points_;
};

/// Sparse direct solver for a symmetric positive semi-definite system whose
/// only null vector is the constant: solves K u = b - mean correction with
/// u of zero weighted mean (c^T u = 0), where c_i = integral of N_i.
class MeanFreeSolver {
 public:
  MeanFreeSolver(const SparseMatrix& K, Eigen::VectorXd c);
  /// Returns u and the constant that had to be removed from b (the Lagrange
  /// multiplier of the mean constraint).
  Eigen::VectorXd solve(const Eigen::VectorXd& b, double* multiplier = nullptr) const;

 private:
  Eigen::VectorXd c_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

}  // namespace otrom
