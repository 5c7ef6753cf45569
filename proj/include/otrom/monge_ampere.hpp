#pragma once

#include "otrom/monitor.hpp"

#include <memory>

namespace otrom {

/// f(y) = theta / rho'(y), the right-hand side density of the transport
/// constraint evaluated at a target point y.
using DensityFn = std::function<double(const Vec2&)>;

/// Density function backed by a nodal rho' field on the reference mesh.
/// Points outside the domain are clamped to the nearest mesh point; clamps
/// further than 1e-8 are logged.
DensityFn make_density_function(const Mesh& mesh, const TargetDensity& density);

struct BoundarySpec {
  std::vector<BoundarySegment> segments;
  std::vector<Vec2> junctions;
  /// Extent slack of the membership test, in curve parameter units.
  double parameter_slack = 0.05;
  /// Distance beyond which an image point is declared detached.
  double detach_tolerance = 1.0;
  /// Optional prescribed normal derivative dw/dn at reference boundary
  /// point x with outward normal n; replaces the transport condition.
  std::function<double(const Vec2& x, const Vec2& n)> prescribed_flux;

  static BoundarySpec from_mesh(const Mesh& mesh);
};

/// Implicit function selected for a boundary sample and its linearization
/// about the current image point y: g(q) ~ value + gradient . (q - y).
struct BoundaryChoice {
  int segment = -1;
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();
};

/// Selects the segment to enforce for an image point y of a sample on
/// `own_segment`: the own segment while y is within its extent, otherwise
/// the member segment closest to y. Throws ConvergenceError (detached
/// boundary) when no segment admits y.
BoundaryChoice project_boundary(const Vec2& y, int own_segment, const BoundarySpec& spec);

/// S = sqrt(H11^2 + H22^2 + H12^2 + H21^2 + 2 f(q)).
double evaluate_S(const Mat2& hess, const Vec2& q, const DensityFn& f);

struct MAState {
  Field w;     // continuous scalar potential on the solver's potential space, zero mean
  Field q;     // continuous gradient (the map)
  Field hess;  // continuous (H11, H12, H21, H22), symmetrized
  int iteration = 0;
  std::vector<double> residual_history;
  bool converged = false;
};

struct MAOptions {
  /// Fixed-point tolerance relative to the domain diameter.
  double tol = 1e-8;
  int max_iter = 200;
  double damping = 0.7;
};

/// Picard solver for the first-order Monge-Ampere system on the nodes of
/// `space`. The potential w lives on the same elements with polynomial order
/// raised by `potential_order_increment`; q is its gradient sampled at the
/// nodes of `space` and averaged over co-located copies, H the averaged
/// gradient of q.
class MongeAmpereSolver {
 public:
  MongeAmpereSolver(const FeSpace& space, BoundarySpec boundary, int potential_order_increment = 1);

  /// Identity initialization: w = |x|^2 / 2 (re-centered), q = x, H = I.
  MAState identity_state() const;

  /// One Picard step: Poisson solve with S(H, q) and the linearized Neumann
  /// data, then q and H recovered by differentiation and duplicate averaging.
  /// `damping` weights the new potential against the previous one.
  MAState step(const MAState& state, const DensityFn& f, double damping = 1.0) const;

  MAState solve(const DensityFn& f, const MAOptions& options, const MAState* initial = nullptr) const;

  const FeSpace& space() const { return *space_; }
  const FeSpace& potential_space() const { return *pot_; }
  const BoundarySpec& boundary() const { return boundary_; }

 private:
  Eigen::MatrixXd on_potential_points(const Field& field) const;
  Field gradient_on_nodes(const Field& w) const;

  const FeSpace* space_;
  std::unique_ptr<FeSpace> pot_;
  BoundarySpec boundary_;
  BasisTable field_at_pot_points_;
  BasisTable pot_at_nodes_;
  std::unique_ptr<MeanFreeSolver> poisson_;
};

MAState solve_monge_ampere(const FeSpace& space, const DensityFn& f, const BoundarySpec& boundary,
                           const MAOptions& options);

/// RMS over the domain of rho'(q) det(grad q) / theta - 1, with grad q taken
/// element-wise at the quadrature points.
double equidistribution_residual(const FeSpace& space, const MAState& state, const DensityFn& f);

/// Mapping phi = q at the mesh nodes.
MeshMapping mapping_from_state(const MAState& state, double parameter = 0.0);

/// Mapping at the nodes of `target`, a mesh with the same elements as the
/// solver mesh (any order): q interpolated element by element, duplicates
/// averaged.
MeshMapping mapping_on_mesh(const Mesh& target, const Mesh& solver_mesh, const MAState& state,
                            double parameter = 0.0);

/// Moves mapped boundary nodes onto the curve selected by project_boundary;
/// returns the largest displacement.
double project_boundary_nodes(const Mesh& reference, MeshMapping& mapping, const BoundarySpec& spec);

}  // namespace otrom
