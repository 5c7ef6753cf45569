#pragma once

#include "otrom/monitor.hpp"

#include <memory>

namespace otrom {

using State4 = Eigen::Vector4d;
using Flux4 = Eigen::Matrix<double, 4, 2>;

double pressure(const State4& u, double gamma);
double sound_speed(const State4& u, double gamma);
State4 conservative_state(double rho, const Vec2& v, double p, double gamma);

/// Free stream of Mach number `mach` along +x: rho = 1, |v| = 1,
/// p = 1 / (gamma Ma^2).
State4 free_stream_state(double mach, double gamma = 1.4);

/// Euler flux columns (F1, F2). Throws PhysicsError for rho <= 0 or p <= 0.
Flux4 euler_flux(const State4& u, double gamma = 1.4);
/// dF1/du and dF2/du.
void euler_flux_jacobians(const State4& u, double gamma, Eigen::Matrix4d& ax, Eigen::Matrix4d& ay);
/// Local Lax-Friedrichs flux through a face with unit normal n (from left to right).
State4 llf_flux(const State4& left, const State4& right, const Vec2& n, double gamma);

/// Normal-shock jump ratios (rho2/rho1, p2/p1, Ma2) for upstream Mach ma1.
struct ShockJump {
  double density_ratio;
  double pressure_ratio;
  double mach_after;
};
ShockJump normal_shock(double ma1, double gamma = 1.4);
/// Billig's correlation for the bow-shock stand-off of a circular cylinder:
/// Delta / R = 0.386 exp(4.67 / Ma^2).
double billig_standoff(double mach);

struct FlowState {
  Field conserved;  // discontinuous, (rho, rho v1, rho v2, rho E)
  double gamma = 1.4;
  double mach_inf = 2.0;
};

struct AvField {
  Field eta;  // continuous, >= 0
  double s_max = 0.0;
};

struct RegParams {
  double lambda1 = 1e-2;
  double lambda2 = 2.0;
  double ell = 0.1;
  double ramp_factor = 0.5;
  double lambda1_floor = 1e-3;
  double lambda2_floor = 1e-3;

  void validate() const;
};

/// Boundary data of a flow problem.
struct FlowProblem {
  double gamma = 1.4;
  double mach = 2.0;
  /// Back pressure for pressure-outlet segments (<= 0: free-stream pressure).
  double back_pressure = 0.0;

  State4 inflow() const { return free_stream_state(mach, gamma); }
};

/// Nodal DG discretization of the regularized steady Euler equations,
///   div F(u) - lambda1 div(eta grad u) = 0,
/// with local Lax-Friedrichs fluxes and a symmetric interior penalty
/// treatment of the viscous term (no viscous flux through the boundary).
class DgOperator {
 public:
  DgOperator(const Mesh& mesh, FlowProblem problem);

  const FeSpace& space() const { return space_; }
  const Mesh& mesh() const { return space_.mesh(); }
  const FlowProblem& problem() const { return problem_; }
  int n_dofs() const { return 4 * mesh().n_elements() * mesh().n_local(); }

  /// Sets the viscosity nu = lambda1 * eta (continuous scalar field).
  void set_viscosity(const Field& eta, double lambda1);

  /// Weak residual, one row per DG node.
  Field residual(const Field& u) const;
  /// Residual and its Jacobian (dofs ordered node-major, component-minor).
  Field residual(const Field& u, SparseMatrix& jacobian) const;
  /// Element mass matrices scaled by 1/dt_e, in the Jacobian layout.
  SparseMatrix pseudo_time_mass(const Field& u, double cfl) const;

  /// Net mass flux out of the domain through the boundary numerical flux.
  double boundary_mass_flux(const Field& u) const;
  /// Mass flux entering through inflow segments (positive).
  double inflow_mass_flux(const Field& u) const;
  /// State traces at the face quadrature points (both sides of interior faces).
  Eigen::MatrixXd at_face_points(const Field& u) const;
  /// Nodes, volume and face quadrature points all have rho > 0 and p > 0 and,
  /// given a reference state, rho and p at least min_ratio times its values.
  bool admissible(const Field& u, const Field* reference = nullptr, double min_ratio = 0.0) const;
  /// Residual norm relative to the free-stream flux scale: the inverse-mass
  /// norm sqrt(r^T M^-1 r) over the free-stream flux times sqrt(area) / diameter.
  double relative_norm(const Field& residual) const;
  const HelmholtzSmoother& smoother(double length) const;
  double element_size(int e) const { return h_[e]; }

  struct FacePoint {
    int left = 0, right = -1;  // right < 0 on the boundary
    int segment = -1;
    Vec2 x, normal;
    double ds = 0.0;
    Eigen::VectorXd n_left, n_right;
    Eigen::MatrixX2d g_left, g_right;  // physical basis gradients
    double penalty = 0.0;
  };

 private:
  State4 boundary_state(const State4& u, const Vec2& n, int segment) const;

  FeSpace space_;
  FlowProblem problem_;
  std::vector<FacePoint> faces_;
  std::vector<double> h_;
  SparseMatrix viscous_;  // scalar SIPG operator
  std::vector<Eigen::MatrixXd> mass_;  // element mass matrices
  std::vector<Eigen::LLT<Eigen::MatrixXd>> mass_llt_;
  double residual_scale_ = 1.0;
  mutable std::unique_ptr<HelmholtzSmoother> smoother_;
  Eigen::VectorXd eta_points_;
  double lambda1_ = 0.0;
};

struct SolveOptions {
  /// Residual tolerance relative to the free-stream flux scale.
  double tol = 1e-8;
  int max_iter = 80;
  double cfl0 = 1.0;
  double cfl_min = 1e-3;
  double cfl_max = 1e10;
  int max_halvings = 20;
  /// A Newton update may lower rho and p pointwise to no less than this
  /// fraction of the current values.
  double min_state_ratio = 0.2;
  /// Freeze eta once the relative residual falls below this value (0: never).
  double freeze_eta_below = 1e-4;
  /// Freeze eta when the residual has not halved over this many iterations
  /// (0: never).
  int stall_window = 6;
  /// Give up when the last abort_window iterations set no new residual minimum.
  int abort_window = 15;
  /// Stall freezing only applies below this relative residual.
  double stall_freeze_below = 1e-3;
};

struct SolveResult {
  FlowState state;
  AvField av;
  RegParams params;
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_history;
  double eta_integral = 0.0;
};

/// eta from the dilatation sensor: clip to [0, s_max_factor ||S||_inf],
/// Helmholtz smoothing with length lambda2 * ell, eta = 0 on walls.
AvField update_viscosity(const DgOperator& op, const FlowState& state, const RegParams& params,
                         const SensorConfig& config = {});

/// Uniform free-stream initial state.
FlowState uniform_state(const Mesh& mesh, const FlowProblem& problem);
/// Free stream with the velocity component into wall segments removed at
/// the wall and restored as exp(-d / layer) with the wall distance d.
FlowState wall_layer_state(const Mesh& mesh, const FlowProblem& problem, double layer);

SolveResult solve_steady(DgOperator& op, const FlowState& initial, const RegParams& params,
                         const SolveOptions& options = {});

struct ContinuationResult {
  SolveResult result;          // last accepted solve
  std::vector<RegParams> accepted;
  std::vector<double> eta_integrals;        // integral of eta per accepted solve
  std::vector<double> viscosity_integrals;  // integral of lambda1 eta per accepted solve
  int solves = 0;
  std::string stop_reason;
};

/// Ramps lambda1 and lambda2 down by ramp_factor after every accepted solve
/// until a solve fails, a state becomes inadmissible, the density overshoots
/// 1.2 x the normal-shock stagnation density, or the floors are reached.
ContinuationResult continuation_solve(DgOperator& op, const FlowState& initial,
                                      const RegParams& params0, const SolveOptions& options = {});

/// Default lambda1: (4 mean edge / p)^2.
double default_lambda1(const Mesh& mesh);

}  // namespace otrom
