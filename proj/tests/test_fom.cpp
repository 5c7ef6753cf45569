#include "otrom/fom.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace otrom;

namespace {

constexpr double kGamma = 1.4;

Mesh with_kinds(const Mesh& m, BoundaryKind kind) {
  auto segs = m.segments();
  for (auto& s : segs) s.kind = kind;
  return Mesh(m.case_name(), m.element_type(), m.order(), m.nodes(), m.connectivity(), m.boundary_faces(), segs,
              m.corners());
}

Field random_state(const Mesh& m, unsigned seed) {
  std::srand(seed);
  FlowProblem pb;
  Field u = uniform_state(m, pb).conserved;
  u.values.array() *= 1.0 + 0.05 * Eigen::ArrayXXd::Random(u.n_rows(), 4);
  return u;
}

struct ShockRun {
  SolveResult result;
  double mass_defect = 0.0;
  double rho1 = 0.0, rho2 = 0.0, p1 = 0.0, p2 = 0.0, mach2 = 0.0;
};

// Quasi-1D duct [0, 2] x [0, 0.25] with a pressure outlet at the
// Rankine-Hugoniot back pressure; step initial state at x = 1.
ShockRun normal_shock_run(double mach) {
  const Mesh mesh = build_case_mesh({"channel", {2.0, 0.25, 1.0}}, {32, 2}, 2);
  FlowProblem pb;
  pb.mach = mach;
  // Independent RH oracle for the back pressure.
  const double m2 = mach * mach;
  const double p_ratio = 1.0 + 2.0 * kGamma / (kGamma + 1.0) * (m2 - 1.0);
  const double r_ratio = (kGamma + 1.0) * m2 / ((kGamma - 1.0) * m2 + 2.0);
  pb.back_pressure = p_ratio / (kGamma * m2);
  DgOperator op(mesh, pb);
  FlowState s = uniform_state(mesh, pb);
  const State4 down = conservative_state(r_ratio, Vec2(1.0 / r_ratio, 0.0), pb.back_pressure, kGamma);
  const int nl = mesh.n_local();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto X = mesh.element_coords(e);
    for (int i = 0; i < nl; ++i)
      if (X(i, 0) > 1.0) s.conserved.values.row(e * nl + i) = down.transpose();
  }
  RegParams rp;
  rp.lambda1 = default_lambda1(mesh);
  rp.ell = 2.0 * mesh.mean_edge_length();
  rp.ramp_factor = 1.0;
  ShockRun run;
  run.result = solve_steady(op, s, rp);
  const Field& u = run.result.state.conserved;
  run.mass_defect = std::abs(op.boundary_mass_flux(u)) / op.inflow_mass_flux(u);
  int n1 = 0, n2 = 0;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto X = mesh.element_coords(e);
    for (int i = 0; i < nl; ++i) {
      const State4 q = u.values.row(e * nl + i).transpose();
      const double p = pressure(q, kGamma);
      if (X(i, 0) < 0.5) {
        run.rho1 += q[0];
        run.p1 += p;
        ++n1;
      } else if (X(i, 0) > 1.5) {
        run.rho2 += q[0];
        run.p2 += p;
        run.mach2 += std::hypot(q[1], q[2]) / q[0] / std::sqrt(kGamma * p / q[0]);
        ++n2;
      }
    }
  }
  run.rho1 /= n1;
  run.p1 /= n1;
  run.rho2 /= n2;
  run.p2 /= n2;
  run.mach2 /= n2;
  return run;
}

struct CylinderRun {
  Mesh mesh;
  ContinuationResult cont;
  double mass_defect = 0.0;
  double standoff = 0.0;
};

double standoff_distance(const Mesh& mesh, const Field& u, double mach) {
  const double m2 = mach * mach;
  const double r_ratio = (kGamma + 1.0) * m2 / ((kGamma - 1.0) * m2 + 2.0);
  const double threshold = 0.5 * (1.0 + r_ratio);
  std::vector<Vec2> pts;
  for (int i = 0; i <= 1000; ++i) pts.emplace_back(-1.0 - 1.9 * i / 1000.0, 0.0);
  const Eigen::MatrixXd v = interpolate_to_points(mesh, u, pts, 1e-6);
  for (int i = 1000; i > 0; --i)
    if (v(i, 0) < threshold && v(i - 1, 0) >= threshold) {
      const double t = (threshold - v(i, 0)) / (v(i - 1, 0) - v(i, 0));
      return -(pts[i].x() + t * (pts[i - 1].x() - pts[i].x())) - 1.0;
    }
  return -1.0;
}

const CylinderRun& cylinder_run() {
  static const CylinderRun run = [] {
    CylinderRun r;
    r.mesh = build_case_mesh({"cylinder", {}}, {10, 12}, 2);
    FlowProblem pb;
    pb.mach = 2.0;
    DgOperator op(r.mesh, pb);
    RegParams rp;
    rp.lambda1 = default_lambda1(r.mesh);
    rp.ell = 2.0 * r.mesh.mean_edge_length();
    rp.lambda1_floor = rp.lambda1 / 8.0;
    r.cont = continuation_solve(op, wall_layer_state(r.mesh, pb, r.mesh.mean_edge_length()), rp);
    const Field& u = r.cont.result.state.conserved;
    r.mass_defect = std::abs(op.boundary_mass_flux(u)) / op.inflow_mass_flux(u);
    r.standoff = standoff_distance(r.mesh, u, 2.0);
    return r;
  }();
  return run;
}

}  // namespace

TEST(EulerFlux, HandEvaluatedState) {
  // rho = 1, v = (1, 0), p = 1: rho E = p / (gamma - 1) + rho |v|^2 / 2 = 3.
  const State4 u = conservative_state(1.0, Vec2(1.0, 0.0), 1.0, kGamma);
  EXPECT_NEAR(u[3], 3.0, 1e-14);
  const Flux4 f = euler_flux(u, kGamma);
  EXPECT_NEAR(f(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(f(1, 0), 2.0, 1e-14);
  EXPECT_NEAR(f(2, 0), 0.0, 1e-14);
  EXPECT_NEAR(f(3, 0), 4.0, 1e-14);
  EXPECT_NEAR(f.col(1).norm(), 1.0, 1e-14);  // only the pressure in the y-momentum flux
}

TEST(EulerFlux, StagnantGasAndMassColumn) {
  const State4 rest = conservative_state(1.3, Vec2::Zero(), 0.7, kGamma);
  const Flux4 f = euler_flux(rest, kGamma);
  EXPECT_NEAR((f.col(0) - State4(0, 0.7, 0, 0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((f.col(1) - State4(0, 0, 0.7, 0)).norm(), 0.0, 1e-15);
  const State4 u(1.2, 0.4, -0.9, 3.1);
  const Flux4 g = euler_flux(u, kGamma);
  EXPECT_EQ(g(0, 0), u[1]);
  EXPECT_EQ(g(0, 1), u[2]);
  EXPECT_THROW(euler_flux(State4(-1.0, 0, 0, 1), kGamma), PhysicsError);
  EXPECT_THROW(euler_flux(State4(1.0, 2.0, 0, 1.0), kGamma), PhysicsError);
}

TEST(EulerFlux, JacobiansMatchDifferences) {
  const State4 u(1.2, 0.4, -0.9, 3.1);
  Eigen::Matrix4d ax, ay;
  euler_flux_jacobians(u, kGamma, ax, ay);
  for (int c = 0; c < 4; ++c) {
    State4 up = u, um = u;
    up[c] += 1e-6;
    um[c] -= 1e-6;
    const Flux4 d = (euler_flux(up, kGamma) - euler_flux(um, kGamma)) / 2e-6;
    EXPECT_LE((d.col(0) - ax.col(c)).norm(), 1e-8);
    EXPECT_LE((d.col(1) - ay.col(c)).norm(), 1e-8);
  }
}

TEST(EulerFlux, LaxFriedrichsConsistentAndConservative) {
  const State4 a(1.2, 0.4, -0.9, 3.1), b(0.8, 0.5, 0.1, 2.0);
  const Vec2 n = Vec2(0.6, 0.8);
  EXPECT_LE((llf_flux(a, a, n, kGamma) - euler_flux(a, kGamma) * n).norm(), 1e-14);
  EXPECT_LE((llf_flux(a, b, n, kGamma) + llf_flux(b, a, -n, kGamma)).norm(), 1e-14);
}

TEST(NormalShock, RankineHugoniotRatios) {
  const auto j = normal_shock(2.0, kGamma);
  EXPECT_NEAR(j.density_ratio, 8.0 / 3.0, 1e-12);
  EXPECT_NEAR(j.pressure_ratio, 4.5, 1e-12);
  EXPECT_NEAR(j.mach_after, std::sqrt(1.0 / 3.0), 1e-12);
  EXPECT_THROW(normal_shock(0.9, kGamma), InvalidInput);
  EXPECT_NEAR(billig_standoff(2.0), 0.386 * std::exp(4.67 / 4.0), 1e-12);
}

TEST(DgOperator, FreeStreamPreservation) {
  FlowProblem pb;
  pb.mach = 2.0;
  const Mesh quads = build_case_mesh({"channel", {}}, {4, 3}, 3);
  const Mesh tris = with_kinds(build_case_mesh({"wedge", {}}, {6, 4}, 2), BoundaryKind::inflow);
  for (const Mesh* m : {&quads, &tris}) {
    const DgOperator op(*m, pb);
    EXPECT_LE(op.relative_norm(op.residual(uniform_state(*m, pb).conserved)), 1e-10) << m->case_name();
  }
}

TEST(DgOperator, ZeroViscosityGivesInviscidResidual) {
  const Mesh m = build_case_mesh({"bump", {}}, {4, 2}, 2);
  FlowProblem pb;
  const DgOperator plain(m, pb);
  DgOperator op(m, pb);
  op.set_viscosity(make_field(m, Layout::continuous, 1), 0.3);
  const Field u = random_state(m, 3);
  EXPECT_EQ((op.residual(u).values - plain.residual(u).values).cwiseAbs().maxCoeff(), 0.0);
}

TEST(DgOperator, JacobianMatchesDifferences) {
  const Mesh m = build_case_mesh({"cylinder", {}}, {2, 3}, 2);
  FlowProblem pb;
  DgOperator op(m, pb);
  Field eta = make_field(m, Layout::continuous, 1);
  for (int i = 0; i < eta.n_rows(); ++i) eta.values(i, 0) = 1.0 + 0.5 * std::sin(i);
  op.set_viscosity(eta, 0.01);
  const Field u = random_state(m, 7);
  SparseMatrix J;
  op.residual(u, J);
  const Eigen::MatrixXd Jd(J);
  double err = 0.0;
  for (int d = 0; d < op.n_dofs(); d += 5) {
    Field a = u, b = u;
    a.values(d / 4, d % 4) += 1e-6;
    b.values(d / 4, d % 4) -= 1e-6;
    const Eigen::MatrixXd col = (op.residual(a).values - op.residual(b).values) / 2e-6;
    for (int i = 0; i < op.n_dofs(); ++i) err = std::max(err, std::abs(col(i / 4, i % 4) - Jd(i, d)));
  }
  EXPECT_LE(err, 1e-6 * Jd.cwiseAbs().maxCoeff());
}

TEST(DgOperator, WallsCarryNoMass) {
  const Mesh m = build_case_mesh({"cylinder", {}}, {3, 4}, 2);
  FlowProblem pb;
  const DgOperator op(m, pb);
  const Field u = random_state(m, 11);
  // Net flux equals the sum of the mass residuals and only open boundaries contribute.
  EXPECT_NEAR(op.residual(u).values.col(0).sum(), op.boundary_mass_flux(u), 1e-12);
  const DgOperator closed(with_kinds(m, BoundaryKind::wall), pb);
  EXPECT_NEAR(closed.boundary_mass_flux(u), 0.0, 1e-14);
}

TEST(UpdateViscosity, FreeStreamGivesZero) {
  const Mesh m = build_case_mesh({"channel", {}}, {4, 4}, 2);
  FlowProblem pb;
  const DgOperator op(m, pb);
  const AvField av = update_viscosity(op, uniform_state(m, pb), RegParams{});
  EXPECT_EQ(av.eta.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(UpdateViscosity, CompressionPositiveInteriorZeroOnWalls) {
  const Mesh m = build_case_mesh({"channel", {}}, {6, 6}, 2);
  FlowProblem pb;
  const DgOperator op(m, pb);
  FlowState s = uniform_state(m, pb);
  s.conserved = to_discontinuous(m, nodal_field(m, 4, [](const Vec2& x) {
                                   return Eigen::VectorXd(conservative_state(1.0, Vec2(-x.x(), 0.0), 1.0, kGamma));
                                 }));
  RegParams rp;
  rp.ell = 0.1;
  const AvField av = update_viscosity(op, s, rp);
  EXPECT_GE(av.eta.values.minCoeff(), 0.0);
  EXPECT_NEAR(av.s_max, 0.5, 1e-10);
  for (int n : m.boundary_nodes(m.find_segment("top"))) EXPECT_EQ(av.eta.values(n, 0), 0.0);
  for (int n : m.boundary_nodes(m.find_segment("bottom"))) EXPECT_EQ(av.eta.values(n, 0), 0.0);
  Eigen::Index imax;
  av.eta.values.col(0).maxCoeff(&imax);
  EXPECT_GT(av.eta.values(imax, 0), 0.0);
  const Vec2 x = m.nodes()[imax];
  EXPECT_GT(x.y(), 0.0);
  EXPECT_LT(x.y(), 1.0);
}

TEST(UpdateViscosity, LambdaTwoWidensSupport) {
  const Mesh m = build_case_mesh({"bump", {}}, {24, 8}, 2);
  FlowProblem pb;
  const DgOperator op(m, pb);
  FlowState s = uniform_state(m, pb);
  s.conserved = to_discontinuous(m, nodal_field(m, 4, [](const Vec2& x) {
                                   // Expansion away from the compression keeps the clipped sensor near zero there.
                                   const double v = 0.7 - 0.3 * std::tanh((x.x() - 1.5) / 0.05) + 2.0 * x.x();
                                   return Eigen::VectorXd(conservative_state(1.0, Vec2(v, 0.0), 1.0, kGamma));
                                 }));
  auto support = [&](double lambda2) {
    RegParams rp;
    rp.lambda2 = lambda2;
    rp.ell = 0.05;
    const AvField av = update_viscosity(op, s, rp);
    Eigen::VectorXd indicator =
        (op.space().at_points(av.eta).col(0).array() > 0.01 * av.eta.values.maxCoeff()).cast<double>();
    return op.space().integral(indicator);
  };
  EXPECT_GT(support(2.0), support(1.0));
}

TEST(SolveSteady, FreeStreamConvergesImmediately) {
  const Mesh m = build_case_mesh({"channel", {}}, {4, 4}, 2);
  FlowProblem pb;
  pb.mach = 3.0;
  DgOperator op(m, pb);
  RegParams rp;
  const SolveResult r = solve_steady(op, uniform_state(m, pb), rp);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 2);
}

TEST(SolveSteady, NormalShockMatchesRankineHugoniot) {
  for (double mach : {2.0, 4.0}) {
    const ShockRun run = normal_shock_run(mach);
    ASSERT_TRUE(run.result.converged) << mach;
    const double m2 = mach * mach;
    const double r_ratio = (kGamma + 1.0) * m2 / ((kGamma - 1.0) * m2 + 2.0);
    const double p_ratio = 1.0 + 2.0 * kGamma / (kGamma + 1.0) * (m2 - 1.0);
    const double mach_after = std::sqrt((1.0 + 0.5 * (kGamma - 1.0) * m2) / (kGamma * m2 - 0.5 * (kGamma - 1.0)));
    EXPECT_NEAR(run.rho2 / run.rho1, r_ratio, 0.02 * r_ratio) << mach;
    EXPECT_NEAR(run.p2 / run.p1, p_ratio, 0.02 * p_ratio) << mach;
    EXPECT_NEAR(run.mach2, mach_after, 0.02 * mach_after) << mach;
    EXPECT_LE(run.mass_defect, 1e-6) << mach;
    RecordProperty(mach == 2.0 ? "density_ratio_m2" : "density_ratio_m4", std::to_string(run.rho2 / run.rho1));
  }
}

TEST(SolveSteady, CylinderBowShockStandoff) {
  const CylinderRun& run = cylinder_run();
  ASSERT_GE(run.cont.accepted.size(), 1u);
  const double billig = 0.386 * std::exp(4.67 / 4.0);
  EXPECT_GT(run.standoff, 0.0);
  EXPECT_NEAR(run.standoff, billig, 0.2 * billig);
  EXPECT_LE(run.mass_defect, 1e-6);
  RecordProperty("standoff", std::to_string(run.standoff));
}

TEST(Continuation, ViscosityDecreasesAcrossAcceptedSolves) {
  const CylinderRun& run = cylinder_run();
  ASSERT_EQ(run.cont.accepted.size(), 4u) << run.cont.stop_reason;
  EXPECT_EQ(run.cont.stop_reason, "floor reached");
  for (std::size_t i = 1; i < run.cont.viscosity_integrals.size(); ++i) {
    EXPECT_LE(run.cont.viscosity_integrals[i], run.cont.viscosity_integrals[i - 1]);
    EXPECT_DOUBLE_EQ(run.cont.accepted[i].lambda1, 0.5 * run.cont.accepted[i - 1].lambda1);
  }
  const DgOperator op(run.mesh, FlowProblem{});
  EXPECT_TRUE(op.admissible(run.cont.result.state.conserved));
}

TEST(Continuation, SingleSolveCases) {
  const Mesh m = build_case_mesh({"channel", {}}, {3, 3}, 2);
  FlowProblem pb;
  DgOperator op(m, pb);
  RegParams rp;
  rp.ramp_factor = 1.0;
  auto c = continuation_solve(op, uniform_state(m, pb), rp);
  EXPECT_EQ(c.solves, 1);
  EXPECT_EQ(c.accepted.size(), 1u);

  RegParams low;
  low.lambda1 = 1e-4;
  low.lambda2 = 1e-4;
  c = continuation_solve(op, uniform_state(m, pb), low);
  EXPECT_EQ(c.solves, 1);
  EXPECT_EQ(c.stop_reason, "floor reached");
}

TEST(Continuation, InvalidParametersRejected) {
  RegParams rp;
  rp.ramp_factor = 0.0;
  EXPECT_THROW(rp.validate(), InvalidInput);
  rp = RegParams{};
  rp.lambda1 = -1.0;
  EXPECT_THROW(rp.validate(), InvalidInput);
}
