#include "otrom/monitor.hpp"

#include <gtest/gtest.h>

using namespace otrom;

namespace {

Mesh unit_square(int n, int p) { return build_case_mesh({"channel", {}}, {n, n}, p); }

Field flow_field(const Mesh& mesh, const std::function<Eigen::Vector4d(const Vec2&)>& f) {
  return nodal_field(mesh, 4, [&](const Vec2& x) { return Eigen::VectorXd(f(x)); });
}

}  // namespace

TEST(SmoothClip, MidRangeAndSaturation) {
  EXPECT_NEAR(smooth_clip(0.5, 0.0, 1.0), 0.5, 0.01);
  EXPECT_NEAR(smooth_clip(3.0, 2.0, 4.0), 3.0, 0.02);
  EXPECT_EQ(smooth_clip(-1e6, 0.0, 1.0), 0.0);
  EXPECT_NEAR(smooth_clip(1e6, 0.0, 1.0), 1.0, 1e-15);
  EXPECT_THROW(smooth_clip(0.0, 1.0, 1.0), InvalidInput);
  EXPECT_THROW(smooth_clip(0.0, 0.0, 1.0, 0.0), InvalidInput);
}

TEST(SmoothClip, MonotoneBoundedAndC1) {
  double prev = -1.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = -2.0 + 5.0 * i / 999.0;
    const double c = smooth_clip(x, 0.0, 1.0);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
    EXPECT_GE(c, prev);
    prev = c;
  }
  auto deriv = [](double x) {
    const double h = 1e-5;
    return (smooth_clip(x + h, 0.0, 1.0) - smooth_clip(x - h, 0.0, 1.0)) / (2 * h);
  };
  for (double knee : {0.0, 1.0}) EXPECT_NEAR(deriv(knee - 1e-7), deriv(knee + 1e-7), 1e-6);
}

TEST(DilatationSensor, FreeStreamCompressionAndShear) {
  const Mesh m = unit_square(3, 2);
  const FeSpace fs(m);
  const Field uniform = flow_field(m, [](const Vec2&) { return Eigen::Vector4d(1.0, 0.8, 0.3, 5.0); });
  EXPECT_LE(dilatation_sensor(fs, uniform).values.cwiseAbs().maxCoeff(), 1e-12);

  const Field comp = flow_field(m, [](const Vec2& x) { return Eigen::Vector4d(1.0, -x.x(), 0.0, 5.0); });
  EXPECT_LE((dilatation_sensor(fs, comp).values.array() - 1.0).abs().maxCoeff(), 1e-12);

  const Field shear = flow_field(m, [](const Vec2& x) { return Eigen::Vector4d(1.0, x.y(), x.x(), 5.0); });
  EXPECT_LE(dilatation_sensor(fs, shear).values.cwiseAbs().maxCoeff(), 1e-12);

  // Variable density with v = (-x, 0): the quotient rule recovers S = 1.
  const Field var = flow_field(m, [](const Vec2& x) {
    const double rho = 1.0 + x.y();
    return Eigen::Vector4d(rho, -rho * x.x(), 0.0, 5.0);
  });
  const Field S = dilatation_sensor(fs, to_discontinuous(m, var));
  EXPECT_EQ(S.layout, Layout::discontinuous);
  EXPECT_LE((S.values.array() - 1.0).abs().maxCoeff(), 1e-12);

  const Field bad = flow_field(m, [](const Vec2&) { return Eigen::Vector4d(-1.0, 0, 0, 1); });
  EXPECT_THROW(dilatation_sensor(fs, bad), PhysicsError);
}

TEST(ResolutionSensor, ConstantLinearAndStep) {
  const Mesh m = unit_square(4, 2);
  const FeSpace fs(m);
  SensorConfig cfg;
  const Field c = make_field(m, Layout::continuous, 1, 3.0);
  EXPECT_LE((resolution_sensor(fs, c, cfg).values.array() - 1.0).abs().maxCoeff(), 1e-15);

  SensorConfig wide;
  wide.s_max_factor = 10.0;
  wide.clip_sharpness = 1e4;
  const Field lin = nodal_field(m, 1, [](const Vec2& x) { return Eigen::VectorXd::Constant(1, x.x()); });
  EXPECT_LE((resolution_sensor(fs, lin, wide).values.array() - std::sqrt(2.0)).abs().maxCoeff(), 1e-12);

  const Mesh fine = unit_square(16, 2);
  const FeSpace ff(fine);
  const Field step = nodal_field(fine, 1, [](const Vec2& x) {
    return Eigen::VectorXd::Constant(1, std::tanh((x.x() - 0.5) / 0.03));
  });
  const Field s = resolution_sensor(ff, step, cfg);
  const double gmax2 = ff.recovered_gradient(step).values.rowwise().squaredNorm().maxCoeff();
  EXPECT_NEAR(s.values.maxCoeff(), std::sqrt(1.0 + 0.5 * gmax2), 1e-3 * std::sqrt(gmax2));
  EXPECT_GE(s.values.minCoeff(), 1.0);
}

TEST(Helmholtz, ConstantsIdentityLimitAndConservation) {
  const Mesh m = unit_square(6, 3);
  const FeSpace fs(m);
  const Field c = make_field(m, Layout::continuous, 1, 2.5);
  const Field out = helmholtz_smooth(fs, c, 0.3, HelmholtzBc::neumann_all);
  EXPECT_LE((out.values.array() - 2.5).abs().maxCoeff(), 1e-10);

  const Field cubic = nodal_field(m, 1, [](const Vec2& x) {
    return Eigen::VectorXd::Constant(1, 1 + x.x() * x.x() * x.y() - 0.5 * x.y());
  });
  EXPECT_LE((helmholtz_smooth(fs, cubic, 1e-8, HelmholtzBc::neumann_all).values - cubic.values)
                .cwiseAbs()
                .maxCoeff(),
            1e-10);

  Field spike = make_field(m, Layout::continuous, 1);
  spike.values(m.n_nodes() / 2, 0) = 10.0;
  const Field sm = helmholtz_smooth(fs, spike, 0.2, HelmholtzBc::neumann_all);
  EXPECT_LT(sm.values.maxCoeff(), 10.0);
  const int wider = (sm.values.array() > 0.01 * sm.values.maxCoeff()).count();
  EXPECT_GT(wider, (spike.values.array() > 0.0).count());
  const double in = fs.integral(fs.at_points(spike).col(0));
  const double outi = fs.integral(fs.at_points(sm).col(0));
  EXPECT_NEAR(outi / in, 1.0, 1e-8);
}

TEST(Helmholtz, DirichletWallVanishesOnWalls) {
  const Mesh m = unit_square(6, 2);
  const FeSpace fs(m);
  const Field src = make_field(m, Layout::continuous, 1, 1.0);
  const Field eta = helmholtz_smooth(fs, src, 0.1, HelmholtzBc::dirichlet_wall);
  for (std::size_t s = 0; s < m.segments().size(); ++s)
    if (m.segments()[s].kind == BoundaryKind::wall)
      for (int n : m.boundary_nodes(static_cast<int>(s))) EXPECT_EQ(eta.values(n, 0), 0.0);
  EXPECT_GT(eta.values.maxCoeff(), 0.5);
}

TEST(NormalizeTargetDensity, Theta) {
  const Mesh m = unit_square(3, 2);
  const FeSpace fs(m);
  EXPECT_NEAR(normalize_target_density(fs, make_field(m, Layout::continuous, 1, 2.0)).theta, 2.0, 1e-12);
  EXPECT_NEAR(normalize_target_density(fs, make_field(m, Layout::continuous, 1, 1.0)).theta, 1.0, 1e-12);
  const Field lin = nodal_field(m, 1, [](const Vec2& x) { return Eigen::VectorXd::Constant(1, 1 + x.x()); });
  EXPECT_NEAR(normalize_target_density(fs, lin).theta, 1.5, 1e-12);
  EXPECT_THROW(normalize_target_density(fs, make_field(m, Layout::continuous, 1, 0.0)), InvalidInput);
}
