#include "otrom/rom.hpp"

#include "otrom/fom.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace otrom;

namespace {

const double kPi = std::acos(-1.0);

Mesh square() { return build_case_mesh({"channel", {}}, {4, 4}, 2); }

// Smooth conservative field depending on mu, discontinuous layout.
Field solution_field(const Mesh& m, double mu) {
  return to_discontinuous(m, nodal_field(m, 4, [mu](const Vec2& x) {
                            const double r = 1.0 + 0.3 * std::tanh(4.0 * (x.x() - 0.2 * mu));
                            return Eigen::VectorXd(conservative_state(r, Vec2(1.0 / r, 0.1 * mu * x.y()),
                                                                      1.0 / (1.4 * mu * mu) * r, 1.4));
                          }));
}

// Boundary-preserving deformation of the unit square.
Field mapping_field(const Mesh& m, double amplitude) {
  return nodal_field(m, 2, [amplitude](const Vec2& x) {
    return Eigen::VectorXd(Vec2(x.x() + amplitude * std::sin(kPi * x.x()) * std::sin(kPi * x.y()), x.y()));
  });
}

std::vector<std::pair<double, Field>> solution_runs(const Mesh& m, const std::vector<double>& mus) {
  std::vector<std::pair<double, Field>> runs;
  for (double mu : mus) runs.emplace_back(mu, solution_field(m, mu));
  return runs;
}

std::vector<std::pair<double, Field>> mapping_runs(const Mesh& m, const std::vector<double>& mus) {
  std::vector<std::pair<double, Field>> runs;
  for (double mu : mus) runs.emplace_back(mu, mapping_field(m, 0.02 * mu));
  return runs;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Weights, IntegrateToAreaPerComponent) {
  const Mesh quads = square();
  const Mesh tris = build_case_mesh({"wedge", {}}, {6, 4}, 2);
  for (const Mesh* m : {&quads, &tris})
    for (Layout layout : {Layout::continuous, Layout::discontinuous}) {
      const Eigen::VectorXd w = inner_product_weights(*m, layout, 3);
      EXPECT_GT(w.minCoeff(), 0.0);
      EXPECT_NEAR(w.sum(), 3.0 * domain_area(*m), 1e-12 * w.sum());
    }
  EXPECT_TRUE(inner_product_weights(quads, Layout::continuous, 2, false).isOnes());
}

TEST(Weights, GllNodesGiveNodalQuadrature) {
  // Row sums of the GLL mass matrix are the nodal GLL weights, exact for
  // polynomials of degree 2p - 1 = 3 on straight quads.
  const Mesh m = square();
  const Field f = nodal_field(m, 1, [](const Vec2& x) { return Eigen::VectorXd::Constant(1, x.x() * x.x() * x.y()); });
  EXPECT_NEAR(inner_product_weights(m, Layout::continuous, 1).dot(f.values.col(0)), 1.0 / 6.0, 1e-14);
}

TEST(Snapshots, AssembleOrderAndValidation) {
  const Mesh m = square();
  const SnapshotSet one = assemble_snapshots(m, SnapshotKind::fixed_mesh_solution, solution_runs(m, {3.0}));
  EXPECT_EQ(one.fields.cols(), 1);
  auto runs = solution_runs(m, {4.0, 2.0, 3.0});
  const SnapshotSet s = assemble_snapshots(m, SnapshotKind::fixed_mesh_solution, runs);
  EXPECT_EQ(s.parameters, (std::vector<double>{2.0, 3.0, 4.0}));
  EXPECT_LE((s.from_scaled(s.fields.col(0)).values - solution_field(m, 2.0).values).cwiseAbs().maxCoeff(), 1e-15);
  runs.emplace_back(3.0, solution_field(m, 3.0));
  EXPECT_THROW(assemble_snapshots(m, SnapshotKind::fixed_mesh_solution, runs), InvalidInput);
  std::vector<std::pair<double, Field>> mixed{{2.0, solution_field(m, 2.0)}, {3.0, mapping_field(m, 0.1)}};
  EXPECT_THROW(assemble_snapshots(m, SnapshotKind::fixed_mesh_solution, mixed), InvalidInput);
}

TEST(Snapshots, IdentityMappingsLeaveSolutionsUnchanged) {
  const Mesh m = square();
  const auto runs = solution_runs(m, {2.0, 3.0});
  const SnapshotSet mapped = assemble_snapshots(m, SnapshotKind::mapped_solution, runs);
  const SnapshotSet fixed = assemble_snapshots(m, SnapshotKind::fixed_mesh_solution, runs);
  EXPECT_EQ(mapped.fields, fixed.fields);
}

TEST(Snapshots, ComponentScales) {
  const Eigen::VectorXd s = component_scales(SnapshotKind::mapped_solution, {2.0, 4.0});
  const double re = 0.5 * (1.0 / (1.4 * 0.4 * 4.0) + 1.0 / (1.4 * 0.4 * 16.0)) + 0.5;
  EXPECT_NEAR((s - Eigen::Vector4d(1.0, 1.0, 1.0, re)).norm(), 0.0, 1e-15);
  EXPECT_TRUE(component_scales(SnapshotKind::mapping, {2.0}).isOnes());
}

TEST(Pod, FullBasisReconstructsAndIsOrthonormal) {
  const Mesh m = square();
  const SnapshotSet s = assemble_snapshots(m, SnapshotKind::mapped_solution, solution_runs(m, {2.0, 2.5, 3.0, 4.0}));
  const PodBasis b = compute_pod(s, 4);
  const Eigen::MatrixXd g = b.modes.transpose() * b.weights.asDiagonal() * b.modes;
  EXPECT_LE((g - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  for (int j = 0; j < 4; ++j) {
    const Eigen::VectorXd x = s.fields.col(j);
    EXPECT_LE((reconstruct(b, project_coefficients(b, x)) - x).norm(), 1e-10 * x.norm());
  }
  for (int k = 1; k < 4; ++k) EXPECT_LE(b.singular_values[k], b.singular_values[k - 1]);
  for (int k = 0; k < 4; ++k) {
    Eigen::Index i;
    b.modes.col(k).cwiseAbs().maxCoeff(&i);
    EXPECT_GT(b.modes(i, k), 0.0);
  }
  EXPECT_THROW(compute_pod(s, 0), InvalidInput);
  EXPECT_THROW(compute_pod(s, 5), InvalidInput);
}

TEST(Pod, RankOneAndOrthogonalPairs) {
  const Mesh m = square();
  const Field f = solution_field(m, 3.0);
  const SnapshotSet same =
      assemble_snapshots(m, SnapshotKind::fixed_mesh_solution, {{2.0, f}, {3.0, f}, {4.0, f}});
  const PodBasis b = compute_pod(same, 1);
  EXPECT_LE(b.singular_values[1] / b.singular_values[0], 1e-12);

  // Indicator fields of disjoint element sets with equal area: M-orthogonal
  // with equal weighted norm.
  Field a = make_field(m, Layout::discontinuous, 1), c = a;
  const int nl = m.n_local();
  for (int e = 0; e < 8; ++e) a.values.middleRows(e * nl, nl).setOnes();
  for (int e = 8; e < 16; ++e) c.values.middleRows(e * nl, nl).setOnes();
  const SnapshotSet pair =
      assemble_snapshots(m, SnapshotKind::mapping, {{1.0, a}, {2.0, c}}, true, Eigen::VectorXd::Ones(1));
  const PodBasis pb = compute_pod(pair, 2);
  EXPECT_NEAR(pb.singular_values[0], pb.singular_values[1], 1e-10);
  EXPECT_NEAR(pb.singular_values[0], std::sqrt(0.5), 1e-12);  // area of half the square
}

TEST(Pod, TailIdentityAgainstGramEigenvalues) {
  const Mesh m = square();
  const std::vector<double> mus{2.0, 2.5, 3.0, 3.5, 4.0};
  for (bool weighted : {true, false}) {
    const SnapshotSet s = assemble_snapshots(m, SnapshotKind::mapped_solution, solution_runs(m, mus), weighted);
    // Oracle: eigenvalues of the weighted Gram matrix X^T M X are sigma^2.
    const Eigen::MatrixXd gram = s.fields.transpose() * s.weights.asDiagonal() * s.fields;
    Eigen::VectorXd lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().reverse();
    lam = lam.cwiseMax(0.0);
    for (int n = 1; n <= 5; ++n) {
      const PodBasis b = compute_pod(s, n);
      const double tail = std::sqrt(lam.tail(5 - n).sum());
      const double err = reconstruction_error(b, s);
      EXPECT_NEAR(err, tail, 1e-8 * lam.cwiseSqrt().sum() + 1e-8 * tail) << n;
      EXPECT_NEAR(err, std::sqrt(b.singular_values.tail(5 - n).squaredNorm()), 1e-8 * b.singular_values[0]);
    }
  }
}

TEST(Project, CoefficientsOfModesAndOrthogonalFields) {
  const Mesh m = square();
  const SnapshotSet s = assemble_snapshots(m, SnapshotKind::mapped_solution, solution_runs(m, {2.0, 3.0, 4.0}));
  const PodBasis b = compute_pod(s, 2);
  for (int k = 0; k < 2; ++k)
    EXPECT_LE((project_coefficients(b, b.modes.col(k)) - Eigen::Vector2d::Unit(k)).norm(), 1e-10);
  const PodBasis full = compute_pod(s, 3);
  Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(b.modes.rows(), -1.0, 1.0);
  r -= full.modes * project_coefficients(full, r);  // M-orthogonal to all snapshots
  EXPECT_LE(project_coefficients(b, r).norm(), 1e-10);
  EXPECT_THROW(project_coefficients(b, Eigen::VectorXd::Zero(3)), InvalidInput);
}

TEST(Rbf, KernelForms) {
  RbfSurrogate s;
  s.centers = {0.0, 1.0};
  EXPECT_NEAR(s.kernel(2.0, 2.15), std::sqrt(1.0 + 9.0), 1e-12);  // eps = 20, r = 0.15
  s.options.form = Multiquadric::offset;
  s.options.epsilon = 4.0;
  EXPECT_NEAR(s.kernel(0.0, 3.0), 5.0, 1e-14);
}

TEST(Rbf, InterpolationConditionsAndConstantCase) {
  const std::vector<double> mus{2.0, 2.5, 3.0, 4.0};
  Eigen::MatrixXd alpha(2, 4);
  alpha << 1.0, -2.0, 0.5, 3.0, 0.1, 0.2, 0.3, -0.4;
  const RbfSurrogate s = train_rbf(mus, alpha);
  EXPECT_EQ(s.shift, 0.0);
  for (int j = 0; j < 4; ++j) EXPECT_LE((s.evaluate(mus[j]) - alpha.col(j)).norm(), 1e-8);
  EXPECT_FALSE(s.extrapolates(3.7));
  EXPECT_TRUE(s.extrapolates(4.5));

  const RbfSurrogate c = train_rbf({3.0}, alpha.col(1));
  EXPECT_LE((c.evaluate(1.0) - alpha.col(1)).norm(), 1e-14);
  EXPECT_LE((c.evaluate(7.0) - alpha.col(1)).norm(), 1e-14);

  EXPECT_THROW(train_rbf({2.0, 2.0}, alpha.leftCols(2)), InvalidInput);
  EXPECT_THROW(train_rbf({3.0, 2.0}, alpha.leftCols(2)), InvalidInput);
  EXPECT_THROW(train_rbf(mus, alpha.leftCols(3)), InvalidInput);
}

TEST(Rbf, LinearDataMidInterval) {
  Eigen::MatrixXd alpha(1, 3);
  alpha << 2.0, 3.0, 4.0;  // alpha = mu - 0 at mu = 2, 3, 4
  for (bool normalize : {false, true}) {
    RbfOptions o;
    o.normalize = normalize;
    const RbfSurrogate s = train_rbf({2.0, 3.0, 4.0}, alpha, o);
    // Both neighbouring node values are 0.5 away from the linear value.
    for (double mu : {2.5, 3.5}) EXPECT_LT(std::abs(s.evaluate(mu)[0] - mu), 0.5) << mu;
  }
}

TEST(Rbf, NearlyCoincidentCentersGetShifted) {
  Eigen::MatrixXd alpha(1, 2);
  alpha << 1.0, 1.0;
  RbfOptions o;
  o.epsilon = 1.0;
  const RbfSurrogate s = train_rbf({1.0, 1.0 + 1e-9}, alpha, o);
  EXPECT_GT(s.shift, 0.0);
  EXPECT_TRUE(s.beta.allFinite());
}

TEST(RelativeError, ClosedForms) {
  const Mesh m = square();
  const Field truth = nodal_field(m, 2, [](const Vec2&) { return Eigen::VectorXd(Vec2(1.0, 0.0)); });
  const Field approx = nodal_field(m, 2, [](const Vec2&) { return Eigen::VectorXd(Vec2(1.0, 0.1)); });
  EXPECT_NEAR(relative_error(m, truth, approx), 0.1, 1e-12);
  EXPECT_EQ(relative_error(m, truth, truth), 0.0);
  EXPECT_NEAR(relative_error(m, truth, make_field(m, Layout::continuous, 2)), 1.0, 1e-15);
  EXPECT_THROW(relative_error(m, make_field(m, Layout::continuous, 2), truth), InvalidInput);
}

TEST(Model, FileRoundTripIsBitExact) {
  const Mesh m = square();
  const SnapshotSet s = assemble_snapshots(m, SnapshotKind::mapped_solution, solution_runs(m, {2.0, 3.0, 4.0}));
  RbfOptions o;
  o.form = Multiquadric::offset;
  o.epsilon = 0.7;
  const ReducedModel model = build_model(s, 2, o);
  const auto dir = std::filesystem::temp_directory_path() / "otrom_test_rom";
  std::filesystem::create_directories(dir);
  write_model(dir / "a.model", model);
  const ReducedModel back = read_model(dir / "a.model");
  write_model(dir / "b.model", back);
  EXPECT_EQ(slurp(dir / "a.model"), slurp(dir / "b.model"));
  EXPECT_EQ(back.kind, model.kind);
  EXPECT_EQ(back.basis.modes, model.basis.modes);
  EXPECT_EQ(back.basis.weights, model.basis.weights);
  EXPECT_EQ(back.basis.singular_values, model.basis.singular_values);
  EXPECT_EQ(back.surrogate.beta, model.surrogate.beta);
  EXPECT_EQ(back.surrogate.centers, model.surrogate.centers);
  EXPECT_EQ(back.surrogate.options.epsilon, 0.7);
  EXPECT_EQ(back.surrogate.options.form, Multiquadric::offset);
  EXPECT_EQ(back.scales, model.scales);
  EXPECT_EQ(back.predict(2.7).values, model.predict(2.7).values);

  std::ofstream(dir / "bad.model") << "OTROM-MESH 1\n";
  EXPECT_THROW(read_model(dir / "bad.model"), InvalidInput);
  const std::string bytes = slurp(dir / "a.model");
  std::ofstream(dir / "short.model", std::ios::binary) << bytes.substr(0, bytes.size() - 8);
  EXPECT_THROW(read_model(dir / "short.model"), InvalidInput);
  std::filesystem::remove_all(dir);
}

TEST(Predict, ExactAtTrainingParametersWithFullBasis) {
  const Mesh m = square();
  const std::vector<double> mus{2.0, 3.0, 4.0};
  const ReducedModel u = build_model(assemble_snapshots(m, SnapshotKind::mapped_solution, solution_runs(m, mus)), 3);
  const ReducedModel phi = build_model(assemble_snapshots(m, SnapshotKind::mapping, mapping_runs(m, mus)), 3);
  for (double mu : mus) {
    const Prediction p = predict(m, u, phi, mu);
    EXPECT_LE(relative_error(m, solution_field(m, mu), p.solution), 1e-8);
    Field phi_field = make_field(m, Layout::continuous, 2);
    for (int i = 0; i < m.n_nodes(); ++i) phi_field.values.row(i) = p.mapping.phi[i].transpose();
    EXPECT_LE(relative_error(m, mapping_field(m, 0.02 * mu), phi_field), 1e-8);
    EXPECT_FALSE(p.tangled);
    EXPECT_FALSE(p.extrapolated);
    EXPECT_EQ(p.physical.nodes(), p.mapping.phi);
  }
  EXPECT_TRUE(predict(m, u, phi, 5.0).extrapolated);
  EXPECT_THROW(predict(m, phi, u, 3.0), InvalidInput);
}

TEST(Predict, SingleTrainingParameterAndTangling) {
  const Mesh m = square();
  const ReducedModel u =
      build_model(assemble_snapshots(m, SnapshotKind::mapped_solution, solution_runs(m, {3.0})), 1);
  std::vector<std::pair<double, Field>> fold{{3.0, mapping_field(m, 0.6)}};  // amplitude > 1/pi folds
  const ReducedModel phi = build_model(assemble_snapshots(m, SnapshotKind::mapping, fold), 1);
  const Prediction a = predict(m, u, phi, 2.0), b = predict(m, u, phi, 3.5);
  EXPECT_EQ(a.solution.values, b.solution.values);
  EXPECT_TRUE(a.tangled);
  EXPECT_LE(a.min_det, 0.0);
}
