#include "otrom/mesh.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

using namespace otrom;

namespace {

Mesh unit_square(int n, int p) { return build_case_mesh({"channel", {}}, {n, n}, p); }

Field scalar_field(const Mesh& mesh, const std::function<double(const Vec2&)>& f) {
  return nodal_field(mesh, 1, [&](const Vec2& x) { return Eigen::VectorXd::Constant(1, f(x)); });
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST(ReferenceElement, NodalBasisIsKroneckerAndPartitionOfUnity) {
  for (auto type : {ElementType::quadrilateral, ElementType::triangle})
    for (int p = 1; p <= 4; ++p) {
      const auto ref = reference_element(type, p);
      Eigen::VectorXd N(ref->n_nodes());
      for (int i = 0; i < ref->n_nodes(); ++i) {
        ref->eval_basis(ref->nodes()[i], N);
        for (int j = 0; j < ref->n_nodes(); ++j) EXPECT_NEAR(N[j], i == j ? 1.0 : 0.0, 1e-11);
      }
      Eigen::MatrixX2d G(ref->n_nodes(), 2);
      ref->eval_gradient(Vec2(0.21, 0.33), G);
      EXPECT_NEAR(G.col(0).sum(), 0.0, 1e-10);
      EXPECT_NEAR(G.col(1).sum(), 0.0, 1e-10);
    }
}

TEST(ReferenceElement, QuadratureIsExactToDegree2p) {
  for (int p = 1; p <= 4; ++p) {
    const auto tri = reference_element(ElementType::triangle, p);
    const auto quad = reference_element(ElementType::quadrilateral, p);
    // Integral of x^a y^b over the unit simplex: a! b! / (a + b + 2)!.
    auto fact = [](int n) { double f = 1; for (int i = 2; i <= n; ++i) f *= i; return f; };
    for (int a = 0; a <= 2 * p; ++a)
      for (int b = 0; a + b <= 2 * p; ++b) {
        double sum = 0.0;
        const auto& r = tri->quadrature();
        for (std::size_t q = 0; q < r.size(); ++q)
          sum += r.weights[q] * std::pow(r.points[q].x(), a) * std::pow(r.points[q].y(), b);
        EXPECT_NEAR(sum, fact(a) * fact(b) / fact(a + b + 2), 1e-14) << p << " " << a << " " << b;
        double qsum = 0.0;
        const auto& rq = quad->quadrature();
        for (std::size_t q = 0; q < rq.size(); ++q)
          qsum += rq.weights[q] * std::pow(rq.points[q].x(), a) * std::pow(rq.points[q].y(), b);
        const double ex = (a % 2 ? 0.0 : 2.0 / (a + 1)) * (b % 2 ? 0.0 : 2.0 / (b + 1));
        EXPECT_NEAR(qsum, ex, 1e-13);
      }
  }
}

TEST(BuildCaseMesh, CylinderHas625ElementsAndWallInside) {
  const Mesh m = build_case_mesh({"cylinder", {}}, {25, 25}, 3);
  EXPECT_EQ(m.n_elements(), 625);
  EXPECT_EQ(m.element_type(), ElementType::quadrilateral);
  const int wall = m.find_segment("wall");
  ASSERT_GE(wall, 0);
  EXPECT_EQ(m.segments()[wall].kind, BoundaryKind::wall);
  for (int id : m.boundary_nodes(wall)) EXPECT_NEAR(m.nodes()[id].norm(), 1.0, 1e-12);
  EXPECT_GT(min_geometric_jacobian(m), 0.0);
}

TEST(BuildCaseMesh, BumpAreaMatchesTrapezoidOfProfileForP1) {
  const Mesh m = build_case_mesh({"bump", {}}, {4, 2}, 1);
  EXPECT_EQ(m.n_elements(), 8);
  // A p = 1 mesh represents the bump by its chords: the enclosed area is the
  // channel area minus the trapezoid rule of the profile at the wall nodes.
  const auto& bottom = m.segments()[m.find_segment("bottom")].curve;
  double bump_area = 0.0;
  const int n = 4;
  for (int i = 0; i < n; ++i) {
    const double ya = bottom.point_at(double(i) / n).y();
    const double yb = bottom.point_at(double(i + 1) / n).y();
    bump_area += 0.5 * (ya + yb) * 3.0 / n;
  }
  EXPECT_NEAR(domain_area(m), 3.0 - bump_area, 1e-10);
}

TEST(BuildCaseMesh, BumpAreaConvergesToAnalyticForHighOrder) {
  // The sin^2 bump of height 0.04 on [1, 2] has area 0.02.
  const Mesh m = build_case_mesh({"bump", {}}, {12, 2}, 4);
  EXPECT_NEAR(domain_area(m), 3.0 - 0.02, 1e-6);
}

TEST(BuildCaseMesh, WedgeAreaIsExactAndDegenerateResolutionFails) {
  const Mesh m = build_case_mesh({"wedge", {}}, {6, 4}, 2);
  EXPECT_EQ(m.element_type(), ElementType::triangle);
  EXPECT_EQ(m.n_elements(), 48);
  const double t1 = std::tan(25.0 * std::numbers::pi / 180), t2 = std::tan(37.0 * std::numbers::pi / 180);
  const double area = 1.5 * 1.5 - (0.5 * t1 + 0.5 * t1 + 0.125 * t2);
  EXPECT_NEAR(domain_area(m) / area, 1.0, 1e-12);
  EXPECT_GT(min_geometric_jacobian(m), 0.0);
  EXPECT_THROW(build_case_mesh({"wedge", {}}, {1, 1}, 2), InvalidInput);
  EXPECT_THROW(build_case_mesh({"airfoil", {}}, {4, 4}, 2), InvalidInput);
}

TEST(BuildCaseMesh, EveryBoundaryFaceHasOneTagAndLiesOnItsCurve) {
  for (const char* name : {"cylinder", "bump", "wedge", "channel"}) {
    const Mesh m = build_case_mesh({name, {}}, {4, 4}, 3);
    std::set<std::pair<int, int>> seen;
    for (const auto& bf : m.boundary_faces()) {
      EXPECT_TRUE(seen.insert({bf.element, bf.face}).second) << name;
      const auto& curve = m.segments()[bf.segment].curve;
      auto en = m.element_nodes(bf.element);
      for (int ln : m.reference().face_nodes(bf.face)) {
        const Vec2& x = m.nodes()[en[ln]];
        EXPECT_NEAR(curve.g(x), 0.0, 1e-12) << name;
        const double t = curve.parameter(x);
        EXPECT_GE(t, -1e-12);
        EXPECT_LE(t, 1 + 1e-12);
      }
    }
  }
}

TEST(QuadratureIntegrate, ConstantsDilationAndQuadratic) {
  const Mesh m = unit_square(3, 2);
  const Field one = make_field(m, Layout::continuous, 1, 1.0);
  EXPECT_NEAR(quadrature_integrate(m, one)[0], 1.0, 1e-12);
  MeshMapping dilate = MeshMapping::identity(m);
  for (auto& x : dilate.phi) x *= 2.0;
  EXPECT_NEAR(quadrature_integrate(m, one, &dilate)[0], 4.0, 1e-10);
  for (int p = 2; p <= 4; ++p) {
    const Mesh mp = unit_square(3, p);
    EXPECT_NEAR(quadrature_integrate(mp, scalar_field(mp, [](const Vec2& x) { return x.x() * x.x(); }))[0],
                1.0 / 3.0, 1e-10);
  }
}

TEST(QuadratureIntegrate, ConstantOverMappingEqualsMappedArea) {
  const Mesh m = unit_square(4, 3);
  MeshMapping map = MeshMapping::identity(m);
  for (auto& x : map.phi) x = Vec2(x.x() + 0.1 * x.x() * x.y(), x.y() + 0.05 * std::sin(3 * x.x()) * x.y());
  const Field c = make_field(m, Layout::continuous, 1, 2.5);
  const auto jac = mapping_jacobian(m, map);
  // Mapped area via the reference-mesh quadrature of det(grad phi).
  const auto& rule = m.reference().quadrature();
  const BasisTable tab = tabulate(m.reference(), rule.points);
  double area = 0.0;
  std::size_t k = 0;
  for (int e = 0; e < m.n_elements(); ++e) {
    const Eigen::MatrixX2d X = m.element_coords(e);
    for (std::size_t q = 0; q < rule.size(); ++q, ++k)
      area += rule.weights[q] * (X.transpose() * tab.grads[q]).determinant() * jac.det[k];
  }
  EXPECT_NEAR(quadrature_integrate(m, c, &map)[0] / (2.5 * area), 1.0, 1e-10);
}

TEST(QuadratureIntegrate, RejectsTangledMapping) {
  const Mesh m = unit_square(2, 1);
  MeshMapping map = MeshMapping::identity(m);
  for (auto& x : map.phi) x = Vec2(-x.x(), x.y());
  EXPECT_THROW(quadrature_integrate(m, make_field(m, Layout::continuous, 1, 1.0), &map), TanglingError);
}

TEST(AverageDuplicateDofs, MeanOfCoLocatedValues) {
  const Mesh m = unit_square(2, 1);  // 4 bilinear elements, 9 nodes
  Field q = to_discontinuous(m, nodal_field(m, 2, [](const Vec2& x) { return Eigen::Vector2d(x); }));
  const MeshMapping same = average_duplicate_dofs(m, q);
  for (int n = 0; n < m.n_nodes(); ++n) EXPECT_NEAR((same.phi[n] - m.nodes()[n]).norm(), 0.0, 1e-15);

  // Node 1 (x = 0.5, y = 0) is shared by elements 0 and 1.
  Field d = make_field(m, Layout::discontinuous, 2);
  d.values.row(0 * 4 + 1) << 1.0, 0.0;
  d.values.row(1 * 4 + 0) << 0.0, 0.0;
  const MeshMapping avg = average_duplicate_dofs(m, d);
  EXPECT_DOUBLE_EQ(avg.phi[1].x(), 0.5);
  EXPECT_DOUBLE_EQ(avg.phi[1].y(), 0.0);

  // Corner node 0 belongs to one element only.
  d.values.row(0) << 0.3, 0.7;
  EXPECT_DOUBLE_EQ(average_duplicate_dofs(m, d).phi[0].x(), 0.3);
}

TEST(AverageDuplicateDofs, Idempotent) {
  const Mesh m = unit_square(3, 2);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  Field d = make_field(m, Layout::discontinuous, 2);
  for (int i = 0; i < d.n_rows(); ++i) d.values.row(i) << u(rng), u(rng);
  const Field once = average_duplicates(m, d);
  const Field twice = average_duplicates(m, to_discontinuous(m, once));
  EXPECT_LE((once.values - twice.values).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SnapCorners, IdentityMoveAndMiss) {
  const Mesh m = unit_square(4, 2);
  const MeshMapping id = MeshMapping::identity(m);
  const MeshMapping same = snap_corners(m, id, m.corners());
  for (int n = 0; n < m.n_nodes(); ++n) EXPECT_EQ(same.phi[n], id.phi[n]);

  MeshMapping off = id;
  off.phi[0] = Vec2(1e-3, 0.0);
  SnapReport rep;
  const MeshMapping fixed = snap_corners(m, off, {Vec2(0, 0)}, 0.0, &rep);
  EXPECT_EQ(fixed.phi[0], Vec2(0.0, 0.0));
  EXPECT_EQ(rep.snapped, 1);
  for (int n = 1; n < m.n_nodes(); ++n) EXPECT_EQ(fixed.phi[n], off.phi[n]);

  std::vector<std::string> logs;
  set_log_sink([&](const std::string& s) { logs.push_back(s); });
  const MeshMapping untouched = snap_corners(m, id, {Vec2(5, 5)}, 0.1, &rep);
  set_log_sink(nullptr);
  EXPECT_EQ(rep.missed, 1);
  EXPECT_FALSE(logs.empty());
  for (int n = 0; n < m.n_nodes(); ++n) EXPECT_EQ(untouched.phi[n], id.phi[n]);
}

TEST(SnapCorners, TanglingIsReported) {
  const Mesh m = unit_square(2, 1);
  MeshMapping map = MeshMapping::identity(m);
  // Snapping the far corner of a squashed element across the centre node tangles it.
  map.phi[2] = Vec2(1.0, 0.0);
  map.phi[4] = Vec2(0.9, 0.1);
  EXPECT_THROW(snap_corners(m, map, {Vec2(0.05, 0.95)}, 2.0), TanglingError);
}

TEST(InterpolateToPoints, ReproducesNodesAndPolynomials) {
  for (const char* name : {"channel", "wedge"})
    for (int p = 1; p <= 3; ++p) {
      const Mesh m = build_case_mesh({name, {}}, {3, 3}, p);
      auto poly = [p](const Vec2& x) {
        double v = 1.0 + 2.0 * x.x() + x.y();
        if (p >= 2) v += 0.5 * x.x() * x.x() - 0.3 * x.x() * x.y();
        if (p >= 3) v += 0.2 * x.y() * x.y() * x.y() - 0.1 * x.x() * x.x() * x.y();
        return v;
      };
      const Field f = scalar_field(m, poly);
      const Eigen::MatrixXd at_nodes = interpolate_to_points(m, f, m.nodes());
      for (int n = 0; n < m.n_nodes(); ++n) EXPECT_NEAR(at_nodes(n, 0), f.values(n, 0), 1e-12);
      std::mt19937 rng(3);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<Vec2> pts;
      Eigen::AlignedBox2d box;
      for (const auto& x : m.nodes()) box.extend(x);
      const PointLocator loc(m);
      while (pts.size() < 200) {
        Vec2 x(box.min().x() + u(rng) * box.sizes().x(), box.min().y() + u(rng) * box.sizes().y());
        if (loc.locate(x).distance == 0.0) pts.push_back(x);
      }
      const Eigen::MatrixXd v = interpolate_to_points(loc, f, pts);
      for (std::size_t k = 0; k < pts.size(); ++k) EXPECT_NEAR(v(k, 0), poly(pts[k]), 1e-10) << name << p;
    }
}

TEST(InterpolateToPoints, OutsidePointIsAnError) {
  const Mesh m = unit_square(2, 2);
  const Field f = make_field(m, Layout::continuous, 1, 1.0);
  EXPECT_THROW(interpolate_to_points(m, f, {Vec2(1.5, 0.5)}), InvalidInput);
  EXPECT_NO_THROW(interpolate_to_points(m, f, {Vec2(1.0 + 1e-10, 0.5)}));
}

TEST(InterpolateToPoints, SineConvergesAtFourthOrderForCubics) {
  std::vector<double> errs;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec2> pts;
  for (int k = 0; k < 400; ++k) pts.emplace_back(u(rng), u(rng));
  for (int n : {2, 4, 8, 16}) {
    const Mesh m = unit_square(n, 3);
    const Field f = scalar_field(m, [](const Vec2& x) { return std::sin(std::numbers::pi * x.x()); });
    const Eigen::MatrixXd v = interpolate_to_points(m, f, pts);
    double e = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k)
      e = std::max(e, std::abs(v(k, 0) - std::sin(std::numbers::pi * pts[k].x())));
    errs.push_back(e);
  }
  for (std::size_t i = 1; i < errs.size(); ++i) EXPECT_GT(std::log2(errs[i - 1] / errs[i]), 3.5);
}

TEST(InterpolateToPoints, WorksOnCurvedCylinderMesh) {
  const Mesh m = build_case_mesh({"cylinder", {}}, {6, 8}, 3);
  const Field f = scalar_field(m, [](const Vec2& x) { return 2.0 * x.x() - x.y(); });
  const std::vector<Vec2> pts = {{-1.0, 0.0}, {-2.0, 0.5}, {-0.1, 3.0}, {-2.999, 0.0}};
  const Eigen::MatrixXd v = interpolate_to_points(m, f, pts);
  for (std::size_t k = 0; k < pts.size(); ++k) EXPECT_NEAR(v(k, 0), 2 * pts[k].x() - pts[k].y(), 1e-10);
}

TEST(MappingJacobian, IdentityStretchAndGradientOfConvexPotential) {
  const Mesh m = unit_square(3, 2);
  auto jac = mapping_jacobian(m, MeshMapping::identity(m));
  for (double d : jac.det) EXPECT_NEAR(d, 1.0, 1e-13);
  MeshMapping stretch = MeshMapping::identity(m);
  for (auto& x : stretch.phi) x.x() *= 2.0;
  jac = mapping_jacobian(m, stretch);
  for (double d : jac.det) EXPECT_NEAR(d, 2.0, 1e-12);

  // phi = grad w*, w* = |x|^2 / 2 + 0.1 x^2 y: det D^2 w* = 1 + 0.2 y - 0.04 x^2.
  MeshMapping grad = MeshMapping::identity(m);
  for (auto& x : grad.phi) x = Vec2(x.x() + 0.2 * x.x() * x.y(), x.y() + 0.1 * x.x() * x.x());
  jac = mapping_jacobian(m, grad);
  const auto& rule = m.reference().quadrature();
  const BasisTable tab = tabulate(m.reference(), rule.points);
  std::size_t k = 0;
  for (int e = 0; e < m.n_elements(); ++e) {
    const Eigen::MatrixX2d X = m.element_coords(e);
    for (std::size_t q = 0; q < rule.size(); ++q, ++k) {
      const Vec2 x = X.transpose() * tab.values.row(q).transpose();
      EXPECT_NEAR(jac.det[k], 1.0 + 0.2 * x.y() - 0.04 * x.x() * x.x(), 1e-12);
    }
  }
}

TEST(MeshIo, RoundTripIsBitExact) {
  const auto dir = std::filesystem::temp_directory_path() / "otrom_mesh_io";
  std::filesystem::create_directories(dir);
  for (const char* name : {"cylinder", "bump", "wedge"}) {
    const Mesh m = build_case_mesh({name, {}}, {5, 3}, 3);
    const auto a = dir / (std::string(name) + "_a.mesh");
    const auto b = dir / (std::string(name) + "_b.mesh");
    write_mesh(a, m);
    const Mesh r = read_mesh(a);
    write_mesh(b, r);
    EXPECT_EQ(file_bytes(a), file_bytes(b));
    ASSERT_EQ(r.n_nodes(), m.n_nodes());
    for (int n = 0; n < m.n_nodes(); ++n) EXPECT_EQ(r.nodes()[n], m.nodes()[n]);
    EXPECT_EQ(r.connectivity(), m.connectivity());
    for (std::size_t s = 0; s < m.segments().size(); ++s)
      EXPECT_EQ(r.segments()[s].curve.params, m.segments()[s].curve.params);
  }
}

TEST(FieldIo, RoundTripIsBitExact) {
  const auto dir = std::filesystem::temp_directory_path() / "otrom_field_io";
  std::filesystem::create_directories(dir);
  const Mesh m = unit_square(3, 2);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field f = make_field(m, Layout::discontinuous, 4);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = u(rng) * 1e3;
  write_field(dir / "a.field", f, 2.5);
  double mu = 0.0;
  const Field r = read_field(dir / "a.field", &mu);
  write_field(dir / "b.field", r, mu);
  EXPECT_EQ(file_bytes(dir / "a.field"), file_bytes(dir / "b.field"));
  EXPECT_EQ(r.values, f.values);
  EXPECT_EQ(r.layout, Layout::discontinuous);
  EXPECT_EQ(mu, 2.5);
  const std::string bytes = file_bytes(dir / "a.field");
  std::ofstream(dir / "c.field", std::ios::binary) << bytes.substr(0, bytes.size() - 1);
  EXPECT_THROW(read_field(dir / "c.field"), InvalidInput);
  std::filesystem::remove_all(dir);
}

TEST(RetagBoundary, FacesFollowTheirImages) {
  const Mesh m = unit_square(4, 1);
  // Slide every boundary node of the bottom wall a quarter along the boundary
  // is not needed; a shear that pushes the top-left face onto the left edge is.
  MeshMapping map = MeshMapping::identity(m);
  Mesh mapped = apply_mapping(m, map);
  EXPECT_EQ(retag_boundary(m, map, mapped), 0);
  // Rotate the square by 90 degrees about its centre: bottom faces land on the right edge.
  for (auto& x : map.phi) x = Vec2(1.0 - x.y(), x.x());
  mapped = apply_mapping(m, map);
  EXPECT_EQ(retag_boundary(m, map, mapped), 16);
  for (const auto& bf : mapped.boundary_faces())
    if (m.boundary_faces()[&bf - mapped.boundary_faces().data()].segment == 0)
      EXPECT_EQ(mapped.segments()[bf.segment].name, "outflow");
}
