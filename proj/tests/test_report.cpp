#include "otrom/report.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

using namespace otrom;
namespace fs = std::filesystem;

namespace {

Mesh channel(std::vector<double> params = {}) { return build_case_mesh({"channel", params}, {4, 4}, 2); }
Mesh cylinder() { return build_case_mesh({"cylinder", {}}, {4, 6}, 2); }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string error_stage(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.stage();
  }
  return "none";
}

// Points of the n-th polyline in an SVG.
std::vector<std::pair<double, double>> polyline(const std::string& svg, int n) {
  const std::regex re("<polyline[^>]*points=\"([^\"]*)\"");
  auto it = std::sregex_iterator(svg.begin(), svg.end(), re);
  std::advance(it, n);
  std::vector<std::pair<double, double>> out;
  std::istringstream is((*it)[1].str());
  for (std::string tok; is >> tok;) {
    const auto comma = tok.find(',');
    out.emplace_back(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
  }
  return out;
}

SnapshotSet snapshot_set(const Mesh& mesh, SnapshotKind kind, const std::vector<double>& amplitudes, bool two_shapes) {
  std::vector<std::pair<double, Field>> runs;
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    const double a = amplitudes[i];
    const double b = two_shapes ? static_cast<double>(i) : 0.0;
    runs.emplace_back(2.0 + static_cast<double>(i), nodal_field(mesh, 2, [&](const Vec2& x) {
                        return Eigen::Vector2d(a * x.x() + b * x.y() * x.y(), a * x.y());
                      }));
  }
  return assemble_snapshots(mesh, kind, runs, true, Eigen::VectorXd::Ones(2));
}

}  // namespace

TEST(Csv, RoundTripsSeventeenDigits) {
  Table t;
  t.columns = {"x [L]", "v [-]"};
  t.rows = {{0.1, 1.0 / 3.0}, {-2.5e-300, std::nextafter(1.0, 2.0)}};
  const std::string text = to_csv(t);
  EXPECT_EQ(text.substr(0, text.find('\n')), "x [L],v [-]");
  const Table u = parse_csv(text);
  EXPECT_EQ(u.columns, t.columns);
  EXPECT_EQ(u.rows, t.rows);
  EXPECT_EQ(error_stage([] { parse_csv("a,b\n1\n"); }), "report");
}

TEST(Svg, PolylinesFollowTheTableRows) {
  Table t;
  t.columns = {"x [L]", "a [-]", "b [-]"};
  for (int i = 0; i < 5; ++i) t.rows.push_back({static_cast<double>(i), i * 2.0, std::nan("")});
  t.rows[2][2] = 7.0;
  t.rows[3][2] = 8.0;
  const std::string svg = to_svg(t, {"demo", false});
  EXPECT_NE(svg.find("width=\"800\" height=\"600\""), std::string::npos);
  const auto a = polyline(svg, 0);
  ASSERT_EQ(a.size(), 5u);
  EXPECT_DOUBLE_EQ(a.front().first, 90.0);
  EXPECT_DOUBLE_EQ(a.back().first, 770.0);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(a[i].second, a[i - 1].second);  // y grows upwards
  EXPECT_EQ(polyline(svg, 1).size(), 2u);  // NaN rows skipped
  EXPECT_NE(svg.find(">a</text>"), std::string::npos);
  EXPECT_NE(svg.find(">b</text>"), std::string::npos);
}

TEST(SingularValues, RankOneSetHasVanishingTail) {
  const Mesh m = channel();
  const Table t = singular_value_table({snapshot_set(m, SnapshotKind::mapped_solution, {1.0, 2.0, -0.5}, false)});
  ASSERT_EQ(t.n_rows(), 3);
  EXPECT_EQ(t.rows[0][1], 1.0);
  EXPECT_LE(std::abs(t.rows[1][1]), 1e-12);
}

TEST(SingularValues, OneColumnPerSetWithKindLegend) {
  const Mesh m = channel();
  const fs::path dir = fs::temp_directory_path() / "otrom_test_report_sv";
  fs::remove_all(dir);
  const Export ex = export_singular_values(
      dir, "channel",
      {snapshot_set(m, SnapshotKind::mapped_solution, {1.0, 2.0, 3.0}, true),
       snapshot_set(m, SnapshotKind::fixed_mesh_solution, {1.0, 0.5, 2.0}, true)});
  EXPECT_EQ(ex.csv.filename(), "channel_singular_values_train.csv");
  EXPECT_EQ(ex.svg.filename(), "channel_singular_values_train.svg");
  const Table t = parse_csv(slurp(ex.csv));
  EXPECT_EQ(t.columns, (std::vector<std::string>{"k [-]", "mapped_solution [-]", "fixed_mesh_solution [-]"}));
  EXPECT_EQ(t.rows, ex.table.rows);
  const std::string svg = slurp(ex.svg);
  EXPECT_NE(svg.find("class=\"legend\" x=\"602\" y=\"70\">mapped_solution<"), std::string::npos);
  EXPECT_NE(svg.find(">fixed_mesh_solution<"), std::string::npos);
  EXPECT_NE(svg.find(">1e0<"), std::string::npos);  // log axis
}

TEST(Slice, ConstantFieldIsFlatAndTwoSamplesGiveTwoRows) {
  const Mesh m = channel();
  const Field f = make_field(m, Layout::discontinuous, 1, 0.75);
  SliceSpec spec{SliceKind::constant_y, 0.3, 2};
  const Table t = sample_slice(m, f, nullptr, spec);
  ASSERT_EQ(t.n_rows(), 2);
  EXPECT_NEAR(t.rows[0][0], 0.0, 1e-12);
  EXPECT_NEAR(t.rows[1][0], 1.0, 1e-12);
  spec.samples = 50;
  for (const auto& r : sample_slice(m, f, nullptr, spec).rows) EXPECT_NEAR(r[1], 0.75, 1e-14);
}

TEST(Slice, RejectsLinesOutsideTheDomainAndTooFewSamples) {
  const Mesh m = channel();
  const Field f = make_field(m, Layout::continuous, 1, 1.0);
  EXPECT_EQ(error_stage([&] { sample_slice(m, f, nullptr, {SliceKind::constant_y, 1.5, 10}); }), "report");
  EXPECT_EQ(error_stage([&] { sample_slice(m, f, nullptr, {SliceKind::constant_y, 0.5, 1}); }), "report");
}

TEST(Slice, StagnationLineSpansCylinderToOuterBoundary) {
  const Mesh m = cylinder();
  const Field f = nodal_field(m, 1, [](const Vec2& x) { return Eigen::VectorXd::Constant(1, x.x()); });
  const Table t = sample_slice(m, f, nullptr, {SliceKind::stagnation_line, 0.0, 41});
  EXPECT_NEAR(t.rows.front()[0], -3.0, 1e-9);
  EXPECT_NEAR(t.rows.back()[0], -1.0, 1e-9);
  for (const auto& r : t.rows) EXPECT_NEAR(r[1], r[0], 1e-10);
}

TEST(Slice, MappedSliceUsesPhysicalCoordinates) {
  const Mesh m = channel();
  MeshMapping phi = MeshMapping::identity(m);
  for (Vec2& x : phi.phi) x.x() += 0.05 * std::sin(std::numbers::pi * x.x()) * std::sin(std::numbers::pi * x.y());
  // Physical x carried on the reference nodes: exact on the mapped mesh.
  Field f = make_field(m, Layout::continuous, 1);
  for (int i = 0; i < m.n_nodes(); ++i) f.values(i, 0) = phi.phi[static_cast<std::size_t>(i)].x();
  const SliceSpec spec{SliceKind::constant_y, 0.5, 33};
  const Table mapped = sample_slice(m, f, &phi, spec);
  for (const auto& r : mapped.rows) EXPECT_NEAR(r[1], r[0], 1e-10);
  const Table ref = sample_slice(m, f, nullptr, spec);
  EXPECT_NEAR(ref.rows[8][1], 0.25 + 0.05 * std::sin(std::numbers::pi * 0.25), 1e-3);
}

TEST(WallPressure, StagnantGasGivesConstantPressure) {
  const Mesh m = cylinder();
  FlowState st;
  st.mach_inf = 2.0;
  st.conserved = make_field(m, Layout::discontinuous, 4);
  const State4 rest = conservative_state(1.3, Vec2(0.0, 0.0), 0.6, st.gamma);
  for (int i = 0; i < st.conserved.n_rows(); ++i) st.conserved.values.row(i) = rest.transpose();
  const Table t = wall_pressure_table(m, st, nullptr, 101);
  ASSERT_EQ(t.n_rows(), 101);
  EXPECT_EQ(t.columns[1], "p [rho_inf u_inf^2]");
  for (const auto& r : t.rows) EXPECT_NEAR(r[1], 0.6, 1e-12);
  EXPECT_NEAR(t.rows.back()[0], std::numbers::pi, 1e-3);  // half cylinder, chord sum
  const fs::path dir = fs::temp_directory_path() / "otrom_test_report_wall";
  const Export ex = export_wall_quantity(dir, export_stem("cylinder", "wall_pressure", "2"), m, st, nullptr, 11);
  EXPECT_EQ(ex.csv.filename(), "cylinder_wall_pressure_2.csv");
  EXPECT_EQ(parse_csv(slurp(ex.csv)).rows, ex.table.rows);
  EXPECT_EQ(polyline(slurp(ex.svg), 0).size(), 11u);
}

TEST(WallPressure, MeshWithoutWallIsAnError) {
  const Mesh m = channel({1.0, 1.0, 1.0});
  FlowState st;
  st.conserved = make_field(m, Layout::discontinuous, 4, 1.0);
  EXPECT_EQ(error_stage([&] { wall_pressure_table(m, st, nullptr); }), "report");
}

TEST(Report, CrossingSpacingAndErrorTable) {
  Table t;
  t.columns = {"x [L]", "rho [-]"};
  t.rows = {{0.0, 1.0}, {1.0, 1.0}, {2.0, 3.0}, {3.0, 3.0}, {4.0, 1.0}};
  EXPECT_DOUBLE_EQ(*first_crossing(t, 1, 2.0), 1.5);
  EXPECT_FALSE(first_crossing(t, 1, 5.0).has_value());
  EXPECT_DOUBLE_EQ(node_spacing_on_line(channel(), 0.5), 0.125);
  const ErrorTable e = error_table({{2.5, 0.1, 0.02, 0.3, false}});
  EXPECT_EQ(error_table_csv(e),
            "mu [-],E_mapped [-],E_mapping [-],E_fixed [-],tangled [-]\n"
            "2.5,0.10000000000000001,0.02,0.29999999999999999,0\n"
            "mean,0.10000000000000001,0.02,0.29999999999999999,0\n"
            "max,0.10000000000000001,0.02,0.29999999999999999,0\n");
}
