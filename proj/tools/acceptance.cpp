// Acceptance checks: one PASS/FAIL line per criterion.
#include "otrom/fom.hpp"
#include "otrom/monge_ampere.hpp"
#include "otrom/pipeline.hpp"
#include "otrom/report.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

using namespace otrom;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  outcomes.push_back({id, name, pass, detail});
  std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

// Rankine-Hugoniot normal-shock ratios, gamma = 1.4.
double rh_density(double m) {
  const double g = 1.4, m2 = m * m;
  return (g + 1.0) * m2 / ((g - 1.0) * m2 + 2.0);
}
double rh_pressure(double m) {
  const double g = 1.4, m2 = m * m;
  return 1.0 + 2.0 * g / (g + 1.0) * (m2 - 1.0);
}

Mesh unit_square(int n, int p) { return build_case_mesh({"channel", {}}, {n, n}, p); }

// Equidistribution and Jacobian of every converged Monge-Ampere solve.
struct MaSample {
  std::string what;
  double equidistribution;
  double min_det;
  bool probe;  // convergence-study level: residual is a discretization error
};
std::vector<MaSample> ma_samples;

void record_ma(const std::string& what, const FeSpace& fs, const MAState& s, const DensityFn& f, bool probe = false) {
  if (!s.converged) return;
  ma_samples.push_back({what, equidistribution_residual(fs, s, f),
                        mapping_jacobian(fs.mesh(), mapping_from_state(s)).min_det, probe});
}

// 1 / (1 + 3 exp(-|y - c|^2 / 0.15^2)) scaled to unit mean of rho'.
void gaussian_bump_solve() {
  const Mesh m = unit_square(16, 3);
  const FeSpace fs(m);
  const Vec2 c(0.5, 0.5);
  const auto g = [&](const Vec2& y) { return 1.0 / (1.0 + 3.0 * std::exp(-(y - c).squaredNorm() / (0.15 * 0.15))); };
  Eigen::VectorXd rho(fs.n_points());
  for (std::size_t k = 0; k < fs.n_points(); ++k) rho[static_cast<Eigen::Index>(k)] = 1.0 / g(fs.x(k));
  const double theta = fs.integral(rho) / fs.area();
  const DensityFn f = [&](const Vec2& y) { return theta * g(y); };
  record_ma("gaussian bump, 16x16 p=3", fs, solve_monge_ampere(fs, f, BoundarySpec::from_mesh(m), {}), f);
}

// ---------------------------------------------------------------------------

void criterion_1() {
  const auto t0 = Clock::now();
  const Mesh m = unit_square(8, 2);
  const FeSpace fs(m);
  const DensityFn one = [](const Vec2&) { return 1.0; };
  const MAState s = solve_monge_ampere(fs, one, BoundarySpec::from_mesh(m), {});
  Eigen::MatrixXd e = fs.at_points(s.q);
  for (std::size_t k = 0; k < fs.n_points(); ++k) e.row(static_cast<Eigen::Index>(k)) -= fs.x(k).transpose();
  const double err = fs.l2_norm(e), t = seconds_since(t0);
  record_ma("uniform density, 8x8 p=2", fs, s, one);
  report(1, "Monge-Ampere identity", s.converged && err <= 1e-8 && s.iteration <= 2 && t < 1.0,
         fmt("||phi - x|| = %.3e (<= 1e-8), %d iterations (<= 2), %.3f s (< 1 s)", err, s.iteration, t));
}

// Convex w* = |x|^2/2 + a sin(pi x) sin(pi y) and f = det D^2 w* at grad w*.
struct Manufactured {
  double a = 0.05;
  Vec2 grad(const Vec2& x) const {
    return x + a * pi * Vec2(std::cos(pi * x.x()) * std::sin(pi * x.y()), std::sin(pi * x.x()) * std::cos(pi * x.y()));
  }
  Mat2 hess(const Vec2& x) const {
    const double sx = std::sin(pi * x.x()), cx = std::cos(pi * x.x());
    const double sy = std::sin(pi * x.y()), cy = std::cos(pi * x.y());
    const double k = a * pi * pi;
    Mat2 H;
    H << 1 - k * sx * sy, k * cx * cy, k * cx * cy, 1 - k * sx * sy;
    return H;
  }
  double f(const Vec2& y) const {
    Vec2 x = y;
    for (int it = 0; it < 50; ++it) {
      const Vec2 r = grad(x) - y;
      if (r.norm() < 1e-15) break;
      x -= hess(x).lu().solve(r);
    }
    return hess(x).determinant();
  }
};

void criterion_2() {
  const auto t0 = Clock::now();
  const Manufactured w;
  bool ok = true;
  std::string detail;
  for (int p : {1, 2, 3}) {
    std::vector<double> err;
    for (int n : {2, 4, 8, 16}) {
      const Mesh m = unit_square(n, p);
      const FeSpace fs(m);
      BoundarySpec spec = BoundarySpec::from_mesh(m);
      spec.prescribed_flux = [&](const Vec2& x, const Vec2& nrm) { return w.grad(x).dot(nrm); };
      const DensityFn f = [&](const Vec2& y) { return w.f(y); };
      const MAState s = solve_monge_ampere(fs, f, spec, {});
      ok = ok && s.converged;
      const Eigen::MatrixXd q = fs.at_points(s.q);
      Eigen::MatrixXd e(q.rows(), 2);
      for (std::size_t k = 0; k < fs.n_points(); ++k)
        e.row(static_cast<Eigen::Index>(k)) = q.row(static_cast<Eigen::Index>(k)) - w.grad(fs.x(k)).transpose();
      err.push_back(fs.l2_norm(e));
      if (n == 16) record_ma(fmt("manufactured 16x16 p=%d", p), fs, s, f, true);
    }
    double worst = 1e300;
    for (std::size_t i = 1; i < err.size(); ++i) worst = std::min(worst, std::log2(err[i - 1] / err[i]));
    ok = ok && worst >= p;
    detail += fmt("p=%d min order %.2f (>= %d); ", p, worst, p);
  }
  const double t = seconds_since(t0);
  ok = ok && t < 60.0;
  report(2, "Manufactured-solution convergence", ok, detail + fmt("%.1f s (< 60 s)", t));
}

void criterion_4() {
  const auto t0 = Clock::now();
  // Free stream on curved quads and on triangles, free-stream data on every boundary.
  FlowProblem fp;
  fp.mach = 2.0;
  double fs_res = 0.0;
  auto all_inflow = [](const Mesh& m) {
    auto segs = m.segments();
    for (auto& seg : segs) seg.kind = BoundaryKind::inflow;
    return Mesh(m.case_name(), m.element_type(), m.order(), m.nodes(), m.connectivity(), m.boundary_faces(), segs,
                m.corners());
  };
  for (const Mesh& m : {all_inflow(build_case_mesh({"cylinder", {}}, {4, 6}, 3)),
                        all_inflow(build_case_mesh({"wedge", {}}, {6, 4}, 2))}) {
    const DgOperator op(m, fp);
    fs_res = std::max(fs_res, op.relative_norm(op.residual(uniform_state(m, fp).conserved)));
  }
  // Normal shock in a quasi-1D duct with the RH back pressure.
  const double mach = 2.0, g = 1.4;
  const Mesh mesh = build_case_mesh({"channel", {2.0, 0.25, 1.0}}, {32, 2}, 2);
  FlowProblem pb;
  pb.mach = mach;
  pb.back_pressure = rh_pressure(mach) / (g * mach * mach);
  DgOperator op(mesh, pb);
  FlowState s = uniform_state(mesh, pb);
  const State4 down = conservative_state(rh_density(mach), Vec2(1.0 / rh_density(mach), 0.0), pb.back_pressure, g);
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
  const SolveResult r = solve_steady(op, s, rp);
  const Field& u = r.state.conserved;
  const double defect = std::abs(op.boundary_mass_flux(u)) / op.inflow_mass_flux(u);
  double rho1 = 0, rho2 = 0, p1 = 0, p2 = 0;
  int n1 = 0, n2 = 0;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto X = mesh.element_coords(e);
    for (int i = 0; i < nl; ++i) {
      const State4 q = u.values.row(e * nl + i).transpose();
      if (X(i, 0) < 0.5) rho1 += q[0], p1 += pressure(q, g), ++n1;
      if (X(i, 0) > 1.5) rho2 += q[0], p2 += pressure(q, g), ++n2;
    }
  }
  const double dr = (rho2 / n2) / (rho1 / n1), pr = (p2 / n2) / (p1 / n1), t = seconds_since(t0);
  const bool ok = fs_res <= 1e-10 && r.converged && std::abs(dr - 8.0 / 3.0) <= 0.02 * 8.0 / 3.0 &&
                  std::abs(pr - 4.5) <= 0.02 * 4.5 && defect <= 1e-6 && t < 120.0;
  report(4, "FOM physics", ok,
         fmt("free-stream residual %.2e (<= 1e-10), density ratio %.4f (2.6667 +- 2%%), pressure ratio %.4f "
             "(4.5 +- 2%%), mass defect %.2e (<= 1e-6), %.1f s (< 120 s)",
             fs_res, dr, pr, defect, t));
}

// Independent tail oracle: eigenvalues of the weighted Gram matrix X^T W X.
void criterion_6(const TrainingSets& sets) {
  bool ok = true;
  double worst = 0.0;
  for (const SnapshotSet* s : {&sets.mapped, &sets.mappings, &sets.fixed}) {
    const Eigen::MatrixXd G = s->fields.transpose() * s->weights.asDiagonal() * s->fields;
    Eigen::VectorXd lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues().reverse();
    lam = lam.cwiseMax(0.0);
    const int n = s->n_train();
    for (int N = 1; N <= n; ++N) {
      const double err = reconstruction_error(compute_pod(*s, N), *s);
      const double tail = std::sqrt(lam.tail(n - N).sum());
      const double rel = N < n ? std::abs(err - tail) / tail : err / std::sqrt(lam[0]);
      worst = std::max(worst, rel);
      ok = ok && rel <= 1e-8;
    }
  }
  report(6, "POD tail identity", ok,
         fmt("max |E_N - sqrt(sum_{k>N} sigma_k^2)| / tail = %.2e (<= 1e-8; N = n_train relative to sigma_1)", worst));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Training, evaluation and report exports under config.output_dir.
struct DeskRun {
  TrainingResult training;
  std::vector<RunRecord> truth;
  ErrorTable errors;
  std::map<double, Table> stagnation;
  double seconds = 0.0;
};

DeskRun desk_pipeline(const CaseConfig& c) {
  const auto t0 = Clock::now();
  DeskRun d;
  d.training = run_training(c);
  d.errors = run_evaluation(c, d.training.models, &d.truth);
  d.seconds = seconds_since(t0);
  export_singular_values(c.model_dir(), c.case_name, {d.training.sets.mapped, d.training.sets.mappings, d.training.sets.fixed});
  export_errors(c.model_dir(), c.case_name, d.errors);
  std::vector<RunRecord> all = d.training.runs;
  all.insert(all.end(), d.truth.begin(), d.truth.end());
  for (const RunRecord& r : all) d.stagnation[r.mu] = export_run(r.dir, c, r, &d.training.models).front().table;
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string config_path = OTROM_DESK_CONFIG;
  std::string out = "acceptance_runs";
  std::vector<int> expect_fail;
  std::vector<int> only;
  app.add_option("--config", config_path, "Desk cylinder configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output root for the desk runs (cleared first)");
  app.add_option("--expect-fail", expect_fail, "Criteria documented as unattainable")->delimiter(',');
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> want(only.begin(), only.end());
  auto run = [&](int id) { return want.empty() || want.count(id); };

  try {
    if (run(1) || run(3)) criterion_1();
    if (run(2) || run(3)) criterion_2();
    if (run(3)) gaussian_bump_solve();
    if (run(4)) criterion_4();

    const bool desk = run(3) || run(5) || run(6) || run(7) || run(8) || run(9) || run(10);
    if (desk) {
      CaseConfig c = load_config(config_path);
      c.output_dir = fs::path(out) / "a";
      fs::remove_all(out);
      const DeskRun a = desk_pipeline(c);
      const Mesh ref = c.reference_mesh();

      if (run(3)) {
        bool ok = true;
        double eq = 0.0, det = 1e300;
        for (const auto* runs : {&a.training.runs, &a.truth})
          for (const RunRecord& r : *runs)
            ma_samples.push_back({"desk mu = " + mu_label(r.mu), r.equidistribution, r.min_det, false});
        int n_cases = 0;
        for (const auto& s : ma_samples) {
          det = std::min(det, s.min_det);
          ok = ok && s.min_det > 0.0;
          if (!s.probe) {
            eq = std::max(eq, s.equidistribution);
            ok = ok && s.equidistribution <= 1e-3;
            ++n_cases;
          }
          std::printf("       %-28s equidistribution %.3e, min det %.4f%s\n", s.what.c_str(), s.equidistribution,
                      s.min_det, s.probe ? " (convergence study, det only)" : "");
        }
        report(3, "Equidistribution", ok,
               fmt("%d case solves, max residual %.3e (<= 1e-3); %zu solves, min det grad phi %.4f (> 0)", n_cases, eq,
                   ma_samples.size(), det));
      }

      if (run(5)) {
        double worst_u = 0.0, worst_phi = 0.0;
        for (const RunRecord& r : a.training.runs) {
          const ErrorRow e = evaluate_errors(ref, r, a.training.models);
          worst_u = std::max(worst_u, e.mapped);
          worst_phi = std::max(worst_phi, e.mapping);
        }
        report(5, "ROM exactness", worst_u <= 1e-8 && worst_phi <= 1e-8,
               fmt("N = n_train = %d, max E_u~ %.2e, max E_phi %.2e at training mu (<= 1e-8)",
                   a.training.sets.mapped.n_train(), worst_u, worst_phi));
      }

      if (run(6)) criterion_6(a.training.sets);

      if (run(7)) {
        std::string rows;
        for (const auto& r : a.errors.rows)
          rows += fmt("mu %s: E_u~ %.4f E_u0 %.4f E_phi %.4f; ", mu_label(r.mu).c_str(), r.mapped, r.fixed, r.mapping);
        const bool ok = !a.errors.rows.empty() && a.errors.mean.mapped < a.errors.mean.fixed &&
                        a.errors.max.mapping <= 0.05 && a.seconds < 900.0;
        report(7, "Desk-scale error ordering", ok,
               rows + fmt("mean E_u~ %.4f < mean E_u0 %.4f, max E_phi %.4f (<= 0.05), %.0f s (< 900 s)",
                          a.errors.mean.mapped, a.errors.mean.fixed, a.errors.max.mapping, a.seconds));
      }

      if (run(8)) {
        const Table sv = singular_value_table({a.training.sets.mapped, a.training.sets.fixed});
        const auto& last = sv.rows.back();
        report(8, "Singular-value decay", last[1] <= last[2],
               fmt("sigma_k/sigma_1 at k = %d: mapped %.4e <= fixed %.4e", static_cast<int>(last[0]), last[1], last[2]));
      }

      if (run(9)) {
        const double h = node_spacing_on_line(ref, 0.0);
        std::map<double, std::pair<double, double>> mid;  // mu -> (mapped back, reference mesh)
        bool found = true;
        for (double mu : {2.0, 4.0}) {
          if (!a.stagnation.count(mu)) throw InvalidInput("acceptance", "mu = " + mu_label(mu) + " not in the desk runs");
          const Table& t = a.stagnation.at(mu);
          const double th = 0.5 * (1.0 + rh_density(mu));
          const auto mb = first_crossing(t, 2, th), u0 = first_crossing(t, 1, th);
          found = found && mb && u0;
          mid[mu] = {mb.value_or(0.0), u0.value_or(0.0)};
        }
        const double gap_mapped = std::abs(mid[2.0].first - mid[4.0].first) / h;
        const double gap_ref = std::abs(mid[2.0].second - mid[4.0].second) / h;
        report(9, "Stagnation-line alignment", found && gap_mapped <= 2.0 && gap_ref > 4.0,
               fmt("jump midpoints (x at rho = (1 + rho_RH)/2), spacing h = %.4f: mapped back %.4f vs %.4f -> %.2f h "
                   "(<= 2); reference mesh %.4f vs %.4f -> %.2f h (> 4)",
                   h, mid[2.0].first, mid[4.0].first, gap_mapped, mid[2.0].second, mid[4.0].second, gap_ref));
      }

      if (run(10)) {
        CaseConfig cb = c;
        cb.output_dir = fs::path(out) / "b";
        desk_pipeline(cb);
        int same = 0, differ = 0;
        for (const auto& entry : fs::recursive_directory_iterator(c.output_dir)) {
          if (!entry.is_regular_file()) continue;
          const fs::path other = cb.output_dir / fs::relative(entry.path(), c.output_dir);
          (fs::exists(other) && slurp(other) == slurp(entry.path()) ? same : differ)++;
        }
        int total_b = 0;
        for (const auto& entry : fs::recursive_directory_iterator(cb.output_dir)) total_b += entry.is_regular_file();
        report(10, "Determinism", differ == 0 && same == total_b && same > 0,
               fmt("rerun of train + eval + report: %d files bit-identical, %d differ or missing", same,
                   differ + (total_b - same)));
      }
    }
  } catch (const Error& e) {
    std::printf("acceptance aborted in stage %s: %s\n", e.stage().c_str(), e.what());
    return 2;
  }

  const std::set<int> expected(expect_fail.begin(), expect_fail.end());
  int unexpected = 0;
  std::printf("\n");
  for (const auto& o : outcomes) {
    if (o.pass && expected.count(o.id))
      std::printf("note: criterion %d passed although listed as expected to fail\n", o.id);
    if (!o.pass && expected.count(o.id))
      std::printf("note: criterion %d FAILED as documented (see README, Known limitations)\n", o.id);
    if (!o.pass && !expected.count(o.id)) ++unexpected;
  }
  const int passed = static_cast<int>(std::count_if(outcomes.begin(), outcomes.end(), [](auto& o) { return o.pass; }));
  std::printf("%d/%zu criteria passed, %d unexpected failures\n", passed, outcomes.size(), unexpected);
  return unexpected == 0 ? 0 : 1;
}
