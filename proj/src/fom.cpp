#include "otrom/fom.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <limits>
#include <map>
#include <sstream>

namespace otrom {

double pressure(const State4& u, double gamma) {
  return (gamma - 1.0) * (u[3] - 0.5 * (u[1] * u[1] + u[2] * u[2]) / u[0]);
}

double sound_speed(const State4& u, double gamma) { return std::sqrt(gamma * pressure(u, gamma) / u[0]); }

State4 conservative_state(double rho, const Vec2& v, double p, double gamma) {
  return State4(rho, rho * v.x(), rho * v.y(), p / (gamma - 1.0) + 0.5 * rho * v.squaredNorm());
}

State4 free_stream_state(double mach, double gamma) {
  require(mach > 0.0, "fom", "Mach number must be positive");
  return conservative_state(1.0, Vec2(1.0, 0.0), 1.0 / (gamma * mach * mach), gamma);
}

Flux4 euler_flux(const State4& u, double gamma) {
  const double rho = u[0];
  if (!(rho > 0.0)) throw PhysicsError("nonpositive density");
  const double p = pressure(u, gamma);
  if (!(p > 0.0)) throw PhysicsError("nonpositive pressure");
  const double v1 = u[1] / rho, v2 = u[2] / rho;
  Flux4 f;
  f.col(0) << u[1], u[1] * v1 + p, u[2] * v1, (u[3] + p) * v1;
  f.col(1) << u[2], u[1] * v2, u[2] * v2 + p, (u[3] + p) * v2;
  return f;
}

void euler_flux_jacobians(const State4& u, double gamma, Eigen::Matrix4d& ax, Eigen::Matrix4d& ay) {
  const double rho = u[0], v1 = u[1] / rho, v2 = u[2] / rho;
  const double g1 = gamma - 1.0, q2 = v1 * v1 + v2 * v2;
  const double H = (u[3] + pressure(u, gamma)) / rho;
  ax << 0, 1, 0, 0,
      0.5 * g1 * q2 - v1 * v1, (3 - gamma) * v1, -g1 * v2, g1,
      -v1 * v2, v2, v1, 0,
      v1 * (0.5 * g1 * q2 - H), H - g1 * v1 * v1, -g1 * v1 * v2, gamma * v1;
  ay << 0, 0, 1, 0,
      -v1 * v2, v2, v1, 0,
      0.5 * g1 * q2 - v2 * v2, -g1 * v1, (3 - gamma) * v2, g1,
      v2 * (0.5 * g1 * q2 - H), -g1 * v1 * v2, H - g1 * v2 * v2, gamma * v2;
}

State4 llf_flux(const State4& l, const State4& r, const Vec2& n, double gamma) {
  const State4 fl = euler_flux(l, gamma) * n;
  const State4 fr = euler_flux(r, gamma) * n;
  const double sl = std::abs((l[1] * n.x() + l[2] * n.y()) / l[0]) + sound_speed(l, gamma);
  const double sr = std::abs((r[1] * n.x() + r[2] * n.y()) / r[0]) + sound_speed(r, gamma);
  return 0.5 * (fl + fr) + 0.5 * std::max(sl, sr) * (l - r);
}

ShockJump normal_shock(double m, double gamma) {
  require(m > 1.0, "fom", "normal shock needs a supersonic upstream Mach number");
  const double m2 = m * m;
  ShockJump j;
  j.density_ratio = (gamma + 1) * m2 / ((gamma - 1) * m2 + 2);
  j.pressure_ratio = 1 + 2 * gamma / (gamma + 1) * (m2 - 1);
  j.mach_after = std::sqrt((1 + 0.5 * (gamma - 1) * m2) / (gamma * m2 - 0.5 * (gamma - 1)));
  return j;
}

double billig_standoff(double mach) { return 0.386 * std::exp(4.67 / (mach * mach)); }

void RegParams::validate() const {
  require(lambda1 > 0 && lambda2 > 0 && ell > 0, "fom", "regularization parameters must be positive");
  require(ramp_factor > 0 && ramp_factor <= 1, "fom", "ramp factor must be in (0, 1]");
  require(lambda1_floor > 0 && lambda2_floor > 0, "fom", "regularization floors must be positive");
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

Eigen::Index dof(int node, int c) { return static_cast<Eigen::Index>(node) * 4 + c; }

State4 node_state(const Field& u, int row) { return u.values.row(row).transpose(); }

/// Value and d/du of a flux function of one state by central differences.
template <class F>
Eigen::Matrix4d fd_jacobian(const F& flux, const State4& u, double gamma) {
  // Steps shrink until both perturbed states stay physical (near-vacuum states).
  auto physical = [gamma](const State4& v) { return v[0] > 0.0 && pressure(v, gamma) > 0.0; };
  Eigen::Matrix4d d;
  for (int c = 0; c < 4; ++c) {
    double h = 1e-7 * std::max(1.0, std::abs(u[c]));
    State4 up = u, um = u;
    for (int k = 0;; ++k) {
      up[c] = u[c] + h;
      um[c] = u[c] - h;
      if ((physical(up) && physical(um)) || k == 8) break;
      h *= 0.1;
    }
    d.col(c) = (flux(up) - flux(um)) / (2 * h);
  }
  return d;
}

void add_block(Triplets& t, int row_node, int col_node, const Eigen::Matrix4d& b) {
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (b(r, c) != 0.0) t.emplace_back(dof(row_node, r), dof(col_node, c), b(r, c));
}

}  // namespace

DgOperator::DgOperator(const Mesh& mesh, FlowProblem problem)
    : space_(mesh), problem_(problem) {
  const Mesh& m = space_.mesh();
  const auto& ref = m.reference();
  const int nl = m.n_local(), nq = space_.n_qp();

  h_.resize(m.n_elements());
  std::vector<double> area(m.n_elements(), 0.0);
  for (int e = 0; e < m.n_elements(); ++e) {
    for (int q = 0; q < nq; ++q) area[e] += space_.jw(static_cast<std::size_t>(e) * nq + q);
    h_[e] = std::sqrt(area[e]) / m.order();
  }
  mass_.resize(m.n_elements());
  mass_llt_.resize(m.n_elements());
  for (int e = 0; e < m.n_elements(); ++e) {
    Eigen::MatrixXd Me = Eigen::MatrixXd::Zero(nl, nl);
    for (int q = 0; q < nq; ++q) {
      const auto N = space_.table().values.row(q);
      Me.noalias() += space_.jw(static_cast<std::size_t>(e) * nq + q) * N.transpose() * N;
    }
    mass_[e] = Me;
    mass_llt_[e].compute(Me);
  }

  // Face pairing by the global ids of the face end vertices.
  std::map<std::pair<int, int>, std::pair<int, int>> open;
  std::vector<std::array<int, 4>> pairs;  // e-, f-, e+, f+
  for (int e = 0; e < m.n_elements(); ++e) {
    auto en = m.element_nodes(e);
    for (int f = 0; f < ref.n_faces(); ++f) {
      const auto& fn = ref.face_nodes(f);
      const int a = en[fn.front()], b = en[fn.back()];
      const auto key = std::minmax(a, b);
      if (auto it = open.find(key); it != open.end()) {
        pairs.push_back({it->second.first, it->second.second, e, f});
        open.erase(it);
      } else {
        open[key] = {e, f};
      }
    }
  }
  std::map<std::pair<int, int>, int> boundary_segment;
  for (const auto& bf : m.boundary_faces()) boundary_segment[{bf.element, bf.face}] = bf.segment;
  require(open.size() == boundary_segment.size(), "fom", "unmatched faces do not agree with the boundary tags");

  std::vector<double> s, w;
  gauss_legendre(m.order() + 2, s, w);
  auto side = [&](int e, int f, double t, Eigen::VectorXd& N, Eigen::MatrixX2d& G, Vec2& x, Vec2& tangent) {
    const Eigen::MatrixX2d X = m.element_coords(e);
    const Vec2 xi = ref.face_point(f, t);
    N.resize(nl);
    Eigen::MatrixX2d Gr(nl, 2);
    ref.eval_basis(xi, N);
    ref.eval_gradient(xi, Gr);
    const auto g = point_geometry(X, N, Gr);
    G = Gr * g.inv;
    x = g.x;
    tangent = g.jac * (0.5 * (ref.face_point(f, 1.0) - ref.face_point(f, -1.0)));
  };
  const double tol = 1e-9 * m.diameter();
  const double pen = 4.0 * (m.order() + 1) * (m.order() + 1);
  for (const auto& pr : pairs) {
    double flen = 0.0;
    std::vector<FacePoint> pts;
    for (std::size_t i = 0; i < s.size(); ++i) {
      FacePoint fp;
      fp.left = pr[0];
      fp.right = pr[2];
      Vec2 t, xr, tr;
      side(pr[0], pr[1], s[i], fp.n_left, fp.g_left, fp.x, t);
      side(pr[2], pr[3], -s[i], fp.n_right, fp.g_right, xr, tr);
      if ((xr - fp.x).norm() > tol) throw InvalidInput("fom", "face quadrature points do not match");
      fp.normal = Vec2(t.y(), -t.x()) / t.norm();
      fp.ds = w[i] * t.norm();
      flen += fp.ds;
      pts.push_back(std::move(fp));
    }
    const double hf = std::min(area[pr[0]], area[pr[2]]) / flen;
    for (auto& fp : pts) {
      fp.penalty = pen / hf;
      faces_.push_back(std::move(fp));
    }
  }
  for (const auto& [ef, seg] : boundary_segment) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      FacePoint fp;
      fp.left = ef.first;
      fp.segment = seg;
      Vec2 t;
      side(ef.first, ef.second, s[i], fp.n_left, fp.g_left, fp.x, t);
      fp.normal = Vec2(t.y(), -t.x()) / t.norm();
      fp.ds = w[i] * t.norm();
      faces_.push_back(std::move(fp));
    }
  }

  const State4 u_inf = problem_.inflow();
  residual_scale_ = euler_flux(u_inf, problem_.gamma).norm() * std::sqrt(space_.area()) / m.diameter();
  viscous_ = SparseMatrix(static_cast<Eigen::Index>(m.n_elements()) * nl, static_cast<Eigen::Index>(m.n_elements()) * nl);
  eta_points_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space_.n_points()));
}

State4 DgOperator::boundary_state(const State4& u, const Vec2& n, int segment) const {
  const double gamma = problem_.gamma;
  switch (mesh().segments()[segment].kind) {
    case BoundaryKind::inflow:
      return problem_.inflow();
    case BoundaryKind::outflow:
      return u;
    case BoundaryKind::pressure_outlet: {
      const double pb = problem_.back_pressure > 0 ? problem_.back_pressure : pressure(problem_.inflow(), gamma);
      const Vec2 v(u[1] / u[0], u[2] / u[0]);
      return conservative_state(u[0], v, pb, gamma);
    }
    case BoundaryKind::wall:
    case BoundaryKind::symmetry: {
      const Vec2 m(u[1], u[2]);
      const Vec2 mr = m - 2.0 * m.dot(n) * n;
      return State4(u[0], mr.x(), mr.y(), u[3]);
    }
  }
  return u;
}

void DgOperator::set_viscosity(const Field& eta, double lambda1) {
  const Mesh& m = mesh();
  require(eta.n_components() == 1 && eta.layout == Layout::continuous, "fom", "eta must be a continuous scalar");
  lambda1_ = lambda1;
  eta_points_ = space_.at_points(eta).col(0);
  const int nl = m.n_local(), nq = space_.n_qp();
  Triplets t;
  for (int e = 0; e < m.n_elements(); ++e) {
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nl, nl);
    for (int q = 0; q < nq; ++q) {
      const std::size_t k = static_cast<std::size_t>(e) * nq + q;
      const double nu = lambda1 * eta_points_[k];
      if (nu != 0.0) K.noalias() += space_.jw(k) * nu * space_.grad(k) * space_.grad(k).transpose();
    }
    for (int i = 0; i < nl; ++i)
      for (int j = 0; j < nl; ++j)
        if (K(i, j) != 0.0) t.emplace_back(e * nl + i, e * nl + j, K(i, j));
  }
  Eigen::VectorXd N(nl);
  for (const auto& fp : faces_) {
    if (fp.right < 0) continue;
    const auto en = m.element_nodes(fp.left);
    Eigen::VectorXd etae(nl);
    for (int i = 0; i < nl; ++i) etae[i] = eta.values(en[i], 0);
    const double nu = lambda1 * fp.n_left.dot(etae);
    if (nu == 0.0) continue;
    const Eigen::VectorXd dl = fp.g_left * fp.normal, dr = fp.g_right * fp.normal;
    const double sig = fp.penalty * nu;
    const Eigen::VectorXd &nlft = fp.n_left, &nrgt = fp.n_right;
    auto put = [&](int eo, int ei, const Eigen::MatrixXd& B) {
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j) t.emplace_back(eo * nl + i, ei * nl + j, fp.ds * B(i, j));
    };
    put(fp.left, fp.left, -0.5 * nu * (nlft * dl.transpose() + dl * nlft.transpose()) + sig * nlft * nlft.transpose());
    put(fp.left, fp.right, -0.5 * nu * nlft * dr.transpose() + 0.5 * nu * dl * nrgt.transpose() - sig * nlft * nrgt.transpose());
    put(fp.right, fp.left, 0.5 * nu * nrgt * dl.transpose() - 0.5 * nu * dr * nlft.transpose() - sig * nrgt * nlft.transpose());
    put(fp.right, fp.right, 0.5 * nu * (nrgt * dr.transpose() + dr * nrgt.transpose()) + sig * nrgt * nrgt.transpose());
  }
  viscous_.setFromTriplets(t.begin(), t.end());
}

Field DgOperator::residual(const Field& u) const {
  const Mesh& m = mesh();
  const double gamma = problem_.gamma;
  const int nl = m.n_local(), nq = space_.n_qp();
  require(u.layout == Layout::discontinuous && u.n_components() == 4, "fom", "state must be a discontinuous 4-field");
  Field r = make_field(m, Layout::discontinuous, 4);
  for (int e = 0; e < m.n_elements(); ++e) {
    const auto U = u.values.middleRows(static_cast<Eigen::Index>(e) * nl, nl);
    auto R = r.values.middleRows(static_cast<Eigen::Index>(e) * nl, nl);
    for (int q = 0; q < nq; ++q) {
      const std::size_t k = static_cast<std::size_t>(e) * nq + q;
      const State4 uq = U.transpose() * space_.table().values.row(q).transpose();
      const Flux4 F = euler_flux(uq, gamma);
      R.noalias() -= space_.jw(k) * space_.grad(k) * F.transpose();
    }
  }
  for (const auto& fp : faces_) {
    const State4 ul = u.values.middleRows(static_cast<Eigen::Index>(fp.left) * nl, nl).transpose() * fp.n_left;
    State4 ur;
    if (fp.right >= 0)
      ur = u.values.middleRows(static_cast<Eigen::Index>(fp.right) * nl, nl).transpose() * fp.n_right;
    else
      ur = boundary_state(ul, fp.normal, fp.segment);
    const State4 fh = llf_flux(ul, ur, fp.normal, gamma);
    r.values.middleRows(static_cast<Eigen::Index>(fp.left) * nl, nl).noalias() += fp.ds * fp.n_left * fh.transpose();
    if (fp.right >= 0)
      r.values.middleRows(static_cast<Eigen::Index>(fp.right) * nl, nl).noalias() -= fp.ds * fp.n_right * fh.transpose();
  }
  if (viscous_.nonZeros() > 0) r.values += viscous_ * u.values;
  return r;
}

Field DgOperator::residual(const Field& u, SparseMatrix& jac) const {
  const Mesh& m = mesh();
  const double gamma = problem_.gamma;
  const int nl = m.n_local(), nq = space_.n_qp();
  Field r = residual(u);
  Triplets t;
  t.reserve(static_cast<std::size_t>(m.n_elements()) * 16 * nl * nl * 4);
  Eigen::Matrix4d ax, ay;
  for (int e = 0; e < m.n_elements(); ++e) {
    const auto U = u.values.middleRows(static_cast<Eigen::Index>(e) * nl, nl);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(4 * nl, 4 * nl);
    for (int q = 0; q < nq; ++q) {
      const std::size_t k = static_cast<std::size_t>(e) * nq + q;
      const auto N = space_.table().values.row(q);
      const State4 uq = U.transpose() * N.transpose();
      euler_flux_jacobians(uq, gamma, ax, ay);
      const Eigen::MatrixX2d& G = space_.grad(k);
      for (int i = 0; i < nl; ++i) {
        const Eigen::Matrix4d Ai = -space_.jw(k) * (G(i, 0) * ax + G(i, 1) * ay);
        for (int j = 0; j < nl; ++j) B.block<4, 4>(4 * i, 4 * j) += N(j) * Ai;
      }
    }
    for (int i = 0; i < 4 * nl; ++i)
      for (int j = 0; j < 4 * nl; ++j)
        if (B(i, j) != 0.0) t.emplace_back(static_cast<Eigen::Index>(e) * nl * 4 + i, static_cast<Eigen::Index>(e) * nl * 4 + j, B(i, j));
  }
  for (const auto& fp : faces_) {
    const State4 ul = u.values.middleRows(static_cast<Eigen::Index>(fp.left) * nl, nl).transpose() * fp.n_left;
    Eigen::Matrix4d dl, dr;
    if (fp.right >= 0) {
      const State4 ur = u.values.middleRows(static_cast<Eigen::Index>(fp.right) * nl, nl).transpose() * fp.n_right;
      dl = fd_jacobian([&](const State4& v) { return llf_flux(v, ur, fp.normal, gamma); }, ul, gamma);
      dr = fd_jacobian([&](const State4& v) { return llf_flux(ul, v, fp.normal, gamma); }, ur, gamma);
    } else {
      dl = fd_jacobian(
          [&](const State4& v) { return llf_flux(v, boundary_state(v, fp.normal, fp.segment), fp.normal, gamma); }, ul,
          gamma);
    }
    for (int i = 0; i < nl; ++i)
      for (int j = 0; j < nl; ++j) {
        add_block(t, fp.left * nl + i, fp.left * nl + j, fp.ds * fp.n_left[i] * fp.n_left[j] * dl);
        if (fp.right >= 0) {
          add_block(t, fp.left * nl + i, fp.right * nl + j, fp.ds * fp.n_left[i] * fp.n_right[j] * dr);
          add_block(t, fp.right * nl + i, fp.left * nl + j, -fp.ds * fp.n_right[i] * fp.n_left[j] * dl);
          add_block(t, fp.right * nl + i, fp.right * nl + j, -fp.ds * fp.n_right[i] * fp.n_right[j] * dr);
        }
      }
  }
  for (int k = 0; k < viscous_.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(viscous_, k); it; ++it)
      for (int c = 0; c < 4; ++c) t.emplace_back(dof(static_cast<int>(it.row()), c), dof(static_cast<int>(it.col()), c), it.value());
  jac.resize(n_dofs(), n_dofs());
  jac.setFromTriplets(t.begin(), t.end());
  return r;
}

SparseMatrix DgOperator::pseudo_time_mass(const Field& u, double cfl) const {
  const Mesh& m = mesh();
  const double gamma = problem_.gamma;
  const int nl = m.n_local();
  Triplets t;
  for (int e = 0; e < m.n_elements(); ++e) {
    double smax = 0.0;
    for (int i = 0; i < nl; ++i) {
      const State4 un = node_state(u, e * nl + i);
      smax = std::max(smax, std::hypot(un[1], un[2]) / un[0] + sound_speed(un, gamma));
    }
    const double dt = cfl * h_[e] / smax;
    const Eigen::MatrixXd& Me = mass_[e];
    for (int i = 0; i < nl; ++i)
      for (int j = 0; j < nl; ++j)
        for (int c = 0; c < 4; ++c) t.emplace_back(dof(e * nl + i, c), dof(e * nl + j, c), Me(i, j) / dt);
  }
  SparseMatrix M(n_dofs(), n_dofs());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

double DgOperator::boundary_mass_flux(const Field& u) const {
  const int nl = mesh().n_local();
  double total = 0.0;
  for (const auto& fp : faces_) {
    if (fp.right >= 0) continue;
    const State4 ul = u.values.middleRows(static_cast<Eigen::Index>(fp.left) * nl, nl).transpose() * fp.n_left;
    total += fp.ds * llf_flux(ul, boundary_state(ul, fp.normal, fp.segment), fp.normal, problem_.gamma)[0];
  }
  return total;
}

double DgOperator::inflow_mass_flux(const Field& u) const {
  const int nl = mesh().n_local();
  double total = 0.0;
  for (const auto& fp : faces_) {
    if (fp.right >= 0 || mesh().segments()[fp.segment].kind != BoundaryKind::inflow) continue;
    const State4 ul = u.values.middleRows(static_cast<Eigen::Index>(fp.left) * nl, nl).transpose() * fp.n_left;
    total -= fp.ds * llf_flux(ul, boundary_state(ul, fp.normal, fp.segment), fp.normal, problem_.gamma)[0];
  }
  return total;
}

bool DgOperator::admissible(const Field& u, const Field* reference, double min_ratio) const {
  const double gamma = problem_.gamma;
  auto ok = [&](const Eigen::MatrixXd& now, const Eigen::MatrixXd* before) {
    for (Eigen::Index k = 0; k < now.rows(); ++k) {
      const State4 un = now.row(k).transpose();
      const double rho = un[0], p = pressure(un, gamma);
      if (!(rho > 0.0) || !(p > 0.0)) return false;
      if (before) {
        const State4 ub = before->row(k).transpose();
        if (rho < min_ratio * ub[0] || p < min_ratio * pressure(ub, gamma)) return false;
      }
    }
    return true;
  };
  if (reference) {
    const Eigen::MatrixXd rp = space_.at_points(*reference), rf = at_face_points(*reference);
    return ok(u.values, &reference->values) && ok(space_.at_points(u), &rp) && ok(at_face_points(u), &rf);
  }
  return ok(u.values, nullptr) && ok(space_.at_points(u), nullptr) && ok(at_face_points(u), nullptr);
}

Eigen::MatrixXd DgOperator::at_face_points(const Field& u) const {
  const int nl = mesh().n_local();
  std::size_t n = 0;
  for (const auto& fp : faces_) n += fp.right >= 0 ? 2 : 1;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), 4);
  Eigen::Index k = 0;
  for (const auto& fp : faces_) {
    out.row(k++) = fp.n_left.transpose() * u.values.middleRows(static_cast<Eigen::Index>(fp.left) * nl, nl);
    if (fp.right >= 0)
      out.row(k++) = fp.n_right.transpose() * u.values.middleRows(static_cast<Eigen::Index>(fp.right) * nl, nl);
  }
  return out;
}

double DgOperator::relative_norm(const Field& r) const {
  double s = 0.0;
  const int nl = mesh().n_local();
  for (int e = 0; e < mesh().n_elements(); ++e) {
    const auto R = r.values.middleRows(static_cast<Eigen::Index>(e) * nl, nl);
    s += (R.transpose() * mass_llt_[e].solve(R)).trace();
  }
  return std::sqrt(s) / residual_scale_;
}

const HelmholtzSmoother& DgOperator::smoother(double length) const {
  if (!smoother_ || smoother_->length() != length)
    smoother_ = std::make_unique<HelmholtzSmoother>(space_, length, HelmholtzBc::dirichlet_wall);
  return *smoother_;
}

AvField update_viscosity(const DgOperator& op, const FlowState& state, const RegParams& params,
                         const SensorConfig& config) {
  const Mesh& m = op.mesh();
  const Field S = dilatation_sensor(op.space(), state.conserved);
  AvField av;
  av.s_max = config.s_max_factor * std::max(S.values.maxCoeff(), 0.0);
  if (!(av.s_max > config.s_min)) {
    av.eta = make_field(m, Layout::continuous, 1);
    return av;
  }
  Field src = S;
  for (int i = 0; i < src.n_rows(); ++i)
    src.values(i, 0) = smooth_clip(S.values(i, 0), config.s_min, av.s_max, config.clip_sharpness);
  av.eta = op.smoother(params.lambda2 * params.ell).smooth(src);
  av.eta.values = av.eta.values.cwiseMax(0.0);
  return av;
}

FlowState uniform_state(const Mesh& mesh, const FlowProblem& problem) {
  FlowState s;
  s.gamma = problem.gamma;
  s.mach_inf = problem.mach;
  s.conserved = make_field(mesh, Layout::discontinuous, 4);
  s.conserved.values.rowwise() = problem.inflow().transpose();
  return s;
}

FlowState wall_layer_state(const Mesh& mesh, const FlowProblem& problem, double layer) {
  require(layer > 0.0, "fom", "wall layer thickness must be positive");
  FlowState s = uniform_state(mesh, problem);
  const double gamma = problem.gamma;
  const State4 inf = problem.inflow();
  const Vec2 v_inf(inf[1] / inf[0], inf[2] / inf[0]);
  const double p_inf = pressure(inf, gamma);
  const int nl = mesh.n_local();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixX2d X = mesh.element_coords(e);
    for (int i = 0; i < nl; ++i) {
      const Vec2 x = X.row(i).transpose();
      double best = std::numeric_limits<double>::infinity();
      Vec2 normal = Vec2::Zero();
      for (const auto& seg : mesh.segments()) {
        if (seg.kind != BoundaryKind::wall) continue;
        const double d = (seg.curve.project(x) - x).norm();
        if (d < best) {
          best = d;
          normal = seg.curve.grad_g(x).normalized();
        }
      }
      if (!std::isfinite(best)) continue;
      const double vn = std::max(v_inf.dot(normal), 0.0);
      const Vec2 v = v_inf - vn * std::exp(-best / layer) * normal;
      s.conserved.values.row(e * nl + i) = conservative_state(inf[0], v, p_inf, gamma).transpose();
    }
  }
  return s;
}

namespace {

Eigen::VectorXd flatten(const Field& f) {
  Eigen::VectorXd v(f.values.size());
  for (int i = 0; i < f.n_rows(); ++i)
    for (int c = 0; c < 4; ++c) v[dof(i, c)] = f.values(i, c);
  return v;
}

void add_flat(Field& f, const Eigen::VectorXd& v, double alpha) {
  for (int i = 0; i < f.n_rows(); ++i)
    for (int c = 0; c < 4; ++c) f.values(i, c) += alpha * v[dof(i, c)];
}

bool same_pattern(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.rows() != b.rows() || a.nonZeros() != b.nonZeros()) return false;
  return std::equal(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1, b.outerIndexPtr()) &&
         std::equal(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros(), b.innerIndexPtr());
}

double eta_integral(const DgOperator& op, const AvField& av) {
  return op.space().integral(op.space().at_points(av.eta).col(0));
}

}  // namespace

SolveResult solve_steady(DgOperator& op, const FlowState& initial, const RegParams& params,
                         const SolveOptions& opt) {
  params.validate();
  SolveResult res;
  res.params = params;
  res.state = initial;
  Field& u = res.state.conserved;
  if (!op.admissible(u)) throw PhysicsError("initial state is not admissible");

  auto refresh = [&](const Field& state) {
    FlowState fs = res.state;
    fs.conserved = state;
    res.av = update_viscosity(op, fs, params);
    op.set_viscosity(res.av.eta, params.lambda1);
  };
  refresh(u);
  Field r = op.residual(u);
  double rn = op.relative_norm(r);
  res.residual_history.push_back(rn);
  double cfl = opt.cfl0;
  bool frozen = false;
  SparseMatrix J;
  Eigen::SparseLU<SparseMatrix> lu;
  bool pattern_ready = false;
  SparseMatrix pattern;

  for (int it = 0; it < opt.max_iter && rn > opt.tol; ++it) {
    op.residual(u, J);
    SparseMatrix A = J + op.pseudo_time_mass(u, cfl);
    A.makeCompressed();
    if (!pattern_ready || !same_pattern(A, pattern)) {
      lu.analyzePattern(A);
      pattern = A;
      pattern_ready = true;
    }
    lu.factorize(A);
    if (lu.info() != Eigen::Success) throw ConvergenceError("fom", "Newton linear solve failed");
    const Eigen::VectorXd rhs = -flatten(r);
    const Eigen::VectorXd du = lu.solve(rhs);

    double alpha = 1.0;
    Field trial = u;
    add_flat(trial, du, 1.0);
    int halvings = 0;
    if (!op.admissible(trial, &u, opt.min_state_ratio)) {
      if (cfl > opt.cfl_min) {
        cfl = std::max(0.25 * cfl, opt.cfl_min);
        continue;
      }
      // At the smallest pseudo-time step: backtrack along the Newton direction.
      for (;;) {
        if (++halvings > opt.max_halvings) throw PhysicsError("positivity lost after step halvings");
        alpha *= 0.5;
        trial = u;
        add_flat(trial, du, alpha);
        if (op.admissible(trial, &u, opt.min_state_ratio)) break;
      }
    }
    if (!frozen) refresh(trial);
    Field rt = op.residual(trial);
    const double rtn = op.relative_norm(rt);
    if (rtn > 4.0 * rn && cfl > opt.cfl_min) {
      // Reject: restore eta for the old state and retry with a smaller step.
      if (!frozen) refresh(u);
      cfl = std::max(0.25 * cfl, opt.cfl_min);
      continue;
    }
    const double ratio = rn / std::max(rtn, 1e-300);
    // Switched evolution relaxation, pushed upward while the residual is flat.
    double growth = std::clamp(ratio, 0.5, 4.0);
    if (ratio > 0.9) growth = std::max(growth, 2.0);
    cfl = std::clamp(cfl * growth, opt.cfl_min, opt.cfl_max);
    u = std::move(trial);
    r = std::move(rt);
    rn = rtn;
    res.iterations = it + 1;
    res.residual_history.push_back(rn);
    if (opt.freeze_eta_below > 0.0 && rn < opt.freeze_eta_below) frozen = true;
    const auto& hist = res.residual_history;
    if (opt.stall_window > 0 && rn < opt.stall_freeze_below && hist.size() > static_cast<std::size_t>(opt.stall_window) &&
        rn > 0.5 * hist[hist.size() - 1 - opt.stall_window] && !frozen) {
      frozen = true;
      log_message("fom: eta frozen after stall");
    }
    if (opt.abort_window > 0 && hist.size() > static_cast<std::size_t>(opt.abort_window) &&
        *std::min_element(hist.end() - opt.abort_window, hist.end()) >
            *std::min_element(hist.begin(), hist.end() - opt.abort_window)) {
      log_message("fom: no progress, giving up");
      break;
    }
    std::ostringstream os;
    os << "fom," << res.iterations << "," << rn << "," << cfl << "," << params.lambda1 << "," << params.lambda2;
    log_message(os.str());
  }
  res.converged = rn <= opt.tol;
  res.eta_integral = eta_integral(op, res.av);
  return res;
}

ContinuationResult continuation_solve(DgOperator& op, const FlowState& initial, const RegParams& params0,
                                      const SolveOptions& options) {
  params0.validate();
  ContinuationResult out;
  const double mach = op.problem().mach;
  double rho_limit = std::numeric_limits<double>::infinity();
  if (mach > 1.0) {
    const double g = op.problem().gamma;
    const auto j = normal_shock(mach, g);
    rho_limit = 1.2 * j.density_ratio * std::pow(1 + 0.5 * (g - 1) * j.mach_after * j.mach_after, 1 / (g - 1));
  }
  RegParams p = params0;
  FlowState start = initial;
  bool have = false;
  for (;;) {
    ++out.solves;
    std::string failure;
    SolveResult r;
    try {
      r = solve_steady(op, start, p, options);
      if (!r.converged) failure = "solve did not converge";
      else if (r.state.conserved.values.col(0).maxCoeff() > rho_limit) failure = "density overshoot";
    } catch (const Error& e) {
      failure = e.what();
    }
    if (!failure.empty()) {
      if (!have) throw ConvergenceError("fom", "first continuation solve failed: " + failure);
      out.stop_reason = failure;
      break;
    }
    have = true;
    out.result = r;
    out.accepted.push_back(p);
    out.eta_integrals.push_back(r.eta_integral);
    out.viscosity_integrals.push_back(p.lambda1 * r.eta_integral);
    std::ostringstream os;
    os << "continuation," << p.lambda1 << "," << p.lambda2 << "," << r.eta_integral << "," << p.lambda1 * r.eta_integral
       << "," << r.iterations;
    log_message(os.str());
    start = r.state;
    if (p.ramp_factor >= 1.0) {
      out.stop_reason = "single solve";
      break;
    }
    const RegParams next = [&] {
      RegParams q = p;
      q.lambda1 *= p.ramp_factor;
      q.lambda2 *= p.ramp_factor;
      return q;
    }();
    if (next.lambda1 < p.lambda1_floor || next.lambda2 < p.lambda2_floor) {
      out.stop_reason = "floor reached";
      break;
    }
    p = next;
  }
  // Leave the operator consistent with the accepted solution.
  op.set_viscosity(out.result.av.eta, out.result.params.lambda1);
  return out;
}

double default_lambda1(const Mesh& mesh) {
  const double h = 4.0 * mesh.mean_edge_length() / mesh.order();
  return h * h;
}

}  // namespace otrom
