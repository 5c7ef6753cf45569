#include "otrom/monge_ampere.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace otrom {

DensityFn make_density_function(const Mesh& mesh, const TargetDensity& density) {
  require(density.rho_prime.n_components() == 1, "monge_ampere", "target density must be scalar");
  struct Data {
    Mesh mesh;
    Field rho;
    double theta;
    std::unique_ptr<PointLocator> locator;
  };
  auto d = std::make_shared<Data>(Data{mesh, density.rho_prime, density.theta, nullptr});
  d->locator = std::make_unique<PointLocator>(d->mesh);
  return [d](const Vec2& y) {
    const auto hit = d->locator->locate(y);
    if (hit.distance > 1e-8) {
      std::ostringstream os;
      os << "monge_ampere: density evaluated " << hit.distance << " outside the domain, clamped";
      log_message(os.str());
    }
    const auto& ref = d->mesh.reference();
    Eigen::VectorXd N(ref.n_nodes());
    ref.eval_basis(hit.xi, N);
    const double rho = N.dot(element_values(d->mesh, d->rho, hit.element).col(0));
    if (!(rho > 0.0)) throw InvalidInput("monge_ampere", "target density is not positive at a mapped point");
    return d->theta / rho;
  };
}

BoundarySpec BoundarySpec::from_mesh(const Mesh& mesh) {
  BoundarySpec b;
  b.segments = mesh.segments();
  b.junctions = mesh.corners();
  b.detach_tolerance = 0.1 * mesh.diameter();
  return b;
}

BoundaryChoice project_boundary(const Vec2& y, int own_segment, const BoundarySpec& spec) {
  auto choice = [&](int s) {
    const Curve& c = spec.segments[s].curve;
    const Vec2 gg = c.grad_g(y);
    const double n = std::max(gg.norm(), 1e-300);
    return BoundaryChoice{s, c.g(y) / n, gg / n};
  };
  auto excess = [&](int s) {
    const double t = spec.segments[s].curve.parameter(y);
    return std::max({0.0, -t, t - 1.0});
  };
  auto distance = [&](int s) { return std::abs(choice(s).value); };

  if (excess(own_segment) == 0.0 && distance(own_segment) <= spec.detach_tolerance) return choice(own_segment);
  int best = -1;
  double best_score = std::numeric_limits<double>::infinity();
  for (double slack : {0.0, spec.parameter_slack}) {
    for (int s = 0; s < static_cast<int>(spec.segments.size()); ++s) {
      const double ex = excess(s), d = distance(s);
      if (ex > slack || d > spec.detach_tolerance) continue;
      const double score = d + ex;
      if (score < best_score) {
        best_score = score;
        best = s;
      }
    }
    if (best >= 0) return choice(best);
  }
  std::ostringstream os;
  os << "detached boundary: image point (" << y.x() << ", " << y.y() << ") of segment '"
     << spec.segments[own_segment].name << "' lies on no boundary segment";
  throw ConvergenceError("monge_ampere", os.str());
}

double evaluate_S(const Mat2& H, const Vec2& q, const DensityFn& f) {
  const double fq = f(q);
  if (!(fq > 0.0)) throw InvalidInput("monge_ampere", "density f must be positive");
  return std::sqrt(H.squaredNorm() + 2.0 * fq);
}

namespace {

Field hessian_from(const FeSpace& space, const Field& q) {
  Field h = space.recovered_gradient(q);  // (dq1/dx, dq1/dy, dq2/dx, dq2/dy)
  const Eigen::VectorXd sym = 0.5 * (h.values.col(1) + h.values.col(2));
  h.values.col(1) = sym;
  h.values.col(2) = sym;
  return h;
}

}  // namespace

MongeAmpereSolver::MongeAmpereSolver(const FeSpace& space, BoundarySpec boundary, int increment)
    : space_(&space), boundary_(std::move(boundary)) {
  const Mesh& mesh = space.mesh();
  require(boundary_.segments.size() == mesh.segments().size(), "monge_ampere",
          "boundary spec does not match the mesh segments");
  require(increment >= 0, "monge_ampere", "potential order increment must be >= 0");
  pot_ = std::make_unique<FeSpace>(elevate_order(mesh, mesh.order() + increment));
  field_at_pot_points_ = tabulate(mesh.reference(), pot_->rule().points);
  pot_at_nodes_ = tabulate(pot_->mesh().reference(), mesh.reference().nodes());
  poisson_ = std::make_unique<MeanFreeSolver>(pot_->stiffness(), pot_->lumped_mass());
}

Eigen::MatrixXd MongeAmpereSolver::on_potential_points(const Field& field) const {
  const Mesh& mesh = space_->mesh();
  const int nq = pot_->n_qp();
  Eigen::MatrixXd out(pot_->n_points(), field.n_components());
  for (int e = 0; e < mesh.n_elements(); ++e)
    out.middleRows(static_cast<Eigen::Index>(e) * nq, nq) =
        field_at_pot_points_.values * element_values(mesh, field, e);
  return out;
}

Field MongeAmpereSolver::gradient_on_nodes(const Field& w) const {
  const Mesh& mesh = space_->mesh();
  const Mesh& pm = pot_->mesh();
  const int nl = mesh.n_local();
  Field g = make_field(mesh, Layout::discontinuous, 2);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixX2d X = pm.element_coords(e);
    const Eigen::VectorXd W = element_values(pm, w, e).col(0);
    for (int i = 0; i < nl; ++i) {
      const Mat2 J = X.transpose() * pot_at_nodes_.grads[i];
      g.values.row(static_cast<Eigen::Index>(e) * nl + i) =
          (pot_at_nodes_.grads[i] * J.inverse()).transpose() * W;
    }
  }
  return average_duplicates(mesh, g);
}

MAState MongeAmpereSolver::identity_state() const {
  const Mesh& mesh = space_->mesh();
  MAState s;
  s.w = nodal_field(pot_->mesh(), 1,
                    [](const Vec2& x) { return Eigen::VectorXd::Constant(1, 0.5 * x.squaredNorm()); });
  const Eigen::VectorXd c = pot_->lumped_mass();
  s.w.values.array() -= c.dot(s.w.values.col(0)) / c.sum();
  s.q = nodal_field(mesh, 2, [](const Vec2& x) { return Eigen::VectorXd(x); });
  s.hess = make_field(mesh, Layout::continuous, 4);
  s.hess.values.col(0).setOnes();
  s.hess.values.col(3).setOnes();
  return s;
}

MAState MongeAmpereSolver::step(const MAState& prev, const DensityFn& f, double damping) const {
  const FeSpace& fs = *space_;
  const Mesh& mesh = fs.mesh();
  const Mesh& pm = pot_->mesh();
  const Eigen::MatrixXd qp = on_potential_points(prev.q);
  const Eigen::MatrixXd hp = on_potential_points(prev.hess);
  Eigen::VectorXd S(pot_->n_points());
  for (std::size_t k = 0; k < pot_->n_points(); ++k) {
    Mat2 H;
    H << hp(k, 0), hp(k, 1), hp(k, 2), hp(k, 3);
    S[k] = evaluate_S(H, qp.row(k).transpose(), f);
  }
  Eigen::VectorXd b = -pot_->load(S);

  Eigen::VectorXd N(mesh.n_local());
  for (const auto& pt : pot_->boundary_points()) {
    double h;
    if (boundary_.prescribed_flux) {
      h = boundary_.prescribed_flux(pt.x, pt.normal);
    } else {
      mesh.reference().eval_basis(pt.xi, N);
      const Vec2 y = element_values(mesh, prev.q, pt.element).transpose() * N;
      const BoundaryChoice c = project_boundary(y, pt.segment, boundary_);
      // grad g . (q - y) = -g with the tangential part of q lagged.
      const Vec2& n = pt.normal;
      const Vec2 t(-n.y(), n.x());
      const double mn = c.gradient.dot(n);
      if (std::abs(mn) < 0.1) {
        h = y.dot(n);
      } else {
        h = (c.gradient.dot(y) - c.value - c.gradient.dot(t) * y.dot(t)) / mn;
      }
    }
    auto en = pm.element_nodes(pt.element);
    for (int i = 0; i < pm.n_local(); ++i) b[en[i]] += pt.ds * h * pt.basis[i];
  }

  MAState next;
  next.w = make_field(pm, Layout::continuous, 1);
  next.w.values.col(0) = poisson_->solve(b);
  if (damping != 1.0) next.w.values = damping * next.w.values + (1.0 - damping) * prev.w.values;
  next.q = gradient_on_nodes(next.w);
  next.hess = hessian_from(fs, next.q);
  next.iteration = prev.iteration + 1;
  next.residual_history = prev.residual_history;
  next.residual_history.push_back(fs.l2_norm(fs.at_points(next.q) - fs.at_points(prev.q)));
  return next;
}

MAState MongeAmpereSolver::solve(const DensityFn& f, const MAOptions& options, const MAState* initial) const {
  require(options.tol > 0.0, "monge_ampere", "tolerance must be positive");
  require(options.max_iter >= 0, "monge_ampere", "max_iter must be >= 0");
  MAState state = initial ? *initial : identity_state();
  state.converged = false;
  const double tol = options.tol * space_->mesh().diameter();
  double damping = 1.0;
  for (int it = 0; it < options.max_iter; ++it) {
    MAState next = step(state, f, damping);
    const double r = next.residual_history.back();
    const std::size_t n = next.residual_history.size();
    damping = (n >= 2 && r > next.residual_history[n - 2]) ? options.damping : 1.0;
    std::ostringstream os;
    os << "monge_ampere," << next.iteration << "," << r;
    log_message(os.str());
    state = std::move(next);
    if (r < tol) {
      state.converged = true;
      break;
    }
  }
  return state;
}

MAState solve_monge_ampere(const FeSpace& space, const DensityFn& f, const BoundarySpec& boundary,
                           const MAOptions& options) {
  return MongeAmpereSolver(space, boundary).solve(f, options);
}

double equidistribution_residual(const FeSpace& space, const MAState& state, const DensityFn& f) {
  const Eigen::MatrixXd q = space.at_points(state.q);
  const Eigen::MatrixXd g = space.gradient_at_points(state.q);
  Eigen::VectorXd r(space.n_points());
  for (std::size_t k = 0; k < space.n_points(); ++k) {
    const double det = g(k, 0) * g(k, 3) - g(k, 1) * g(k, 2);
    r[k] = det / f(q.row(k).transpose()) - 1.0;
  }
  return space.l2_norm(r) / std::sqrt(space.area());
}

MeshMapping mapping_from_state(const MAState& state, double parameter) {
  MeshMapping m;
  m.parameter = parameter;
  m.phi.resize(state.q.n_rows());
  for (int i = 0; i < state.q.n_rows(); ++i) m.phi[i] = state.q.values.row(i).transpose();
  return m;
}

MeshMapping mapping_on_mesh(const Mesh& target, const Mesh& solver_mesh, const MAState& state, double parameter) {
  require(target.n_elements() == solver_mesh.n_elements() && target.element_type() == solver_mesh.element_type(),
          "monge_ampere", "meshes do not share their elements");
  if (target.order() == solver_mesh.order()) return mapping_from_state(state, parameter);
  const BasisTable tab = tabulate(solver_mesh.reference(), target.reference().nodes());
  const int nl = target.n_local();
  Field disc = make_field(target, Layout::discontinuous, 2);
  for (int e = 0; e < target.n_elements(); ++e)
    disc.values.middleRows(static_cast<Eigen::Index>(e) * nl, nl) = tab.values * element_values(solver_mesh, state.q, e);
  return average_duplicate_dofs(target, disc, parameter);
}

double project_boundary_nodes(const Mesh& reference, MeshMapping& mapping, const BoundarySpec& spec) {
  std::vector<int> owner(reference.n_nodes(), -1);
  for (int s = 0; s < static_cast<int>(reference.segments().size()); ++s)
    for (int n : reference.boundary_nodes(s))
      if (owner[n] < 0) owner[n] = s;
  double moved = 0.0;
  for (int n = 0; n < reference.n_nodes(); ++n) {
    if (owner[n] < 0) continue;
    const Vec2 y = mapping.phi[n];
    const BoundaryChoice c = project_boundary(y, owner[n], spec);
    const Vec2 p = spec.segments[c.segment].curve.project(y);
    moved = std::max(moved, (p - y).norm());
    mapping.phi[n] = p;
  }
  return moved;
}

}  // namespace otrom
