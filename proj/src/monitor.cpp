#include "otrom/monitor.hpp"

#include <algorithm>

namespace otrom {

namespace {

double softplus(double z, double beta) {
  const double t = beta * z;
  return (std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)))) / beta;
}

}  // namespace

void SensorConfig::validate() const {
  require(s_min >= 0.0, "monitor", "s_min must be >= 0");
  require(s_max_factor > 0.0, "monitor", "s_max_factor must be > 0");
  require(clip_sharpness > 0.0, "monitor", "clip sharpness must be > 0");
}

double smooth_clip(double x, double s_min, double s_max, double sharpness) {
  require(s_min < s_max, "monitor", "smooth_clip needs s_min < s_max");
  require(sharpness > 0.0, "monitor", "smooth_clip needs sharpness > 0");
  const double range = s_max - s_min;
  const double beta = sharpness / range;
  auto raw = [&](double v) { return s_max - softplus(s_max - (s_min + softplus(v - s_min, beta)), beta); };
  const double low = s_max - softplus(range, beta);
  const double c = raw(x);
  return std::clamp(s_min + (c - low) * range / (s_max - low), s_min, s_max);
}

Field dilatation_sensor(const FeSpace& space, const Field& state) {
  require(state.n_components() >= 3, "monitor", "dilatation sensor needs (rho, rho v1, rho v2)");
  const Mesh& mesh = space.mesh();
  const Field g = space.nodal_gradient(state);
  const int nl = mesh.n_local();
  Field S = make_field(mesh, Layout::discontinuous, 1);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixXd U = element_values(mesh, state, e);
    for (int i = 0; i < nl; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(e) * nl + i;
      const double rho = U(i, 0);
      if (!(rho > 0.0)) throw PhysicsError("nonpositive density in dilatation sensor");
      const double v1 = U(i, 1) / rho, v2 = U(i, 2) / rho;
      // d(m/rho) = (dm - v drho) / rho
      const double div = (g.values(r, 2) - v1 * g.values(r, 0) + g.values(r, 5) - v2 * g.values(r, 1)) / rho;
      S.values(r, 0) = -div;
    }
  }
  return state.layout == Layout::continuous ? average_duplicates(mesh, S) : S;
}

Field resolution_sensor(const FeSpace& space, const Field& xi, const SensorConfig& config) {
  config.validate();
  require(xi.n_components() == 1, "monitor", "resolution sensor needs a scalar field");
  const Field g = space.recovered_gradient(xi);
  Eigen::VectorXd g2 = g.values.rowwise().squaredNorm();
  const double gmax2 = g2.maxCoeff();
  const double s_max = config.clip_bound_on_square ? config.s_max_factor * gmax2
                                                   : config.s_max_factor * std::sqrt(gmax2);
  Field s = make_field(space.mesh(), Layout::continuous, 1, 1.0);
  if (!(s_max > config.s_min)) return s;
  for (Eigen::Index i = 0; i < g2.size(); ++i)
    s.values(i, 0) = std::sqrt(1.0 + smooth_clip(g2[i], config.s_min, s_max, config.clip_sharpness));
  return s;
}

HelmholtzSmoother::HelmholtzSmoother(const FeSpace& space, double length, HelmholtzBc bc)
    : space_(&space), length_(length) {
  require(length > 0.0, "monitor", "Helmholtz length must be > 0");
  const Mesh& mesh = space.mesh();
  fixed_.assign(mesh.n_nodes(), 0);
  if (bc == HelmholtzBc::dirichlet_wall)
    for (std::size_t s = 0; s < mesh.segments().size(); ++s)
      if (mesh.segments()[s].kind == BoundaryKind::wall)
        for (int n : mesh.boundary_nodes(static_cast<int>(s))) fixed_[n] = 1;
  A_ = space.mass() + length * length * space.stiffness();
  for (int k = 0; k < A_.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A_, k); it; ++it)
      if (fixed_[it.row()] || fixed_[it.col()]) it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
  A_.prune(0.0);
  llt_ = std::make_unique<Eigen::SimplicialLLT<SparseMatrix>>(A_);
  if (llt_->info() != Eigen::Success) throw ConvergenceError("monitor", "Helmholtz factorization failed");
}

Field HelmholtzSmoother::smooth(const Field& source) const {
  const Mesh& mesh = space_->mesh();
  Eigen::MatrixXd b = space_->load(space_->at_points(source));
  for (int n = 0; n < mesh.n_nodes(); ++n)
    if (fixed_[n]) b.row(n).setZero();
  Field out = make_field(mesh, Layout::continuous, source.n_components());
  out.values = llt_->solve(b);
  const double res = (A_ * out.values - b).norm();
  const double bn = b.norm();
  if (!(res <= 1e-10 * std::max(bn, 1e-300)) && bn > 0.0)
    throw ConvergenceError("monitor", "Helmholtz solve residual " + std::to_string(res / bn));
  return out;
}

Field helmholtz_smooth(const FeSpace& space, const Field& source, double length, HelmholtzBc bc) {
  return HelmholtzSmoother(space, length, bc).smooth(source);
}

TargetDensity normalize_target_density(const FeSpace& space, Field rho_prime) {
  require(rho_prime.n_components() == 1, "monitor", "target density must be scalar");
  if (!(rho_prime.values.minCoeff() > 0.0))
    throw InvalidInput("monitor", "target density must be positive");
  TargetDensity t;
  t.theta = space.integral(space.at_points(rho_prime).col(0)) / space.area();
  t.rho_prime = std::move(rho_prime);
  return t;
}

double default_length_scale(const Mesh& mesh) { return 2.0 * mesh.mean_edge_length(); }

}  // namespace otrom
