#include "otrom/fe.hpp"

namespace otrom {

FeSpace::FeSpace(Mesh mesh) : mesh_(std::move(mesh)) {
  const auto& ref = mesh_.reference();
  rule_ = ref.quadrature();
  table_ = tabulate(ref, rule_.points);
  const int nq = n_qp();
  const std::size_t np = static_cast<std::size_t>(mesh_.n_elements()) * nq;
  jw_.resize(np);
  x_.resize(np);
  jac_.resize(np);
  grad_.resize(np);
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    const Eigen::MatrixX2d X = mesh_.element_coords(e);
    for (int q = 0; q < nq; ++q) {
      const std::size_t k = static_cast<std::size_t>(e) * nq + q;
      const auto g = point_geometry(X, table_.values.row(q).transpose(), table_.grads[q]);
      if (g.det <= 0.0)
        throw TanglingError("nonpositive Jacobian in element " + std::to_string(e));
      jw_[k] = rule_.weights[q] * g.det;
      x_[k] = g.x;
      jac_[k] = g.jac;
      grad_[k] = table_.grads[q] * g.inv;
    }
  }

  std::vector<double> s, w;
  gauss_legendre(mesh_.order() + 2, s, w);
  Eigen::VectorXd N(ref.n_nodes());
  Eigen::MatrixX2d G(ref.n_nodes(), 2);
  for (const auto& bf : mesh_.boundary_faces()) {
    const Eigen::MatrixX2d X = mesh_.element_coords(bf.element);
    const Vec2 dxi = 0.5 * (ref.face_point(bf.face, 1.0) - ref.face_point(bf.face, -1.0));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Vec2 xi = ref.face_point(bf.face, s[i]);
      ref.eval_basis(xi, N);
      ref.eval_gradient(xi, G);
      const Vec2 t = X.transpose() * G * dxi;
      FacePoint fp;
      fp.element = bf.element;
      fp.face = bf.face;
      fp.segment = bf.segment;
      fp.xi = xi;
      fp.x = X.transpose() * N;
      fp.normal = Vec2(t.y(), -t.x()) / t.norm();
      fp.ds = w[i] * t.norm();
      fp.basis = N;
      face_points_.push_back(std::move(fp));
    }
  }
}

SparseMatrix FeSpace::mass() const {
  std::vector<Eigen::Triplet<double>> trip;
  const int nl = mesh_.n_local(), nq = n_qp();
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    auto en = mesh_.element_nodes(e);
    Eigen::MatrixXd Me = Eigen::MatrixXd::Zero(nl, nl);
    for (int q = 0; q < nq; ++q) {
      const auto N = table_.values.row(q);
      Me.noalias() += jw_[static_cast<std::size_t>(e) * nq + q] * N.transpose() * N;
    }
    for (int i = 0; i < nl; ++i)
      for (int j = 0; j < nl; ++j) trip.emplace_back(en[i], en[j], Me(i, j));
  }
  SparseMatrix M(mesh_.n_nodes(), mesh_.n_nodes());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

SparseMatrix FeSpace::stiffness() const {
  std::vector<Eigen::Triplet<double>> trip;
  const int nl = mesh_.n_local(), nq = n_qp();
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    auto en = mesh_.element_nodes(e);
    Eigen::MatrixXd Ke = Eigen::MatrixXd::Zero(nl, nl);
    for (int q = 0; q < nq; ++q) {
      const std::size_t k = static_cast<std::size_t>(e) * nq + q;
      Ke.noalias() += jw_[k] * grad_[k] * grad_[k].transpose();
    }
    for (int i = 0; i < nl; ++i)
      for (int j = 0; j < nl; ++j) trip.emplace_back(en[i], en[j], Ke(i, j));
  }
  SparseMatrix K(mesh_.n_nodes(), mesh_.n_nodes());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

Eigen::MatrixXd FeSpace::load(const Eigen::MatrixXd& vals) const {
  require(vals.rows() == static_cast<Eigen::Index>(n_points()), "fe", "load: wrong number of points");
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(mesh_.n_nodes(), vals.cols());
  const int nl = mesh_.n_local(), nq = n_qp();
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    auto en = mesh_.element_nodes(e);
    for (int q = 0; q < nq; ++q) {
      const std::size_t k = static_cast<std::size_t>(e) * nq + q;
      for (int i = 0; i < nl; ++i) b.row(en[i]) += jw_[k] * table_.values(q, i) * vals.row(k);
    }
  }
  return b;
}

Eigen::VectorXd FeSpace::lumped_mass() const {
  return load(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_points())));
}

Eigen::MatrixXd FeSpace::at_points(const Field& field) const {
  check_field(mesh_, field);
  const int nq = n_qp();
  Eigen::MatrixXd out(n_points(), field.n_components());
  for (int e = 0; e < mesh_.n_elements(); ++e)
    out.middleRows(static_cast<Eigen::Index>(e) * nq, nq) = table_.values * element_values(mesh_, field, e);
  return out;
}

Eigen::MatrixXd FeSpace::gradient_at_points(const Field& field) const {
  check_field(mesh_, field);
  const int nq = n_qp(), m = field.n_components();
  Eigen::MatrixXd out(n_points(), 2 * m);
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    const Eigen::MatrixXd U = element_values(mesh_, field, e);
    for (int q = 0; q < nq; ++q) {
      const std::size_t k = static_cast<std::size_t>(e) * nq + q;
      const Eigen::MatrixXd g = U.transpose() * grad_[k];  // m x 2
      for (int c = 0; c < m; ++c) out.row(k).segment<2>(2 * c) = g.row(c);
    }
  }
  return out;
}

Field FeSpace::nodal_gradient(const Field& field) const {
  check_field(mesh_, field);
  const auto& ref = mesh_.reference();
  static thread_local std::pair<const ReferenceElement*, BasisTable> cache{nullptr, {}};
  if (cache.first != &ref) cache = {&ref, tabulate(ref, ref.nodes())};
  const BasisTable& nt = cache.second;
  const int nl = mesh_.n_local(), m = field.n_components();
  Field out = make_field(mesh_, Layout::discontinuous, 2 * m);
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    const Eigen::MatrixX2d X = mesh_.element_coords(e);
    const Eigen::MatrixXd U = element_values(mesh_, field, e);
    for (int i = 0; i < nl; ++i) {
      const Mat2 J = X.transpose() * nt.grads[i];
      const Eigen::MatrixXd g = U.transpose() * (nt.grads[i] * J.inverse());
      for (int c = 0; c < m; ++c)
        out.values.row(static_cast<Eigen::Index>(e) * nl + i).segment<2>(2 * c) = g.row(c);
    }
  }
  return out;
}

Field FeSpace::recovered_gradient(const Field& field) const {
  return average_duplicates(mesh_, nodal_gradient(field));
}

double FeSpace::l2_norm(const Eigen::MatrixXd& vals) const {
  double s = 0.0;
  for (std::size_t k = 0; k < n_points(); ++k) s += jw_[k] * vals.row(k).squaredNorm();
  return std::sqrt(s);
}

double FeSpace::integral(const Eigen::VectorXd& vals) const {
  double s = 0.0;
  for (std::size_t k = 0; k < n_points(); ++k) s += jw_[k] * vals[k];
  return s;
}

double FeSpace::area() const {
  double s = 0.0;
  for (double w : jw_) s += w;
  return s;
}

MeanFreeSolver::MeanFreeSolver(const SparseMatrix& K, Eigen::VectorXd c) : c_(std::move(c)) {
  // Pin the first unknown; the constant null vector is restored afterwards.
  SparseMatrix A = K;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it)
      if (it.row() == 0 || it.col() == 0) it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
  A.prune(0.0);
  ldlt_.compute(A);
  if (ldlt_.info() != Eigen::Success) throw ConvergenceError("fe", "factorization of the Neumann operator failed");
}

Eigen::VectorXd MeanFreeSolver::solve(const Eigen::VectorXd& b, double* multiplier) const {
  const double lambda = b.sum() / c_.sum();
  Eigen::VectorXd r = b - lambda * c_;
  r[0] = 0.0;
  Eigen::VectorXd u = ldlt_.solve(r);
  u.array() -= c_.dot(u) / c_.sum();
  if (multiplier) *multiplier = lambda;
  return u;
}

}  // namespace otrom
