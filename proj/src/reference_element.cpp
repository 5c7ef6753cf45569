#include "otrom/reference_element.hpp"

#include <map>
#include <mutex>
#include <numbers>

namespace otrom {

std::string to_string(ElementType type) {
  return type == ElementType::quadrilateral ? "quadrilateral" : "triangle";
}

ElementType element_type_from_string(const std::string& name) {
  if (name == "quadrilateral" || name == "quad") return ElementType::quadrilateral;
  if (name == "triangle" || name == "tri") return ElementType::triangle;
  throw InvalidInput("geometry", "unknown element type '" + name + "'");
}

namespace {

// Legendre polynomial P_n and its derivative at x.
void legendre(int n, double x, double& p, double& dp) {
  double p0 = 1.0, p1 = x;
  if (n == 0) {
    p = 1.0;
    dp = 0.0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1.0);
}

double lagrange_1d(const std::vector<double>& nodes, int i, double x) {
  double v = 1.0;
  for (std::size_t j = 0; j < nodes.size(); ++j)
    if (static_cast<int>(j) != i) v *= (x - nodes[j]) / (nodes[i] - nodes[j]);
  return v;
}

double lagrange_1d_derivative(const std::vector<double>& nodes, int i, double x) {
  double sum = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (static_cast<int>(k) == i) continue;
    double term = 1.0 / (nodes[i] - nodes[k]);
    for (std::size_t j = 0; j < nodes.size(); ++j)
      if (static_cast<int>(j) != i && j != k) term *= (x - nodes[j]) / (nodes[i] - nodes[j]);
    sum += term;
  }
  return sum;
}

// Monomial exponents for total degree <= p, ordered by degree then x-power.
std::vector<std::pair<int, int>> monomials(int p) {
  std::vector<std::pair<int, int>> m;
  for (int d = 0; d <= p; ++d)
    for (int a = d; a >= 0; --a) m.emplace_back(a, d - a);
  return m;
}

double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

}  // namespace

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double p = 0.0, dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      legendre(n, z, p, dp);
      const double dz = p / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    legendre(n, z, p, dp);
    x[n - 1 - i] = z;
    w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

void gauss_lobatto(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n < 2) throw InvalidInput("geometry", "Gauss-Lobatto rule needs at least 2 points");
  const int N = n - 1;
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  // Newton iteration on (1 - x^2) P_N'(x) via the Vandermonde recurrence.
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = -std::cos(std::numbers::pi * i / N);
  Eigen::MatrixXd P(n, n);
  for (int it = 0; it < 200; ++it) {
    for (int i = 0; i < n; ++i) {
      P(i, 0) = 1.0;
      P(i, 1) = xs[i];
      for (int k = 2; k <= N; ++k)
        P(i, k) = ((2.0 * k - 1.0) * xs[i] * P(i, k - 1) - (k - 1.0) * P(i, k - 2)) / k;
    }
    double change = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dx = (xs[i] * P(i, N) - P(i, N - 1)) / (n * P(i, N));
      xs[i] -= dx;
      change = std::max(change, std::abs(dx));
    }
    if (change < 1e-16) break;
  }
  for (int i = 0; i < n; ++i) {
    x[i] = xs[i];
    w[i] = 2.0 / (N * n * P(i, N) * P(i, N));
  }
  x.front() = -1.0;
  x.back() = 1.0;
}

ReferenceElement::ReferenceElement(ElementType type, int order) : type_(type), order_(order) {
  require(order >= 1 && order <= 8, "geometry", "polynomial order must be in [1, 8]");
  const int p = order;
  if (type == ElementType::quadrilateral) {
    std::vector<double> w;
    gauss_lobatto(p + 1, line_nodes_, w);
    for (int j = 0; j <= p; ++j)
      for (int i = 0; i <= p; ++i) nodes_.emplace_back(line_nodes_[i], line_nodes_[j]);
    auto id = [p](int i, int j) { return i + (p + 1) * j; };
    face_nodes_.resize(4);
    for (int k = 0; k <= p; ++k) {
      face_nodes_[0].push_back(id(k, 0));
      face_nodes_[1].push_back(id(p, k));
      face_nodes_[2].push_back(id(p - k, p));
      face_nodes_[3].push_back(id(0, p - k));
    }
    vertex_nodes_ = {id(0, 0), id(p, 0), id(p, p), id(0, p)};
  } else {
    std::vector<int> row_start(p + 2, 0);
    for (int j = 0; j <= p; ++j) {
      row_start[j] = static_cast<int>(nodes_.size());
      for (int i = 0; i <= p - j; ++i) nodes_.emplace_back(double(i) / p, double(j) / p);
    }
    auto id = [&row_start](int i, int j) { return row_start[j] + i; };
    face_nodes_.resize(3);
    for (int k = 0; k <= p; ++k) {
      face_nodes_[0].push_back(id(k, 0));
      face_nodes_[1].push_back(id(p - k, k));
      face_nodes_[2].push_back(id(0, p - k));
    }
    vertex_nodes_ = {id(0, 0), id(p, 0), id(0, p)};
    const auto mono = monomials(p);
    const int n = n_nodes();
    Eigen::MatrixXd V(n, n);
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < n; ++m)
        V(i, m) = ipow(nodes_[i].x(), mono[m].first) * ipow(nodes_[i].y(), mono[m].second);
    monomial_to_nodal_ = V.inverse();
  }
  quadrature_ = make_quadrature(p + 1);
}

Vec2 ReferenceElement::face_point(int face, double s) const {
  const auto& fn = face_nodes_[face];
  const Vec2& a = nodes_[fn.front()];
  const Vec2& b = nodes_[fn.back()];
  return 0.5 * (1.0 - s) * a + 0.5 * (1.0 + s) * b;
}

void ReferenceElement::eval_basis(const Vec2& xi, Eigen::Ref<Eigen::VectorXd> values) const {
  if (type_ == ElementType::quadrilateral) {
    const int n1 = order_ + 1;
    double lx[16], ly[16];
    for (int i = 0; i < n1; ++i) {
      lx[i] = lagrange_1d(line_nodes_, i, xi.x());
      ly[i] = lagrange_1d(line_nodes_, i, xi.y());
    }
    for (int j = 0; j < n1; ++j)
      for (int i = 0; i < n1; ++i) values[i + n1 * j] = lx[i] * ly[j];
  } else {
    const auto mono = monomials(order_);
    Eigen::VectorXd m(n_nodes());
    for (int k = 0; k < n_nodes(); ++k)
      m[k] = ipow(xi.x(), mono[k].first) * ipow(xi.y(), mono[k].second);
    values = monomial_to_nodal_.transpose() * m;
  }
}

void ReferenceElement::eval_gradient(const Vec2& xi, Eigen::Ref<Eigen::MatrixX2d> grads) const {
  if (type_ == ElementType::quadrilateral) {
    const int n1 = order_ + 1;
    double lx[16], ly[16], dx[16], dy[16];
    for (int i = 0; i < n1; ++i) {
      lx[i] = lagrange_1d(line_nodes_, i, xi.x());
      ly[i] = lagrange_1d(line_nodes_, i, xi.y());
      dx[i] = lagrange_1d_derivative(line_nodes_, i, xi.x());
      dy[i] = lagrange_1d_derivative(line_nodes_, i, xi.y());
    }
    for (int j = 0; j < n1; ++j)
      for (int i = 0; i < n1; ++i) {
        grads(i + n1 * j, 0) = dx[i] * ly[j];
        grads(i + n1 * j, 1) = lx[i] * dy[j];
      }
  } else {
    const auto mono = monomials(order_);
    const int n = n_nodes();
    Eigen::MatrixX2d dm(n, 2);
    for (int k = 0; k < n; ++k) {
      const auto [a, b] = mono[k];
      dm(k, 0) = a > 0 ? a * ipow(xi.x(), a - 1) * ipow(xi.y(), b) : 0.0;
      dm(k, 1) = b > 0 ? b * ipow(xi.x(), a) * ipow(xi.y(), b - 1) : 0.0;
    }
    grads = monomial_to_nodal_.transpose() * dm;
  }
}

QuadratureRule ReferenceElement::make_quadrature(int n) const {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  QuadratureRule rule;
  if (type_ == ElementType::quadrilateral) {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        rule.points.emplace_back(x[i], x[j]);
        rule.weights.push_back(w[i] * w[j]);
      }
  } else {
    // Collapsed (Duffy) rule; exact to degree 2n-2 on the simplex.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double a = 0.5 * (x[i] + 1.0);
        const double b = 0.5 * (x[j] + 1.0);
        rule.points.emplace_back(a, b * (1.0 - a));
        rule.weights.push_back(0.25 * w[i] * w[j] * (1.0 - a));
      }
  }
  return rule;
}

bool ReferenceElement::contains(const Vec2& xi, double tol) const {
  if (type_ == ElementType::quadrilateral)
    return std::abs(xi.x()) <= 1.0 + tol && std::abs(xi.y()) <= 1.0 + tol;
  return xi.x() >= -tol && xi.y() >= -tol && xi.x() + xi.y() <= 1.0 + tol;
}

Vec2 ReferenceElement::clamp(const Vec2& xi) const {
  if (type_ == ElementType::quadrilateral)
    return {std::clamp(xi.x(), -1.0, 1.0), std::clamp(xi.y(), -1.0, 1.0)};
  Vec2 c(std::max(xi.x(), 0.0), std::max(xi.y(), 0.0));
  const double s = c.x() + c.y();
  if (s > 1.0) {
    // Project onto the hypotenuse, then clip to its end points.
    const double t = std::clamp(0.5 * (c.x() - c.y() + 1.0), 0.0, 1.0);
    c = Vec2(t, 1.0 - t);
  }
  return c;
}

Vec2 ReferenceElement::centroid() const {
  return type_ == ElementType::quadrilateral ? Vec2(0.0, 0.0) : Vec2(1.0 / 3.0, 1.0 / 3.0);
}

std::shared_ptr<const ReferenceElement> reference_element(ElementType type, int order) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const ReferenceElement>> cache;
  std::lock_guard lock(mutex);
  auto key = std::make_pair(static_cast<int>(type), order);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto elem = std::make_shared<const ReferenceElement>(type, order);
  cache.emplace(key, elem);
  return elem;
}

}  // namespace otrom
