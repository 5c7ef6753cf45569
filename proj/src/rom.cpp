#include "otrom/rom.hpp"

#include "otrom/fe.hpp"
#include "otrom/fom.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace otrom {

std::string to_string(SnapshotKind kind) {
  switch (kind) {
    case SnapshotKind::mapped_solution: return "mapped_solution";
    case SnapshotKind::mapping: return "mapping";
    case SnapshotKind::fixed_mesh_solution: return "fixed_mesh_solution";
  }
  return "?";
}

SnapshotKind snapshot_kind_from_string(const std::string& name) {
  for (auto k : {SnapshotKind::mapped_solution, SnapshotKind::mapping, SnapshotKind::fixed_mesh_solution})
    if (to_string(k) == name) return k;
  throw InvalidInput("rom", "unknown snapshot kind '" + name + "'");
}

Eigen::VectorXd inner_product_weights(const Mesh& mesh, Layout layout, int n_components, bool weighted) {
  const int nl = mesh.n_local();
  const Eigen::Index rows = layout == Layout::continuous
                                ? mesh.n_nodes()
                                : static_cast<Eigen::Index>(mesh.n_elements()) * nl;
  Eigen::VectorXd node_w = Eigen::VectorXd::Ones(rows);
  if (weighted) {
    node_w.setZero();
    const FeSpace space(mesh);
    const int nq = space.n_qp();
    const Eigen::MatrixXd& N = space.table().values;
    for (int e = 0; e < mesh.n_elements(); ++e) {
      Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(nl), diag = Eigen::VectorXd::Zero(nl);
      double area = 0.0;
      for (int q = 0; q < nq; ++q) {
        const double jw = space.jw(static_cast<std::size_t>(e) * nq + q);
        row_sum += jw * N.row(q).transpose();
        diag += jw * N.row(q).transpose().cwiseAbs2();
        area += jw;
      }
      // Equispaced triangle nodes have vanishing or negative row sums.
      const Eigen::VectorXd w = row_sum.minCoeff() > 0.0 ? row_sum : Eigen::VectorXd(diag * (area / diag.sum()));
      for (int i = 0; i < nl; ++i) {
        const Eigen::Index r = layout == Layout::continuous ? mesh.element_nodes(e)[i] : e * nl + i;
        node_w[r] += w[i];
      }
    }
  }
  return node_w.replicate(1, n_components).transpose().reshaped();
}

Eigen::VectorXd flatten(const Field& field) {
  const Eigen::MatrixXd t = field.values.transpose();
  return t.reshaped();
}

Field unflatten(const Eigen::VectorXd& v, Layout layout, int n_components) {
  require(n_components > 0 && v.size() % n_components == 0, "rom", "flattened size mismatch");
  Field f;
  f.layout = layout;
  f.values = v.reshaped(n_components, v.size() / n_components).transpose();
  return f;
}

Eigen::VectorXd component_scales(SnapshotKind kind, const std::vector<double>& parameters, double gamma) {
  if (kind == SnapshotKind::mapping) return Eigen::VectorXd::Ones(2);
  require(!parameters.empty(), "rom", "no parameters for the component scales");
  Eigen::VectorXd s = Eigen::VectorXd::Zero(4);
  for (double mu : parameters) {
    const State4 u = free_stream_state(mu, gamma);
    const double m = std::hypot(u[1], u[2]);
    s += Eigen::Vector4d(std::abs(u[0]), m, m, std::abs(u[3]));
  }
  return s / static_cast<double>(parameters.size());
}

Eigen::VectorXd SnapshotSet::scale_vector() const {
  return scales.replicate(fields.rows() / n_components, 1);
}

Eigen::VectorXd SnapshotSet::to_scaled(const Field& raw) const {
  require(raw.n_components() == n_components, "rom", "component count mismatch");
  const Eigen::VectorXd v = flatten(raw);
  require(v.size() == fields.rows(), "rom", "field size does not match the snapshots");
  return v.cwiseQuotient(scale_vector());
}

Field SnapshotSet::from_scaled(const Eigen::VectorXd& scaled) const {
  return unflatten(scaled.cwiseProduct(scale_vector()), layout, n_components);
}

SnapshotSet assemble_snapshots(const Mesh& reference, SnapshotKind kind,
                               std::vector<std::pair<double, Field>> runs, bool weighted,
                               std::optional<Eigen::VectorXd> scales) {
  require(!runs.empty(), "rom", "no snapshots");
  std::stable_sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SnapshotSet s;
  s.kind = kind;
  s.layout = runs.front().second.layout;
  s.n_components = runs.front().second.n_components();
  for (std::size_t j = 0; j < runs.size(); ++j) {
    const auto& [mu, f] = runs[j];
    check_field(reference, f);
    require(f.layout == s.layout && f.n_components() == s.n_components, "rom",
            "snapshots live on different spaces");
    require(j == 0 || mu != runs[j - 1].first, "rom", "duplicate parameter " + std::to_string(mu));
    s.parameters.push_back(mu);
  }
  s.scales = scales ? *scales : component_scales(kind, s.parameters);
  require(s.scales.size() == s.n_components && s.scales.minCoeff() > 0.0, "rom", "bad component scales");
  s.weights = inner_product_weights(reference, s.layout, s.n_components, weighted);
  s.fields.resize(s.weights.size(), static_cast<Eigen::Index>(runs.size()));
  for (std::size_t j = 0; j < runs.size(); ++j) s.fields.col(static_cast<Eigen::Index>(j)) = s.to_scaled(runs[j].second);
  return s;
}

PodBasis compute_pod(const SnapshotSet& snapshots, int n_modes) {
  require(n_modes >= 1 && n_modes <= snapshots.n_train(), "rom",
          "truncation N = " + std::to_string(n_modes) + " outside [1, " + std::to_string(snapshots.n_train()) + "]");
  const Eigen::VectorXd sw = snapshots.weights.cwiseSqrt();
  const Eigen::MatrixXd a = sw.asDiagonal() * snapshots.fields;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
  PodBasis b;
  b.weights = snapshots.weights;
  b.singular_values = svd.singularValues();
  b.modes = sw.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(n_modes);
  for (int k = 0; k < n_modes; ++k) {
    Eigen::Index i;
    b.modes.col(k).cwiseAbs().maxCoeff(&i);
    if (b.modes(i, k) < 0.0) b.modes.col(k) *= -1.0;
  }
  return b;
}

Eigen::VectorXd project_coefficients(const PodBasis& basis, const Eigen::VectorXd& field) {
  require(field.size() == basis.modes.rows(), "rom", "field size does not match the basis");
  return basis.modes.transpose() * basis.weights.cwiseProduct(field);
}

Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& coefficients) {
  require(coefficients.size() == basis.n(), "rom", "coefficient count does not match the basis");
  return basis.modes * coefficients;
}

double reconstruction_error(const PodBasis& basis, const SnapshotSet& snapshots) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < snapshots.fields.cols(); ++j) {
    const Eigen::VectorXd x = snapshots.fields.col(j);
    const Eigen::VectorXd d = x - reconstruct(basis, project_coefficients(basis, x));
    s += d.dot(basis.weights.cwiseProduct(d));
  }
  return std::sqrt(s);
}

double RbfSurrogate::kernel(double a, double b) const {
  double r = std::abs(a - b);
  if (options.normalize && centers.size() > 1) r /= centers.back() - centers.front();
  const double eps = options.epsilon;
  return options.form == Multiquadric::unit_shift ? std::sqrt(1.0 + eps * eps * r * r)
                                                  : std::sqrt(r * r + eps * eps);
}

Eigen::VectorXd RbfSurrogate::evaluate(double mu) const {
  if (centers.size() == 1) return beta.col(0);
  Eigen::VectorXd psi(static_cast<Eigen::Index>(centers.size()));
  for (std::size_t j = 0; j < centers.size(); ++j) psi[static_cast<Eigen::Index>(j)] = kernel(mu, centers[j]);
  return beta * psi;
}

bool RbfSurrogate::extrapolates(double mu) const {
  return mu < centers.front() || mu > centers.back();
}

RbfSurrogate train_rbf(const std::vector<double>& parameters, const Eigen::MatrixXd& coefficients,
                       const RbfOptions& options) {
  const auto n = static_cast<Eigen::Index>(parameters.size());
  require(n >= 1, "rom", "no training parameters");
  require(coefficients.cols() == n, "rom", "one coefficient column per parameter required");
  require(options.epsilon > 0.0, "rom", "shape parameter must be positive");
  require(std::set<double>(parameters.begin(), parameters.end()).size() == parameters.size(), "rom",
          "training parameters must be distinct");
  RbfSurrogate s;
  s.options = options;
  s.centers = parameters;
  std::sort(s.centers.begin(), s.centers.end());
  require(s.centers == parameters, "rom", "training parameters must be increasing");
  if (n == 1) {
    s.beta = coefficients;
    return s;
  }
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = s.kernel(parameters[i], parameters[j]);
  // The multiquadric matrix is symmetric but indefinite.
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(k);
  double rcond = lu.rcond();
  if (rcond < 1e-12) {
    s.shift = 1e-12 * k.trace() / static_cast<double>(n);
    log_message("rom: kernel condition estimate " + std::to_string(1.0 / rcond) + ", diagonal shift " +
                std::to_string(s.shift));
    k.diagonal().array() += s.shift;
    lu.compute(k);
    rcond = lu.rcond();
  }
  if (!(rcond >= 1e-14))
    throw ConvergenceError("rom", "RBF kernel matrix is singular (condition estimate " + std::to_string(1.0 / rcond) +
                                      ", epsilon " + std::to_string(options.epsilon) + ")");
  s.beta = lu.solve(coefficients.transpose()).transpose();
  return s;
}

Eigen::VectorXd ReducedModel::predict_scaled(double mu) const {
  return reconstruct(basis, surrogate.evaluate(mu));
}

Field ReducedModel::predict(double mu) const {
  const Eigen::VectorXd scaled = predict_scaled(mu);
  const Eigen::VectorXd sv = scales.replicate(scaled.size() / n_components, 1);
  return unflatten(scaled.cwiseProduct(sv), layout, n_components);
}

ReducedModel build_model(const SnapshotSet& snapshots, int n_modes, const RbfOptions& options) {
  ReducedModel m;
  m.kind = snapshots.kind;
  m.layout = snapshots.layout;
  m.n_components = snapshots.n_components;
  m.scales = snapshots.scales;
  m.basis = compute_pod(snapshots, n_modes);
  Eigen::MatrixXd alpha(n_modes, snapshots.n_train());
  for (int j = 0; j < snapshots.n_train(); ++j) alpha.col(j) = project_coefficients(m.basis, snapshots.fields.col(j));
  m.surrogate = train_rbf(snapshots.parameters, alpha, options);
  return m;
}

namespace {

const char* kModelMagic = "OTROM-MODEL 1";

void write_block(std::ostream& os, const Eigen::MatrixXd& m) {
  io::write_f64(os, m.data(), static_cast<std::size_t>(m.size()));
}

Eigen::MatrixXd read_block(std::istream& is, Eigen::Index rows, Eigen::Index cols, const char* what) {
  Eigen::MatrixXd m(rows, cols);
  io::read_f64(is, m.data(), static_cast<std::size_t>(m.size()), what);
  return m;
}

}  // namespace

void write_model(const std::filesystem::path& path, const ReducedModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("io", "cannot open " + path.string() + " for writing");
  const auto& rbf = model.surrogate;
  os << kModelMagic << "\n"
     << "kind " << to_string(model.kind) << "\n"
     << "layout " << (model.layout == Layout::continuous ? "continuous" : "discontinuous") << "\n"
     << "components " << model.n_components << "\n"
     << "rows " << model.basis.modes.rows() << "\n"
     << "N " << model.basis.n() << "\n"
     << "epsilon " << io::hexfloat(rbf.options.epsilon) << "\n"
     << "multiquadric " << (rbf.options.form == Multiquadric::unit_shift ? "unit_shift" : "offset") << "\n"
     << "normalize " << (rbf.options.normalize ? 1 : 0) << "\n"
     << "shift " << io::hexfloat(rbf.shift) << "\n"
     << "parameters " << rbf.centers.size();
  for (double mu : rbf.centers) os << ' ' << io::hexfloat(mu);
  os << "\nscales";
  for (double s : model.scales) os << ' ' << io::hexfloat(s);
  os << "\nend_header\n";
  write_block(os, model.basis.weights);
  write_block(os, model.basis.singular_values);
  write_block(os, model.basis.modes);
  write_block(os, rbf.beta);
  if (!os) throw InvalidInput("io", "failed writing " + path.string());
}

ReducedModel read_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("io", "cannot open " + path.string());
  std::string magic;
  std::getline(is, magic);
  if (magic != kModelMagic) throw InvalidInput("io", path.string() + " is not a model file");
  ReducedModel m;
  m.kind = snapshot_kind_from_string(io::expect_line(is, "kind"));
  const std::string layout = io::expect_line(is, "layout");
  require(layout == "continuous" || layout == "discontinuous", "io", "bad layout '" + layout + "'");
  m.layout = layout == "continuous" ? Layout::continuous : Layout::discontinuous;
  m.n_components = std::stoi(io::expect_line(is, "components"));
  const Eigen::Index rows = std::stol(io::expect_line(is, "rows"));
  const int n = std::stoi(io::expect_line(is, "N"));
  auto& rbf = m.surrogate;
  rbf.options.epsilon = io::parse_double(io::expect_line(is, "epsilon"));
  const std::string form = io::expect_line(is, "multiquadric");
  require(form == "unit_shift" || form == "offset", "io", "bad multiquadric form '" + form + "'");
  rbf.options.form = form == "unit_shift" ? Multiquadric::unit_shift : Multiquadric::offset;
  rbf.options.normalize = io::expect_line(is, "normalize") == "1";
  rbf.shift = io::parse_double(io::expect_line(is, "shift"));
  std::istringstream ps(io::expect_line(is, "parameters"));
  std::size_t n_train = 0;
  ps >> n_train;
  for (std::string tok; ps >> tok;) rbf.centers.push_back(io::parse_double(tok));
  require(rbf.centers.size() == n_train && n_train >= 1, "io", "bad parameter list");
  std::istringstream ss(io::expect_line(is, "scales"));
  std::vector<double> scales;
  for (std::string tok; ss >> tok;) scales.push_back(io::parse_double(tok));
  require(static_cast<int>(scales.size()) == m.n_components && m.n_components > 0, "io", "bad scales");
  m.scales = Eigen::Map<Eigen::VectorXd>(scales.data(), m.n_components);
  io::expect_line(is, "end_header");
  require(rows > 0 && n >= 1 && n <= static_cast<int>(n_train), "io", "bad model dimensions");
  const auto nt = static_cast<Eigen::Index>(n_train);
  m.basis.weights = read_block(is, rows, 1, "weight");
  m.basis.singular_values = read_block(is, nt, 1, "singular value");
  m.basis.modes = read_block(is, rows, n, "mode");
  rbf.beta = read_block(is, n, nt, "beta");
  return m;
}

void write_snapshots(const std::filesystem::path& path, const SnapshotSet& set) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("io", "cannot open " + path.string() + " for writing");
  os << "OTROM-SNAPSHOTS 1\n"
     << "kind " << to_string(set.kind) << "\n"
     << "layout " << (set.layout == Layout::continuous ? "continuous" : "discontinuous") << "\n"
     << "components " << set.n_components << "\n"
     << "rows " << set.fields.rows() << "\n"
     << "parameters " << set.parameters.size();
  for (double mu : set.parameters) os << ' ' << io::hexfloat(mu);
  os << "\nscales";
  for (double s : set.scales) os << ' ' << io::hexfloat(s);
  os << "\nend_header\n";
  write_block(os, set.weights);
  write_block(os, set.fields);
  if (!os) throw InvalidInput("io", "failed writing " + path.string());
}

SnapshotSet read_snapshots(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("io", "cannot open " + path.string());
  std::string magic;
  std::getline(is, magic);
  if (magic != "OTROM-SNAPSHOTS 1") throw InvalidInput("io", path.string() + " is not a snapshot file");
  SnapshotSet s;
  s.kind = snapshot_kind_from_string(io::expect_line(is, "kind"));
  const std::string layout = io::expect_line(is, "layout");
  require(layout == "continuous" || layout == "discontinuous", "io", "bad layout '" + layout + "'");
  s.layout = layout == "continuous" ? Layout::continuous : Layout::discontinuous;
  s.n_components = std::stoi(io::expect_line(is, "components"));
  const Eigen::Index rows = std::stol(io::expect_line(is, "rows"));
  std::istringstream ps(io::expect_line(is, "parameters"));
  std::size_t n = 0;
  ps >> n;
  for (std::string tok; ps >> tok;) s.parameters.push_back(io::parse_double(tok));
  require(s.parameters.size() == n && n >= 1, "io", "bad parameter list");
  std::istringstream ss(io::expect_line(is, "scales"));
  std::vector<double> scales;
  for (std::string tok; ss >> tok;) scales.push_back(io::parse_double(tok));
  require(static_cast<int>(scales.size()) == s.n_components && s.n_components > 0, "io", "bad scales");
  s.scales = Eigen::Map<Eigen::VectorXd>(scales.data(), s.n_components);
  io::expect_line(is, "end_header");
  require(rows > 0 && rows % s.n_components == 0, "io", "bad snapshot dimensions");
  s.weights = read_block(is, rows, 1, "weight");
  s.fields = read_block(is, rows, static_cast<Eigen::Index>(n), "snapshot");
  return s;
}

Prediction predict(const Mesh& reference, const ReducedModel& solution, const ReducedModel& mapping, double mu) {
  require(mapping.kind == SnapshotKind::mapping && mapping.n_components == 2, "rom", "second model is not a mapping");
  Prediction p;
  p.solution = solution.predict(mu);
  check_field(reference, p.solution);
  const Field phi = mapping.predict(mu);
  check_field(reference, phi);
  require(phi.layout == Layout::continuous, "rom", "mapping model must be continuous");
  p.mapping.parameter = mu;
  p.mapping.phi.resize(static_cast<std::size_t>(reference.n_nodes()));
  for (int i = 0; i < reference.n_nodes(); ++i) p.mapping.phi[i] = phi.values.row(i).transpose();
  p.extrapolated = solution.surrogate.extrapolates(mu) || mapping.surrogate.extrapolates(mu);
  p.min_det = mapping_jacobian(reference, p.mapping).min_det;
  p.tangled = !(p.min_det > 0.0);
  p.physical = apply_mapping(reference, p.mapping);
  if (p.tangled) log_message("rom: predicted mapping at mu = " + std::to_string(mu) + " is tangled");
  if (p.extrapolated) log_message("rom: mu = " + std::to_string(mu) + " is outside the training interval");
  return p;
}

double relative_error(const Eigen::VectorXd& truth, const Eigen::VectorXd& approx, const Eigen::VectorXd& weights) {
  require(truth.size() == approx.size() && truth.size() == weights.size(), "rom", "error operands differ in size");
  const double den = truth.dot(weights.cwiseProduct(truth));
  require(den > 0.0, "rom", "relative error of a zero field");
  const Eigen::VectorXd d = truth - approx;
  return std::sqrt(d.dot(weights.cwiseProduct(d)) / den);
}

double relative_error(const Mesh& reference, const Field& truth, const Field& approx) {
  require(truth.layout == approx.layout && truth.n_components() == approx.n_components(), "rom",
          "error operands live on different spaces");
  check_field(reference, truth);
  check_field(reference, approx);
  return relative_error(flatten(truth), flatten(approx),
                        inner_product_weights(reference, truth.layout, truth.n_components()));
}

}  // namespace otrom
