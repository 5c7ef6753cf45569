#pragma once

#include "otrom/mesh.hpp"

#include <filesystem>
#include <optional>

namespace otrom {

enum class SnapshotKind { mapped_solution, mapping, fixed_mesh_solution };

std::string to_string(SnapshotKind kind);
SnapshotKind snapshot_kind_from_string(const std::string& name);

/// Diagonal inner-product weights for a flattened field: per node the row sum
/// of the element mass matrix (the nodal quadrature weight for GLL nodes),
/// falling back to diagonal scaling on elements where a row sum is not
/// positive. Repeated per component; all ones when `weighted` is false.
Eigen::VectorXd inner_product_weights(const Mesh& mesh, Layout layout, int n_components,
                                      bool weighted = true);

/// Node-major, component-minor flattening of field values.
Eigen::VectorXd flatten(const Field& field);
Field unflatten(const Eigen::VectorXd& v, Layout layout, int n_components);

/// Per-component magnitudes used to nondimensionalize snapshots: the mean
/// over `parameters` (Mach numbers) of |rho|, |rho v|, |rho v|, |rho E| at
/// free stream for solutions, ones for mappings.
Eigen::VectorXd component_scales(SnapshotKind kind, const std::vector<double>& parameters,
                                 double gamma = 1.4);

struct SnapshotSet {
  SnapshotKind kind = SnapshotKind::mapped_solution;
  std::vector<double> parameters;
  Eigen::MatrixXd fields;   // one scaled, flattened field per column
  Eigen::VectorXd weights;  // per row of `fields`
  Eigen::VectorXd scales;   // per component; stored value = raw / scale
  Layout layout = Layout::discontinuous;
  int n_components = 0;

  int n_train() const { return static_cast<int>(parameters.size()); }
  Eigen::VectorXd scale_vector() const;
  Eigen::VectorXd to_scaled(const Field& raw) const;
  Field from_scaled(const Eigen::VectorXd& scaled) const;
};

/// Snapshot matrix from (mu, field) runs on the reference mesh. Mapped
/// solutions share the reference topology, so the adapted-mesh value at
/// node phi(x_i) is the row of reference node i. Runs are sorted by mu;
/// duplicate parameters and mismatched fields are rejected.
SnapshotSet assemble_snapshots(const Mesh& reference, SnapshotKind kind,
                               std::vector<std::pair<double, Field>> runs, bool weighted = true,
                               std::optional<Eigen::VectorXd> scales = std::nullopt);

/// Header (kind, layout, sizes, parameters, scales) then weights and the
/// snapshot matrix as little-endian f64.
void write_snapshots(const std::filesystem::path& path, const SnapshotSet& set);
SnapshotSet read_snapshots(const std::filesystem::path& path);

struct PodBasis {
  Eigen::MatrixXd modes;             // W, M-orthonormal columns
  Eigen::VectorXd singular_values;   // all n_train values
  Eigen::VectorXd weights;
  int n() const { return static_cast<int>(modes.cols()); }
};

/// Weighted SVD of the snapshot matrix, leading N modes. The largest entry
/// of each mode is positive.
PodBasis compute_pod(const SnapshotSet& snapshots, int n_modes);

/// alpha* = W^T M field.
Eigen::VectorXd project_coefficients(const PodBasis& basis, const Eigen::VectorXd& field);
Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& coefficients);
/// sqrt(sum_j |x_j - W W^T M x_j|_M^2) over the snapshot columns.
double reconstruction_error(const PodBasis& basis, const SnapshotSet& snapshots);

enum class Multiquadric { unit_shift, offset };  // sqrt(1 + (eps r)^2) | sqrt(r^2 + eps^2)

struct RbfOptions {
  double epsilon = 20.0;
  Multiquadric form = Multiquadric::unit_shift;
  bool normalize = false;  // distances on the training interval mapped to [0, 1]
};

struct RbfSurrogate {
  RbfOptions options;
  std::vector<double> centers;
  Eigen::MatrixXd beta;  // N x n_train
  double shift = 0.0;    // diagonal regularization applied, 0 if none

  double kernel(double a, double b) const;
  Eigen::VectorXd evaluate(double mu) const;
  bool extrapolates(double mu) const;
};

/// Solves Psi(|mu_i - mu_j|) beta^T = alpha*^T; a single center gives the
/// constant surrogate beta = alpha*. Conditioning above 1e12 adds
/// a diagonal shift of 1e-12 trace / n once; above 1e14 afterwards throws.
RbfSurrogate train_rbf(const std::vector<double>& parameters, const Eigen::MatrixXd& coefficients,
                       const RbfOptions& options = {});

/// POD basis plus RBF surrogate of one snapshot kind.
struct ReducedModel {
  SnapshotKind kind = SnapshotKind::mapped_solution;
  Layout layout = Layout::discontinuous;
  int n_components = 0;
  Eigen::VectorXd scales;
  PodBasis basis;
  RbfSurrogate surrogate;

  /// Scaled, flattened prediction.
  Eigen::VectorXd predict_scaled(double mu) const;
  Field predict(double mu) const;
};

ReducedModel build_model(const SnapshotSet& snapshots, int n_modes, const RbfOptions& options = {});

void write_model(const std::filesystem::path& path, const ReducedModel& model);
ReducedModel read_model(const std::filesystem::path& path);

struct Prediction {
  Field solution;       // mapped solution on the reference nodes
  MeshMapping mapping;  // phi_N
  Mesh physical;        // reference topology at the predicted node positions
  double min_det = 0.0;
  bool tangled = false;
  bool extrapolated = false;
};

/// Composed online prediction u_N on T^mu_N. Tangling and extrapolation are
/// flagged and logged, not thrown.
Prediction predict(const Mesh& reference, const ReducedModel& solution, const ReducedModel& mapping,
                   double mu);

/// E = sqrt(sum w |truth - approx|^2 / sum w |truth|^2) with the flattened
/// field weights.
double relative_error(const Eigen::VectorXd& truth, const Eigen::VectorXd& approx,
                      const Eigen::VectorXd& weights);
double relative_error(const Mesh& reference, const Field& truth, const Field& approx);

}  // namespace otrom
