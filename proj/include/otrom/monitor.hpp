#pragma once

#include "otrom/fe.hpp"

#include <memory>

namespace otrom {

struct SensorConfig {
  double s_min = 0.0;
  double s_max_factor = 0.5;
  /// Smoothing length; <= 0 selects 2 x mean element edge length.
  double length_scale = 0.0;
  double clip_sharpness = 10.0;
  /// Apply s_max_factor to max |grad xi|^2 (true) or to max |grad xi| (false).
  bool clip_bound_on_square = true;

  void validate() const;
};

/// Smooth, monotone clip of x into [s_min, s_max]: composed softplus
/// functions with rate sharpness / (s_max - s_min), affinely rescaled so the
/// saturation limits are exactly s_min and s_max.
double smooth_clip(double x, double s_min, double s_max, double sharpness = 10.0);

/// S = -div v at the nodes of the state's layout, from the conservative
/// variables (rho, rho v1, rho v2, ...) by exact differentiation of the
/// element polynomials. Continuous input gives an averaged continuous field.
Field dilatation_sensor(const FeSpace& space, const Field& state);

/// s = sqrt(1 + clip(|grad xi|^2, s_min, s_max)) with s_max from the config.
Field resolution_sensor(const FeSpace& space, const Field& xi, const SensorConfig& config);

enum class HelmholtzBc { neumann_all, dirichlet_wall };

/// Solver for rho - div(l^2 grad rho) = s with a cached factorization.
class HelmholtzSmoother {
 public:
  HelmholtzSmoother(const FeSpace& space, double length, HelmholtzBc bc);
  /// Source in any layout; result is continuous.
  Field smooth(const Field& source) const;
  double length() const { return length_; }

 private:
  const FeSpace* space_;
  double length_;
  std::vector<char> fixed_;
  SparseMatrix A_;
  std::unique_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

Field helmholtz_smooth(const FeSpace& space, const Field& source, double length, HelmholtzBc bc);

/// rho' with its normalization theta = int rho' / int 1; f = theta / rho'.
struct TargetDensity {
  Field rho_prime;
  double theta = 1.0;
};

TargetDensity normalize_target_density(const FeSpace& space, Field rho_prime);

/// Default smoothing length: 2 x mean element edge length.
double default_length_scale(const Mesh& mesh);

}  // namespace otrom
