#pragma once

#include "otrom/fom.hpp"
#include "otrom/monge_ampere.hpp"
#include "otrom/rom.hpp"

#include <filesystem>
#include <map>

namespace otrom {

struct CaseConfig {
  // [case]
  std::string case_name = "cylinder";
  std::vector<double> case_params;
  std::array<int, 2> resolution{10, 12};
  int order = 2;
  double gamma = 1.4;
  // [parameters]
  std::vector<double> train{2.0, 3.0, 4.0};
  std::vector<double> test{2.5, 3.5};
  // [sensor]
  SensorConfig sensor;
  // [regularization]; zero selects the mesh-dependent default
  double lambda1 = 0.0;  // default_lambda1
  double lambda2 = 2.0;
  double ell = 0.0;      // 2 x mean edge length
  double ramp_factor = 0.5;
  double lambda1_floor = 1e-3;
  double lambda2_floor = 1e-3;
  double wall_layer = 0.0;  // mean edge length
  // [solver]
  SolveOptions solve;
  // [monge_ampere]
  MAOptions ma;
  int potential_order_increment = 1;
  int ma_order_increment = 1;  // Monge-Ampere space order = mesh order + this
  // [rom]
  int rom_modes = 0;  // 0: n_train
  RbfOptions rbf;
  bool weighted_pod = true;
  // [output]
  std::filesystem::path output_dir = "runs";
  int threads = 0;  // sweep workers, 0: hardware concurrency

  void validate() const;
  /// Every setting as "section.key = value" lines in a fixed order.
  std::string canonical() const;
  /// The canonical lines that determine a single-mu run.
  std::string run_settings() const;
  /// FNV-1a hash of the settings that determine a single-mu run.
  std::string run_hash() const;
  /// run_hash plus the training set and ROM settings.
  std::string model_hash() const;
  RegParams reg_params(const Mesh& mesh) const;
  Mesh reference_mesh() const;
  std::filesystem::path case_dir() const;
  std::filesystem::path run_dir(double mu) const;
  std::filesystem::path model_dir() const;
};

/// INI-style text: [section] headers, key = value lines, '#' or ';'
/// comments. Lists are comma or space separated. Unknown keys are errors.
CaseConfig parse_config(const std::string& text);
CaseConfig load_config(const std::filesystem::path& path);

std::string fnv1a_hex(const std::string& data);
/// Exact, locale-independent text of a parameter for file names ("2.5").
std::string mu_label(double mu);

/// `per_interval` equally spaced values strictly inside each training interval.
std::vector<double> test_parameters_between(const std::vector<double>& train, int per_interval);
/// `count` equally spaced values strictly between min and max of the training set.
std::vector<double> test_parameters_global(const std::vector<double>& train, int count);

struct RunRecord {
  double mu = 0.0;
  std::filesystem::path dir;
  std::map<std::string, std::filesystem::path> files;
  // In-memory artifacts.
  Field reference_solution;  // u_h^0 on T_h^0
  Field rho_prime;
  MeshMapping mapping;
  Field adapted_solution;    // u_h on T_h^mu, reference node order
  // Convergence metadata.
  int continuation_solves = 0;
  std::string continuation_stop;
  RegParams final_params;
  int ma_iterations = 0;
  double equidistribution = 0.0;
  double min_det = 0.0;
  int adapted_iterations = 0;
  bool adapted_converged = false;
  double reference_eta_integral = 0.0;
  double adapted_eta_integral = 0.0;
};

Field mapping_field(const MeshMapping& mapping);

/// Algorithm 1 at one parameter: reference continuation solve, target
/// density from the density component, Monge-Ampere map, corner snapping,
/// interpolated initial guess and the adapted-mesh solve. Artifacts are
/// written under run_dir(mu) as they are produced, so a failure keeps the
/// earlier stages. Failures throw with the stage tag of the failing step.
RunRecord adapt_and_solve(double mu, const CaseConfig& config, bool persist = true);

/// Only the reference continuation solve of adapt_and_solve.
RunRecord reference_solve(double mu, const CaseConfig& config, bool persist = true);

/// True when run_dir(mu) holds a completed adapt_and_solve run.
bool has_run(double mu, const CaseConfig& config);
/// Reads a completed run back from run_dir(mu).
RunRecord load_run(double mu, const CaseConfig& config);

/// adapt_and_solve over `mus`, parallel across parameters; results in the
/// order of `mus`. With `reuse`, completed runs on disk are loaded instead
/// of recomputed. Throws listing every failed parameter.
std::vector<RunRecord> run_sweep(const std::vector<double>& mus, const CaseConfig& config, bool persist = true,
                                 bool reuse = false);

struct TrainingSets {
  SnapshotSet mapped;    // adapted solutions on the reference nodes
  SnapshotSet mappings;  // phi
  SnapshotSet fixed;     // reference-mesh solutions
};

/// Snapshot sets persisted by run_training.
TrainingSets read_training_sets(const CaseConfig& config);

TrainingSets assemble_training_sets(const Mesh& reference, const std::vector<RunRecord>& runs,
                                    const CaseConfig& config);

struct TrainedModels {
  ReducedModel mapped, mapping, fixed;
};

TrainedModels train_models(const TrainingSets& sets, const CaseConfig& config);
void write_models(const TrainedModels& models, const CaseConfig& config);
TrainedModels read_models(const CaseConfig& config);

struct TrainingResult {
  std::vector<RunRecord> runs;
  TrainingSets sets;
  TrainedModels models;
};

/// Sweep over the training parameters, snapshot assembly, POD and RBF
/// training; snapshot sets and models are persisted under model_dir().
TrainingResult run_training(const CaseConfig& config, bool reuse = false);

struct ErrorRow {
  double mu = 0.0;
  double mapped = 0.0;   // E_u~
  double mapping = 0.0;  // E_phi
  double fixed = 0.0;    // E_u0
  bool tangled = false;
};

struct ErrorTable {
  std::vector<ErrorRow> rows;
  ErrorRow mean, max;
};

ErrorTable error_table(std::vector<ErrorRow> rows);
ErrorRow evaluate_errors(const Mesh& reference, const RunRecord& truth, const TrainedModels& models);

/// Truth runs at the test parameters and ROM errors on the reference mesh.
ErrorTable run_evaluation(const CaseConfig& config, const TrainedModels& models,
                          std::vector<RunRecord>* truth = nullptr, bool reuse = false);

}  // namespace otrom
