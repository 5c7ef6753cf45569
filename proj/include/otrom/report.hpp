#pragma once

#include "otrom/fom.hpp"
#include "otrom/pipeline.hpp"
#include "otrom/rom.hpp"

#include <filesystem>
#include <optional>

namespace otrom {

/// Column table behind every export. Column 0 is the abscissa; headers
/// carry units as "name [unit]".
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int n_rows() const { return static_cast<int>(rows.size()); }
  std::vector<double> column(int c) const;
};

/// Header line then one line per row, 17 significant digits.
std::string to_csv(const Table& table);
Table parse_csv(const std::string& text);

struct PlotStyle {
  std::string title;
  bool log_y = false;
};

/// 800 x 600 line plot, one polyline per column after the first; point
/// coordinates come from the table rows. Non-finite values (and nonpositive
/// ones on a log axis) are skipped.
std::string to_svg(const Table& table, const PlotStyle& style = {});

/// "<case>_<kind>_<label>"
std::string export_stem(const std::string& case_name, const std::string& kind, const std::string& label);

struct Export {
  Table table;
  std::filesystem::path csv, svg;
};

/// Writes <stem>.csv and <stem>.svg into dir.
Export write_export(const std::filesystem::path& dir, const std::string& stem, Table table,
                    const PlotStyle& style = {});

/// Normalized singular values sigma_k / sigma_1, one column per set
/// (named after the snapshot kind), log-y plot.
Table singular_value_table(const std::vector<SnapshotSet>& sets);
Export export_singular_values(const std::filesystem::path& dir, const std::string& case_name,
                              const std::vector<SnapshotSet>& sets, const std::string& label = "train");

enum class SliceKind { stagnation_line, constant_y, wall };

std::string to_string(SliceKind kind);
SliceKind slice_kind_from_string(const std::string& name);

struct SliceSpec {
  SliceKind kind = SliceKind::stagnation_line;
  double value = 0.0;  // y of the line; unused for wall slices
  int samples = 200;

  void validate() const;
};

/// Samples the field along the slice. Lines y = value run in +x between the
/// ends of the domain along that line; wall slices run over every wall
/// segment in curve-parameter order, abscissa = arc length. With a mapping
/// the field lives on the mapped mesh and the slice is taken in physical
/// coordinates, otherwise in reference coordinates.
Table sample_slice(const Mesh& reference, const Field& field, const MeshMapping* mapping,
                   const SliceSpec& spec, const std::vector<std::string>& names = {});

Export export_slice(const std::filesystem::path& dir, const std::string& stem, const Mesh& reference,
                    const Field& field, const MeshMapping* mapping, const SliceSpec& spec,
                    const std::vector<std::string>& names = {});

/// Wall pressure p / (rho_inf |v_inf|^2) against arc length.
Table wall_pressure_table(const Mesh& reference, const FlowState& state, const MeshMapping* mapping,
                          int samples = 200);
Export export_wall_quantity(const std::filesystem::path& dir, const std::string& stem, const Mesh& reference,
                            const FlowState& state, const MeshMapping* mapping, int samples = 200);

/// mu, E_u~, E_phi, E_u0, tangled; then "mean" and "max" rows.
std::string error_table_csv(const ErrorTable& table);

/// Writes <case>_errors_<label>.csv.
std::filesystem::path export_errors(const std::filesystem::path& dir, const std::string& case_name,
                                    const ErrorTable& table, const std::string& label = "test");

/// Exports of one completed run:
///   <case>_stagnation_line_<mu>: density of u_h^0 and of the mapped
///     solution in reference coordinates, u_h in physical coordinates;
///   <case>_wall_pressure_<mu>: adapted-mesh FOM and, with models, the
///     mapped ROM prediction.
std::vector<Export> export_run(const std::filesystem::path& dir, const CaseConfig& config, const RunRecord& run,
                               const TrainedModels* models = nullptr, int samples = 400);

/// Abscissa of the first crossing of `threshold` by `column`, scanning the
/// rows in order, linearly interpolated.
std::optional<double> first_crossing(const Table& table, int column, double threshold);

/// Mean spacing of the mesh nodes lying on the line y = value.
double node_spacing_on_line(const Mesh& mesh, double y, double tol = 1e-10);

}  // namespace otrom
