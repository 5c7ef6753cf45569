#include "otrom/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace otrom {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string legend_name(const std::string& column) { return column.substr(0, column.find(" [")); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("report", "cannot write " + path.string());
  os << text;
}

std::vector<std::string> default_names(int n_components) {
  if (n_components == 4) return {"rho [rho_inf]", "rho_u [rho_inf u_inf]", "rho_v [rho_inf u_inf]", "rho_E [rho_inf u_inf^2]"};
  if (n_components == 2) return {"phi_x [L]", "phi_y [L]"};
  std::vector<std::string> out;
  for (int c = 0; c < n_components; ++c) out.push_back("u" + std::to_string(c) + " [-]");
  return out;
}

// Sample positions of a slice in the frame of `mesh`, with their abscissae.
void slice_points(const Mesh& mesh, const PointLocator& loc, const SliceSpec& spec, std::vector<Vec2>& pts,
                  std::vector<double>& s) {
  if (spec.kind == SliceKind::wall) {
    bool any = false;
    double arc = 0.0;
    for (const auto& seg : mesh.segments()) {
      if (seg.kind != BoundaryKind::wall) continue;
      any = true;
      for (int i = 0; i < spec.samples; ++i) {
        const Vec2 x = seg.curve.point_at(static_cast<double>(i) / (spec.samples - 1));
        if (!pts.empty()) arc += (x - pts.back()).norm();
        pts.push_back(x);
        s.push_back(arc);
      }
    }
    if (!any) throw InvalidInput("report", "mesh has no wall segment");
    return;
  }
  const double y = spec.value;
  Eigen::AlignedBox2d box;
  for (const Vec2& x : mesh.nodes()) box.extend(x);
  const double eps = 1e-12 * mesh.diameter();
  auto inside = [&](double x) { return loc.locate(Vec2(x, y)).distance <= eps; };
  const int n_scan = 4000;
  const double x0 = box.min().x(), x1 = box.max().x();
  int first = -1, last = -1;
  for (int i = 0; i <= n_scan; ++i)
    if (inside(x0 + (x1 - x0) * i / n_scan)) {
      if (first < 0) first = i;
      last = i;
    }
  if (first < 0)
    throw InvalidInput("report", "slice y = " + num(y) + " does not intersect the domain");
  // Bisection towards the ends of the inside range.
  auto refine = [&](int in, int out) {
    double a = x0 + (x1 - x0) * in / n_scan, b = x0 + (x1 - x0) * out / n_scan;
    if (out < 0 || out > n_scan) return a;
    for (int k = 0; k < 60; ++k) {
      const double m = 0.5 * (a + b);
      (inside(m) ? a : b) = m;
    }
    return a;
  };
  const double xa = refine(first, first - 1), xb = refine(last, last + 1);
  for (int i = 0; i < spec.samples; ++i) {
    const double x = xa + (xb - xa) * i / (spec.samples - 1);
    pts.emplace_back(x, y);
    s.push_back(x);
  }
}

}  // namespace

std::vector<double> Table::column(int c) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(static_cast<std::size_t>(c)));
  return out;
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += (c ? "," : "") + table.columns[c];
  out += "\n";
  for (const auto& r : table.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + num(r[c]);
    out += "\n";
  }
  return out;
}

Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput("report", "empty CSV");
  std::istringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.columns.push_back(cell);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream rs(line);
    for (std::string cell; std::getline(rs, cell, ',');) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InvalidInput("report", "bad CSV cell '" + cell + "'");
      }
    }
    if (row.size() != t.columns.size()) throw InvalidInput("report", "CSV row width differs from header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string to_svg(const Table& table, const PlotStyle& style) {
  constexpr double W = 800, H = 600, L = 90, R = 770, T = 50, B = 530;
  const double inf = std::numeric_limits<double>::infinity();
  auto yv = [&](double v) { return style.log_y ? std::log10(v) : v; };
  auto usable = [&](double v) { return std::isfinite(v) && (!style.log_y || v > 0.0); };
  double xmin = inf, xmax = -inf, ymin = inf, ymax = -inf;
  for (const auto& r : table.rows) {
    if (!std::isfinite(r[0])) continue;
    xmin = std::min(xmin, r[0]);
    xmax = std::max(xmax, r[0]);
    for (std::size_t c = 1; c < r.size(); ++c)
      if (usable(r[c])) {
        ymin = std::min(ymin, yv(r[c]));
        ymax = std::max(ymax, yv(r[c]));
      }
  }
  if (!(xmin <= xmax)) xmin = 0.0, xmax = 1.0;
  if (!(ymin <= ymax)) ymin = 0.0, ymax = 1.0;
  if (style.log_y) ymin = std::floor(ymin), ymax = std::ceil(ymax);
  if (xmax - xmin <= 0.0) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin <= 0.0) ymin -= 0.5, ymax += 0.5;
  if (!style.log_y) {
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
  }
  auto X = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (R - L); };
  auto Y = [&](double y) { return B - (y - ymin) / (ymax - ymin) * (B - T); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" viewBox=\"0 0 " << W << " " << H
     << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  os << "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
  if (!style.title.empty())
    os << "<text x=\"" << px(0.5 * (L + R)) << "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">"
       << escape(style.title) << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << R - L << "\" height=\"" << B - T
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double x = xmin + (xmax - xmin) * k / 5.0;
    os << "<text x=\"" << px(X(x)) << "\" y=\"" << B + 20 << "\" text-anchor=\"middle\">" << short_num(x) << "</text>\n";
  }
  if (style.log_y) {
    const int step = std::max(1, static_cast<int>(std::ceil((ymax - ymin) / 8.0)));
    for (int e = static_cast<int>(ymax); e >= static_cast<int>(ymin); e -= step)
      os << "<text x=\"" << L - 8 << "\" y=\"" << px(Y(e) + 4) << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  } else {
    for (int k = 0; k <= 5; ++k) {
      const double y = ymin + (ymax - ymin) * k / 5.0;
      os << "<text x=\"" << L - 8 << "\" y=\"" << px(Y(y) + 4) << "\" text-anchor=\"end\">" << short_num(y)
         << "</text>\n";
    }
  }
  if (!table.columns.empty())
    os << "<text x=\"" << px(0.5 * (L + R)) << "\" y=\"" << H - 25 << "\" text-anchor=\"middle\">"
       << escape(table.columns[0]) << "</text>\n";
  for (std::size_t c = 1; c < table.columns.size(); ++c) {
    const char* color = colors[(c - 1) % std::size(colors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& r : table.rows) {
      if (!std::isfinite(r[0]) || !usable(r[c])) continue;
      os << (first ? "" : " ") << px(X(r[0])) << "," << px(Y(yv(r[c])));
      first = false;
    }
    os << "\"/>\n";
    if (table.rows.size() <= 30)
      for (const auto& r : table.rows)
        if (std::isfinite(r[0]) && usable(r[c]))
          os << "<circle cx=\"" << px(X(r[0])) << "\" cy=\"" << px(Y(yv(r[c]))) << "\" r=\"3\" fill=\"" << color
             << "\"/>\n";
    const double ly = T + 20 + 20 * static_cast<double>(c - 1);
    os << "<line x1=\"" << R - 200 << "\" y1=\"" << ly - 4 << "\" x2=\"" << R - 175 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text class=\"legend\" x=\"" << R - 168 << "\" y=\"" << ly << "\">" << escape(legend_name(table.columns[c]))
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string export_stem(const std::string& case_name, const std::string& kind, const std::string& label) {
  return case_name + "_" + kind + "_" + label;
}

Export write_export(const std::filesystem::path& dir, const std::string& stem, Table table, const PlotStyle& style) {
  std::filesystem::create_directories(dir);
  Export ex;
  ex.csv = dir / (stem + ".csv");
  ex.svg = dir / (stem + ".svg");
  write_text(ex.csv, to_csv(table));
  write_text(ex.svg, to_svg(table, style));
  ex.table = std::move(table);
  return ex;
}

Table singular_value_table(const std::vector<SnapshotSet>& sets) {
  require(!sets.empty(), "report", "no snapshot sets");
  Table t;
  t.columns.push_back("k [-]");
  std::vector<Eigen::VectorXd> sv;
  int n = 0;
  for (const auto& s : sets) {
    t.columns.push_back(to_string(s.kind) + " [-]");
    sv.push_back(compute_pod(s, s.n_train()).singular_values);
    n = std::max(n, static_cast<int>(sv.back().size()));
  }
  for (int k = 0; k < n; ++k) {
    std::vector<double> row{static_cast<double>(k + 1)};
    for (const auto& v : sv)
      row.push_back(k < v.size() && v[0] > 0.0 ? v[k] / v[0] : std::numeric_limits<double>::quiet_NaN());
    t.rows.push_back(std::move(row));
  }
  return t;
}

Export export_singular_values(const std::filesystem::path& dir, const std::string& case_name,
                              const std::vector<SnapshotSet>& sets, const std::string& label) {
  return write_export(dir, export_stem(case_name, "singular_values", label), singular_value_table(sets),
                      {"Normalized singular values", true});
}

std::string to_string(SliceKind kind) {
  switch (kind) {
    case SliceKind::stagnation_line: return "stagnation_line";
    case SliceKind::constant_y: return "constant_y";
    case SliceKind::wall: return "wall";
  }
  return "?";
}

SliceKind slice_kind_from_string(const std::string& name) {
  for (SliceKind k : {SliceKind::stagnation_line, SliceKind::constant_y, SliceKind::wall})
    if (to_string(k) == name) return k;
  throw InvalidInput("report", "unknown slice kind '" + name + "'");
}

void SliceSpec::validate() const {
  require(samples >= 2, "report", "a slice needs at least 2 samples");
  require(std::isfinite(value), "report", "slice coordinate must be finite");
}

Table sample_slice(const Mesh& reference, const Field& field, const MeshMapping* mapping, const SliceSpec& spec,
                   const std::vector<std::string>& names) {
  spec.validate();
  check_field(reference, field);
  const Mesh mesh = mapping ? apply_mapping(reference, *mapping) : reference;
  const PointLocator loc(mesh);
  std::vector<Vec2> pts;
  std::vector<double> s;
  slice_points(mesh, loc, spec, pts, s);
  // Wall samples lie on the exact curves, up to the geometry error off the mesh.
  const Eigen::MatrixXd v = interpolate_to_points(loc, field, pts, 0.05 * mesh.mean_edge_length());
  Table t;
  t.columns.push_back(spec.kind == SliceKind::wall ? "s [L]" : "x [L]");
  const auto cols = names.empty() ? default_names(field.n_components()) : names;
  require(static_cast<int>(cols.size()) == field.n_components(), "report", "one name per field component");
  t.columns.insert(t.columns.end(), cols.begin(), cols.end());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> row{s[i]};
    for (int c = 0; c < v.cols(); ++c) row.push_back(v(static_cast<Eigen::Index>(i), c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Export export_slice(const std::filesystem::path& dir, const std::string& stem, const Mesh& reference,
                    const Field& field, const MeshMapping* mapping, const SliceSpec& spec,
                    const std::vector<std::string>& names) {
  const std::string where = spec.kind == SliceKind::wall ? "along the wall" : "along y = " + short_num(spec.value);
  return write_export(dir, stem, sample_slice(reference, field, mapping, spec, names), {"Field " + where, false});
}

Table wall_pressure_table(const Mesh& reference, const FlowState& state, const MeshMapping* mapping, int samples) {
  require(state.conserved.n_components() == 4, "report", "flow state needs 4 components");
  SliceSpec spec;
  spec.kind = SliceKind::wall;
  spec.samples = samples;
  const Table u = sample_slice(reference, state.conserved, mapping, spec);
  const State4 inf = free_stream_state(state.mach_inf, state.gamma);
  const double q = inf[0] * (inf.tail<3>().head<2>() / inf[0]).squaredNorm();
  Table t;
  t.columns = {"s [L]", "p [rho_inf u_inf^2]"};
  for (const auto& r : u.rows) t.rows.push_back({r[0], pressure(State4(r[1], r[2], r[3], r[4]), state.gamma) / q});
  return t;
}

Export export_wall_quantity(const std::filesystem::path& dir, const std::string& stem, const Mesh& reference,
                            const FlowState& state, const MeshMapping* mapping, int samples) {
  return write_export(dir, stem, wall_pressure_table(reference, state, mapping, samples), {"Wall pressure", false});
}

std::string error_table_csv(const ErrorTable& table) {
  std::string out = "mu [-],E_mapped [-],E_mapping [-],E_fixed [-],tangled [-]\n";
  auto line = [&](const std::string& label, const ErrorRow& r) {
    out += label + "," + num(r.mapped) + "," + num(r.mapping) + "," + num(r.fixed) + "," + (r.tangled ? "1" : "0") + "\n";
  };
  for (const auto& r : table.rows) line(num(r.mu), r);
  if (!table.rows.empty()) {
    line("mean", table.mean);
    line("max", table.max);
  }
  return out;
}

std::filesystem::path export_errors(const std::filesystem::path& dir, const std::string& case_name,
                                    const ErrorTable& table, const std::string& label) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (export_stem(case_name, "errors", label) + ".csv");
  write_text(path, error_table_csv(table));
  return path;
}

std::vector<Export> export_run(const std::filesystem::path& dir, const CaseConfig& config, const RunRecord& run,
                               const TrainedModels* models, int samples) {
  const Mesh ref = config.reference_mesh();
  const std::string mu = mu_label(run.mu);
  auto density = [](const Field& u) {
    Field rho;
    rho.layout = u.layout;
    rho.values = u.values.col(0);
    return rho;
  };
  // Stagnation line y = 0 for the cylinder, mid-height line otherwise.
  SliceSpec line{SliceKind::stagnation_line, 0.0, samples};
  std::string line_name = "stagnation_line";
  if (config.case_name != "cylinder") {
    Eigen::AlignedBox2d box;
    for (const Vec2& x : ref.nodes()) box.extend(x);
    line = {SliceKind::constant_y, box.center().y(), samples};
    line_name = "constant_y";
  }
  Table slice = sample_slice(ref, density(run.reference_solution), nullptr, line, {"rho_reference_mesh [rho_inf]"});
  const Table mapped_back = sample_slice(ref, density(run.adapted_solution), nullptr, line, {"rho_mapped_back [rho_inf]"});
  const Table physical = sample_slice(ref, density(run.adapted_solution), &run.mapping, line, {"rho_adapted_mesh [rho_inf]"});
  slice.columns.push_back(mapped_back.columns[1]);
  slice.columns.push_back(physical.columns[1]);
  for (std::size_t i = 0; i < slice.rows.size(); ++i) {
    slice.rows[i].push_back(mapped_back.rows[i][1]);
    slice.rows[i].push_back(physical.rows[i][1]);
  }
  std::vector<Export> out;
  out.push_back(write_export(dir, export_stem(config.case_name, line_name, mu), std::move(slice),
                             {"Density along y = " + short_num(line.value) + ", Ma " + mu, false}));

  bool has_wall = false;
  for (const auto& seg : ref.segments()) has_wall = has_wall || seg.kind == BoundaryKind::wall;
  if (!has_wall) return out;
  FlowState fom;
  fom.gamma = config.gamma;
  fom.mach_inf = run.mu;
  fom.conserved = run.adapted_solution;
  Table wall = wall_pressure_table(ref, fom, &run.mapping, samples);
  wall.columns[1] = "p_fom [rho_inf u_inf^2]";
  if (models) {
    const Prediction p = predict(ref, models->mapped, models->mapping, run.mu);
    FlowState rom = fom;
    rom.conserved = p.solution;
    const Table w = wall_pressure_table(ref, rom, &p.mapping, samples);
    wall.columns.push_back("p_rom [rho_inf u_inf^2]");
    for (std::size_t i = 0; i < wall.rows.size(); ++i) wall.rows[i].push_back(w.rows[i][1]);
  }
  out.push_back(write_export(dir, export_stem(config.case_name, "wall_pressure", mu), std::move(wall),
                             {"Wall pressure, Ma " + mu, false}));
  return out;
}

std::optional<double> first_crossing(const Table& table, int column, double threshold) {
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    const double a = table.rows[i - 1][column] - threshold, b = table.rows[i][column] - threshold;
    if (a == 0.0) return table.rows[i - 1][0];
    if ((a < 0.0) != (b < 0.0) || b == 0.0) {
      const double t = a / (a - b);
      return table.rows[i - 1][0] + t * (table.rows[i][0] - table.rows[i - 1][0]);
    }
  }
  return std::nullopt;
}

double node_spacing_on_line(const Mesh& mesh, double y, double tol) {
  std::vector<double> xs;
  for (const Vec2& x : mesh.nodes())
    if (std::abs(x.y() - y) <= tol) xs.push_back(x.x());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end(), [&](double a, double b) { return b - a <= tol; }), xs.end());
  require(xs.size() >= 2, "report", "fewer than two mesh nodes on y = " + num(y));
  return (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
}

}  // namespace otrom
