#include "otrom/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace otrom {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s;
}

std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream is(t);
  std::vector<double> out;
  for (std::string tok; is >> tok;) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size()) throw InvalidInput("config", key + ": bad number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

double parse_number(const std::string& text, const std::string& key) {
  const auto v = parse_list(text, key);
  if (v.size() != 1) throw InvalidInput("config", key + ": expected one number, got '" + text + "'");
  return v[0];
}

int parse_int(const std::string& text, const std::string& key) {
  const double v = parse_number(text, key);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw InvalidInput("config", key + ": expected an integer");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw InvalidInput("config", key + ": expected true or false, got '" + text + "'");
}

std::string str(bool b) { return b ? "true" : "false"; }

// One entry per setting: getter for the canonical echo, setter for parsing.
struct Setting {
  std::string key;  // section.key
  bool per_run;     // part of run_hash
  std::function<std::string(const CaseConfig&)> get;
  std::function<void(CaseConfig&, const std::string&)> set;
};

#define OTROM_NUM(section, name, member, run)                                                          \
  Setting{section "." name, run, [](const CaseConfig& c) { return num(c.member); },                  \
          [](CaseConfig& c, const std::string& v) { c.member = parse_number(v, section "." name); }}
#define OTROM_INT(section, name, member, run)                                                             \
  Setting{section "." name, run, [](const CaseConfig& c) { return std::to_string(c.member); },          \
          [](CaseConfig& c, const std::string& v) { c.member = parse_int(v, section "." name); }}
#define OTROM_BOOL(section, name, member, run)                                                            \
  Setting{section "." name, run, [](const CaseConfig& c) { return str(c.member); },                     \
          [](CaseConfig& c, const std::string& v) { c.member = parse_bool(v, section "." name); }}

const std::vector<Setting>& settings() {
  static const std::vector<Setting> s{
      Setting{"case.name", true, [](const CaseConfig& c) { return c.case_name; },
              [](CaseConfig& c, const std::string& v) { c.case_name = v; }},
      Setting{"case.params", true, [](const CaseConfig& c) { return list(c.case_params); },
              [](CaseConfig& c, const std::string& v) { c.case_params = parse_list(v, "case.params"); }},
      Setting{"case.resolution", true,
              [](const CaseConfig& c) { return std::to_string(c.resolution[0]) + ", " + std::to_string(c.resolution[1]); },
              [](CaseConfig& c, const std::string& v) {
                const auto r = parse_list(v, "case.resolution");
                if (r.size() != 2) throw InvalidInput("config", "case.resolution needs two integers");
                c.resolution = {parse_int(num(r[0]), "case.resolution"), parse_int(num(r[1]), "case.resolution")};
              }},
      OTROM_INT("case", "order", order, true),
      OTROM_NUM("case", "gamma", gamma, true),
      Setting{"parameters.train", false, [](const CaseConfig& c) { return list(c.train); },
              [](CaseConfig& c, const std::string& v) { c.train = parse_list(v, "parameters.train"); }},
      Setting{"parameters.test", false, [](const CaseConfig& c) { return list(c.test); },
              [](CaseConfig& c, const std::string& v) { c.test = parse_list(v, "parameters.test"); }},
      Setting{"parameters.test_per_interval", false, [](const CaseConfig&) { return std::string(); },
              [](CaseConfig& c, const std::string& v) {
                c.test = test_parameters_between(c.train, parse_int(v, "parameters.test_per_interval"));
              }},
      Setting{"parameters.test_count", false, [](const CaseConfig&) { return std::string(); },
              [](CaseConfig& c, const std::string& v) {
                c.test = test_parameters_global(c.train, parse_int(v, "parameters.test_count"));
              }},
      OTROM_NUM("sensor", "s_min", sensor.s_min, true),
      OTROM_NUM("sensor", "s_max_factor", sensor.s_max_factor, true),
      OTROM_NUM("sensor", "length_scale", sensor.length_scale, true),
      OTROM_NUM("sensor", "clip_sharpness", sensor.clip_sharpness, true),
      OTROM_BOOL("sensor", "clip_bound_on_square", sensor.clip_bound_on_square, true),
      OTROM_NUM("regularization", "lambda1", lambda1, true),
      OTROM_NUM("regularization", "lambda2", lambda2, true),
      OTROM_NUM("regularization", "ell", ell, true),
      OTROM_NUM("regularization", "ramp_factor", ramp_factor, true),
      OTROM_NUM("regularization", "lambda1_floor", lambda1_floor, true),
      OTROM_NUM("regularization", "lambda2_floor", lambda2_floor, true),
      OTROM_NUM("regularization", "wall_layer", wall_layer, true),
      Setting{"regularization.viscosity_function", true, [](const CaseConfig&) { return std::string("eta"); },
              [](CaseConfig&, const std::string& v) {
                if (v != "eta") throw InvalidInput("config", "regularization.viscosity_function: only 'eta' is implemented");
              }},
      OTROM_NUM("solver", "tol", solve.tol, true),
      OTROM_INT("solver", "max_iter", solve.max_iter, true),
      OTROM_NUM("solver", "cfl0", solve.cfl0, true),
      OTROM_NUM("solver", "cfl_min", solve.cfl_min, true),
      OTROM_NUM("solver", "cfl_max", solve.cfl_max, true),
      OTROM_INT("solver", "max_halvings", solve.max_halvings, true),
      OTROM_NUM("solver", "min_state_ratio", solve.min_state_ratio, true),
      OTROM_NUM("solver", "freeze_eta_below", solve.freeze_eta_below, true),
      OTROM_INT("solver", "stall_window", solve.stall_window, true),
      OTROM_INT("solver", "abort_window", solve.abort_window, true),
      OTROM_NUM("solver", "stall_freeze_below", solve.stall_freeze_below, true),
      OTROM_NUM("monge_ampere", "tol", ma.tol, true),
      OTROM_INT("monge_ampere", "max_iter", ma.max_iter, true),
      OTROM_NUM("monge_ampere", "damping", ma.damping, true),
      OTROM_INT("monge_ampere", "potential_order_increment", potential_order_increment, true),
      OTROM_INT("monge_ampere", "order_increment", ma_order_increment, true),
      OTROM_INT("rom", "modes", rom_modes, false),
      OTROM_NUM("rom", "epsilon", rbf.epsilon, false),
      Setting{"rom.multiquadric", false,
              [](const CaseConfig& c) {
                return std::string(c.rbf.form == Multiquadric::unit_shift ? "unit_shift" : "offset");
              },
              [](CaseConfig& c, const std::string& v) {
                if (v == "unit_shift") c.rbf.form = Multiquadric::unit_shift;
                else if (v == "offset") c.rbf.form = Multiquadric::offset;
                else throw InvalidInput("config", "rom.multiquadric: expected unit_shift or offset");
              }},
      OTROM_BOOL("rom", "normalize", rbf.normalize, false),
      OTROM_BOOL("rom", "weighted", weighted_pod, false),
      Setting{"output.dir", false, [](const CaseConfig& c) { return c.output_dir.string(); },
              [](CaseConfig& c, const std::string& v) { c.output_dir = v; }},
      OTROM_INT("output", "threads", threads, false),
  };
  return s;
}

#undef OTROM_NUM
#undef OTROM_INT
#undef OTROM_BOOL

std::string echo(const CaseConfig& c, const std::function<bool(const Setting&)>& keep) {
  std::string out;
  for (const auto& s : settings()) {
    if (!keep(s)) continue;
    const std::string v = s.get(c);
    if (s.key == "parameters.test_per_interval" || s.key == "parameters.test_count") continue;
    out += s.key + " = " + v + "\n";
  }
  return out;
}

}  // namespace

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string mu_label(double mu) { return num(mu); }

std::vector<double> test_parameters_between(const std::vector<double>& train, int per_interval) {
  require(per_interval >= 0, "config", "per-interval count must be >= 0");
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < train.size(); ++i)
    for (int k = 1; k <= per_interval; ++k)
      out.push_back(train[i] + (train[i + 1] - train[i]) * k / (per_interval + 1.0));
  return out;
}

std::vector<double> test_parameters_global(const std::vector<double>& train, int count) {
  require(count >= 0, "config", "test count must be >= 0");
  require(!train.empty(), "config", "empty training set");
  const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
  std::vector<double> out;
  for (int k = 1; k <= count; ++k) out.push_back(*lo + (*hi - *lo) * k / (count + 1.0));
  return out;
}

void CaseConfig::validate() const {
  require(resolution[0] >= 2 && resolution[1] >= 2, "config", "resolution must be >= 2 per direction");
  require(order >= 1, "config", "order must be >= 1");
  require(gamma > 1.0, "config", "gamma must exceed 1");
  require(!train.empty(), "config", "empty training set");
  for (std::size_t i = 1; i < train.size(); ++i)
    require(train[i] > train[i - 1], "config", "training parameters must be distinct and increasing");
  for (double mu : train) require(mu > 1.0, "config", "Mach numbers must be supersonic");
  for (double mu : test) require(mu > 1.0, "config", "Mach numbers must be supersonic");
  sensor.validate();
  require(lambda1 >= 0.0 && lambda2 > 0.0 && ell >= 0.0, "config", "bad regularization parameters");
  require(ramp_factor > 0.0 && ramp_factor <= 1.0, "config", "ramp_factor must be in (0, 1]");
  require(lambda1_floor > 0.0 && lambda2_floor > 0.0, "config", "floors must be positive");
  require(solve.tol > 0.0 && solve.max_iter >= 1 && solve.cfl0 > 0.0 && solve.cfl_min > 0.0 &&
              solve.cfl_max >= solve.cfl0,
          "config", "bad solver settings");
  require(ma.tol > 0.0 && ma.max_iter >= 0 && ma.damping > 0.0 && ma.damping <= 1.0, "config",
          "bad Monge-Ampere settings");
  require(potential_order_increment >= 0 && ma_order_increment >= 0, "config", "order increments must be >= 0");
  require(rom_modes >= 0 && rom_modes <= static_cast<int>(train.size()), "config", "rom.modes must be in [0, n_train]");
  require(rbf.epsilon > 0.0, "config", "rom.epsilon must be positive");
  require(threads >= 0, "config", "threads must be >= 0");
}

std::string CaseConfig::canonical() const {
  return echo(*this, [](const Setting&) { return true; });
}

std::string CaseConfig::run_settings() const {
  return echo(*this, [](const Setting& s) { return s.per_run; });
}

std::string CaseConfig::run_hash() const { return fnv1a_hex(run_settings()); }

std::string CaseConfig::model_hash() const {
  return fnv1a_hex(echo(*this, [](const Setting& s) {
    return s.per_run || s.key == "parameters.train" || s.key.rfind("rom.", 0) == 0;
  }));
}

RegParams CaseConfig::reg_params(const Mesh& mesh) const {
  RegParams rp;
  rp.lambda1 = lambda1 > 0.0 ? lambda1 : default_lambda1(mesh);
  rp.lambda2 = lambda2;
  rp.ell = ell > 0.0 ? ell : 2.0 * mesh.mean_edge_length();
  rp.ramp_factor = ramp_factor;
  rp.lambda1_floor = lambda1_floor;
  rp.lambda2_floor = lambda2_floor;
  rp.validate();
  return rp;
}

Mesh CaseConfig::reference_mesh() const { return build_case_mesh({case_name, case_params}, resolution, order); }

std::filesystem::path CaseConfig::case_dir() const { return output_dir / (case_name + "_" + run_hash()); }

std::filesystem::path CaseConfig::run_dir(double mu) const { return case_dir() / ("mu_" + mu_label(mu)); }

std::filesystem::path CaseConfig::model_dir() const { return case_dir() / ("model_" + model_hash()); }

CaseConfig parse_config(const std::string& text) {
  // '#' comments are not understood by the INI reader.
  std::string cleaned;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') continue;
    cleaned += line + "\n";
  }
  boost::property_tree::ptree tree;
  std::istringstream is(cleaned);
  try {
    boost::property_tree::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidInput("config", e.what());
  }
  std::map<std::string, const Setting*> by_key;
  for (const auto& s : settings()) by_key[s.key] = &s;
  CaseConfig c;
  // [parameters] keys depend on each other: train first, then test, then helpers.
  std::vector<std::pair<std::string, std::string>> deferred;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw InvalidInput("config", "key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = by_key.find(full);
      if (it == by_key.end()) throw InvalidInput("config", "unknown setting '" + full + "'");
      if (section == "parameters" && key != "train") deferred.emplace_back(full, value.data());
      else it->second->set(c, value.data());
    }
  }
  std::stable_sort(deferred.begin(), deferred.end(), [](const auto& a, const auto& b) {
    return (a.first == "parameters.test") > (b.first == "parameters.test");
  });
  for (const auto& [full, value] : deferred) by_key[full]->set(c, value);
  c.validate();
  return c;
}

CaseConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("config", "cannot open " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return parse_config(os.str());
}

Field mapping_field(const MeshMapping& mapping) {
  Field f;
  f.layout = Layout::continuous;
  f.values.resize(static_cast<Eigen::Index>(mapping.phi.size()), 2);
  for (std::size_t i = 0; i < mapping.phi.size(); ++i) f.values.row(static_cast<Eigen::Index>(i)) = mapping.phi[i].transpose();
  return f;
}

namespace {

void log_stage(double mu, const std::string& msg) { log_message("pipeline[mu=" + mu_label(mu) + "]: " + msg); }

nlohmann::ordered_json record_json(const RunRecord& r, const CaseConfig& c) {
  nlohmann::ordered_json j;
  j["mu"] = r.mu;
  j["run_hash"] = c.run_hash();
  j["continuation"] = {{"solves", r.continuation_solves},
                       {"stop", r.continuation_stop},
                       {"lambda1", r.final_params.lambda1},
                       {"lambda2", r.final_params.lambda2},
                       {"eta_integral", r.reference_eta_integral}};
  j["monge_ampere"] = {{"iterations", r.ma_iterations}, {"equidistribution", r.equidistribution}, {"min_det", r.min_det}};
  j["adapted"] = {{"iterations", r.adapted_iterations},
                  {"converged", r.adapted_converged},
                  {"eta_integral", r.adapted_eta_integral}};
  nlohmann::ordered_json files;
  for (const auto& [k, p] : r.files) files[k] = p.filename().string();
  j["files"] = files;
  return j;
}

}  // namespace

namespace {

// Content-addressed artifact files of one run directory.
class RunWriter {
 public:
  RunWriter(RunRecord& rec, const CaseConfig& config, bool persist)
      : rec_(rec), config_(config), hash_(config.run_hash()), persist_(persist) {
    if (!persist_) return;
    std::filesystem::create_directories(rec_.dir);
    std::ofstream os(path("config", ".ini"));
    os << config_.run_settings();
    rec_.files["config"] = path("config", ".ini");
  }

  std::filesystem::path path(const std::string& stage, const char* ext) const {
    return rec_.dir / (stage + "_" + hash_ + ext);
  }
  void field(const std::string& stage, const Field& f) {
    if (!persist_) return;
    write_field(path(stage, ".field"), f, rec_.mu);
    rec_.files[stage] = path(stage, ".field");
  }
  void mesh(const std::string& stage, const Mesh& m) {
    if (!persist_) return;
    write_mesh(path(stage, ".mesh"), m);
    rec_.files[stage] = path(stage, ".mesh");
  }
  void record() {
    if (!persist_) return;
    rec_.files["record"] = path("record", ".json");
    std::ofstream os(path("record", ".json"));
    os << record_json(rec_, config_).dump(2) << "\n";
  }

 private:
  RunRecord& rec_;
  const CaseConfig& config_;
  std::string hash_;
  bool persist_;
};

RunRecord start_run(double mu, const CaseConfig& config) {
  config.validate();
  require(mu > 1.0, "config", "Mach number must be supersonic");
  RunRecord rec;
  rec.mu = mu;
  rec.dir = config.run_dir(mu);
  return rec;
}

// Reference solve with viscosity continuation.
void reference_stage(RunRecord& rec, const CaseConfig& config, const Mesh& ref, RunWriter& out) {
  const double mu = rec.mu;
  out.mesh("mesh_reference", ref);
  FlowProblem pb;
  pb.gamma = config.gamma;
  pb.mach = mu;
  DgOperator op(ref, pb);
  const double layer = config.wall_layer > 0.0 ? config.wall_layer : ref.mean_edge_length();
  const ContinuationResult cont =
      continuation_solve(op, wall_layer_state(ref, pb, layer), config.reg_params(ref), config.solve);
  rec.continuation_solves = cont.solves;
  rec.continuation_stop = cont.stop_reason;
  if (cont.accepted.empty()) {
    out.record();
    throw ConvergenceError("fom", "reference solve failed at mu = " + mu_label(mu) + ": " + cont.stop_reason);
  }
  rec.final_params = cont.accepted.back();
  rec.reference_solution = cont.result.state.conserved;
  rec.reference_eta_integral = cont.result.eta_integral;
  out.field("u_reference", rec.reference_solution);
  log_stage(mu, "reference solve: " + std::to_string(cont.accepted.size()) + " accepted, " + cont.stop_reason);
}

}  // namespace

RunRecord reference_solve(double mu, const CaseConfig& config, bool persist) {
  RunRecord rec = start_run(mu, config);
  RunWriter out(rec, config, persist);
  reference_stage(rec, config, config.reference_mesh(), out);
  out.record();
  return rec;
}

RunRecord adapt_and_solve(double mu, const CaseConfig& config, bool persist) {
  RunRecord rec = start_run(mu, config);
  RunWriter out(rec, config, persist);
  const Mesh ref = config.reference_mesh();
  reference_stage(rec, config, ref, out);
  FlowProblem pb;
  pb.gamma = config.gamma;
  pb.mach = mu;
  const FeSpace space(ref);

  // 2. Target density from the density component.
  Field xi;
  xi.layout = rec.reference_solution.layout;
  xi.values = rec.reference_solution.values.col(0);
  const Field s = resolution_sensor(space, xi, config.sensor);
  const double length = config.sensor.length_scale > 0.0 ? config.sensor.length_scale : default_length_scale(ref);
  const TargetDensity td =
      normalize_target_density(space, helmholtz_smooth(space, s, length, HelmholtzBc::neumann_all));
  rec.rho_prime = td.rho_prime;
  out.field("rho_prime", rec.rho_prime);

  // 3. Monge-Ampere map.
  const Mesh ma_mesh = config.ma_order_increment > 0 ? elevate_order(ref, ref.order() + config.ma_order_increment) : ref;
  const FeSpace ma_space(ma_mesh);
  const MongeAmpereSolver ma(ma_space, BoundarySpec::from_mesh(ma_mesh), config.potential_order_increment);
  const DensityFn f = make_density_function(ref, td);
  const MAState st = ma.solve(f, config.ma);
  rec.ma_iterations = st.iteration;
  if (!st.converged) {
    out.record();
    throw ConvergenceError("monge_ampere", "no convergence in " + std::to_string(config.ma.max_iter) +
                                               " iterations at mu = " + mu_label(mu));
  }
  rec.equidistribution = equidistribution_residual(ma_space, st, f);
  out.field("ma_potential", st.w);
  Field qh;
  qh.layout = Layout::continuous;
  qh.values.resize(st.q.n_rows(), 6);
  qh.values << st.q.values, st.hess.values;
  out.field("ma_gradient_hessian", qh);
  log_stage(mu, "Monge-Ampere: " + std::to_string(st.iteration) + " iterations, equidistribution " +
                    num(rec.equidistribution));

  // 4. Mapping with boundary projection and corner snapping.
  MeshMapping phi = mapping_on_mesh(ref, ma_mesh, st, mu);
  project_boundary_nodes(ref, phi, BoundarySpec::from_mesh(ref));
  SnapReport snap;
  phi = snap_corners(ref, phi, ref.corners(), 0.0, &snap);
  if (snap.missed > 0) log_stage(mu, std::to_string(snap.missed) + " corners not snapped");
  rec.min_det = mapping_jacobian(ref, phi).min_det;
  if (!(rec.min_det > 0.0)) {
    out.record();
    throw TanglingError("mapping at mu = " + mu_label(mu) + " is tangled (min det " + num(rec.min_det) + ")");
  }
  rec.mapping = phi;
  out.field("mapping", mapping_field(phi));
  Mesh adapted = apply_mapping(ref, phi);
  retag_boundary(ref, phi, adapted);
  out.mesh("mesh_adapted", adapted);

  // 5. Reference solution interpolated onto the adapted nodes.
  std::vector<Vec2> pts;
  const int nl = ref.n_local();
  pts.reserve(static_cast<std::size_t>(adapted.n_elements()) * nl);
  for (int e = 0; e < adapted.n_elements(); ++e) {
    const auto X = adapted.element_coords(e);
    for (int i = 0; i < nl; ++i) pts.emplace_back(X(i, 0), X(i, 1));
  }
  FlowState init;
  init.gamma = config.gamma;
  init.mach_inf = mu;
  init.conserved.layout = Layout::discontinuous;
  init.conserved.values = interpolate_to_points(ref, rec.reference_solution, pts, 0.05 * ref.mean_edge_length());

  // 6. Adapted-mesh solve at the final regularization.
  DgOperator op_adapted(adapted, pb);
  const SolveResult res = solve_steady(op_adapted, init, rec.final_params, config.solve);
  rec.adapted_iterations = res.iterations;
  rec.adapted_converged = res.converged;
  rec.adapted_eta_integral = res.eta_integral;
  if (!res.converged) {
    out.record();
    throw ConvergenceError("adapted_solve", "no convergence on the adapted mesh at mu = " + mu_label(mu));
  }
  rec.adapted_solution = res.state.conserved;
  out.field("u_adapted", rec.adapted_solution);
  out.record();
  log_stage(mu, "adapted solve: " + std::to_string(res.iterations) + " iterations");
  return rec;
}

bool has_run(double mu, const CaseConfig& config) {
  const auto dir = config.run_dir(mu);
  const std::string h = config.run_hash();
  return std::filesystem::exists(dir / ("u_adapted_" + h + ".field")) &&
         std::filesystem::exists(dir / ("record_" + h + ".json"));
}

RunRecord load_run(double mu, const CaseConfig& config) {
  if (!has_run(mu, config))
    throw InvalidInput("pipeline", "no completed run for mu = " + mu_label(mu) + " in " + config.run_dir(mu).string());
  RunRecord rec;
  rec.mu = mu;
  rec.dir = config.run_dir(mu);
  const std::string h = config.run_hash();
  std::ifstream is(rec.dir / ("record_" + h + ".json"));
  const nlohmann::json j = nlohmann::json::parse(is);
  for (const auto& [k, v] : j.at("files").items()) rec.files[k] = rec.dir / v.get<std::string>();
  rec.continuation_solves = j.at("continuation").at("solves");
  rec.continuation_stop = j.at("continuation").at("stop");
  rec.reference_eta_integral = j.at("continuation").at("eta_integral");
  rec.ma_iterations = j.at("monge_ampere").at("iterations");
  rec.equidistribution = j.at("monge_ampere").at("equidistribution");
  rec.min_det = j.at("monge_ampere").at("min_det");
  rec.adapted_iterations = j.at("adapted").at("iterations");
  rec.adapted_converged = j.at("adapted").at("converged");
  rec.adapted_eta_integral = j.at("adapted").at("eta_integral");
  rec.final_params = config.reg_params(config.reference_mesh());
  rec.final_params.lambda1 = j.at("continuation").at("lambda1");
  rec.final_params.lambda2 = j.at("continuation").at("lambda2");
  rec.reference_solution = read_field(rec.files.at("u_reference"));
  rec.rho_prime = read_field(rec.files.at("rho_prime"));
  rec.adapted_solution = read_field(rec.files.at("u_adapted"));
  const Field phi = read_field(rec.files.at("mapping"), &rec.mapping.parameter);
  for (Eigen::Index i = 0; i < phi.values.rows(); ++i) rec.mapping.phi.emplace_back(phi.values(i, 0), phi.values(i, 1));
  return rec;
}

std::vector<RunRecord> run_sweep(const std::vector<double>& mus, const CaseConfig& config, bool persist, bool reuse) {
  std::vector<RunRecord> out(mus.size());
  std::vector<std::string> errors(mus.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < mus.size();) {
      try {
        out[i] = reuse && has_run(mus[i], config) ? load_run(mus[i], config) : adapt_and_solve(mus[i], config, persist);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  unsigned n = config.threads > 0 ? static_cast<unsigned>(config.threads) : std::thread::hardware_concurrency();
  n = std::clamp<unsigned>(n, 1, static_cast<unsigned>(std::max<std::size_t>(mus.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  std::string failed;
  std::string stage;
  for (std::size_t i = 0; i < mus.size(); ++i)
    if (!errors[i].empty()) {
      failed += "\n  mu = " + mu_label(mus[i]) + ": " + errors[i];
      if (stage.empty()) stage = errors[i].substr(0, errors[i].find(':'));
    }
  if (!failed.empty()) throw Error(stage, "sweep failed for" + failed);
  return out;
}

TrainingSets assemble_training_sets(const Mesh& reference, const std::vector<RunRecord>& runs,
                                    const CaseConfig& config) {
  std::vector<std::pair<double, Field>> mapped, maps, fixed;
  for (const auto& r : runs) {
    mapped.emplace_back(r.mu, r.adapted_solution);
    maps.emplace_back(r.mu, mapping_field(r.mapping));
    fixed.emplace_back(r.mu, r.reference_solution);
  }
  TrainingSets s;
  s.mapped = assemble_snapshots(reference, SnapshotKind::mapped_solution, mapped, config.weighted_pod);
  s.mappings = assemble_snapshots(reference, SnapshotKind::mapping, maps, config.weighted_pod);
  s.fixed = assemble_snapshots(reference, SnapshotKind::fixed_mesh_solution, fixed, config.weighted_pod);
  return s;
}

TrainingSets read_training_sets(const CaseConfig& config) {
  const auto dir = config.model_dir();
  const std::string h = config.model_hash();
  return {read_snapshots(dir / ("snapshots_mapped_solution_" + h + ".snap")),
          read_snapshots(dir / ("snapshots_mapping_" + h + ".snap")),
          read_snapshots(dir / ("snapshots_fixed_mesh_solution_" + h + ".snap"))};
}

TrainedModels train_models(const TrainingSets& sets, const CaseConfig& config) {
  const int n = config.rom_modes > 0 ? config.rom_modes : sets.mapped.n_train();
  return {build_model(sets.mapped, n, config.rbf), build_model(sets.mappings, n, config.rbf),
          build_model(sets.fixed, n, config.rbf)};
}

void write_models(const TrainedModels& models, const CaseConfig& config) {
  const auto dir = config.model_dir();
  std::filesystem::create_directories(dir);
  const std::string h = config.model_hash();
  write_model(dir / ("mapped_solution_" + h + ".model"), models.mapped);
  write_model(dir / ("mapping_" + h + ".model"), models.mapping);
  write_model(dir / ("fixed_mesh_solution_" + h + ".model"), models.fixed);
}

TrainedModels read_models(const CaseConfig& config) {
  const auto dir = config.model_dir();
  const std::string h = config.model_hash();
  return {read_model(dir / ("mapped_solution_" + h + ".model")), read_model(dir / ("mapping_" + h + ".model")),
          read_model(dir / ("fixed_mesh_solution_" + h + ".model"))};
}

TrainingResult run_training(const CaseConfig& config, bool reuse) {
  TrainingResult t;
  t.runs = run_sweep(config.train, config, true, reuse);
  t.sets = assemble_training_sets(config.reference_mesh(), t.runs, config);
  t.models = train_models(t.sets, config);
  const auto dir = config.model_dir();
  std::filesystem::create_directories(dir);
  const std::string h = config.model_hash();
  write_snapshots(dir / ("snapshots_mapped_solution_" + h + ".snap"), t.sets.mapped);
  write_snapshots(dir / ("snapshots_mapping_" + h + ".snap"), t.sets.mappings);
  write_snapshots(dir / ("snapshots_fixed_mesh_solution_" + h + ".snap"), t.sets.fixed);
  write_models(t.models, config);
  return t;
}

ErrorTable error_table(std::vector<ErrorRow> rows) {
  ErrorTable t;
  t.rows = std::move(rows);
  if (t.rows.empty()) return t;
  for (const auto& r : t.rows) {
    t.mean.mapped += r.mapped / t.rows.size();
    t.mean.mapping += r.mapping / t.rows.size();
    t.mean.fixed += r.fixed / t.rows.size();
    t.max.mapped = std::max(t.max.mapped, r.mapped);
    t.max.mapping = std::max(t.max.mapping, r.mapping);
    t.max.fixed = std::max(t.max.fixed, r.fixed);
    t.max.tangled = t.max.tangled || r.tangled;
  }
  return t;
}

ErrorRow evaluate_errors(const Mesh& reference, const RunRecord& truth, const TrainedModels& models) {
  const Prediction p = predict(reference, models.mapped, models.mapping, truth.mu);
  ErrorRow r;
  r.mu = truth.mu;
  r.mapped = relative_error(reference, truth.adapted_solution, p.solution);
  r.mapping = relative_error(reference, mapping_field(truth.mapping), mapping_field(p.mapping));
  r.fixed = relative_error(reference, truth.reference_solution, models.fixed.predict(truth.mu));
  r.tangled = p.tangled;
  return r;
}

ErrorTable run_evaluation(const CaseConfig& config, const TrainedModels& models, std::vector<RunRecord>* truth,
                          bool reuse) {
  if (config.test.empty()) return {};
  const std::vector<RunRecord> runs = run_sweep(config.test, config, true, reuse);
  const Mesh ref = config.reference_mesh();
  std::vector<ErrorRow> rows;
  for (const auto& r : runs) rows.push_back(evaluate_errors(ref, r, models));
  if (truth) *truth = runs;
  return error_table(std::move(rows));
}

}  // namespace otrom
