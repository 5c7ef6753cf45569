// otrom: command-line driver for the adaptation / ROM pipeline.
#include "otrom/pipeline.hpp"
#include "otrom/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <set>

using namespace otrom;

namespace {

struct Options {
  std::string config;
  std::vector<double> mus;
  std::string out;
};

CaseConfig load(const Options& o) {
  CaseConfig c = o.config.empty() ? CaseConfig{} : load_config(o.config);
  if (!o.out.empty()) c.output_dir = o.out;
  return c;
}

std::vector<double> parameters(const Options& o, const CaseConfig& c) {
  if (!o.mus.empty()) return o.mus;
  std::set<double> all(c.train.begin(), c.train.end());
  all.insert(c.test.begin(), c.test.end());
  return {all.begin(), all.end()};
}

void print_errors(const ErrorTable& t) {
  std::printf("%-8s %14s %14s %14s %8s\n", "mu", "E_mapped", "E_mapping", "E_fixed", "tangled");
  for (const auto& r : t.rows)
    std::printf("%-8s %14.6e %14.6e %14.6e %8s\n", mu_label(r.mu).c_str(), r.mapped, r.mapping, r.fixed,
                r.tangled ? "yes" : "no");
  if (t.rows.empty()) return;
  std::printf("%-8s %14.6e %14.6e %14.6e\n", "mean", t.mean.mapped, t.mean.mapping, t.mean.fixed);
  std::printf("%-8s %14.6e %14.6e %14.6e\n", "max", t.max.mapped, t.max.mapping, t.max.fixed);
}

int cmd_mesh(const Options& o) {
  const CaseConfig c = load(o);
  const Mesh m = c.reference_mesh();
  std::filesystem::create_directories(c.case_dir());
  const auto path = c.case_dir() / ("mesh_reference_" + c.run_hash() + ".mesh");
  write_mesh(path, m);
  std::printf("%s: %d elements, %d nodes, order %d, min det %.6g\n", path.string().c_str(), m.n_elements(),
              m.n_nodes(), m.order(), min_geometric_jacobian(m));
  return 0;
}

int cmd_solve(const Options& o) {
  const CaseConfig c = load(o);
  for (double mu : parameters(o, c)) {
    const RunRecord r = reference_solve(mu, c);
    std::printf("mu %s: %d continuation solves (%s), lambda1 %.6g, lambda2 %.6g -> %s\n", mu_label(mu).c_str(),
                r.continuation_solves, r.continuation_stop.c_str(), r.final_params.lambda1, r.final_params.lambda2,
                r.files.at("u_reference").string().c_str());
  }
  return 0;
}

int cmd_adapt(const Options& o) {
  const CaseConfig c = load(o);
  for (const RunRecord& r : run_sweep(parameters(o, c), c))
    std::printf("mu %s: MA %d iterations, equidistribution %.3e, min det %.4f, adapted solve %d iterations -> %s\n",
                mu_label(r.mu).c_str(), r.ma_iterations, r.equidistribution, r.min_det, r.adapted_iterations,
                r.dir.string().c_str());
  return 0;
}

int cmd_train(const Options& o) {
  const CaseConfig c = load(o);
  const TrainingResult t = run_training(c, true);
  const Export ex = export_singular_values(c.model_dir(), c.case_name, {t.sets.mapped, t.sets.mappings, t.sets.fixed});
  std::printf("models in %s\n", c.model_dir().string().c_str());
  std::printf("normalized singular values:\n%s", to_csv(ex.table).c_str());
  return 0;
}

int cmd_eval(const Options& o) {
  CaseConfig c = load(o);
  if (!o.mus.empty()) c.test = o.mus;
  const TrainedModels m = read_models(c);
  const ErrorTable t = run_evaluation(c, m, nullptr, true);
  print_errors(t);
  std::printf("-> %s\n", export_errors(c.model_dir(), c.case_name, t).string().c_str());
  return 0;
}

int cmd_report(const Options& o) {
  const CaseConfig c = load(o);
  std::optional<TrainedModels> models;
  if (std::filesystem::exists(c.model_dir())) {
    models = read_models(c);
    const TrainingSets s = read_training_sets(c);
    const Export ex = export_singular_values(c.model_dir(), c.case_name, {s.mapped, s.mappings, s.fixed});
    std::printf("%s\n", ex.csv.string().c_str());
  }
  int done = 0;
  for (double mu : parameters(o, c)) {
    if (!has_run(mu, c)) {
      if (!o.mus.empty()) throw InvalidInput("report", "no completed run for mu = " + mu_label(mu));
      continue;
    }
    for (const Export& ex : export_run(c.run_dir(mu), c, load_run(mu, c), models ? &*models : nullptr))
      std::printf("%s\n", ex.csv.string().c_str());
    ++done;
  }
  if (done == 0 && !models) throw InvalidInput("report", "nothing to report under " + c.case_dir().string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal-transport r-adaptation and reduced-order modeling of steady compressible flows"};
  app.require_subcommand(1);
  Options o;
  auto add = [&](const std::string& name, const std::string& help, bool with_mu, int (*run)(const Options&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "Case configuration (INI)")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output root directory (overrides [output] dir)");
    if (with_mu) sub->add_option("--mu", o.mus, "Mach number(s); repeat or comma-separate")->delimiter(',');
    sub->callback([&o, run] {
      const int code = run(o);
      if (code != 0) throw CLI::RuntimeError(code);
    });
  };
  add("mesh", "Build and write the reference mesh", false, cmd_mesh);
  add("solve", "Reference-mesh solve with viscosity continuation", true, cmd_solve);
  add("adapt", "Full adaptation run per mu (default: training and test parameters)", true, cmd_adapt);
  add("train", "Training sweep, snapshot sets, POD and RBF models", false, cmd_train);
  add("eval", "Truth runs at the test parameters and ROM error table", true, cmd_eval);
  add("report", "CSV/SVG exports of completed runs and models", true, cmd_report);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::string msg = e.what();
    if (msg.rfind(e.stage() + ": ", 0) == 0) msg.erase(0, e.stage().size() + 2);
    std::fprintf(stderr, "otrom: [%s] %s\n", e.stage().c_str(), msg.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "otrom: [internal] %s\n", e.what());
    return 3;
  }
  return 0;
}
