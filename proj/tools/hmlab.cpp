// hmlab command line: domains, single minimizations, detection, seminorms and the studies.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hmlab/hmlab.hpp"

namespace {

using namespace hmlab;

int build_domain_cmd(const std::string& kind, int n, const std::string& out) {
  auto grid = build_domain(parse_domain_kind(kind), n);
  save_field(constant_field(grid, e3), out);
  std::printf("%s n=%d h=%.6g nodes=%zu interior=%zu shell=%zu vertices=%zu\n", std::string(to_string(grid->kind())).c_str(),
              grid->n(), grid->h(), grid->masked_nodes().size(), grid->interior_nodes().size(), grid->shell_nodes().size(),
              grid->surface().size());
  return 0;
}

int minimize_cmd(const std::string& config, const std::string& out, const std::string& history) {
  const auto cfg = load_config(config);
  auto grid = build_domain(cfg.domain, cfg.n);
  const auto trace = make_trace(cfg.trace.family_of(), grid->surface_ptr());
  const auto res = minimize(grid, trace, cfg.solver_params());
  save_field(res.field, out);
  if (!history.empty()) history_table(res.history).write(history);
  for (std::size_t r = 0; r < res.runs.size(); ++r) {
    const auto& run = res.runs[r];
    const char* start = run.coarse_start ? "coarse" : run.random_start ? "random" : "extension";
    std::printf("run %zu start=%s seed=%llu energy=%.10g iterations=%d converged=%d%s\n", r, start,
                static_cast<unsigned long long>(run.seed), run.energy, run.iterations, run.converged ? 1 : 0,
                r == res.best_run ? " (selected)" : "");
  }
  return 0;
}

int singular_cmd(const std::string& field_path, const std::string& out, const DetectorParams& prm) {
  const auto f = load_field(field_path);
  const auto pts = detect_singularities(f, prm);
  const auto table = singularity_table(pts);
  if (out.empty())
    std::cout << table.str();
  else
    table.write(out);
  std::printf("%zu singular point(s)\n", pts.size());
  return 0;
}

int seminorm_cmd(const std::string& field_path, double s, double p) {
  const auto f = load_field(field_path);
  const BoundaryTrace t = vertex_trace(f);
  const SeminormParams prm{s, p};
  std::printf("s=%.10g p=%.10g vertices=%zu seminorm_p=%.10g\n", s, p, t.size(), gagliardo_seminorm_p(t, prm));
  return 0;
}

int experiment_cmd(const std::string& name, const std::string& config, const std::string& out_dir) {
  const auto kind = parse_experiment_kind(name);
  ExperimentConfig cfg = default_config(kind);
  if (!config.empty()) {
    cfg = load_config(config);
    if (cfg.experiment != kind)
      throw InvalidArgument("config describes experiment '" + to_string(cfg.experiment) + "', not '" + to_string(kind) + "'");
  }
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  const auto rep = run_experiment(cfg);
  rep.write(cfg.out_dir);
  for (const auto& v : rep.verdicts)
    std::printf("%-36s %s  %s\n", v.name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::printf("reports written to %s\n", cfg.out_dir.c_str());
  return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hmlab: minimizing harmonic maps into S^2 on 3-D domains"};
  app.require_subcommand(1);

  std::string kind = "ball", out, config, history, field, out_dir;
  int n = 49;
  double s = 0.75, p = 2.0;
  DetectorParams det;

  auto* bd = app.add_subcommand("build-domain", "build a masked grid and its boundary surface");
  bd->add_option("--kind", kind, "cube | ball | half_ball")->required();
  bd->add_option("--n", n, "nodes per axis (odd, >= 9)")->required();
  bd->add_option("--out", out, "output SFLD file")->required();

  auto* mn = app.add_subcommand("minimize", "minimize the Dirichlet energy for the configured trace");
  mn->add_option("--config", config, "JSON configuration")->required()->check(CLI::ExistingFile);
  mn->add_option("--out", out, "output SFLD file")->required();
  mn->add_option("--history", history, "energy history CSV");

  auto* sg = app.add_subcommand("singular", "detect point singularities of a stored field");
  sg->add_option("--field", field, "SFLD file")->required()->check(CLI::ExistingFile);
  sg->add_option("--out", out, "singularity CSV (stdout if omitted)");
  sg->add_option("--r-detect", det.r_detect, "probe radius (default 4h)");
  sg->add_option("--threshold", det.density_threshold, "normalized energy threshold (default 4pi)");
  sg->add_option("--merge-radius", det.merge_radius, "cluster radius (default 2 r_detect)");
  sg->add_option("--degree-radius", det.degree_radius, "degree probe radius (default 6h)");

  auto* sm = app.add_subcommand("seminorm", "W^{s,p} seminorm^p of a stored field's boundary values");
  sm->add_option("--trace-from", field, "SFLD file")->required()->check(CLI::ExistingFile);
  sm->add_option("--s", s, "smoothness s in (0,1]")->required();
  sm->add_option("--p", p, "integrability p >= 2")->required();

  auto* ex = app.add_subcommand("exp", "run a study and write CSV reports");
  std::string which;
  ex->add_option("experiment", which, "linear-law | sharpness | stability | boundary-regularity | monotonicity")
      ->required()
      ->check(CLI::IsMember({"linear-law", "sharpness", "stability", "boundary-regularity", "monotonicity"}));
  ex->add_option("--config", config, "JSON configuration (defaults when omitted)")->check(CLI::ExistingFile);
  ex->add_option("--out-dir", out_dir, "report directory (overrides out_dir)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*bd) return build_domain_cmd(kind, n, out);
    if (*mn) return minimize_cmd(config, out, history);
    if (*sg) return singular_cmd(field, out, det);
    if (*sm) return seminorm_cmd(field, s, p);
    if (*ex) return experiment_cmd(which, config, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hmlab: %s\n", e.what());
    return 2;
  }
  return 2;
}
