#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hmlab/domain.hpp"
#include "hmlab/energy.hpp"
#include "hmlab/field.hpp"
#include "hmlab/field_io.hpp"
#include "hmlab/minimizer.hpp"
#include "hmlab/singularity.hpp"
#include "hmlab/trace_norms.hpp"

namespace hmlab {

// ---------------------------------------------------------------- CSV

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
inline std::string fmt(std::optional<double> v) { return v ? fmt(*v) : std::string(); }

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw InvalidArgument("CsvTable: row width does not match header");
    rows.push_back(std::move(row));
  }

  std::string str() const {
    auto cell = [](const std::string& s) {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      return q + "\"";
    };
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + cell(r[i]);
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << str();
  }
};

inline std::string flags_cell(const std::vector<std::string>& flags) { return flags.empty() ? "-" : join(flags, "|"); }

inline CsvTable singularity_table(const std::vector<SingularPoint>& points, const std::string& key = {}) {
  CsvTable t;
  if (!key.empty()) t.header.push_back("case");
  for (const char* h : {"x", "y", "z", "density", "degree", "boundary_distance", "flags"}) t.header.push_back(h);
  for (const auto& p : points) {
    std::vector<std::string> r;
    if (!key.empty()) r.push_back(key);
    for (auto s : {fmt(p.location.x), fmt(p.location.y), fmt(p.location.z), fmt(p.density), std::to_string(p.degree),
                   fmt(p.boundary_distance), flags_cell(p.flags)})
      r.push_back(s);
    t.add(std::move(r));
  }
  return t;
}

inline CsvTable history_table(const std::vector<HistoryRow>& history) {
  CsvTable t{{"iter", "energy", "max_node_move"}, {}};
  for (const auto& h : history) t.add({std::to_string(h.iter), fmt(h.energy), fmt(h.max_node_move)});
  return t;
}

inline CsvTable profile_table(const std::vector<std::pair<std::string, MonotonicityProfile>>& profiles) {
  CsvTable t{{"point", "cx", "cy", "cz", "r", "normalized_energy", "radial_term", "defect"}, {}};
  for (const auto& [key, p] : profiles)
    for (std::size_t i = 0; i < p.radii.size(); ++i) {
      const bool ann = i + 1 < p.radii.size();
      t.add({key, fmt(p.center.x), fmt(p.center.y), fmt(p.center.z), fmt(p.radii[i]), fmt(p.normalized_energy[i]),
             ann ? fmt(p.radial_term[i]) : "", ann ? fmt(p.defect[i]) : ""});
    }
  return t;
}

// ---------------------------------------------------------------- configuration

enum class ExperimentKind { linear_law, sharpness, stability, boundary_regularity, monotonicity_suite };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::linear_law: return "linear_law";
    case ExperimentKind::sharpness: return "sharpness";
    case ExperimentKind::stability: return "stability";
    case ExperimentKind::boundary_regularity: return "boundary_regularity";
    case ExperimentKind::monotonicity_suite: return "monotonicity_suite";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(std::string s) {
  std::replace(s.begin(), s.end(), '-', '_');
  if (s == "linear_law") return ExperimentKind::linear_law;
  if (s == "sharpness") return ExperimentKind::sharpness;
  if (s == "stability") return ExperimentKind::stability;
  if (s == "boundary_regularity") return ExperimentKind::boundary_regularity;
  if (s == "monotonicity_suite" || s == "monotonicity") return ExperimentKind::monotonicity_suite;
  throw InvalidArgument("unknown experiment '" + s + "'");
}

/// Trace used by the single-run `minimize` command.
struct TraceSpec {
  std::string family = "identity";  // identity | constant | bubble | mobius_bubble | k_bubbles | perturbed
  double lambda = 1.0;
  int k = 1;
  double delta = 0.0;
  int mode = 0;
  Vec3 value = e3;

  TraceFamily family_of() const {
    if (family == "identity") return TraceFamily::identity();
    if (family == "constant") return TraceFamily::constant(value);
    if (family == "bubble") return TraceFamily::bubble(lambda);
    if (family == "mobius_bubble") return TraceFamily::mobius_bubble(lambda);
    if (family == "k_bubbles")
      return k == 0 ? TraceFamily::constant(e3) : TraceFamily::k_bubbles(lambda, default_poles(k), std::vector<int>(k, 1));
    if (family == "perturbed") return TraceFamily::perturbed(TraceFamily::identity(), delta, mode);
    throw InvalidArgument("unknown trace family '" + family + "'");
  }
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::linear_law;
  DomainKind domain = DomainKind::ball;
  int n = 49;
  double s = 0.75;
  double p = 2.0;
  std::vector<std::array<double, 2>> sp_grid;  // linear law; empty means {(s, p)}
  std::vector<double> lambdas;
  std::vector<int> ks;
  std::vector<double> deltas;
  TraceSpec trace;
  SolverParams solver;
  DetectorParams detector;
  std::uint64_t seed = 1;
  std::string out_dir = "runs";
  std::string input_field;  // monotonicity suite: analyse this SFLD file instead of solving

  SolverParams solver_params() const {
    SolverParams sp = solver;
    sp.seed = seed;
    return sp;
  }
  std::vector<std::array<double, 2>> sp_pairs() const {
    return sp_grid.empty() ? std::vector<std::array<double, 2>>{{s, p}} : sp_grid;
  }
};

/// Canonical configuration of each study at desk scale.
inline ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  c.solver.max_iters = 8000;
  c.solver.rel_tol = 1e-7;
  c.solver.restarts = 1;
  switch (kind) {
    case ExperimentKind::linear_law:
      c.s = 0.75, c.p = 8.0 / 3.0;
      c.sp_grid = {{1.0, 2.0}, {0.75, 8.0 / 3.0}};
      c.ks = {1, 2, 3};
      c.lambdas = {0.43};
      c.solver.restarts = 3;
      break;
    case ExperimentKind::sharpness:
      c.s = 0.6, c.p = 2.0;
      c.lambdas = {1.0, 0.5, 0.25};
      break;
    case ExperimentKind::stability:
      c.deltas = {0.4, 0.2, 0.1, 0.05};
      c.solver.max_iters = 20000;
      break;
    case ExperimentKind::boundary_regularity: c.domain = DomainKind::half_ball; break;
    case ExperimentKind::monotonicity_suite: c.solver.max_iters = 20000; break;
  }
  return c;
}

using json = nlohmann::ordered_json;

inline json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = to_string(c.experiment);
  j["domain"] = std::string(to_string(c.domain));
  j["n"] = c.n;
  j["s"] = c.s;
  j["p"] = c.p;
  json grid = json::array();
  for (const auto& sp : c.sp_grid) grid.push_back(json::array({sp[0], sp[1]}));
  j["sp_grid"] = grid;
  j["lambdas"] = c.lambdas;
  j["ks"] = c.ks;
  j["deltas"] = c.deltas;
  j["trace"] = {{"family", c.trace.family}, {"lambda", c.trace.lambda}, {"k", c.trace.k},
                {"delta", c.trace.delta},   {"mode", c.trace.mode},     {"value", vec_json(c.trace.value)}};
  j["solver"] = {{"tau", c.solver.tau},
                 {"max_iters", c.solver.max_iters},
                 {"rel_tol", c.solver.rel_tol},
                 {"restarts", c.solver.restarts},
                 {"coarse_start", c.solver.coarse_start}};
  j["detector"] = {{"r_detect", c.detector.r_detect},
                   {"density_threshold", c.detector.density_threshold},
                   {"merge_radius", c.detector.merge_radius},
                   {"degree_radius", c.detector.degree_radius}};
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["input_field"] = c.input_field;
  return j;
}

namespace detail {

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw FormatError(where + ": unknown key '" + key + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Parses a configuration; absent keys keep the defaults of the named experiment.
inline ExperimentConfig config_from_json(const json& j) {
  try {
    detail::check_keys(j,
                       {"experiment", "domain", "n", "s", "p", "sp_grid", "lambdas", "ks", "deltas", "trace", "solver",
                        "detector", "seed", "out_dir", "input_field"},
                       "config");
    ExperimentConfig c = default_config(parse_experiment_kind(j.value("experiment", std::string("linear_law"))));
    if (j.contains("domain")) c.domain = parse_domain_kind(j.at("domain").get<std::string>());
    detail::read_opt(j, "n", c.n);
    detail::read_opt(j, "s", c.s);
    detail::read_opt(j, "p", c.p);
    if (j.contains("sp_grid")) {
      c.sp_grid.clear();
      for (const auto& e : j.at("sp_grid")) c.sp_grid.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
    }
    detail::read_opt(j, "lambdas", c.lambdas);
    detail::read_opt(j, "ks", c.ks);
    detail::read_opt(j, "deltas", c.deltas);
    if (j.contains("trace")) {
      const auto& t = j.at("trace");
      detail::check_keys(t, {"family", "lambda", "k", "delta", "mode", "value"}, "trace");
      detail::read_opt(t, "family", c.trace.family);
      detail::read_opt(t, "lambda", c.trace.lambda);
      detail::read_opt(t, "k", c.trace.k);
      detail::read_opt(t, "delta", c.trace.delta);
      detail::read_opt(t, "mode", c.trace.mode);
      if (t.contains("value")) {
        const auto& v = t.at("value");
        c.trace.value = {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
      }
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      detail::check_keys(s, {"tau", "max_iters", "rel_tol", "restarts", "coarse_start"}, "solver");
      detail::read_opt(s, "tau", c.solver.tau);
      detail::read_opt(s, "max_iters", c.solver.max_iters);
      detail::read_opt(s, "rel_tol", c.solver.rel_tol);
      detail::read_opt(s, "restarts", c.solver.restarts);
      detail::read_opt(s, "coarse_start", c.solver.coarse_start);
    }
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      detail::check_keys(d, {"r_detect", "density_threshold", "merge_radius", "degree_radius"}, "detector");
      detail::read_opt(d, "r_detect", c.detector.r_detect);
      detail::read_opt(d, "density_threshold", c.detector.density_threshold);
      detail::read_opt(d, "merge_radius", c.detector.merge_radius);
      detail::read_opt(d, "degree_radius", c.detector.degree_radius);
    }
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "out_dir", c.out_dir);
    detail::read_opt(j, "input_field", c.input_field);
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------- reports

struct Verdict {
  std::string name;
  bool pass = false;
  std::optional<double> measured;
  std::optional<double> threshold;
  std::string detail;
};

struct ExperimentReport {
  ExperimentConfig config;
  CsvTable cases;
  CsvTable singularities;
  CsvTable history;
  CsvTable profiles;
  std::vector<Verdict> verdicts;
  std::vector<std::string> notes;

  bool passed() const {
    return !verdicts.empty() && std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  }

  const Verdict* verdict(std::string_view name) const {
    for (const auto& v : verdicts)
      if (v.name == name) return &v;
    return nullptr;
  }

  CsvTable verdict_table() const {
    CsvTable t{{"verdict", "pass", "measured", "threshold", "detail"}, {}};
    for (const auto& v : verdicts) t.add({v.name, v.pass ? "pass" : "fail", fmt(v.measured), fmt(v.threshold), v.detail});
    return t;
  }

  /// Writes <experiment>_{cases,verdicts,singularities,history[,profiles]}.csv, the config echo
  /// and the notes into `dir`.
  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    const std::string stem = to_string(config.experiment);
    cases.write(dir / (stem + "_cases.csv"));
    verdict_table().write(dir / (stem + "_verdicts.csv"));
    singularities.write(dir / (stem + "_singularities.csv"));
    history.write(dir / (stem + "_history.csv"));
    if (!profiles.rows.empty()) profiles.write(dir / (stem + "_profiles.csv"));
    std::ofstream(dir / (stem + "_config.json")) << to_json(config).dump(2) << '\n';
    std::ofstream notes_out(dir / (stem + "_notes.txt"));
    for (const auto& n : notes) notes_out << n << '\n';
  }
};

namespace detail {

struct CaseOutcome {
  std::string key;
  std::optional<MinimizeResult> result;
  std::vector<SingularPoint> points;
  std::string error;

  bool ok() const { return result.has_value(); }
  std::size_t flagged() const {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return !p.accepted(); }));
  }
  std::string run_energies() const {
    if (!result) return "";
    std::vector<std::string> parts;
    for (const auto& r : result->runs) parts.push_back(std::to_string(r.seed) + ":" + fmt(r.energy));
    return join(parts, ";");
  }
};

/// Minimize + detect with failures captured so sibling cases keep running.
inline CaseOutcome solve_case(const std::string& key, const GridPtr& grid, const BoundaryTrace& trace,
                              const ExperimentConfig& cfg) {
  CaseOutcome out;
  out.key = key;
  try {
    out.result = minimize(grid, trace, cfg.solver_params());
    out.points = detect_singularities(out.result->field, cfg.detector);
  } catch (const std::exception& e) {
    out.result.reset();
    out.error = e.what();
  }
  return out;
}

inline const std::vector<std::string>& case_header() {
  static const std::vector<std::string> h = {
      "case",       "experiment", "domain",    "n",          "s",          "p",        "lambda", "k",
      "delta",      "seed",       "tau",       "max_iters",  "rel_tol",    "restarts", "seminorm_p",
      "diff_seminorm_p", "singularities", "flagged", "energy", "run_energies", "w12_distance", "ratio", "status",
      "error"};
  return h;
}

struct CaseValues {
  std::optional<double> s, p, lambda, delta, seminorm, diff_seminorm, w12, ratio;
  std::optional<int> k;
};

inline void add_case_row(ExperimentReport& rep, const CaseOutcome& c, const CaseValues& v) {
  const auto& cfg = rep.config;
  const auto sp = cfg.solver_params();
  auto opt_int = [](std::optional<int> x) { return x ? std::to_string(*x) : std::string(); };
  rep.cases.add({c.key,
                 to_string(cfg.experiment),
                 std::string(to_string(cfg.domain)),
                 std::to_string(cfg.n),
                 fmt(v.s ? v.s : std::optional<double>(cfg.s)),
                 fmt(v.p ? v.p : std::optional<double>(cfg.p)),
                 fmt(v.lambda),
                 opt_int(v.k),
                 fmt(v.delta),
                 std::to_string(cfg.seed),
                 fmt(sp.tau),
                 std::to_string(sp.max_iters),
                 fmt(sp.rel_tol),
                 std::to_string(sp.restarts),
                 fmt(v.seminorm),
                 fmt(v.diff_seminorm),
                 c.ok() ? std::to_string(c.points.size()) : "",
                 c.ok() ? std::to_string(c.flagged()) : "",
                 c.ok() ? fmt(c.result->runs[c.result->best_run].energy) : "",
                 c.run_energies(),
                 fmt(v.w12),
                 fmt(v.ratio),
                 c.ok() ? "ok" : "failed",
                 c.error});
}

inline void add_case_details(ExperimentReport& rep, const CaseOutcome& c) {
  for (auto& r : singularity_table(c.points, c.key).rows) rep.singularities.add(std::move(r));
  if (!c.ok()) return;
  for (const auto& h : c.result->history) rep.history.add({c.key, std::to_string(h.iter), fmt(h.energy), fmt(h.max_node_move)});
}

inline ExperimentReport start_report(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.config = cfg;
  rep.cases.header = case_header();
  rep.singularities.header = {"case", "x", "y", "z", "density", "degree", "boundary_distance", "flags"};
  rep.history.header = {"case", "iter", "energy", "max_node_move"};
  return rep;
}

inline Verdict all_cases_ok(const std::vector<CaseOutcome>& cases) {
  std::vector<std::string> failed;
  for (const auto& c : cases)
    if (!c.ok()) failed.push_back(c.key + ": " + c.error);
  return {"cases_completed", failed.empty(), static_cast<double>(failed.size()), 0.0, join(failed, "; ")};
}

inline void require_sorted_descending(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw InvalidArgument(std::string(what) + " list is empty");
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) throw InvalidArgument(std::string(what) + " list must be strictly descending");
}

inline std::string key_of(const char* name, double v) { return std::string(name) + "=" + fmt(v); }

}  // namespace detail

// ---------------------------------------------------------------- studies

/// Singularity count against [phi_k]^p for k bubbles at sp = 2.
inline ExperimentReport run_linear_law(const ExperimentConfig& cfg) {
  const auto pairs = cfg.sp_pairs();
  for (const auto& [s, p] : pairs) {
    if (std::abs(s * p - 2.0) > 1e-9) throw InvalidArgument("linear law requires s*p = 2");
    if (!(s > 0.5 && s <= 1.0)) throw InvalidArgument("linear law requires s in (1/2, 1]");
  }
  if (cfg.ks.empty()) throw InvalidArgument("linear law: k list is empty");
  const double lambda = cfg.lambdas.empty() ? 0.43 : cfg.lambdas.front();
  auto grid = build_domain(cfg.domain, cfg.n);
  auto rep = detail::start_report(cfg);
  rep.notes.push_back("N_k = k is a design property of the separated bubble family, not a bound guaranteed by the theory.");
  rep.notes.push_back("bubble cap parameter lambda = " + fmt(lambda) + "; poles from default_poles(k); all degrees +1.");

  std::vector<detail::CaseOutcome> cases;
  // ratios[pair] over k >= 1
  std::vector<std::vector<double>> ratios(pairs.size());
  bool counts_match = true;
  std::vector<std::string> count_detail;
  for (int k : cfg.ks) {
    if (k < 0) throw InvalidArgument("linear law: k must be >= 0");
    const auto fam = k == 0 ? TraceFamily::constant(e3)
                            : TraceFamily::k_bubbles(lambda, default_poles(k), std::vector<int>(k, 1));
    const auto trace = make_trace(fam, grid->surface_ptr());
    auto c = detail::solve_case("k=" + std::to_string(k), grid, trace, cfg);
    if (c.ok()) {
      const auto n_k = static_cast<int>(c.points.size());
      counts_match = counts_match && n_k == k;
      count_detail.push_back("N_" + std::to_string(k) + "=" + std::to_string(n_k));
    } else {
      counts_match = false;
    }
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      const SeminormParams prm{pairs[q][0], pairs[q][1]};
      detail::CaseValues v;
      v.s = prm.s, v.p = prm.p, v.k = k, v.lambda = lambda;
      v.seminorm = gagliardo_seminorm_p(trace, prm);
      if (c.ok() && k > 0 && *v.seminorm > 0.0) {
        v.ratio = static_cast<double>(c.points.size()) / *v.seminorm;
        ratios[q].push_back(*v.ratio);
      }
      detail::add_case_row(rep, c, v);
    }
    detail::add_case_details(rep, c);
    cases.push_back(std::move(c));
  }
  rep.verdicts.push_back(detail::all_cases_ok(cases));
  rep.verdicts.push_back({"count_equals_k", counts_match, std::nullopt, std::nullopt, join(count_detail, " ")});
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto& r = ratios[q];
    const bool usable = !r.empty() && std::all_of(r.begin(), r.end(), [](double x) { return x > 0.0; });
    const double spread = usable ? *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end())
                                 : std::numeric_limits<double>::infinity();
    rep.verdicts.push_back({"ratio_spread[s=" + fmt(pairs[q][0]) + ",p=" + fmt(pairs[q][1]) + "]", usable && spread <= 3.0,
                            spread, 3.0, "max/min of N_k/[phi_k]^p over k>=1"});
  }
  return rep;
}

/// Concentrating bubbles in the subcritical regime sp < 2: the seminorm vanishes while
/// the singularity persists.
inline ExperimentReport run_sharpness(const ExperimentConfig& cfg) {
  const SeminormParams prm{cfg.s, cfg.p};
  prm.validate();
  if (!(cfg.s * cfg.p < 2.0)) throw InvalidArgument("sharpness requires s*p < 2");
  detail::require_sorted_descending(cfg.lambdas, "lambda");
  auto grid = build_domain(cfg.domain, cfg.n);
  auto rep = detail::start_report(cfg);

  std::vector<detail::CaseOutcome> cases;
  std::vector<double> sems;
  bool one_each = true;
  std::vector<std::string> counts;
  for (double lam : cfg.lambdas) {
    const auto trace = make_trace(TraceFamily::bubble(lam), grid->surface_ptr());
    auto c = detail::solve_case(detail::key_of("lambda", lam), grid, trace, cfg);
    detail::CaseValues v;
    v.lambda = lam;
    v.seminorm = gagliardo_seminorm_p(trace, prm);
    sems.push_back(*v.seminorm);
    one_each = one_each && c.ok() && c.points.size() == 1;
    counts.push_back(c.ok() ? std::to_string(c.points.size()) : "failed");
    detail::add_case_row(rep, c, v);
    detail::add_case_details(rep, c);
    cases.push_back(std::move(c));
  }
  const double expected = 2.0 - cfg.s * cfg.p;
  rep.verdicts.push_back(detail::all_cases_ok(cases));
  rep.verdicts.push_back({"single_singularity_each", one_each, std::nullopt, 1.0, "N = " + join(counts, ",")});
  if (cfg.lambdas.size() >= 3 && cfg.lambdas.front() / cfg.lambdas.back() >= 4.0 - 1e-12) {
    const auto fit = fit_log_slope(cfg.lambdas, sems);
    rep.verdicts.push_back({"seminorm_slope", std::abs(fit.slope - expected) <= 0.15, fit.slope, expected,
                            "fitted d log[phi]^p / d log lambda, tolerance 0.15"});
  } else {
    rep.notes.push_back("slope verdict skipped: needs >= 3 lambdas spanning a factor >= 4");
  }
  const double drop = sems.back() > 0.0 ? sems.front() / sems.back() : std::numeric_limits<double>::infinity();
  const double required = 0.99 * std::pow(cfg.lambdas.front() / cfg.lambdas.back(), expected);
  rep.verdicts.push_back({"seminorm_drop", drop >= required, drop, required,
                          "end-to-end [phi]^p ratio against 0.99 (lambda_max/lambda_min)^(2-sp)"});
  return rep;
}

/// Perturbations of the identity trace: singularity count and W^{1,2} distance to the base minimizer.
inline ExperimentReport run_stability(const ExperimentConfig& cfg) {
  const SeminormParams prm{cfg.s, cfg.p};
  prm.validate();
  detail::require_sorted_descending(cfg.deltas, "delta");
  if (cfg.deltas.back() <= 0.0) throw InvalidArgument("stability: deltas must be positive");
  auto grid = build_domain(cfg.domain, cfg.n);
  auto rep = detail::start_report(cfg);
  rep.notes.push_back("The stability statement needs a unique minimizer for the base trace; uniqueness for identity data "
                      "is taken from the theory and is not verified numerically.");
  rep.notes.push_back("perturbation: rotation by delta about the cap centre, cap chord radius " +
                      fmt(perturbation_cap_radius) + ", mode 0");

  const auto base_trace = make_trace(TraceFamily::identity(), grid->surface_ptr());
  const double base_sem = gagliardo_seminorm_p(base_trace, prm);
  std::vector<detail::CaseOutcome> cases;
  auto base = detail::solve_case("delta=0", grid, base_trace, cfg);
  {
    detail::CaseValues v;
    v.delta = 0.0, v.seminorm = base_sem, v.diff_seminorm = 0.0;
    if (base.ok()) v.w12 = 0.0;
    detail::add_case_row(rep, base, v);
    detail::add_case_details(rep, base);
  }
  const std::size_t n0 = base.ok() ? base.points.size() : 0;
  bool counts_ok = base.ok() && n0 == 1;
  std::vector<std::string> counts{"N(0)=" + (base.ok() ? std::to_string(n0) : std::string("failed"))};
  std::vector<double> dist;
  for (double d : cfg.deltas) {
    const auto trace = make_trace(TraceFamily::perturbed(TraceFamily::identity(), d, 0), grid->surface_ptr());
    auto c = detail::solve_case(detail::key_of("delta", d), grid, trace, cfg);
    detail::CaseValues v;
    v.delta = d;
    v.seminorm = gagliardo_seminorm_p(trace, prm);
    v.diff_seminorm = difference_seminorm_p(trace, base_trace, prm);
    if (c.ok() && base.ok()) {
      v.w12 = w12_distance(c.result->field, base.result->field);
      dist.push_back(*v.w12);
    }
    if (*v.diff_seminorm <= 0.1 * base_sem) {
      counts_ok = counts_ok && c.ok() && c.points.size() == n0;
      counts.push_back("N(" + fmt(d) + ")=" + (c.ok() ? std::to_string(c.points.size()) : std::string("failed")));
    }
    detail::add_case_row(rep, c, v);
    detail::add_case_details(rep, c);
    cases.push_back(std::move(c));
  }
  cases.push_back(std::move(base));
  rep.verdicts.push_back(detail::all_cases_ok(cases));
  rep.verdicts.push_back({"count_preserved", counts_ok, std::nullopt, 1.0,
                          "small perturbations ([psi-phi]^p <= 0.1 [phi]^p): " + join(counts, " ")});
  const bool complete = dist.size() == cfg.deltas.size();
  bool trend = complete;
  for (std::size_t i = 1; trend && i < dist.size(); ++i) trend = dist[i] <= 1.2 * dist[i - 1];
  rep.verdicts.push_back({"distance_nonincreasing", trend, std::nullopt, 1.2, "w12 along descending delta, 20% slack"});
  const double halving = complete && dist.front() > 0.0 ? dist.back() / dist.front() : std::numeric_limits<double>::infinity();
  rep.verdicts.push_back({"distance_halved", complete && halving <= 0.5, halving, 0.5,
                          "w12 at smallest delta over w12 at largest delta"});
  return rep;
}

/// Half-ball trace: constant `flat_value` on the flat face, the hedgehog about `center` on the
/// curved part, blended towards `flat_value` inside a collar of height `collar` above the equator.
inline BoundaryTrace half_ball_mixed_trace(const std::shared_ptr<const Surface>& surface, const Vec3& center,
                                           const Vec3& flat_value = -1.0 * e3, double collar = 0.15) {
  std::vector<Vec3> values(surface->size());
  for (std::size_t v = 0; v < values.size(); ++v) {
    const Vec3& x = surface->positions[v];
    if (surface->tags[v] == SurfaceTag::flat) {
      values[v] = flat_value;
      continue;
    }
    const Vec3 hog = normalized(x - center);
    const double t = std::clamp(x.z / collar, 0.0, 1.0);
    const double w = t * t * (3.0 - 2.0 * t);
    // Great-circle blend from flat_value (w = 0) to the hedgehog value (w = 1).
    const double ang = std::acos(std::clamp(dot(flat_value, hog), -1.0, 1.0));
    if (ang < 1e-12) {
      values[v] = hog;
    } else if (pi - ang < 1e-9) {
      const Vec3 axis = normalized(cross(flat_value, std::abs(flat_value.x) < 0.9 ? e1 : e2));
      values[v] = rotation(axis, w * ang) * flat_value;
    } else {
      values[v] = normalized(std::sin((1.0 - w) * ang) * flat_value + std::sin(w * ang) * hog);
    }
  }
  return BoundaryTrace(surface, std::move(values));
}

/// Half-ball with constant data on the flat face: no singularity may approach that face.
inline ExperimentReport run_boundary_regularity(const ExperimentConfig& cfg) {
  if (cfg.domain != DomainKind::half_ball) throw InvalidArgument("boundary regularity requires the half_ball domain");
  const SeminormParams prm{cfg.s, cfg.p};
  prm.validate();
  auto grid = build_domain(cfg.domain, cfg.n);
  auto rep = detail::start_report(cfg);
  const Vec3 center{0.0, 0.0, 0.5};
  rep.notes.push_back("curved-part data: hedgehog about (0,0,0.5), blended to -e3 within 0.15 of the equator; flat face -e3");
  rep.notes.push_back("diagnostic: r^-1 E(B_r^+(0)) / max(1, r^(sp-2) [phi]^p)");

  std::vector<detail::CaseOutcome> cases;
  const auto constant_trace = make_trace(TraceFamily::constant(-1.0 * e3), grid->surface_ptr());
  auto base = detail::solve_case("constant", grid, constant_trace, cfg);
  detail::CaseValues v0;
  v0.seminorm = gagliardo_seminorm_p(constant_trace, prm);
  detail::add_case_row(rep, base, v0);
  detail::add_case_details(rep, base);
  bool constant_ok = base.ok() && base.points.empty();
  double dev = 0.0;
  if (base.ok())
    for (auto idx : grid->masked_nodes()) dev = std::max(dev, norm(base.result->field[idx] + e3));
  constant_ok = constant_ok && dev <= 1e-9;

  const auto trace = half_ball_mixed_trace(grid->surface_ptr(), center);
  auto c = detail::solve_case("mixed", grid, trace, cfg);
  detail::CaseValues v;
  const double sem = gagliardo_seminorm_p(trace, prm);
  v.seminorm = sem;
  detail::add_case_row(rep, c, v);
  detail::add_case_details(rep, c);

  std::size_t near_flat = 0;
  if (c.ok())
    for (const auto& pnt : c.points) near_flat += pnt.location.z < 0.1 ? 1 : 0;
  rep.verdicts.push_back({"constant_data_regular", constant_ok, dev, 1e-9,
                          "constant data: no detections and max |u + e3| over nodes"});
  rep.verdicts.push_back({"no_singularity_near_flat_face", c.ok() && near_flat == 0, static_cast<double>(near_flat), 0.0,
                          "detections within 0.1 of the flat face"});
  bool finite = c.ok();
  std::vector<std::string> diag;
  if (c.ok()) {
    const auto e = dirichlet_energy(c.result->field);
    for (double r : {0.1, 0.2, 0.4}) {
      if (r < min_radius_in_h * grid->h() - 1e-12) {
        diag.push_back("r=" + fmt(r) + ":below-stencil");
        continue;
      }
      const double val = normalized_local_energy(*grid, e, {0.0, 0.0, 0.0}, r);
      const double bound = std::max(1.0, std::pow(r, cfg.s * cfg.p - 2.0) * sem);
      finite = finite && std::isfinite(val / bound);
      diag.push_back("r=" + fmt(r) + ":" + fmt(val) + "/" + fmt(bound) + "=" + fmt(val / bound));
    }
  }
  rep.verdicts.push_back({"boundary_diagnostic_finite", finite, std::nullopt, std::nullopt, join(diag, " ")});
  cases.push_back(std::move(base));
  cases.push_back(std::move(c));
  rep.verdicts.insert(rep.verdicts.begin(), detail::all_cases_ok(cases));
  return rep;
}

/// Monotonicity profiles at detected singularities and at random regular interior points.
inline ExperimentReport run_monotonicity_suite(const ExperimentConfig& cfg) {
  auto rep = detail::start_report(cfg);
  std::vector<detail::CaseOutcome> cases;
  std::optional<SphereField> field;
  std::vector<SingularPoint> points;
  if (!cfg.input_field.empty()) {
    field = load_field(cfg.input_field);
    points = detect_singularities(*field, cfg.detector);
    rep.notes.push_back("field loaded from " + cfg.input_field);
  } else {
    auto grid = build_domain(cfg.domain, cfg.n);
    auto c = detail::solve_case("identity", grid, make_trace(cfg.trace.family_of(), grid->surface_ptr()), cfg);
    detail::CaseValues v;
    detail::add_case_row(rep, c, v);
    if (c.ok()) {
      field = c.result->field;
      points = c.points;
    }
    detail::add_case_details(rep, c);
    cases.push_back(std::move(c));
  }
  if (!field) {
    rep.verdicts.push_back(detail::all_cases_ok(cases));
    return rep;
  }
  const auto& g = field->grid();
  const double h = g.h();
  std::vector<double> radii = {0.1, 4.0 * h, 0.2, 8.0 * h, 0.4};
  std::sort(radii.begin(), radii.end());
  radii.erase(std::unique(radii.begin(), radii.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              radii.end());
  auto radii_for = [&](const Vec3& y) {
    std::vector<double> out;
    for (double r : radii)
      if (r >= min_radius_in_h * h - 1e-12 && r <= g.boundary_distance(y) + 1e-12) out.push_back(r);
    return out;
  };

  std::vector<std::pair<std::string, MonotonicityProfile>> profiles;
  double min_defect = std::numeric_limits<double>::infinity();
  bool singular_monotone = true, density_ok = true, share_ok = true;
  std::vector<std::string> share_detail, density_detail;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    const auto rs = radii_for(pt.location);
    const std::string key = "singular" + std::to_string(i);
    density_ok = density_ok && pt.density >= 4.0 * pi && pt.density <= 12.0 * pi;
    density_detail.push_back(key + ":" + fmt(pt.density));
    if (rs.size() >= 2) {
      auto prof = monotonicity_profile(*field, pt.location, rs);
      for (std::size_t a = 0; a + 1 < prof.radii.size(); ++a) {
        min_defect = std::min(min_defect, prof.defect[a]);
        singular_monotone = singular_monotone && prof.normalized_energy[a + 1] >= prof.normalized_energy[a] - 1e-12;
      }
      profiles.emplace_back(key, std::move(prof));
    }
    for (double lam : {0.4, 0.2, 8.0 * h}) {
      if (lam < 8.0 * h - 1e-12 || g.boundary_distance(pt.location) < lam) continue;
      const double share = radial_energy_share(rescale_blowup(*field, pt.location, lam, 33));
      share_ok = share_ok && share <= 0.1;
      share_detail.push_back(key + "@" + fmt(lam) + ":" + fmt(share));
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::vector<std::string> regular_detail;
  int found = 0;
  for (int attempt = 0; attempt < 20000 && found < 5; ++attempt) {
    const Vec3 y{coord(rng), coord(rng), coord(rng)};
    if (!g.contains(y) || g.boundary_distance(y) < 0.2) continue;
    if (std::any_of(points.begin(), points.end(), [&](const auto& pt) { return distance(pt.location, y) < 0.3; }))
      continue;
    const auto rs = radii_for(y);
    if (rs.size() < 2) continue;
    auto prof = monotonicity_profile(*field, y, rs);
    for (double d : prof.defect) min_defect = std::min(min_defect, d);
    const std::string key = "regular" + std::to_string(found);
    regular_detail.push_back(key + ":" + fmt(prof.normalized_energy.front()));
    profiles.emplace_back(key, std::move(prof));
    ++found;
  }
  rep.profiles = profile_table(profiles);
  rep.verdicts.push_back(detail::all_cases_ok(cases));
  const double floor = -0.02 * 8.0 * pi;
  rep.verdicts.push_back({"defect_lower_bound", min_defect >= floor, std::isfinite(min_defect) ? min_defect : 0.0, floor,
                          "min over all profiles of the monotonicity defect"});
  rep.verdicts.push_back({"singular_profile_nondecreasing", singular_monotone, std::nullopt, std::nullopt,
                          "r^-1 E(B_r) at detected singularities"});
  rep.verdicts.push_back({"singular_density_range", density_ok, std::nullopt, std::nullopt,
                          "extrapolated density in [4pi, 12pi]: " + join(density_detail, " ")});
  rep.verdicts.push_back({"tangent_radial_share", share_ok, std::nullopt, 0.1,
                          "radial energy share of blow-ups: " + join(share_detail, " ")});
  rep.notes.push_back("regular points: normalized energy at the smallest radius " + join(regular_detail, " "));
  return rep;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::linear_law: return run_linear_law(cfg);
    case ExperimentKind::sharpness: return run_sharpness(cfg);
    case ExperimentKind::stability: return run_stability(cfg);
    case ExperimentKind::boundary_regularity: return run_boundary_regularity(cfg);
    case ExperimentKind::monotonicity_suite: return run_monotonicity_suite(cfg);
  }
  throw InvalidArgument("unknown experiment");
}

}  // namespace hmlab
