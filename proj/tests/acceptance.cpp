// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "hmlab/hmlab.hpp"

using namespace hmlab;
namespace fs = std::filesystem;

namespace {

constexpr double eight_pi = 8.0 * pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = t <= limit_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::printf("criterion %2d %s: %s  %s  [%.1f s, limit %.0f s%s]\n", id, name, ok ? "PASS" : "FAIL", o.detail.c_str(), t,
              limit_s, in_time ? "" : ", too slow");
  std::fflush(stdout);
}

std::string num(double v) { return fmt(v); }

// Smooth unit trace x -> R(w(x)) e3 with a random quadratic rotation vector w.
BoundaryTrace random_smooth_trace(const std::shared_ptr<const Surface>& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  double a[3][3], b[3], q[3];
  for (auto& row : a)
    for (double& x : row) x = u(rng);
  for (double& x : b) x = u(rng);
  for (double& x : q) x = u(rng);
  const Vec3 base = normalized(Vec3{u(rng), u(rng), u(rng)});
  std::vector<Vec3> v;
  for (const auto& p : s->positions) {
    const double xs[3] = {p.x, p.y, p.z};
    double w[3];
    for (int i = 0; i < 3; ++i) w[i] = b[i] + a[i][0] * xs[0] + a[i][1] * xs[1] + a[i][2] * xs[2] + q[i] * xs[i] * xs[(i + 1) % 3];
    const Vec3 wv{w[0], w[1], w[2]};
    const double ang = norm(wv);
    v.push_back(ang < 1e-12 ? base : normalized(rotation(wv / ang, ang) * base));
  }
  return BoundaryTrace(s, std::move(v));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  criterion(1, "hedgehog energy", 30, [] {
    const auto e = dirichlet_energy(hedgehog(build_domain(DomainKind::ball, 65), {0, 0, 0}));
    const double rel = e.total / eight_pi;
    return Outcome{std::abs(rel - 1.0) <= 0.03, "E/8pi = " + num(rel) + " (tolerance 0.03)"};
  });

  criterion(2, "density and classification", 30, [] {
    const auto pts = detect_singularities(hedgehog(build_domain(DomainKind::ball, 65), {0, 0, 0}));
    if (pts.size() != 1) return Outcome{false, "detections = " + std::to_string(pts.size())};
    const double rel = pts[0].density / eight_pi;
    return Outcome{std::abs(rel - 1.0) <= 0.10 && pts[0].degree == 1,
                   "1 detection, density/8pi = " + num(rel) + ", degree " + std::to_string(pts[0].degree)};
  });

  criterion(3, "monotonicity at the identity minimizer", 300, [] {
    auto g = build_domain(DomainKind::ball, 49);
    const auto res = minimize(g, make_trace(TraceFamily::identity(), g->surface_ptr()), SolverParams{});
    const auto pts = detect_singularities(res.field);
    if (pts.size() != 1) return Outcome{false, "detections = " + std::to_string(pts.size())};
    const Vec3 y = pts[0].location;
    std::vector<double> radii{4 * g->h(), 8 * g->h(), 0.1, 0.2, 0.4};
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                radii.end());
    const auto p = monotonicity_profile(res.field, y, radii);
    const double tol = 0.02 * eight_pi;
    bool ok = true;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.defect.size(); ++i) {
      ok = ok && p.normalized_energy[i + 1] >= p.normalized_energy[i] - tol && p.defect[i] >= -tol;
      worst = std::min(worst, p.defect[i]);
    }
    std::string seq;
    for (double v : p.normalized_energy) seq += (seq.empty() ? "" : " ") + num(v / eight_pi);
    return Outcome{ok, "r^-1E/8pi = [" + seq + "], min defect " + num(worst) + " (>= " + num(-tol) + ")"};
  });

  criterion(4, "extension bound", 120, [] {
    auto g = build_domain(DomainKind::ball, 33);
    const auto s = g->surface_ptr();
    std::vector<BoundaryTrace> corpus{make_trace(TraceFamily::identity(), s)};
    for (double l : {1.0, 0.5, 0.25}) corpus.push_back(make_trace(TraceFamily::bubble(l), s));
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 20; ++i) corpus.push_back(random_smooth_trace(s, rng));
    double worst = 0.0;
    for (const auto& t : corpus) worst = std::max(worst, project_extension(harmonic_extension(g, t)).energy_ratio);
    return Outcome{worst <= 192.0, std::to_string(corpus.size()) + " traces, max energy ratio " + num(worst) + " (<= 192)"};
  });

  criterion(5, "pair-sum oracle", 120, [] {
    std::vector<std::shared_ptr<const Surface>> surfaces{
        build_domain(DomainKind::ball, 17)->surface_ptr(), build_domain(DomainKind::ball, 33)->surface_ptr(),
        build_domain(DomainKind::half_ball, 33)->surface_ptr(), build_domain(DomainKind::cube, 17)->surface_ptr(),
        build_domain(DomainKind::cube, 29)->surface_ptr()};
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d;
    std::uniform_real_distribution<double> su(0.1, 0.95), pu(2.0, 4.0);
    double worst = 0.0;
    std::size_t largest = 0;
    for (int i = 0; i < 50; ++i) {
      const auto& s = surfaces[i % surfaces.size()];
      largest = std::max(largest, s->size());
      std::vector<Vec3> v(s->size());
      for (auto& x : v) x = normalized(Vec3{d(rng), d(rng), d(rng)});
      const SeminormParams prm{su(rng), pu(rng)};
      const double a = gagliardo_naive(*s, v, prm), b = gagliardo_blocked(*s, v, prm);
      worst = std::max(worst, std::abs(a - b) / a);
    }
    return Outcome{worst <= 1e-12 && largest <= 5000,
                   "50 traces, up to " + std::to_string(largest) + " vertices, max relative gap " + num(worst)};
  });

  criterion(6, "scaling slopes", 60, [] {
    const auto s = build_domain(DomainKind::ball, 49)->surface_ptr();
    const std::vector<double> lambdas{1.0, 0.5, 0.25};
    struct Case {
      double s, p, expected;
    };
    bool ok = true;
    std::string detail;
    for (const auto& c : {Case{0.6, 2.0, 0.8}, Case{0.75, 2.0, 0.5}, Case{1.0, 2.0, 0.0}, Case{0.75, 8.0 / 3.0, 0.0}}) {
      const double slope = fit_scaling_exponent(s, lambdas, {c.s, c.p}).slope;
      ok = ok && std::abs(slope - c.expected) <= 0.15;
      detail += "(" + num(c.s) + "," + num(c.p) + "):" + num(slope) + " vs " + num(c.expected) + " ";
    }
    return Outcome{ok, detail};
  });

  ExperimentReport sharp;
  criterion(7, "sharpness experiment", 600, [&] {
    sharp = run_experiment(default_config(ExperimentKind::sharpness));
    const auto* drop = sharp.verdict("seminorm_drop");
    const auto* single = sharp.verdict("single_singularity_each");
    const bool ok = drop && single && drop->measured && *drop->measured >= 3.0 && single->pass &&
                    sharp.verdict("cases_completed")->pass;
    return Outcome{ok, "drop " + num(drop->measured.value_or(0)) + " (>= 3), " + single->detail};
  });

  criterion(8, "linear-law experiment", 900, [] {
    const auto rep = run_experiment(default_config(ExperimentKind::linear_law));
    bool ok = rep.verdict("cases_completed")->pass && rep.verdict("count_equals_k")->pass;
    std::string detail = rep.verdict("count_equals_k")->detail;
    for (const auto& v : rep.verdicts)
      if (v.name.rfind("ratio_spread", 0) == 0) {
        ok = ok && v.pass;
        detail += ", " + v.name + " " + num(v.measured.value_or(0));
      }
    return Outcome{ok, detail};
  });

  criterion(9, "stability experiment", 600, [] {
    const auto rep = run_experiment(default_config(ExperimentKind::stability));
    const auto* count = rep.verdict("count_preserved");
    const auto* halved = rep.verdict("distance_halved");
    const bool ok = rep.verdict("cases_completed")->pass && count->pass && halved->pass;
    return Outcome{ok, "w12 ratio smallest/largest delta " + num(halved->measured.value_or(0)) + " (<= 0.5); " +
                           count->detail};
  });

  criterion(10, "boundary regularity experiment", 300, [] {
    const auto rep = run_experiment(default_config(ExperimentKind::boundary_regularity));
    const auto* near = rep.verdict("no_singularity_near_flat_face");
    const auto* constant = rep.verdict("constant_data_regular");
    const bool ok = rep.verdict("cases_completed")->pass && near->pass && constant->pass;
    return Outcome{ok, "detections within 0.1 of the flat face: " + num(near->measured.value_or(-1)) +
                           ", constant data max|u+e3| " + num(constant->measured.value_or(-1))};
  });

  criterion(11, "determinism", 600, [&] {
    const auto base = fs::temp_directory_path() / "hmlab_acceptance";
    fs::remove_all(base);
    sharp.write(base / "a");
    run_experiment(default_config(ExperimentKind::sharpness)).write(base / "b");
    std::size_t files = 0, same = 0;
    for (const auto& e : fs::directory_iterator(base / "a")) {
      ++files;
      if (slurp(e.path()) == slurp(base / "b" / e.path().filename())) ++same;
    }
    return Outcome{files > 0 && same == files, std::to_string(same) + "/" + std::to_string(files) + " report files identical"};
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
