#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hmlab/minimizer.hpp"
#include "hmlab/singularity.hpp"
#include "hmlab/trace_norms.hpp"

using namespace hmlab;

namespace {

BoundaryTrace trace_of(const GridPtr& g, const TraceFamily& f) { return make_trace(f, g->surface_ptr()); }

VectorField as_vector(const SphereField& f) { return VectorField(f.grid_ptr(), f.nodes(), f.vertices()); }

// Cell-quadrature geodesic energy of (v - a)/|v - a|, or +inf when a hits a node value.
double projected_energy_oracle(const VectorField& v, const Vec3& a) {
  const auto& g = v.grid();
  std::vector<Vec3> nodes(g.node_count(), nan_vec());
  for (auto idx : g.masked_nodes()) {
    const Vec3 d = v[idx] - a;
    if (norm2(d) < 1e-24) return std::numeric_limits<double>::infinity();
    nodes[idx] = d / norm(d);
  }
  return dirichlet_energy(SphereField(v.grid_ptr(), nodes, v.vertices())).total;
}

double w12_norm(const SphereField& f) {
  return std::sqrt(f.grid().quadrature_volume() + dirichlet_energy(as_vector(f)).total);
}

}  // namespace

TEST(SolverParams, Validation) {
  const double h = 0.1;
  EXPECT_NO_THROW(SolverParams{}.validate(h));
  EXPECT_DOUBLE_EQ(SolverParams{}.step(h), h * h / 6.0);
  SolverParams p;
  p.tau = h * h / 5.0;
  EXPECT_THROW(p.validate(h), InvalidArgument);
  p = {};
  p.restarts = 0;
  EXPECT_THROW(p.validate(h), InvalidArgument);
  p = {};
  p.rel_tol = 0.0;
  EXPECT_THROW(p.validate(h), InvalidArgument);
  p = {};
  p.max_iters = -1;
  EXPECT_THROW(p.validate(h), InvalidArgument);
}

TEST(HarmonicExtension, ConstantTrace) {
  auto g = build_domain(DomainKind::half_ball, 17);
  const auto v = harmonic_extension(g, trace_of(g, TraceFamily::constant(e2)));
  for (auto idx : g->masked_nodes()) EXPECT_NEAR(distance(v[idx], e2), 0.0, 1e-8);
}

TEST(HarmonicExtension, IdentityTraceGivesCoordinates) {
  auto g = build_domain(DomainKind::ball, 25);
  const auto v = harmonic_extension(g, trace_of(g, TraceFamily::identity()));
  double worst = 0.0;
  for (auto idx : g->masked_nodes()) worst = std::max(worst, distance(v[idx], g->position(idx)));
  EXPECT_LE(worst, g->h());
}

TEST(HarmonicExtension, DiscreteLaplaceResidual) {
  auto g = build_domain(DomainKind::ball, 21);
  const auto v = harmonic_extension(g, trace_of(g, TraceFamily::bubble(0.5, normalized(Vec3{1, 1, 0}))));
  double worst = 0.0;
  for (auto idx : g->interior_nodes()) {
    const auto [i, j, k] = g->ijk(idx);
    Vec3 lap = v[g->index(i + 1, j, k)] + v[g->index(i - 1, j, k)] + v[g->index(i, j + 1, k)] +
               v[g->index(i, j - 1, k)] + v[g->index(i, j, k + 1)] + v[g->index(i, j, k - 1)] - 6.0 * v[idx];
    worst = std::max({worst, std::abs(lap.x), std::abs(lap.y), std::abs(lap.z)});
  }
  EXPECT_LE(worst, 1.01e-8);
  // the shell carries the interpolated trace
  const auto t = trace_of(g, TraceFamily::bubble(0.5, normalized(Vec3{1, 1, 0})));
  for (const auto& [idx, val] : shell_values(t, shell_stencils(*g))) EXPECT_EQ(v[idx], val);
}

TEST(HarmonicExtension, NonConvergenceIsReported) {
  auto g = build_domain(DomainKind::ball, 21);
  EXPECT_THROW(harmonic_extension(g, trace_of(g, TraceFamily::identity()), 1e-8, 2), ConvergenceError);
}

TEST(ExtensionCandidates, LatticeInHalfBall) {
  const auto c = extension_candidates();
  EXPECT_GT(c.size(), 400u);
  EXPECT_LT(c.size(), 1331u);
  for (const auto& a : c) {
    EXPECT_LT(norm(a), 0.5);
    EXPECT_LE(std::abs(a.x), 0.45 + 1e-12);
  }
}

TEST(SphereProjection, InverseLandsOnSphereAlongRay) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.28, 0.28);
  std::normal_distribution<double> d;
  for (int t = 0; t < 200; ++t) {
    const Vec3 a{u(rng), u(rng), u(rng)};
    const Vec3 xi = normalized(Vec3{d(rng), d(rng), d(rng)});
    const Vec3 y = sphere_projection_inverse(a, xi);
    EXPECT_NEAR(norm(y), 1.0, 1e-12);
    EXPECT_NEAR(distance(normalized(y - a), xi), 0.0, 1e-12);
    EXPECT_NEAR(distance(sphere_projection_inverse(a, sphere_projection(a, xi)), xi), 0.0, 1e-12);
  }
}

TEST(ProjectExtension, UnitInputIsReproduced) {
  auto g = build_domain(DomainKind::ball, 17);
  const auto f = hedgehog(g, {0.05, 0.11, -0.07});
  const auto r = project_extension(as_vector(f));
  EXPECT_LE(r.energy_ratio, 1.0 + 1e-9);
  for (auto idx : g->masked_nodes()) EXPECT_NEAR(distance(r.field[idx], f[idx]), 0.0, 1e-12);
}

TEST(ProjectExtension, IdentityExtensionMatchesExhaustiveSearch) {
  auto g = build_domain(DomainKind::ball, 17);
  const auto v = harmonic_extension(g, trace_of(g, TraceFamily::identity()));
  const auto r = project_extension(v);
  double best = std::numeric_limits<double>::infinity();
  std::size_t admissible = 0;
  for (const auto& a : extension_candidates()) {
    const double e = projected_energy_oracle(v, a);
    if (std::isfinite(e)) ++admissible;
    best = std::min(best, e);
  }
  EXPECT_EQ(r.candidates, admissible);
  EXPECT_NEAR(projected_energy_oracle(v, r.a_star), best, 1e-10 * best);
  // closed form of the pull-back: unit vector on the ray from a* through v
  for (auto idx : g->masked_nodes()) {
    const Vec3 y = r.field[idx];
    EXPECT_NEAR(norm(y), 1.0, 1e-12);
    EXPECT_NEAR(distance(normalized(y - r.a_star), normalized(v[idx] - r.a_star)), 0.0, 1e-10);
  }
  EXPECT_LE(r.energy_ratio, 192.0);
}

TEST(ProjectExtension, CandidateOnANodeValueIsSkipped) {
  // exact v = x: the centre node has |v - 0| = 0, so a = 0 is not admissible
  auto g = build_domain(DomainKind::ball, 17);
  std::vector<Vec3> nodes(g->node_count(), nan_vec());
  for (auto idx : g->masked_nodes()) nodes[idx] = g->position(idx);
  const VectorField v(g, std::move(nodes), g->surface().positions);
  std::size_t admissible = 0;
  for (const auto& a : extension_candidates())
    if (std::isfinite(projected_energy_oracle(v, a))) ++admissible;
  const auto r = project_extension(v);
  EXPECT_EQ(r.candidates, admissible);
  EXPECT_LT(admissible, extension_candidates().size());
  EXPECT_GT(norm(r.a_star), 0.0);
}

TEST(ProjectExtension, ToyGridBruteForce) {
  auto g = build_domain(DomainKind::cube, 9);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> d;
  std::vector<Vec3> nodes(g->node_count());
  for (auto& x : nodes) x = 0.6 * Vec3{d(rng), d(rng), d(rng)};
  std::vector<Vec3> verts(g->surface().size());
  for (auto& x : verts) x = normalized(Vec3{d(rng), d(rng), d(rng)});
  const VectorField v(g, nodes, verts);
  const auto r = project_extension(v);
  Vec3 arg;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& a : extension_candidates()) {
    const double e = projected_energy_oracle(v, a);
    if (e < best) {
      best = e;
      arg = a;
    }
  }
  EXPECT_EQ(r.a_star, arg);
  EXPECT_NEAR(r.projected_energy, best, 1e-10 * best);
}

TEST(ProjectExtension, Preconditions) {
  auto g = build_domain(DomainKind::cube, 11);
  const auto cands = extension_candidates();
  std::vector<Vec3> nodes(g->node_count(), Vec3{2, 0, 0});
  for (std::size_t k = 0; k < cands.size(); ++k) nodes[k] = cands[k];
  const std::vector<Vec3> unit(g->surface().size(), e3);
  EXPECT_THROW(project_extension(VectorField(g, nodes, unit)), InvalidArgument);
  std::vector<Vec3> bad = unit;
  bad[0] = Vec3{0, 0, 0.5};
  EXPECT_THROW(project_extension(VectorField(g, nodes, bad)), InvalidArgument);
}

TEST(ProjectExtension, RatioBoundOnBubbles) {
  auto g = build_domain(DomainKind::ball, 21);
  for (double lambda : {1.0, 0.5, 0.25}) {
    const auto r = project_extension(harmonic_extension(g, trace_of(g, TraceFamily::bubble(lambda))));
    EXPECT_LE(r.energy_ratio, 192.0) << lambda;
    for (auto idx : g->masked_nodes()) EXPECT_NEAR(norm(r.field[idx]), 1.0, 1e-12);
  }
}

TEST(Minimize, ConstantTrace) {
  auto g = build_domain(DomainKind::ball, 17);
  const auto res = minimize(g, trace_of(g, TraceFamily::constant(e1)), {});
  for (auto idx : g->masked_nodes()) EXPECT_NEAR(distance(res.field[idx], e1), 0.0, 1e-12);
  EXPECT_LE(res.runs[0].energy, 1e-20);
  EXPECT_TRUE(res.runs[0].converged);
}

TEST(Minimize, HistoryMonotoneAndUnitValued) {
  auto g = build_domain(DomainKind::ball, 21);
  SolverParams p;
  p.max_iters = 3000;
  const auto res = minimize(g, trace_of(g, TraceFamily::bubble(0.5, normalized(Vec3{0.2, 1, 0.4}))), p);
  ASSERT_GT(res.history.size(), 2u);
  for (std::size_t i = 1; i < res.history.size(); ++i)
    EXPECT_LE(res.history[i].energy, res.history[i - 1].energy * (1.0 + 1e-12));
  for (auto idx : g->masked_nodes()) EXPECT_NEAR(norm(res.field[idx]), 1.0, 1e-12);
  const double best = res.runs[res.best_run].energy;
  EXPECT_NEAR(best, dirichlet_energy(res.field).total, 1e-9 * best);
}

TEST(Minimize, IdentityTraceHasOneCentralDefect) {
  auto g = build_domain(DomainKind::ball, 33);
  const auto res = minimize(g, trace_of(g, TraceFamily::identity()), {});
  EXPECT_TRUE(res.runs[0].converged);
  EXPECT_NEAR(res.runs[0].energy / (8.0 * pi), 1.0, 0.05);
  const auto pts = detect_singularities(res.field);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_LE(norm(pts[0].location), 2.0 * g->h());
  EXPECT_EQ(pts[0].degree, 1);
}

TEST(Minimize, EnergyEquivariantUnderTargetRotation) {
  auto g = build_domain(DomainKind::ball, 21);
  const auto t = trace_of(g, TraceFamily::perturbed(TraceFamily::bubble(0.7, normalized(Vec3{1, 0.3, 0.2})), 0.3));
  const auto r = rotation(e3, pi / 2.0);
  SolverParams p;
  p.max_iters = 4000;
  const auto a = minimize(g, t, p);
  const auto b = minimize(g, rotate_values(t, r), p);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t k = 0; k < a.runs.size(); ++k)
    EXPECT_NEAR(a.runs[k].energy, b.runs[k].energy, 1e-8 * a.runs[k].energy) << k;
  EXPECT_EQ(a.best_run, b.best_run);
  const double rotated = dirichlet_energy(rotate_values(a.field, r)).total;
  EXPECT_NEAR(rotated, b.runs[b.best_run].energy, 1e-8 * rotated);
}

TEST(Minimize, RestartsAreRecorded) {
  auto g = build_domain(DomainKind::ball, 17);
  SolverParams p;
  p.restarts = 3;
  p.seed = 40;
  p.max_iters = 2000;
  const auto res = minimize(g, trace_of(g, TraceFamily::identity()), p);
  ASSERT_EQ(res.runs.size(), 4u);  // three restarts plus the coarse-start run
  for (std::size_t r = 0; r < 4; ++r) {
    if (r < 3) {
      EXPECT_EQ(res.runs[r].seed, 40u + r);
    }
    EXPECT_EQ(res.runs[r].random_start, r == 1 || r == 2);
    EXPECT_EQ(res.runs[r].coarse_start, r == 3);
    EXPECT_LE(res.runs[res.best_run].energy, res.runs[r].energy);
  }
  EXPECT_NEAR(dirichlet_energy(res.field).total, res.runs[res.best_run].energy, 1e-9 * res.runs[res.best_run].energy);
  // shell values are identical across restarts
  const auto again = minimize(g, trace_of(g, TraceFamily::identity()), p);
  for (auto idx : g->masked_nodes()) EXPECT_EQ(res.field[idx], again.field[idx]);
  p.coarse_start = false;
  EXPECT_EQ(minimize(g, trace_of(g, TraceFamily::identity()), p).runs.size(), 3u);
}

TEST(Minimize, CoarseStartCentresIdentityDefect) {
  auto g = build_domain(DomainKind::ball, 33);
  const auto res = minimize(g, trace_of(g, TraceFamily::identity()), {});
  ASSERT_EQ(res.runs.size(), 2u);
  EXPECT_LE(res.runs[res.best_run].energy, res.runs[0].energy);
  const auto pts = detect_singularities(res.field);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_LE(norm(pts[0].location), g->h());
}

TEST(Minimize, RejectsTraceFromAnotherSurface) {
  auto g = build_domain(DomainKind::ball, 17);
  auto other = build_domain(DomainKind::cube, 17);
  EXPECT_THROW(minimize(g, trace_of(other, TraceFamily::identity()), {}), InvalidArgument);
}

TEST(RandomStart, KeepsShellAndIsSeeded) {
  auto g = build_domain(DomainKind::ball, 13);
  const auto pinned = constant_field(g, e3).nodes();
  const auto a = random_start(*g, pinned, 5), b = random_start(*g, pinned, 5), c = random_start(*g, pinned, 6);
  for (auto idx : g->shell_nodes()) EXPECT_EQ(a[idx], e3);
  for (auto idx : g->interior_nodes()) EXPECT_NEAR(norm(a[idx]), 1.0, 1e-12);
  bool differs = false;
  for (auto idx : g->masked_nodes()) {
    EXPECT_EQ(a[idx], b[idx]);
    differs = differs || !(a[idx] == c[idx]);
  }
  EXPECT_TRUE(differs);
}

TEST(W12Distance, Basics) {
  auto g = build_domain(DomainKind::ball, 17);
  const auto f = hedgehog(g, {0.1, 0, 0});
  EXPECT_EQ(w12_distance(f, f), 0.0);
  EXPECT_NEAR(w12_distance(constant_field(g, e3), constant_field(g, e1)), std::sqrt(2.0 * g->quadrature_volume()), 1e-12);
  EXPECT_THROW(w12_distance(f, hedgehog(build_domain(DomainKind::ball, 19), {0, 0, 0})), InvalidArgument);
  const auto h = hedgehog(g, {0, 0, 0});
  EXPECT_NEAR(w12_distance(f, h), w12_distance(h, f), 1e-14);
}

TEST(W12Distance, IdentityMinimizerCloseToHedgehog) {
  auto g = build_domain(DomainKind::ball, 65);
  const auto res = minimize(g, trace_of(g, TraceFamily::identity()), {});
  const auto hh = hedgehog(g, {0, 0, 0});
  const double rel = w12_distance(res.field, hh) / w12_norm(hh);
  RecordProperty("relative_w12", std::to_string(rel));
  std::printf("minimizer vs hedgehog(0): relative W12 distance %.4f at n=65\n", rel);
  EXPECT_LE(rel, 0.15);
}
