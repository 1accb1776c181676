#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "hmlab/domain.hpp"
#include "hmlab/energy.hpp"
#include "hmlab/field.hpp"

namespace hmlab {

struct SolverParams {
  double tau = 0.0;  // descent step; 0 selects h^2/6
  int max_iters = 20000;
  double rel_tol = 1e-7;
  int restarts = 1;
  std::uint64_t seed = 1;
  bool coarse_start = true;  // extra run started from the half-resolution minimizer

  double step(double h) const { return tau > 0.0 ? tau : h * h / 6.0; }

  void validate(double h) const {
    const double t = step(h);
    if (!(t > 0.0 && t <= h * h / 6.0 * (1.0 + 1e-12)))
      throw InvalidArgument("SolverParams: tau must lie in (0, h^2/6]");
    if (!(rel_tol > 0.0)) throw InvalidArgument("SolverParams: rel_tol must be positive");
    if (max_iters < 0) throw InvalidArgument("SolverParams: max_iters must be >= 0");
    if (restarts < 1) throw InvalidArgument("SolverParams: restarts must be >= 1");
  }
};

/// Componentwise discrete harmonic extension of the trace: the shell is pinned to the
/// interpolated trace and the 7-point Laplacian is solved on interior nodes by
/// conjugate gradients until max |sum_nbrs (u_j - u_i)| <= tol * max|trace|.
inline VectorField harmonic_extension(const GridPtr& grid, const BoundaryTrace& trace, double tol = 1e-8,
                                      int max_iters = 20000) {
  const auto& g = *grid;
  if (&trace.surface() != &g.surface() && trace.size() != g.surface().size())
    throw InvalidArgument("harmonic_extension: trace does not live on the grid surface");
  std::vector<Vec3> u(g.node_count(), nan_vec());
  for (auto [idx, v] : shell_values(trace, shell_stencils(g))) u[idx] = v;

  const auto& inner = g.interior_nodes();
  const std::size_t m = inner.size();
  std::vector<std::int64_t> slot(g.node_count(), -1);
  for (std::size_t a = 0; a < m; ++a) slot[inner[a]] = static_cast<std::int64_t>(a);
  // Neighbour table: interior slot or -(shell node + 1).
  std::vector<std::array<std::int64_t, 6>> nb(m);
  for (std::size_t a = 0; a < m; ++a) {
    const auto [i, j, k] = g.ijk(inner[a]);
    const std::array<std::size_t, 6> q = {g.index(i + 1, j, k), g.index(i - 1, j, k), g.index(i, j + 1, k),
                                          g.index(i, j - 1, k), g.index(i, j, k + 1), g.index(i, j, k - 1)};
    for (int d = 0; d < 6; ++d) nb[a][d] = slot[q[d]] >= 0 ? slot[q[d]] : -static_cast<std::int64_t>(q[d]) - 1;
  }
  double scale = 0.0;
  for (const auto& v : trace.values()) scale = std::max({scale, std::abs(v.x), std::abs(v.y), std::abs(v.z)});
  const double target = tol * std::max(scale, 1e-300);

  // A x = b with A = 6 I - A_interior, b = sum of pinned neighbours.
  std::vector<Vec3> x(m), b(m), r(m), p(m), ap(m);
  for (std::size_t a = 0; a < m; ++a) {
    for (int d = 0; d < 6; ++d)
      if (nb[a][d] < 0) b[a] += u[static_cast<std::size_t>(-nb[a][d] - 1)];
    x[a] = b[a] / 6.0;
  }
  auto apply = [&](const std::vector<Vec3>& in, std::vector<Vec3>& out) {
    for (std::size_t a = 0; a < m; ++a) {
      Vec3 s = 6.0 * in[a];
      for (int d = 0; d < 6; ++d)
        if (nb[a][d] >= 0) s -= in[static_cast<std::size_t>(nb[a][d])];
      out[a] = s;
    }
  };
  auto comp_dot = [&](const std::vector<Vec3>& a1, const std::vector<Vec3>& a2) {
    Vec3 s;
    for (std::size_t a = 0; a < m; ++a) s += Vec3{a1[a].x * a2[a].x, a1[a].y * a2[a].y, a1[a].z * a2[a].z};
    return s;
  };
  auto max_abs = [&](const std::vector<Vec3>& v) {
    double s = 0.0;
    for (const auto& e : v) s = std::max({s, std::abs(e.x), std::abs(e.y), std::abs(e.z)});
    return s;
  };
  apply(x, ap);
  for (std::size_t a = 0; a < m; ++a) r[a] = b[a] - ap[a];
  p = r;
  Vec3 rr = comp_dot(r, r);
  int it = 0;
  for (; it < max_iters && max_abs(r) > target; ++it) {
    apply(p, ap);
    const Vec3 pap = comp_dot(p, ap);
    const Vec3 alpha{pap.x > 0 ? rr.x / pap.x : 0.0, pap.y > 0 ? rr.y / pap.y : 0.0, pap.z > 0 ? rr.z / pap.z : 0.0};
    for (std::size_t a = 0; a < m; ++a) {
      x[a] += Vec3{alpha.x * p[a].x, alpha.y * p[a].y, alpha.z * p[a].z};
      r[a] -= Vec3{alpha.x * ap[a].x, alpha.y * ap[a].y, alpha.z * ap[a].z};
    }
    const Vec3 rr_new = comp_dot(r, r);
    const Vec3 beta{rr.x > 0 ? rr_new.x / rr.x : 0.0, rr.y > 0 ? rr_new.y / rr.y : 0.0,
                    rr.z > 0 ? rr_new.z / rr.z : 0.0};
    for (std::size_t a = 0; a < m; ++a) p[a] = r[a] + Vec3{beta.x * p[a].x, beta.y * p[a].y, beta.z * p[a].z};
    rr = rr_new;
    // Recompute the true residual now and then to avoid drift.
    if (it % 50 == 49) {
      apply(x, ap);
      for (std::size_t a = 0; a < m; ++a) r[a] = b[a] - ap[a];
    }
  }
  apply(x, ap);
  for (std::size_t a = 0; a < m; ++a) r[a] = b[a] - ap[a];
  if (max_abs(r) > target) throw ConvergenceError("harmonic_extension: no convergence after max sweeps");
  for (std::size_t a = 0; a < m; ++a) u[inner[a]] = x[a];
  return VectorField(grid, std::move(u), trace.values());
}

/// Result of the sphere-valued extension of a vector field.
struct ExtensionResult {
  SphereField field;
  Vec3 a_star;
  double energy_ratio = 0.0;     // E(field) / E(input), chord quadrature on both
  double projected_energy = 0.0;  // E(u_{a*}) before the inverse map
  std::size_t candidates = 0;    // admissible lattice points
};

/// Lattice of candidate centres: 11^3 points of [-0.45, 0.45]^3 with |a| < 1/2.
inline std::vector<Vec3> extension_candidates() {
  std::vector<Vec3> out;
  for (int k = 0; k < 11; ++k)
    for (int j = 0; j < 11; ++j)
      for (int i = 0; i < 11; ++i) {
        const Vec3 a{-0.45 + 0.09 * i, -0.45 + 0.09 * j, -0.45 + 0.09 * k};
        if (norm(a) < 0.5) out.push_back(a);
      }
  return out;
}

/// xi -> (xi - a)/|xi - a|.
inline Vec3 sphere_projection(const Vec3& a, const Vec3& xi) { return normalized(xi - a); }

/// Inverse of the projection restricted to the unit sphere, |a| < 1:
/// the point a + t xi with t >= 0 on the unit sphere.
inline Vec3 sphere_projection_inverse(const Vec3& a, const Vec3& xi) {
  const double ax = dot(a, xi);
  const double t = -ax + std::sqrt(ax * ax + 1.0 - norm2(a));
  return a + t * xi;
}

/// Sphere-valued field with the trace of `v`: among the lattice centres a, the map
/// u_a = (v - a)/|v - a| of least energy is selected and pulled back through the
/// inverse projection so that boundary values are reproduced.
inline ExtensionResult project_extension(const VectorField& v) {
  const auto& g = v.grid();
  for (const auto& b : v.vertices())
    if (std::abs(norm(b) - 1.0) > 1e-9) throw InvalidArgument("project_extension: boundary values must be unit");
  const EdgeGraph eg = build_edge_graph(g);
  const auto cands = extension_candidates();
  const auto& masked = g.masked_nodes();
  std::vector<Vec3> ua(g.node_count(), nan_vec());

  double best = std::numeric_limits<double>::infinity();
  Vec3 best_a;
  std::size_t admissible = 0;
  for (const auto& a : cands) {
    bool ok = true;
    for (auto idx : masked) {
      const Vec3 d = v[idx] - a;
      if (norm2(d) < 1e-24) {
        ok = false;
        break;
      }
      ua[idx] = d / norm(d);
    }
    if (!ok) continue;
    ++admissible;
    double e = 0.0;
    for (std::size_t k = 0; k < eg.edges.size(); ++k)
      e += eg.weights[k] * edge_increment2<UnitValued>(ua[eg.edges[k][0]], ua[eg.edges[k][1]]);
    if (e < best) {
      best = e;
      best_a = a;
    }
  }
  if (admissible == 0) throw InvalidArgument("project_extension: every candidate centre is disqualified");

  std::vector<Vec3> nodes(g.node_count(), nan_vec());
  for (auto idx : masked) nodes[idx] = normalized(sphere_projection_inverse(best_a, sphere_projection(best_a, v[idx])));
  std::vector<Vec3> verts;
  for (const auto& b : v.vertices()) verts.push_back(normalized(b));
  SphereField u(v.grid_ptr(), std::move(nodes), std::move(verts));
  // Both sides with the chord quadrature, so a unit-valued input gives ratio 1.
  const double ev = dirichlet_energy(v).total;
  const double eu = dirichlet_energy(VectorField(u.grid_ptr(), u.nodes(), u.vertices())).total;
  const double ratio = ev > 0.0 ? eu / ev : (eu > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  return {std::move(u), best_a, ratio, best, admissible};
}

struct HistoryRow {
  int iter = 0;
  double energy = 0.0;
  double max_node_move = 0.0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  bool random_start = false;
  bool coarse_start = false;
  double energy = 0.0;          // Dirichlet energy of the final field
  double descent_energy = 0.0;  // chord edge energy the flow decreases
  int iterations = 0;
  int rejected = 0;
  bool converged = false;
  bool aborted = false;
  std::string error;
};

struct MinimizeResult {
  SphereField field;
  std::vector<HistoryRow> history;  // chord edge energy of the selected run
  std::vector<RunRecord> runs;
  std::size_t best_run = 0;
  Vec3 a_star;
};

namespace detail {

/// Projected heat flow on the weighted edge graph with the shell pinned. The descended
/// objective is the chord edge energy sum_e w_e |u_a - u_b|^2; for interior nodes with
/// full cells every weight equals h and the sweep is the plain 6-neighbour heat step.
class Descent {
 public:
  Descent(const DomainGrid& g, const EdgeGraph& eg) : g_(g), eg_(eg) {
    adj_.resize(g.node_count());
    for (std::size_t k = 0; k < eg.edges.size(); ++k) {
      const auto [a, b] = eg.edges[k];
      if (g.interior(a)) adj_[a].push_back({b, eg.weights[k] / g.h()});
      if (g.interior(b)) adj_[b].push_back({a, eg.weights[k] / g.h()});
    }
  }

  double energy(const std::vector<Vec3>& u) const {
    double e = 0.0;
    for (std::size_t k = 0; k < eg_.edges.size(); ++k)
      e += eg_.weights[k] * norm2(u[eg_.edges[k][0]] - u[eg_.edges[k][1]]);
    return e;
  }

  double geodesic_energy(const std::vector<Vec3>& u) const {
    double e = 0.0;
    for (std::size_t k = 0; k < eg_.edges.size(); ++k)
      e += eg_.weights[k] * edge_increment2<UnitValued>(u[eg_.edges[k][0]], u[eg_.edges[k][1]]);
    return e;
  }

  /// One simultaneous sweep with coefficient c = tau/h^2; returns the max node move.
  double step(const std::vector<Vec3>& u, std::vector<Vec3>& out, double c) const {
    out = u;
    double moved = 0.0;
    for (auto i : g_.interior_nodes()) {
      const Vec3 ui = u[i];
      Vec3 acc;
      for (const auto& [j, w] : adj_[i]) acc += w * (u[j] - ui);
      const Vec3 w = ui + c * acc;
      const double nw = norm(w);
      out[i] = nw > 1e-12 ? w / nw : ui;
      moved = std::max(moved, norm(out[i] - ui));
    }
    return moved;
  }

 private:
  struct Link {
    std::size_t node;
    double weight;
  };
  const DomainGrid& g_;
  const EdgeGraph& eg_;
  std::vector<std::vector<Link>> adj_;
};

struct RunOutput {
  std::vector<Vec3> field;
  std::vector<HistoryRow> history;
  RunRecord record;
};

inline RunOutput descend(const DomainGrid& g, const Descent& solver, std::vector<Vec3> u, const SolverParams& prm) {
  RunOutput out;
  const double c_max = prm.step(g.h()) / (g.h() * g.h());
  double c = c_max;
  double e = solver.energy(u);
  out.history.push_back({0, e, 0.0});
  std::vector<Vec3> next;
  std::vector<double> accepted{e};
  int streak = 0;
  int it = 0;
  for (; it < prm.max_iters; ++it) {
    if (e <= 1e-14) {
      out.record.converged = true;
      break;
    }
    const double moved = solver.step(u, next, c);
    const double e_new = solver.energy(next);
    if (e_new > e * (1.0 + 1e-12)) {
      ++out.record.rejected;
      c *= 0.5;
      streak = 0;
      if (c < c_max * 1e-6) {
        out.record.aborted = true;
        out.record.error = "divergence: energy increase persists at minimal step";
        break;
      }
      continue;
    }
    u.swap(next);
    e = e_new;
    accepted.push_back(e);
    out.history.push_back({static_cast<int>(accepted.size() - 1), e, moved});
    if (++streak >= 20 && c < c_max) {
      c = std::min(c_max, 2.0 * c);
      streak = 0;
    }
    const std::size_t na = accepted.size();
    if (na > 100) {
      const double old = accepted[na - 101];
      if (old - e <= prm.rel_tol * old) {
        out.record.converged = true;
        break;
      }
    }
  }
  out.record.descent_energy = e;
  out.record.energy = solver.geodesic_energy(u);
  out.record.iterations = static_cast<int>(accepted.size() - 1);
  out.field = std::move(u);
  return out;
}

}  // namespace detail

/// Uniform random unit field on the interior with the shell pinned from `pinned`.
inline std::vector<Vec3> random_start(const DomainGrid& g, const std::vector<Vec3>& pinned, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), angle(0.0, 2.0 * pi);
  std::vector<Vec3> u = pinned;
  for (auto idx : g.interior_nodes()) {
    const double z = unit(rng), phi = angle(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    u[idx] = {r * std::cos(phi), r * std::sin(phi), z};
  }
  return u;
}

namespace detail {

/// Coarse level for the continuation start: about half the resolution, odd, >= 9.
inline int coarse_n(int n) {
  const int c = (n + 1) / 2;
  return c % 2 == 0 ? c - 1 : c;
}

/// Trace on another surface of the same domain: value of the nearest source vertex.
inline BoundaryTrace nearest_vertex_trace(const BoundaryTrace& t, std::shared_ptr<const Surface> target) {
  const auto& src = t.surface().positions;
  std::vector<Vec3> values(target->size());
  for (std::size_t v = 0; v < values.size(); ++v) {
    const Vec3 x = target->positions[v];
    std::size_t best = 0;
    double d2 = norm2(src[0] - x);
    for (std::size_t w = 1; w < src.size(); ++w) {
      const double e = norm2(src[w] - x);
      if (e < d2) d2 = e, best = w;
    }
    values[v] = t.values()[best];
  }
  return BoundaryTrace(std::move(target), std::move(values));
}

/// Interior nodes take the renormalized trilinear sample of the coarse minimizer; nodes
/// without a usable sample keep the pinned start.
inline std::vector<Vec3> prolongate(const SphereField& coarse, const DomainGrid& g, std::vector<Vec3> u) {
  for (auto i : g.interior_nodes()) {
    const auto v = trilinear(coarse.grid(), coarse.nodes(), g.position(i), false);
    if (!v) continue;
    const double nv = norm(*v);
    if (nv > 1e-6) u[i] = *v / nv;
  }
  return u;
}

}  // namespace detail

/// Best-of-restarts projected descent. Run 0 starts from the sphere-valued extension of
/// the harmonic extension; runs 1.. start from seeded random unit fields. With
/// coarse_start (and n >= 17) one more run starts from the minimizer on the grid of
/// half the resolution, which escapes lattice-pinned defect positions.
inline MinimizeResult minimize(const GridPtr& grid, const BoundaryTrace& trace, const SolverParams& prm) {
  const auto& g = *grid;
  prm.validate(g.h());
  if (&trace.surface() != &g.surface() && trace.size() != g.surface().size())
    throw InvalidArgument("minimize: trace does not live on the grid surface");
  const auto ext = project_extension(harmonic_extension(grid, trace));
  const EdgeGraph eg = build_edge_graph(g);
  const detail::Descent solver(g, eg);

  std::vector<detail::RunOutput> outs;
  for (int r = 0; r < prm.restarts; ++r) {
    const std::uint64_t seed = prm.seed + static_cast<std::uint64_t>(r);
    auto start = r == 0 ? ext.field.nodes() : random_start(g, ext.field.nodes(), seed);
    auto out = detail::descend(g, solver, std::move(start), prm);
    out.record.seed = seed;
    out.record.random_start = r > 0;
    outs.push_back(std::move(out));
  }
  if (prm.coarse_start && g.n() >= 17) {
    auto coarse_grid = build_domain(g.kind(), detail::coarse_n(g.n()));
    SolverParams cp = prm;
    cp.tau = 0.0;
    cp.restarts = 1;
    const auto coarse = minimize(coarse_grid, detail::nearest_vertex_trace(trace, coarse_grid->surface_ptr()), cp);
    auto out = detail::descend(g, solver, detail::prolongate(coarse.field, g, ext.field.nodes()), prm);
    out.record.seed = prm.seed;
    out.record.coarse_start = true;
    outs.push_back(std::move(out));
  }
  std::size_t best = outs.size();
  for (std::size_t r = 0; r < outs.size(); ++r) {
    if (outs[r].record.aborted) continue;
    if (best == outs.size() || outs[r].record.energy < outs[best].record.energy) best = r;
  }
  if (best == outs.size()) throw ConvergenceError("minimize: every run diverged");
  std::vector<RunRecord> records;
  for (const auto& o : outs) records.push_back(o.record);
  SphereField field(grid, std::move(outs[best].field), trace.values());
  return {std::move(field), std::move(outs[best].history), std::move(records), best, ext.a_star};
}

/// sqrt(||A - B||_{L2}^2 + ||grad(A - B)||_{L2}^2) with the cell quadrature.
inline double w12_distance(const SphereField& a, const SphereField& b) {
  if (a.grid_ptr() != b.grid_ptr() &&
      (a.grid().kind() != b.grid().kind() || a.grid().n() != b.grid().n()))
    throw InvalidArgument("w12_distance: fields live on different grids");
  const auto& g = a.grid();
  std::vector<Vec3> diff(g.node_count(), nan_vec());
  for (auto idx : g.masked_nodes()) diff[idx] = a[idx] - b[idx];
  std::vector<Vec3> vd(g.surface().size());
  for (std::size_t v = 0; v < vd.size(); ++v) vd[v] = a.vertices()[v] - b.vertices()[v];
  const VectorField d(a.grid_ptr(), std::move(diff), std::move(vd));
  const double grad2 = dirichlet_energy(d).total;
  const double h3 = g.h() * g.h() * g.h();
  double l2 = 0.0;
  for (auto c : g.active_cells()) {
    double s = 0.0;
    int count = 0;
    for (auto idx : detail::cell_corners(g, c))
      if (g.masked(idx)) {
        s += norm2(d[idx]);
        ++count;
      }
    l2 += g.cell_fraction(c) * h3 * s / count;
  }
  return std::sqrt(l2 + grad2);
}

}  // namespace hmlab
