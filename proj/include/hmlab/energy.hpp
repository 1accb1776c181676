#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hmlab/domain.hpp"
#include "hmlab/field.hpp"

namespace hmlab {

/// Discrete Dirichlet energy split over grid cells.
///
/// A cell contributes  f_c * h * sum_axes mean_e |du_e|^2  where the mean runs over
/// the cell's edges along that axis whose two ends are masked and f_c is the cell's
/// domain fraction. For sphere-valued fields |du_e| is the great-circle angle between
/// the end values; for unconstrained fields it is the Euclidean difference.
struct EnergyBreakdown {
  double total = 0.0;
  std::vector<double> per_cell;
};

/// Squared edge increment: great-circle angle for unit values, chord otherwise.
template <class Policy>
inline double edge_increment2(const Vec3& a, const Vec3& b) {
  const double chord2 = norm2(a - b);
  if constexpr (Policy::unit) {
    const double theta = 2.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(chord2)));
    return theta * theta;
  } else {
    return chord2;
  }
}

namespace detail {

/// Corner node indices of a cell in bit order (x fastest).
inline std::array<std::size_t, 8> cell_corners(const DomainGrid& g, std::size_t c) {
  const auto [i, j, k] = g.cell_ijk(c);
  std::array<std::size_t, 8> out{};
  for (int b = 0; b < 8; ++b) out[b] = g.index(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
  return out;
}

template <class Policy>
double cell_energy(const DomainGrid& g, std::span<const Vec3> nodes, std::size_t c) {
  const auto q = cell_corners(g, c);
  double s = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    double sum = 0.0;
    int count = 0;
    for (int b = 0; b < 8; ++b) {
      if (b & (1 << axis)) continue;
      const auto lo = q[b], hi = q[b | (1 << axis)];
      if (!g.masked(lo) || !g.masked(hi)) continue;
      sum += edge_increment2<Policy>(nodes[lo], nodes[hi]);
      ++count;
    }
    if (count) s += sum / count;
  }
  return g.cell_fraction(c) * g.h() * s;
}

/// Cell-centre gradient from the masked edges: entry a is d(values)/dx_a.
inline std::array<Vec3, 3> cell_gradient(const DomainGrid& g, std::span<const Vec3> nodes, std::size_t c) {
  const auto q = cell_corners(g, c);
  std::array<Vec3, 3> d{};
  for (int axis = 0; axis < 3; ++axis) {
    int count = 0;
    for (int b = 0; b < 8; ++b) {
      if (b & (1 << axis)) continue;
      const auto lo = q[b], hi = q[b | (1 << axis)];
      if (!g.masked(lo) || !g.masked(hi)) continue;
      d[axis] += nodes[hi] - nodes[lo];
      ++count;
    }
    if (count) d[axis] /= count * g.h();
  }
  return d;
}

/// Visits active cells meeting the closed ball B_r(y) with the fraction of the
/// cell inside the ball (4^3 subsamples for cells straddling the sphere).
template <class F>
void for_cells_in_ball(const DomainGrid& g, const Vec3& y, double r, F&& f) {
  const double h = g.h();
  const int m = g.n() - 1;
  auto lo = [&](double c) { return std::max(0, static_cast<int>(std::floor((c - r + 1.0) / h - 1.0))); };
  auto hi = [&](double c) { return std::min(m - 1, static_cast<int>(std::ceil((c + r + 1.0) / h))); };
  const double half_diag = 0.5 * std::sqrt(3.0) * h;
  for (int k = lo(y.z); k <= hi(y.z); ++k)
    for (int j = lo(y.y); j <= hi(y.y); ++j)
      for (int i = lo(y.x); i <= hi(y.x); ++i) {
        const std::size_t c = g.cell_index(i, j, k);
        if (!g.cell_active(c)) continue;
        const Vec3 center = g.cell_center(c);
        const double d = distance(center, y);
        if (d >= r + half_diag) continue;
        double w = 1.0;
        if (d > r - half_diag) {
          constexpr int sub = 4;
          int inside = 0;
          const Vec3 base = center - Vec3{0.5 * h, 0.5 * h, 0.5 * h};
          for (int a = 0; a < sub; ++a)
            for (int b = 0; b < sub; ++b)
              for (int e = 0; e < sub; ++e) {
                const Vec3 p = base + Vec3{(a + 0.5) * h / sub, (b + 0.5) * h / sub, (e + 0.5) * h / sub};
                inside += norm2(p - y) <= r * r;
              }
          if (inside == 0) continue;
          w = static_cast<double>(inside) / (sub * sub * sub);
        }
        f(c, center, w);
      }
}

}  // namespace detail

/// Weighted edge graph whose quadratic form reproduces the cell energy:
/// E = sum_e weight_e * |du_e|^2.
struct EdgeGraph {
  std::vector<std::array<std::size_t, 2>> edges;
  std::vector<double> weights;
};

inline EdgeGraph build_edge_graph(const DomainGrid& g) {
  EdgeGraph eg;
  const int n = g.n();
  for (std::size_t idx = 0; idx < g.node_count(); ++idx) {
    if (!g.masked(idx)) continue;
    const auto [i, j, k] = g.ijk(idx);
    for (int axis = 0; axis < 3; ++axis) {
      std::array<int, 3> o{i, j, k};
      ++o[axis];
      if (o[axis] >= n || !g.masked(o[0], o[1], o[2])) continue;
      // The four cells sharing this edge.
      double w = 0.0;
      const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
      for (int d1 = -1; d1 <= 0; ++d1)
        for (int d2 = -1; d2 <= 0; ++d2) {
          std::array<int, 3> c{i, j, k};
          c[a1] += d1;
          c[a2] += d2;
          if (c[a1] < 0 || c[a2] < 0 || c[a1] >= n - 1 || c[a2] >= n - 1 || c[axis] >= n - 1) continue;
          const auto cell = g.cell_index(c[0], c[1], c[2]);
          if (!g.cell_active(cell)) continue;
          int count = 0;
          for (int b = 0; b < 8; ++b) {
            if (b & (1 << axis)) continue;
            std::array<int, 3> lo{c[0] + (b & 1), c[1] + ((b >> 1) & 1), c[2] + ((b >> 2) & 1)};
            std::array<int, 3> hi = lo;
            ++hi[axis];
            count += g.masked(lo[0], lo[1], lo[2]) && g.masked(hi[0], hi[1], hi[2]);
          }
          w += g.cell_fraction(cell) * g.h() / count;
        }
      if (w > 0.0) {
        eg.edges.push_back({idx, g.index(o[0], o[1], o[2])});
        eg.weights.push_back(w);
      }
    }
  }
  return eg;
}

/// Energy of the field. Cells with a corner within 2h of any point in `excluded`
/// are dropped (used around detected defects).
template <class Policy>
EnergyBreakdown dirichlet_energy(const BasicField<Policy>& f, std::span<const Vec3> excluded = {}) {
  const auto& g = f.grid();
  EnergyBreakdown e;
  e.per_cell.assign(g.cell_count(), 0.0);
  const double cut = 2.0 * g.h();
  for (auto c : g.active_cells()) {
    if (!excluded.empty()) {
      bool drop = false;
      for (auto idx : detail::cell_corners(g, c))
        for (const auto& p : excluded)
          if (distance(g.position(idx), p) <= cut) drop = true;
      if (drop) continue;
    }
    e.per_cell[c] = detail::cell_energy<Policy>(g, f.nodes(), c);
  }
  for (auto c : g.active_cells()) e.total += e.per_cell[c];
  return e;
}

/// Sum of per-cell energy over cells centred in B_r(y).
inline double ball_energy(const DomainGrid& g, const EnergyBreakdown& e, const Vec3& y, double r) {
  double s = 0.0;
  detail::for_cells_in_ball(g, y, r, [&](std::size_t c, const Vec3&, double w) { s += w * e.per_cell[c]; });
  return s;
}

inline constexpr double min_radius_in_h = 2.0;

inline void check_local_radius(const DomainGrid& g, const Vec3& y, double r) {
  if (!(r >= min_radius_in_h * g.h() - 1e-12))
    throw InvalidArgument("radius " + std::to_string(r) + " is below the stencil limit " +
                          std::to_string(min_radius_in_h * g.h()));
  if (!g.contains(y)) throw InvalidArgument("centre lies outside the domain");
}

/// r^-1 * energy in B_r(y) ∩ Ω (cells weighted by their fraction inside the ball). Balls reaching past the boundary are clipped by the
/// domain, which is the half-ball variant when y sits on the flat face.
inline double normalized_local_energy(const DomainGrid& g, const EnergyBreakdown& e, const Vec3& y, double r) {
  check_local_radius(g, y, r);
  return ball_energy(g, e, y, r) / r;
}

template <class Policy>
double normalized_local_energy(const BasicField<Policy>& f, const Vec3& y, double r) {
  return normalized_local_energy(f.grid(), dirichlet_energy(f), y, r);
}

struct MonotonicityProfile {
  Vec3 center;
  std::vector<double> radii;
  std::vector<double> normalized_energy;  // one per radius
  std::vector<double> radial_term;        // one per consecutive pair (annulus)
  std::vector<double> defect;             // one per consecutive pair
};

/// Normalized energies at each radius and, per annulus, the radial-derivative term
/// 2 * sum |x-y|^-1 |du/dnu|^2 h^3 and the defect (energy gain minus radial term).
inline MonotonicityProfile monotonicity_profile(const SphereField& f, const Vec3& y, std::vector<double> radii) {
  const auto& g = f.grid();
  if (radii.empty()) throw InvalidArgument("monotonicity_profile: no radii");
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw InvalidArgument("monotonicity_profile: radii must increase strictly");
  for (double r : radii) check_local_radius(g, y, r);
  const auto e = dirichlet_energy(f);
  MonotonicityProfile p;
  p.center = y;
  p.radii = radii;
  for (double r : radii) p.normalized_energy.push_back(ball_energy(g, e, y, r) / r);
  const double h3 = g.h() * g.h() * g.h();
  for (std::size_t i = 0; i + 1 < radii.size(); ++i) {
    const double r_in = radii[i], r_out = radii[i + 1];
    double radial = 0.0;
    // Annulus weight = (fraction in B_R) - (fraction in B_r).
    std::unordered_map<std::size_t, double> inner;
    detail::for_cells_in_ball(g, y, r_in, [&](std::size_t c, const Vec3&, double w) { inner[c] = w; });
    detail::for_cells_in_ball(g, y, r_out, [&](std::size_t c, const Vec3& center, double w) {
      const auto it = inner.find(c);
      const double wa = w - (it == inner.end() ? 0.0 : it->second);
      if (wa <= 0.0) return;
      const double dist = distance(center, y);
      const auto grad = detail::cell_gradient(g, f.nodes(), c);
      const Vec3 nu = (center - y) / dist;
      const Vec3 du = nu.x * grad[0] + nu.y * grad[1] + nu.z * grad[2];
      radial += 2.0 * wa * g.cell_fraction(c) * norm2(du) / dist * h3;
    });
    p.radial_term.push_back(radial);
    p.defect.push_back(p.normalized_energy[i + 1] - p.normalized_energy[i] - radial);
  }
  return p;
}

struct ResidualField {
  std::vector<Vec3> residual;   // NaN where not evaluated
  std::vector<std::size_t> evaluated;
  double median = 0.0;
};

/// Discrete Euler-Lagrange residual  Δ_h u + |∇⁺_h u|² u  (forward-difference gradient)
/// on interior nodes more than 4h from every point in `singular`.
inline ResidualField el_residual(const SphereField& f, std::span<const Vec3> singular = {},
                                 double min_radius = 0.0) {
  const auto& g = f.grid();
  const double h = g.h(), h2 = h * h;
  ResidualField out;
  out.residual.assign(g.node_count(), nan_vec());
  std::vector<double> mags;
  for (auto idx : g.interior_nodes()) {
    const Vec3 x = g.position(idx);
    bool skip = norm(x) < min_radius;
    for (const auto& s : singular)
      if (distance(x, s) <= 4.0 * h) skip = true;
    if (skip) continue;
    const auto [i, j, k] = g.ijk(idx);
    const Vec3 u = f[idx];
    Vec3 lap;
    double grad2 = 0.0;
    const std::array<std::size_t, 6> nb = {g.index(i + 1, j, k), g.index(i - 1, j, k), g.index(i, j + 1, k),
                                           g.index(i, j - 1, k), g.index(i, j, k + 1), g.index(i, j, k - 1)};
    for (int a = 0; a < 6; ++a) lap += f[nb[a]] - u;
    for (int a = 0; a < 6; a += 2) grad2 += norm2(f[nb[a]] - u);
    const Vec3 r = lap / h2 + (grad2 / h2) * u;
    out.residual[idx] = r;
    out.evaluated.push_back(idx);
    mags.push_back(norm(r));
  }
  if (!mags.empty()) {
    const auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
    std::nth_element(mags.begin(), mid, mags.end());
    out.median = *mid;
  }
  return out;
}

/// The blow-up x -> u(y + λx) resampled on a unit-ball grid with `n_out` nodes per axis.
inline SphereField rescale_blowup(const SphereField& f, const Vec3& y, double lambda, int n_out = 0) {
  const auto& g = f.grid();
  if (!(lambda >= 8.0 * g.h() - 1e-12)) throw InvalidArgument("rescale_blowup: lambda below 8h");
  if (!g.contains(y) || g.boundary_distance(y) < lambda - 1e-9)
    throw InvalidArgument("rescale_blowup: B_lambda(y) leaves the domain");
  auto ball = build_domain(DomainKind::ball, n_out > 0 ? n_out : g.n());
  auto sample = [&](const Vec3& x) {
    auto v = trilinear(g, f.nodes(), y + lambda * x, false);
    if (!v) throw InvalidArgument("rescale_blowup: sample outside the grid");
    return *v;
  };
  std::vector<Vec3> nodes(ball->node_count(), nan_vec());
  for (auto idx : ball->masked_nodes()) nodes[idx] = normalized(sample(ball->position(idx)));
  std::vector<Vec3> verts;
  for (const auto& p : ball->surface().positions) verts.push_back(normalized(sample(p)));
  return SphereField(ball, std::move(nodes), std::move(verts));
}

/// Share of the energy carried by the radial derivative about `center`:
/// sum |du/dnu|^2 / sum |grad u|^2 over active cells (cell-centre gradients).
inline double radial_energy_share(const SphereField& f, const Vec3& center = {}) {
  const auto& g = f.grid();
  double radial = 0.0, total = 0.0;
  for (auto c : g.active_cells()) {
    const Vec3 x = g.cell_center(c);
    const double d = distance(x, center);
    const auto grad = detail::cell_gradient(g, f.nodes(), c);
    const double w = g.cell_fraction(c);
    total += w * (norm2(grad[0]) + norm2(grad[1]) + norm2(grad[2]));
    if (d < 1e-12) continue;
    const Vec3 nu = (x - center) / d;
    radial += w * norm2(nu.x * grad[0] + nu.y * grad[1] + nu.z * grad[2]);
  }
  return total > 0.0 ? radial / total : 0.0;
}

}  // namespace hmlab
