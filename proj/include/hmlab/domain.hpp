#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hmlab/vec3.hpp"

namespace hmlab {

enum class DomainKind : std::uint8_t { cube = 0, ball = 1, half_ball = 2 };

inline std::string_view to_string(DomainKind k) {
  switch (k) {
    case DomainKind::cube: return "cube";
    case DomainKind::ball: return "ball";
    case DomainKind::half_ball: return "half_ball";
  }
  return "?";
}

inline DomainKind parse_domain_kind(std::string_view s) {
  if (s == "cube") return DomainKind::cube;
  if (s == "ball") return DomainKind::ball;
  if (s == "half_ball" || s == "half-ball") return DomainKind::half_ball;
  throw InvalidArgument("unknown domain kind '" + std::string(s) + "'");
}

enum class SurfaceTag : std::uint8_t { curved = 0, flat = 1 };

/// Triangulated closed boundary surface with lumped per-vertex area weights.
struct Surface {
  std::vector<Vec3> positions;
  std::vector<double> weights;
  std::vector<SurfaceTag> tags;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<SurfaceTag> triangle_tags;

  std::size_t size() const { return positions.size(); }

  double triangle_area(std::size_t t) const {
    const auto& tri = triangles[t];
    return 0.5 * norm(cross(positions[tri[1]] - positions[tri[0]], positions[tri[2]] - positions[tri[0]]));
  }

  double total_area() const {
    double a = 0.0;
    for (double w : weights) a += w;
    return a;
  }

  /// Area of the triangles carrying `tag`.
  double tagged_area(SurfaceTag tag) const {
    double a = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t)
      if (triangle_tags[t] == tag) a += triangle_area(t);
    return a;
  }

  double mean_edge_length() const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& tri : triangles)
      for (int e = 0; e < 3; ++e) {
        sum += distance(positions[tri[e]], positions[tri[(e + 1) % 3]]);
        ++count;
      }
    return count ? sum / static_cast<double>(count) : 0.0;
  }

  /// Lumps one third of each triangle area onto its corners and derives
  /// vertex tags (flat iff every incident triangle is flat).
  void finalize() {
    weights.assign(positions.size(), 0.0);
    std::vector<int> flat_count(positions.size(), 0), total_count(positions.size(), 0);
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      const double a = triangle_area(t) / 3.0;
      for (auto v : triangles[t]) {
        weights[v] += a;
        ++total_count[v];
        if (triangle_tags[t] == SurfaceTag::flat) ++flat_count[v];
      }
    }
    tags.resize(positions.size());
    for (std::size_t v = 0; v < positions.size(); ++v)
      tags[v] = (total_count[v] > 0 && flat_count[v] == total_count[v]) ? SurfaceTag::flat : SurfaceTag::curved;
  }
};

namespace detail {

/// Icosahedron refined `level` times, vertices projected to the unit sphere.
inline Surface icosphere(int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Surface s;
  const std::array<Vec3, 12> base = {Vec3{-1, t, 0}, Vec3{1, t, 0},  Vec3{-1, -t, 0}, Vec3{1, -t, 0},
                                     Vec3{0, -1, t}, Vec3{0, 1, t},  Vec3{0, -1, -t}, Vec3{0, 1, -t},
                                     Vec3{t, 0, -1}, Vec3{t, 0, 1},  Vec3{-t, 0, -1}, Vec3{-t, 0, 1}};
  for (const auto& v : base) s.positions.push_back(normalized(v));
  s.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      const auto idx = static_cast<std::uint32_t>(s.positions.size());
      s.positions.push_back(normalized(s.positions[a] + s.positions[b]));
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<std::uint32_t, 3>> next;
    next.reserve(s.triangles.size() * 4);
    for (const auto& tri : s.triangles) {
      const auto a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    s.triangles = std::move(next);
  }
  s.triangle_tags.assign(s.triangles.size(), SurfaceTag::curved);
  s.finalize();
  return s;
}

/// Adds a ring of `count` vertices produced by `at(angle)`; returns the indices.
template <class F>
std::vector<std::uint32_t> add_ring(Surface& s, int count, F&& at) {
  std::vector<std::uint32_t> ring;
  for (int k = 0; k < count; ++k) {
    ring.push_back(static_cast<std::uint32_t>(s.positions.size()));
    s.positions.push_back(at(2.0 * pi * k / count));
  }
  return ring;
}

/// Triangulates the band between two concentric rings by angular order.
inline void zip_rings(Surface& s, const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b,
                      SurfaceTag tag) {
  const std::size_t na = a.size(), nb = b.size();
  std::size_t i = 0, j = 0;
  while (i < na || j < nb) {
    const double next_a = static_cast<double>(i + 1) / static_cast<double>(na);
    const double next_b = static_cast<double>(j + 1) / static_cast<double>(nb);
    if (i < na && (j == nb || next_a <= next_b)) {
      s.triangles.push_back({a[i % na], a[(i + 1) % na], b[j % nb]});
      ++i;
    } else {
      s.triangles.push_back({a[i % na], b[(j + 1) % nb], b[j % nb]});
      ++j;
    }
    s.triangle_tags.push_back(tag);
  }
}

inline void fan(Surface& s, std::uint32_t apex, const std::vector<std::uint32_t>& ring, SurfaceTag tag) {
  for (std::size_t k = 0; k < ring.size(); ++k) {
    s.triangles.push_back({apex, ring[k], ring[(k + 1) % ring.size()]});
    s.triangle_tags.push_back(tag);
  }
}

/// Flat unit disk (z = 0) plus upper hemisphere, sharing the equator ring.
inline Surface half_ball_surface(double spacing) {
  Surface s;
  const int rings = std::max(2, static_cast<int>(std::ceil(1.0 / spacing)));
  const int bands = std::max(2, static_cast<int>(std::ceil(0.5 * pi / spacing)));

  const auto center = static_cast<std::uint32_t>(s.positions.size());
  s.positions.push_back({0.0, 0.0, 0.0});
  std::vector<std::uint32_t> prev;
  for (int i = 1; i <= rings; ++i) {
    const double r = static_cast<double>(i) / rings;
    auto ring = add_ring(s, 6 * i, [r](double a) { return Vec3{r * std::cos(a), r * std::sin(a), 0.0}; });
    if (i == 1)
      fan(s, center, ring, SurfaceTag::flat);
    else
      zip_rings(s, prev, ring, SurfaceTag::flat);
    prev = std::move(ring);
  }

  const double dtheta = 0.5 * pi / bands;
  const double ds = 2.0 * pi / (6.0 * rings);
  for (int k = 1; k < bands; ++k) {
    const double polar = 0.5 * pi - k * dtheta;
    const int count = std::max(3, static_cast<int>(std::lround(2.0 * pi * std::sin(polar) / ds)));
    auto ring = add_ring(s, count, [polar](double a) {
      return Vec3{std::sin(polar) * std::cos(a), std::sin(polar) * std::sin(a), std::cos(polar)};
    });
    zip_rings(s, prev, ring, SurfaceTag::curved);
    prev = std::move(ring);
  }
  const auto pole = static_cast<std::uint32_t>(s.positions.size());
  s.positions.push_back({0.0, 0.0, 1.0});
  fan(s, pole, prev, SurfaceTag::curved);
  s.finalize();
  return s;
}

}  // namespace detail

/// Masked uniform grid on [-1,1]^3 describing one of the supported domains.
///
/// Node states: outside the closed domain, shell (inside but with at least one
/// axis neighbour outside) and interior (all six neighbours inside).
class DomainGrid {
 public:
  enum class NodeState : std::uint8_t { outside = 0, shell = 1, interior = 2 };

  DomainKind kind() const { return kind_; }
  int n() const { return n_; }
  double h() const { return h_; }
  std::size_t node_count() const { return static_cast<std::size_t>(n_) * n_ * n_; }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(n_) * (j + static_cast<std::size_t>(n_) * k);
  }
  std::array<int, 3> ijk(std::size_t idx) const {
    const int i = static_cast<int>(idx % n_);
    const int j = static_cast<int>((idx / n_) % n_);
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(n_) * n_));
    return {i, j, k};
  }
  double coord(int i) const { return -1.0 + h_ * i; }
  Vec3 position(int i, int j, int k) const { return {coord(i), coord(j), coord(k)}; }
  Vec3 position(std::size_t idx) const {
    const auto [i, j, k] = ijk(idx);
    return position(i, j, k);
  }

  NodeState state(std::size_t idx) const { return state_[idx]; }
  bool masked(std::size_t idx) const { return state_[idx] != NodeState::outside; }
  bool masked(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < n_ && j < n_ && k < n_ && masked(index(i, j, k));
  }
  bool interior(std::size_t idx) const { return state_[idx] == NodeState::interior; }

  const std::vector<std::size_t>& interior_nodes() const { return interior_; }
  const std::vector<std::size_t>& shell_nodes() const { return shell_; }
  const std::vector<std::size_t>& masked_nodes() const { return masked_; }

  /// Cell (i,j,k) spans nodes (i..i+1, j..j+1, k..k+1).
  std::size_t cell_index(int i, int j, int k) const {
    const std::size_t m = static_cast<std::size_t>(n_ - 1);
    return static_cast<std::size_t>(i) + m * (j + m * static_cast<std::size_t>(k));
  }
  std::size_t cell_count() const { return static_cast<std::size_t>(n_ - 1) * (n_ - 1) * (n_ - 1); }
  /// Fraction of the cell volume inside the analytic domain (4^3 subsamples on cut cells).
  double cell_fraction(std::size_t c) const { return cell_fraction_[c]; }
  /// Active cells: nonzero domain fraction and at least one edge with both ends masked.
  bool cell_active(std::size_t c) const { return cell_active_[c]; }
  const std::vector<std::size_t>& active_cells() const { return active_cells_; }
  Vec3 cell_center(std::size_t c) const {
    const auto [i, j, k] = cell_ijk(c);
    return {coord(i) + 0.5 * h_, coord(j) + 0.5 * h_, coord(k) + 0.5 * h_};
  }
  std::array<int, 3> cell_ijk(std::size_t c) const {
    const std::size_t m = static_cast<std::size_t>(n_ - 1);
    return {static_cast<int>(c % m), static_cast<int>((c / m) % m), static_cast<int>(c / (m * m))};
  }

  /// Volume of the cells whose eight corners are all masked.
  double grid_volume() const { return static_cast<double>(full_cells_) * h_ * h_ * h_; }
  /// Volume of the domain as seen by the energy quadrature (sum of cell fractions).
  double quadrature_volume() const {
    double v = 0.0;
    for (auto c : active_cells_) v += cell_fraction_[c];
    return v * h_ * h_ * h_;
  }

  const Surface& surface() const { return *surface_; }
  std::shared_ptr<const Surface> surface_ptr() const { return surface_; }

  /// Membership of the analytic closed domain.
  bool contains(const Vec3& p, double tol = 1e-12) const {
    switch (kind_) {
      case DomainKind::cube:
        return std::abs(p.x) <= 1.0 + tol && std::abs(p.y) <= 1.0 + tol && std::abs(p.z) <= 1.0 + tol;
      case DomainKind::ball: return norm2(p) <= 1.0 + tol;
      case DomainKind::half_ball: return norm2(p) <= 1.0 + tol && p.z >= -tol;
    }
    return false;
  }

  /// Distance from an interior point to the analytic boundary.
  double boundary_distance(const Vec3& p) const {
    switch (kind_) {
      case DomainKind::cube:
        return std::max(0.0, 1.0 - std::max({std::abs(p.x), std::abs(p.y), std::abs(p.z)}));
      case DomainKind::ball: return std::max(0.0, 1.0 - norm(p));
      case DomainKind::half_ball: return std::max(0.0, std::min(1.0 - norm(p), p.z));
    }
    return 0.0;
  }

  double analytic_volume() const {
    switch (kind_) {
      case DomainKind::cube: return 8.0;
      case DomainKind::ball: return 4.0 * pi / 3.0;
      case DomainKind::half_ball: return 2.0 * pi / 3.0;
    }
    return 0.0;
  }
  double analytic_area() const {
    switch (kind_) {
      case DomainKind::cube: return 24.0;
      case DomainKind::ball: return 4.0 * pi;
      case DomainKind::half_ball: return 3.0 * pi;
    }
    return 0.0;
  }

  friend std::shared_ptr<const DomainGrid> build_domain(DomainKind kind, int n);

 private:
  DomainGrid() = default;

  DomainKind kind_ = DomainKind::cube;
  int n_ = 0;
  double h_ = 0.0;
  std::vector<NodeState> state_;
  std::vector<std::size_t> interior_, shell_, masked_;
  std::vector<double> cell_fraction_;
  std::vector<bool> cell_active_;
  std::vector<std::size_t> active_cells_;
  std::size_t full_cells_ = 0;
  std::shared_ptr<const Surface> surface_;
};

using GridPtr = std::shared_ptr<const DomainGrid>;

namespace detail {

/// Boundary nodes of the cube become surface vertices; each face square is split in two.
inline Surface cube_surface(const DomainGrid& g) {
  Surface s;
  const int n = g.n();
  std::vector<std::int64_t> vid(g.node_count(), -1);
  for (std::size_t idx = 0; idx < g.node_count(); ++idx) {
    const auto [i, j, k] = g.ijk(idx);
    if (i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1) {
      vid[idx] = static_cast<std::int64_t>(s.positions.size());
      s.positions.push_back(g.position(idx));
    }
  }
  // Each face: fixed axis `a` at index 0 or n-1, spanned by axes b, c.
  for (int a = 0; a < 3; ++a)
    for (int side : {0, n - 1}) {
      const int b = (a + 1) % 3, c = (a + 2) % 3;
      for (int u = 0; u + 1 < n; ++u)
        for (int v = 0; v + 1 < n; ++v) {
          auto node = [&](int du, int dv) {
            std::array<int, 3> q{};
            q[a] = side;
            q[b] = u + du;
            q[c] = v + dv;
            return static_cast<std::uint32_t>(vid[g.index(q[0], q[1], q[2])]);
          };
          s.triangles.push_back({node(0, 0), node(1, 0), node(1, 1)});
          s.triangles.push_back({node(0, 0), node(1, 1), node(0, 1)});
          s.triangle_tags.push_back(SurfaceTag::flat);
          s.triangle_tags.push_back(SurfaceTag::flat);
        }
    }
  s.finalize();
  return s;
}

}  // namespace detail

/// Builds the masked grid and boundary triangulation for `kind` with `n` nodes per axis.
inline std::shared_ptr<const DomainGrid> build_domain(DomainKind kind, int n) {
  if (n < 9 || n % 2 == 0)
    throw InvalidArgument("build_domain: n must be odd and >= 9 (got " + std::to_string(n) + ")");
  std::shared_ptr<DomainGrid> g(new DomainGrid());
  g->kind_ = kind;
  g->n_ = n;
  g->h_ = 2.0 / (n - 1);
  g->state_.assign(g->node_count(), DomainGrid::NodeState::outside);
  for (std::size_t idx = 0; idx < g->node_count(); ++idx)
    if (g->contains(g->position(idx))) g->state_[idx] = DomainGrid::NodeState::shell;
  for (std::size_t idx = 0; idx < g->node_count(); ++idx) {
    if (!g->masked(idx)) continue;
    const auto [i, j, k] = g->ijk(idx);
    const bool all = g->masked(i - 1, j, k) && g->masked(i + 1, j, k) && g->masked(i, j - 1, k) &&
                     g->masked(i, j + 1, k) && g->masked(i, j, k - 1) && g->masked(i, j, k + 1);
    if (all) g->state_[idx] = DomainGrid::NodeState::interior;
  }
  for (std::size_t idx = 0; idx < g->node_count(); ++idx) {
    if (g->state_[idx] == DomainGrid::NodeState::interior) g->interior_.push_back(idx);
    if (g->state_[idx] == DomainGrid::NodeState::shell) g->shell_.push_back(idx);
    if (g->masked(idx)) g->masked_.push_back(idx);
  }
  g->cell_fraction_.assign(g->cell_count(), 0.0);
  g->cell_active_.assign(g->cell_count(), false);
  const double h = g->h_;
  for (int k = 0; k + 1 < n; ++k)
    for (int j = 0; j + 1 < n; ++j)
      for (int i = 0; i + 1 < n; ++i) {
        int corners = 0;
        for (int b = 0; b < 8; ++b) corners += g->masked(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
        if (corners == 0) continue;
        bool edge = false;
        for (int b = 0; b < 8 && !edge; ++b)
          for (int axis = 0; axis < 3; ++axis) {
            if (b & (1 << axis)) continue;
            const int o = b | (1 << axis);
            if (g->masked(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1)) &&
                g->masked(i + (o & 1), j + ((o >> 1) & 1), k + ((o >> 2) & 1)))
              edge = true;
          }
        const auto c = g->cell_index(i, j, k);
        if (corners == 8) {
          ++g->full_cells_;
          g->cell_fraction_[c] = 1.0;  // all supported domains are convex
        } else {
          constexpr int sub = 4;
          int inside = 0;
          const Vec3 base = g->position(i, j, k);
          for (int a = 0; a < sub; ++a)
            for (int b = 0; b < sub; ++b)
              for (int d = 0; d < sub; ++d)
                inside += g->contains(base + Vec3{(a + 0.5) * h / sub, (b + 0.5) * h / sub, (d + 0.5) * h / sub});
          g->cell_fraction_[c] = static_cast<double>(inside) / (sub * sub * sub);
        }
        if (edge && g->cell_fraction_[c] > 0.0) {
          g->cell_active_[c] = true;
          g->active_cells_.push_back(c);
        }
      }

  switch (kind) {
    case DomainKind::cube: g->surface_ = std::make_shared<const Surface>(detail::cube_surface(*g)); break;
    case DomainKind::ball: {
      const int level = std::max(2, static_cast<int>(std::lround(std::log2(1.0515 / g->h_))));
      g->surface_ = std::make_shared<const Surface>(detail::icosphere(level));
      break;
    }
    case DomainKind::half_ball:
      g->surface_ = std::make_shared<const Surface>(detail::half_ball_surface(g->h_));
      break;
  }
  return g;
}

}  // namespace hmlab
