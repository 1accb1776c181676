#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hmlab/domain.hpp"
#include "hmlab/vec3.hpp"

namespace hmlab {

inline constexpr double unit_tolerance = 1e-12;

inline Vec3 nan_vec() {
  const double q = std::numeric_limits<double>::quiet_NaN();
  return {q, q, q};
}

struct UnitValued {
  static constexpr bool unit = true;
  static constexpr const char* name = "SphereField";
};
struct FreeValued {
  static constexpr bool unit = false;
  static constexpr const char* name = "VectorField";
};

/// Values on the masked nodes of a grid plus one value per boundary vertex.
/// Unmasked nodes always hold NaN triplets.
template <class Policy>
class BasicField {
 public:
  BasicField(GridPtr grid, std::vector<Vec3> nodes, std::vector<Vec3> vertices)
      : grid_(std::move(grid)), nodes_(std::move(nodes)), vertices_(std::move(vertices)) {
    if (!grid_) throw InvalidArgument(std::string(Policy::name) + ": null grid");
    if (nodes_.size() != grid_->node_count())
      throw InvalidArgument(std::string(Policy::name) + ": node count mismatch");
    if (vertices_.size() != grid_->surface().size())
      throw InvalidArgument(std::string(Policy::name) + ": vertex count mismatch");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!grid_->masked(i)) {
        nodes_[i] = nan_vec();
        continue;
      }
      check(nodes_[i]);
    }
    for (const auto& v : vertices_) check(v);
  }

  const DomainGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const Vec3& operator[](std::size_t idx) const { return nodes_[idx]; }

 private:
  static void check(const Vec3& v) {
    if (!is_finite(v)) throw InvalidArgument(std::string(Policy::name) + ": non-finite value");
    if constexpr (Policy::unit) {
      if (std::abs(norm(v) - 1.0) > unit_tolerance)
        throw InvalidArgument(std::string(Policy::name) + ": value is not unit length");
    }
  }

  GridPtr grid_;
  std::vector<Vec3> nodes_;
  std::vector<Vec3> vertices_;
};

using SphereField = BasicField<UnitValued>;
using VectorField = BasicField<FreeValued>;

/// Unit-valued map on the vertices of a boundary surface.
class BoundaryTrace {
 public:
  BoundaryTrace(std::shared_ptr<const Surface> surface, std::vector<Vec3> values)
      : surface_(std::move(surface)), values_(std::move(values)) {
    if (!surface_) throw InvalidArgument("BoundaryTrace: null surface");
    if (values_.size() != surface_->size()) throw InvalidArgument("BoundaryTrace: vertex count mismatch");
    for (const auto& v : values_)
      if (!is_finite(v) || std::abs(norm(v) - 1.0) > unit_tolerance)
        throw InvalidArgument("BoundaryTrace: value is not unit length");
  }

  const Surface& surface() const { return *surface_; }
  const std::shared_ptr<const Surface>& surface_ptr() const { return surface_; }
  const std::vector<Vec3>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::shared_ptr<const Surface> surface_;
  std::vector<Vec3> values_;
};

/// Renormalizes every entry; zero vectors map to e3.
inline std::vector<Vec3> normalize_all(std::vector<Vec3> values) {
  for (auto& v : values)
    if (is_finite(v)) v = normalized(v);
  return values;
}

template <class F>
SphereField make_sphere_field(const GridPtr& grid, F&& f) {
  std::vector<Vec3> nodes(grid->node_count(), nan_vec());
  for (auto idx : grid->masked_nodes()) nodes[idx] = normalized(f(grid->position(idx)));
  std::vector<Vec3> verts;
  verts.reserve(grid->surface().size());
  for (const auto& p : grid->surface().positions) verts.push_back(normalized(f(p)));
  return SphereField(grid, std::move(nodes), std::move(verts));
}

inline SphereField constant_field(const GridPtr& grid, const Vec3& value) {
  const Vec3 c = normalized(value);
  return make_sphere_field(grid, [c](const Vec3&) { return c; });
}

/// The map x -> (x - center)/|x - center|. A node coinciding with the center gets e3.
inline SphereField hedgehog(const GridPtr& grid, const Vec3& center) {
  return make_sphere_field(grid, [center](const Vec3& x) {
    const Vec3 d = x - center;
    return norm(d) < 1e-14 ? e3 : d / norm(d);
  });
}

/// Applies a fixed target rotation to every value.
template <class Policy>
BasicField<Policy> rotate_values(const BasicField<Policy>& f, const Mat3& r) {
  auto nodes = f.nodes();
  for (auto idx : f.grid().masked_nodes()) nodes[idx] = r * nodes[idx];
  auto verts = f.vertices();
  for (auto& v : verts) v = r * v;
  if constexpr (Policy::unit) {
    for (auto idx : f.grid().masked_nodes()) nodes[idx] = normalized(nodes[idx]);
    verts = normalize_all(std::move(verts));
  }
  return BasicField<Policy>(f.grid_ptr(), std::move(nodes), std::move(verts));
}

inline BoundaryTrace rotate_values(const BoundaryTrace& t, const Mat3& r) {
  auto v = t.values();
  for (auto& x : v) x = normalized(r * x);
  return BoundaryTrace(t.surface_ptr(), std::move(v));
}

/// Trilinear sample of node values at p. In strict mode all eight corners must be
/// masked; otherwise the masked corners are used with renormalized weights.
inline std::optional<Vec3> trilinear(const DomainGrid& g, std::span<const Vec3> nodes, const Vec3& p,
                                     bool strict = true) {
  const double h = g.h();
  const double fx = (p.x + 1.0) / h, fy = (p.y + 1.0) / h, fz = (p.z + 1.0) / h;
  const int n = g.n();
  auto base = [n](double f) { return std::clamp(static_cast<int>(std::floor(f)), 0, n - 2); };
  const int i = base(fx), j = base(fy), k = base(fz);
  const double tx = fx - i, ty = fy - j, tz = fz - k;
  if (tx < -1e-9 || ty < -1e-9 || tz < -1e-9 || tx > 1 + 1e-9 || ty > 1 + 1e-9 || tz > 1 + 1e-9)
    return std::nullopt;
  Vec3 acc;
  double wsum = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
    const double w = (di ? tx : 1 - tx) * (dj ? ty : 1 - ty) * (dk ? tz : 1 - tz);
    if (!g.masked(i + di, j + dj, k + dk)) {
      if (strict) return std::nullopt;
      continue;
    }
    acc += w * nodes[g.index(i + di, j + dj, k + dk)];
    wsum += w;
  }
  if (wsum <= 1e-12) return std::nullopt;
  return acc / wsum;
}

/// Boundary trace of the field: node values interpolated at the surface vertices
/// (masked corners of the containing cell) and renormalized.
inline BoundaryTrace restrict_trace(const SphereField& f) {
  const auto& s = f.grid().surface();
  std::vector<Vec3> values;
  values.reserve(s.size());
  for (const auto& p : s.positions) {
    auto v = trilinear(f.grid(), f.nodes(), p, false);
    if (!v || norm(*v) < 1e-12) throw InvalidArgument("restrict_trace: interpolation stencil leaves the domain");
    values.push_back(normalized(*v));
  }
  return BoundaryTrace(f.grid().surface_ptr(), std::move(values));
}

/// The prescribed boundary datum carried by the field's vertex values.
inline BoundaryTrace vertex_trace(const SphereField& f) {
  return BoundaryTrace(f.grid().surface_ptr(), f.vertices());
}

namespace detail {

/// Closest point to p on triangle abc, returned as barycentric weights.
inline std::array<double, 3> closest_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {1 - v, v, 0};
  }
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {1 - w, 0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1 - v - w, v, w};
}

/// Uniform bucket grid over surface vertices for nearest-vertex queries.
class VertexLocator {
 public:
  explicit VertexLocator(const Surface& s, double cell) : s_(s), cell_(cell) {
    for (std::uint32_t v = 0; v < s.size(); ++v) buckets_[key(s.positions[v])].push_back(v);
  }

  std::uint32_t nearest(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    const auto [ci, cj, ck] = coords(p);
    for (int ring = 0;; ++ring) {
      for (int a = -ring; a <= ring; ++a)
        for (int b = -ring; b <= ring; ++b)
          for (int c = -ring; c <= ring; ++c) {
            if (std::max({std::abs(a), std::abs(b), std::abs(c)}) != ring) continue;
            auto it = buckets_.find(pack(ci + a, cj + b, ck + c));
            if (it == buckets_.end()) continue;
            for (auto v : it->second) {
              const double d = norm2(s_.positions[v] - p);
              if (d < best || (d == best && v < arg)) {
                best = d;
                arg = v;
              }
            }
          }
      // Anything in a later ring is at least ring*cell away.
      if (best < std::numeric_limits<double>::infinity() && std::sqrt(best) <= ring * cell_) break;
      if (ring > 4096) break;
    }
    return arg;
  }

 private:
  std::array<long, 3> coords(const Vec3& p) const {
    return {static_cast<long>(std::floor(p.x / cell_)), static_cast<long>(std::floor(p.y / cell_)),
            static_cast<long>(std::floor(p.z / cell_))};
  }
  static long long pack(long i, long j, long k) {
    return ((static_cast<long long>(i) + 1048576) << 42) | ((static_cast<long long>(j) + 1048576) << 21) |
           (static_cast<long long>(k) + 1048576);
  }
  long long key(const Vec3& p) const {
    const auto [i, j, k] = coords(p);
    return pack(i, j, k);
  }

  const Surface& s_;
  double cell_;
  std::unordered_map<long long, std::vector<std::uint32_t>> buckets_;
};

}  // namespace detail

/// Barycentric stencil from surface vertices to one shell node.
struct ShellStencil {
  std::size_t node;
  std::array<std::uint32_t, 3> vertices;
  std::array<double, 3> weights;
};

/// For each shell node: closest point on the triangles around the nearest surface vertex.
inline std::vector<ShellStencil> shell_stencils(const DomainGrid& g) {
  const auto& s = g.surface();
  std::vector<std::vector<std::uint32_t>> incident(s.size());
  for (std::uint32_t t = 0; t < s.triangles.size(); ++t)
    for (auto v : s.triangles[t]) incident[v].push_back(t);
  detail::VertexLocator locator(s, std::max(g.h(), s.mean_edge_length()));
  std::vector<ShellStencil> out;
  out.reserve(g.shell_nodes().size());
  for (auto idx : g.shell_nodes()) {
    const Vec3 p = g.position(idx);
    const auto v0 = locator.nearest(p);
    ShellStencil best{idx, {v0, v0, v0}, {1, 0, 0}};
    double best_d = norm2(s.positions[v0] - p);
    for (auto t : incident[v0]) {
      const auto& tri = s.triangles[t];
      const auto w = detail::closest_barycentric(p, s.positions[tri[0]], s.positions[tri[1]], s.positions[tri[2]]);
      const Vec3 q = w[0] * s.positions[tri[0]] + w[1] * s.positions[tri[1]] + w[2] * s.positions[tri[2]];
      const double d = norm2(q - p);
      if (d < best_d - 1e-15) {
        best_d = d;
        best = {idx, tri, w};
      }
    }
    out.push_back(best);
  }
  return out;
}

/// Shell node values implied by a trace (barycentric, renormalized).
inline std::vector<std::pair<std::size_t, Vec3>> shell_values(const BoundaryTrace& trace,
                                                              const std::vector<ShellStencil>& stencils) {
  std::vector<std::pair<std::size_t, Vec3>> out;
  out.reserve(stencils.size());
  for (const auto& st : stencils) {
    Vec3 v;
    for (int c = 0; c < 3; ++c) v += st.weights[c] * trace.values()[st.vertices[c]];
    out.emplace_back(st.node, normalized(v));
  }
  return out;
}

}  // namespace hmlab
