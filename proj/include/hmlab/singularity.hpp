#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hmlab/domain.hpp"
#include "hmlab/energy.hpp"
#include "hmlab/field.hpp"
#include "hmlab/trace_norms.hpp"

namespace hmlab {

/// Zero radii select the grid-relative defaults.
struct DetectorParams {
  double r_detect = 0.0;             // 4h
  double density_threshold = 4.0 * pi;
  double merge_radius = 0.0;         // 2 r_detect
  double degree_radius = 0.0;        // 6h

  DetectorParams resolved(double h) const {
    DetectorParams p = *this;
    if (p.r_detect <= 0.0) p.r_detect = 4.0 * h;
    if (p.merge_radius <= 0.0) p.merge_radius = 2.0 * p.r_detect;
    if (p.degree_radius <= 0.0) p.degree_radius = 6.0 * h;
    if (p.r_detect < 3.0 * h - 1e-12) throw InvalidArgument("DetectorParams: r_detect must be >= 3h");
    if (!(p.density_threshold > 0.0 && p.merge_radius > 0.0 && p.degree_radius > 0.0))
      throw InvalidArgument("DetectorParams: thresholds must be positive");
    return p;
  }
};

namespace flag {
inline constexpr const char* degree = "degree_not_unit";
inline constexpr const char* density = "density_below_threshold";
inline constexpr const char* probe = "degree_probe_failed";
}  // namespace flag

struct SingularPoint {
  Vec3 location;
  double density = 0.0;  // extrapolated energy density
  int degree = 0;
  double degree_error = 0.0;  // |raw degree - rounded degree|
  double boundary_distance = 0.0;
  std::size_t cluster_size = 0;
  bool star_probe = false;  // degree taken on a shortened probe near the boundary
  std::vector<std::string> flags;

  bool accepted() const { return flags.empty(); }
};

struct DegreeEstimate {
  int degree = 0;
  double raw = 0.0;
  double rounding_error = 0.0;
};

namespace detail {

/// Sums signed solid angles of the sampled values over a probe triangulation.
template <class Sample>
DegreeEstimate probe_degree(const Surface& probe, Sample&& sample) {
  std::vector<Vec3> values(probe.size());
  for (std::size_t v = 0; v < probe.size(); ++v) values[v] = sample(probe.positions[v]);
  double total = 0.0;
  for (const auto& tri : probe.triangles) {
    const Vec3& a = probe.positions[tri[0]];
    const Vec3& b = probe.positions[tri[1]];
    const Vec3& c = probe.positions[tri[2]];
    const double orient = dot(cross(b - a, c - a), a + b + c) >= 0.0 ? 1.0 : -1.0;
    total += orient * solid_angle(values[tri[0]], values[tri[1]], values[tri[2]]);
  }
  const double raw = total / (4.0 * pi);
  const double rounded = std::round(raw);
  return {static_cast<int>(rounded), raw, std::abs(raw - rounded)};
}

inline Surface degree_probe(double r, double h) {
  return icosphere(std::clamp(static_cast<int>(std::ceil(std::log2(1.1 * r / h))), 2, 6));
}

}  // namespace detail

/// Degree of the field on the sphere |x - center| = r: signed spherical area of the
/// value triangles over an icosphere probe, divided by 4 pi.
inline DegreeEstimate degree_on_sphere(const SphereField& f, const Vec3& center, double r) {
  const auto& g = f.grid();
  if (!(r >= 4.0 * g.h() - 1e-12)) throw InvalidArgument("degree_on_sphere: radius must be >= 4h");
  return detail::probe_degree(detail::degree_probe(r, g.h()), [&](const Vec3& dir) {
    const auto s = trilinear(g, f.nodes(), center + r * dir, true);
    if (!s) throw InvalidArgument("degree_on_sphere: probe sphere exits the domain");
    return normalized(*s);
  });
}

/// Same count over a star-shaped probe: each ray of the sphere of radius r is shortened
/// in steps of h/4 until its end point has a full trilinear stencil. Used near the boundary,
/// where no sphere of radius >= 4h fits.
inline DegreeEstimate degree_on_star(const SphereField& f, const Vec3& center, double r) {
  const auto& g = f.grid();
  return detail::probe_degree(detail::degree_probe(r, g.h()), [&](const Vec3& dir) {
    for (double t = r; t >= g.h() - 1e-12; t -= 0.25 * g.h())
      if (const auto s = trilinear(g, f.nodes(), center + t * dir, true)) return normalized(*s);
    throw InvalidArgument("degree_on_star: no admissible probe point along a ray");
  });
}

namespace detail {

/// Summed-volume table of per-cell energies for O(1) box upper bounds.
class CellPrefix {
 public:
  CellPrefix(const DomainGrid& g, const std::vector<double>& per_cell) : m_(g.n() - 1), s_((m_ + 1) * (m_ + 1) * (m_ + 1), 0.0) {
    for (int k = 0; k < m_; ++k)
      for (int j = 0; j < m_; ++j)
        for (int i = 0; i < m_; ++i)
          at(i + 1, j + 1, k + 1) = per_cell[g.cell_index(i, j, k)] + at(i, j + 1, k + 1) + at(i + 1, j, k + 1) +
                                    at(i + 1, j + 1, k) - at(i, j, k + 1) - at(i, j + 1, k) - at(i + 1, j, k) +
                                    at(i, j, k);
  }
  /// Sum over cells [i0, i1) x [j0, j1) x [k0, k1), clamped to the grid.
  double box(int i0, int i1, int j0, int j1, int k0, int k1) const {
    auto c = [&](int v) { return std::clamp(v, 0, m_); };
    i0 = c(i0), i1 = c(i1), j0 = c(j0), j1 = c(j1), k0 = c(k0), k1 = c(k1);
    if (i0 >= i1 || j0 >= j1 || k0 >= k1) return 0.0;
    return get(i1, j1, k1) - get(i0, j1, k1) - get(i1, j0, k1) - get(i1, j1, k0) + get(i0, j0, k1) +
           get(i0, j1, k0) + get(i1, j0, k0) - get(i0, j0, k0);
  }

 private:
  double& at(int i, int j, int k) { return s_[(static_cast<std::size_t>(k) * (m_ + 1) + j) * (m_ + 1) + i]; }
  double get(int i, int j, int k) const { return s_[(static_cast<std::size_t>(k) * (m_ + 1) + j) * (m_ + 1) + i]; }
  int m_;
  std::vector<double> s_;
};

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a), b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> parent;
};

}  // namespace detail

/// Nodes with r^-1 E(B_r) above the threshold at r = r_detect, clustered by single
/// linkage within merge_radius; one point per cluster at the density-weighted centroid.
inline std::vector<SingularPoint> detect_singularities(const SphereField& f, const DetectorParams& params = {}) {
  const auto& g = f.grid();
  const DetectorParams prm = params.resolved(g.h());
  const double h = g.h(), r = prm.r_detect;
  const auto e = dirichlet_energy(f);
  const detail::CellPrefix prefix(g, e.per_cell);
  const int reach = static_cast<int>(std::ceil(r / h)) + 1;

  struct Hit {
    Vec3 x;
    double d;
  };
  std::vector<Hit> hits;
  for (auto idx : g.masked_nodes()) {
    const auto [i, j, k] = g.ijk(idx);
    const double bound = prefix.box(i - reach, i + reach, j - reach, j + reach, k - reach, k + reach);
    if (bound / r <= prm.density_threshold) continue;
    const Vec3 y = g.position(i, j, k);
    const double d = ball_energy(g, e, y, r) / r;
    if (d > prm.density_threshold) hits.push_back({y, d});
  }

  // Single linkage through a bucket hash of width merge_radius.
  detail::DisjointSets sets(hits.size());
  const double w = prm.merge_radius;
  auto key = [&](long a, long b, long c) { return (a * 73856093L) ^ (b * 19349663L) ^ (c * 83492791L); };
  auto cell = [&](const Vec3& x) {
    return std::array<long, 3>{static_cast<long>(std::floor(x.x / w)), static_cast<long>(std::floor(x.y / w)),
                               static_cast<long>(std::floor(x.z / w))};
  };
  std::unordered_map<long, std::vector<std::size_t>> buckets;
  for (std::size_t a = 0; a < hits.size(); ++a) {
    const auto c = cell(hits[a].x);
    buckets[key(c[0], c[1], c[2])].push_back(a);
  }
  for (std::size_t a = 0; a < hits.size(); ++a) {
    const auto c = cell(hits[a].x);
    for (long dz = -1; dz <= 1; ++dz)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const auto it = buckets.find(key(c[0] + dx, c[1] + dy, c[2] + dz));
          if (it == buckets.end()) continue;
          for (auto b : it->second)
            if (b > a && distance(hits[a].x, hits[b].x) <= w) sets.unite(a, b);
        }
  }
  std::vector<std::size_t> roots;
  std::unordered_map<std::size_t, std::pair<Vec3, double>> acc;
  std::unordered_map<std::size_t, std::size_t> sizes;
  for (std::size_t a = 0; a < hits.size(); ++a) {
    const auto root = sets.find(a);
    if (!acc.count(root)) roots.push_back(root);
    auto& [sx, sw] = acc[root];
    sx += hits[a].d * hits[a].x;
    sw += hits[a].d;
    ++sizes[root];
  }

  std::vector<SingularPoint> out;
  for (auto root : roots) {
    const auto& [sx, sw] = acc[root];
    SingularPoint p;
    p.location = sx / sw;
    p.cluster_size = sizes[root];
    p.boundary_distance = g.boundary_distance(p.location);
    const double d1 = ball_energy(g, e, p.location, r) / r;
    const double d2 = ball_energy(g, e, p.location, 2.0 * r) / (2.0 * r);
    p.density = 2.0 * d2 - d1;
    if (p.density < prm.density_threshold) p.flags.push_back(flag::density);
    std::optional<DegreeEstimate> deg;
    for (double rd = prm.degree_radius; rd >= 4.0 * h - 1e-12 && !deg; rd -= h) {
      try {
        deg = degree_on_sphere(f, p.location, rd);
      } catch (const InvalidArgument&) {
      }
    }
    if (!deg) {
      try {
        deg = degree_on_star(f, p.location, prm.degree_radius);
        p.star_probe = true;
      } catch (const InvalidArgument&) {
      }
    }
    if (deg) {
      p.degree = deg->degree;
      p.degree_error = deg->rounding_error;
      if (std::abs(p.degree) != 1) p.flags.push_back(flag::degree);
    } else {
      p.flags.push_back(flag::probe);
    }
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const SingularPoint& a, const SingularPoint& b) {
    if (a.location.x != b.location.x) return a.location.x < b.location.x;
    if (a.location.y != b.location.y) return a.location.y < b.location.y;
    return a.location.z < b.location.z;
  });
  return out;
}

struct SeparationPair {
  std::size_t i = 0, j = 0;
  double distance = 0.0;
  double min_boundary_distance = 0.0;
};

struct SeparationReport {
  std::vector<SeparationPair> pairs;
  std::optional<double> c_emp;  // min over pairs of distance / min boundary distance
};

inline SeparationReport separation_audit(const std::vector<SingularPoint>& points) {
  SeparationReport rep;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double d = distance(points[i].location, points[j].location);
      const double m = std::min(points[i].boundary_distance, points[j].boundary_distance);
      rep.pairs.push_back({i, j, d, m});
      if (m > 0.0) rep.c_emp = std::min(rep.c_emp.value_or(d / m), d / m);
    }
  return rep;
}

struct LayerCensus {
  std::size_t within = 0;  // boundary_distance < depth
  std::size_t deeper = 0;
};

inline LayerCensus boundary_layer_census(const std::vector<SingularPoint>& points, double depth) {
  if (!(depth > 0.0)) throw InvalidArgument("boundary_layer_census: depth must be positive");
  LayerCensus c;
  for (const auto& p : points) (p.boundary_distance < depth ? c.within : c.deeper) += 1;
  return c;
}

}  // namespace hmlab
