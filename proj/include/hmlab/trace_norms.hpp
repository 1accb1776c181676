#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hmlab/domain.hpp"
#include "hmlab/field.hpp"

namespace hmlab {

/// Smoothness s in (0,1] and integrability p >= 2 of a boundary seminorm.
/// The kernel exponent is 2 + s*p (the boundary is two-dimensional).
struct SeminormParams {
  double s = 0.5;
  double p = 2.0;

  double kernel_exponent() const { return 2.0 + s * p; }
  bool gradient_endpoint() const { return s >= 1.0; }

  void validate() const {
    if (!(s > 0.0 && s <= 1.0)) throw InvalidArgument("seminorm: s must lie in (0,1]");
    if (!(p >= 2.0)) throw InvalidArgument("seminorm: p must be >= 2");
  }
};

namespace detail {

inline double pair_term(const Vec3& xi, const Vec3& xj, const Vec3& fi, const Vec3& fj, double half_p,
                        double half_kernel) {
  const double r2 = norm2(xi - xj);
  if (r2 < 1e-28) throw InvalidArgument("seminorm: coincident surface vertices");
  const double d2 = norm2(fi - fj);
  if (d2 == 0.0) return 0.0;
  const double num = half_p == 1.0 ? d2 : std::pow(d2, half_p);
  return num * std::pow(r2, -half_kernel);
}

}  // namespace detail

/// Reference O(M^2) pair sum over all ordered pairs i != j:
///   sum |f_i - f_j|^p / |x_i - x_j|^(2+sp) * w_i * w_j.
inline double gagliardo_naive(const Surface& s, std::span<const Vec3> values, const SeminormParams& prm) {
  prm.validate();
  if (values.size() != s.size()) throw InvalidArgument("seminorm: value count mismatch");
  const double hp = 0.5 * prm.p, hk = 0.5 * prm.kernel_exponent();
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (i == j) continue;
      total += detail::pair_term(s.positions[i], s.positions[j], values[i], values[j], hp, hk) * s.weights[i] *
               s.weights[j];
    }
  return total;
}

/// Same sum evaluated over unordered pairs in row blocks; each block's partial
/// sum is accumulated in block order so the result is deterministic.
inline double gagliardo_blocked(const Surface& s, std::span<const Vec3> values, const SeminormParams& prm,
                                std::size_t block = 256) {
  prm.validate();
  if (values.size() != s.size()) throw InvalidArgument("seminorm: value count mismatch");
  const double hp = 0.5 * prm.p, hk = 0.5 * prm.kernel_exponent();
  const std::size_t m = s.size();
  std::vector<double> partial;
  for (std::size_t b0 = 0; b0 < m; b0 += block) {
    const std::size_t b1 = std::min(m, b0 + block);
    double acc = 0.0;
    for (std::size_t i = b0; i < b1; ++i) {
      const Vec3 xi = s.positions[i], fi = values[i];
      double row = 0.0;
      for (std::size_t j = i + 1; j < m; ++j)
        row += detail::pair_term(xi, s.positions[j], fi, values[j], hp, hk) * s.weights[j];
      acc += row * s.weights[i];
    }
    partial.push_back(acc);
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return 2.0 * total;
}

/// sum over triangles of area * |grad_T f|^p for the piecewise-linear interpolant.
inline double grad_trace_norm(const Surface& s, std::span<const Vec3> values, double p) {
  if (!(p >= 2.0)) throw InvalidArgument("grad_trace_norm: p must be >= 2");
  if (values.size() != s.size()) throw InvalidArgument("grad_trace_norm: value count mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < s.triangles.size(); ++t) {
    const auto& tri = s.triangles[t];
    const Vec3 e1v = s.positions[tri[1]] - s.positions[tri[0]];
    const Vec3 e2v = s.positions[tri[2]] - s.positions[tri[0]];
    const double g11 = dot(e1v, e1v), g12 = dot(e1v, e2v), g22 = dot(e2v, e2v);
    const double det = g11 * g22 - g12 * g12;
    if (det <= 0.0) continue;
    const Vec3 d1 = values[tri[1]] - values[tri[0]];
    const Vec3 d2 = values[tri[2]] - values[tri[0]];
    // |grad f|^2 = [d1 d2] G^{-1} [d1 d2]^T summed over components.
    const double grad2 = (g22 * norm2(d1) - 2.0 * g12 * dot(d1, d2) + g11 * norm2(d2)) / det;
    const double area = 0.5 * std::sqrt(det);
    total += area * (p == 2.0 ? grad2 : std::pow(grad2, 0.5 * p));
  }
  return total;
}

inline double grad_trace_norm(const BoundaryTrace& t, double p) { return grad_trace_norm(t.surface(), t.values(), p); }

/// [f]^p on the surface; s = 1 switches to the tangential-gradient L^p norm.
inline double seminorm_p(const Surface& s, std::span<const Vec3> values, const SeminormParams& prm) {
  prm.validate();
  if (prm.gradient_endpoint()) return grad_trace_norm(s, values, prm.p);
  return gagliardo_blocked(s, values, prm);
}

inline double gagliardo_seminorm_p(const BoundaryTrace& t, const SeminormParams& prm) {
  return seminorm_p(t.surface(), t.values(), prm);
}

/// Seminorm of the difference a - b (not unit valued).
inline double difference_seminorm_p(const BoundaryTrace& a, const BoundaryTrace& b, const SeminormParams& prm) {
  if (a.surface_ptr() != b.surface_ptr() && a.size() != b.size())
    throw InvalidArgument("difference_seminorm_p: traces live on different surfaces");
  std::vector<Vec3> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.values()[i] - b.values()[i];
  return seminorm_p(a.surface(), d, prm);
}

struct LocalizedSeminorm {
  double value = 0.0;   // pair sum restricted to the ball
  double scaled = 0.0;  // rho^(sp-2) * value
  std::size_t vertices = 0;
};

/// Pair sum restricted to vertices inside B_rho(center) (for s = 1: triangles
/// with all corners inside).
inline LocalizedSeminorm localized_seminorm_p(const BoundaryTrace& t, const Vec3& center, double rho,
                                              const SeminormParams& prm) {
  prm.validate();
  const auto& s = t.surface();
  if (!(rho >= 2.0 * s.mean_edge_length()))
    throw InvalidArgument("localized_seminorm_p: rho below twice the mean vertex spacing");
  std::vector<std::size_t> inside;
  for (std::size_t v = 0; v < s.size(); ++v)
    if (distance(s.positions[v], center) <= rho) inside.push_back(v);
  if (inside.size() < 2) throw InvalidArgument("localized_seminorm_p: empty ball");
  LocalizedSeminorm out;
  out.vertices = inside.size();
  if (prm.gradient_endpoint()) {
    Surface sub;
    std::vector<std::int64_t> map(s.size(), -1);
    std::vector<Vec3> vals;
    for (auto v : inside) {
      map[v] = static_cast<std::int64_t>(sub.positions.size());
      sub.positions.push_back(s.positions[v]);
      vals.push_back(t.values()[v]);
    }
    for (std::size_t tr = 0; tr < s.triangles.size(); ++tr) {
      const auto& tri = s.triangles[tr];
      if (map[tri[0]] < 0 || map[tri[1]] < 0 || map[tri[2]] < 0) continue;
      sub.triangles.push_back({static_cast<std::uint32_t>(map[tri[0]]), static_cast<std::uint32_t>(map[tri[1]]),
                               static_cast<std::uint32_t>(map[tri[2]])});
    }
    out.value = grad_trace_norm(sub, vals, prm.p);
  } else {
    const double hp = 0.5 * prm.p, hk = 0.5 * prm.kernel_exponent();
    double total = 0.0;
    for (std::size_t a = 0; a < inside.size(); ++a) {
      const auto i = inside[a];
      double row = 0.0;
      for (std::size_t b = a + 1; b < inside.size(); ++b) {
        const auto j = inside[b];
        row += detail::pair_term(s.positions[i], s.positions[j], t.values()[i], t.values()[j], hp, hk) *
               s.weights[j];
      }
      total += row * s.weights[i];
    }
    out.value = 2.0 * total;
  }
  out.scaled = std::pow(rho, prm.s * prm.p - 2.0) * out.value;
  return out;
}

/// Boundary data families used by the experiments.
struct TraceFamily {
  enum class Kind { identity, constant, bubble, mobius_bubble, k_bubbles, perturbed };

  Kind kind = Kind::identity;
  double lambda = 1.0;                // bubble concentration / k-bubble cap size
  double support = 0.5;               // bubble support radius at lambda = 1 (stereographic chart)
  Vec3 pole = e3;                     // bubble pole
  std::vector<Vec3> poles;            // k-bubble poles
  std::vector<int> signs;             // k-bubble degrees (+1 / -1)
  Vec3 background = e3;               // constant value (constant, k-bubbles)
  double delta = 0.0;                 // perturbation angle
  int mode = 0;                       // perturbation cap selector
  std::shared_ptr<const TraceFamily> base;  // perturbed family's base

  static TraceFamily identity() { return {}; }
  static TraceFamily constant(const Vec3& c) {
    TraceFamily f;
    f.kind = Kind::constant;
    f.background = c;
    return f;
  }
  /// Degree-one profile supported in the chart disk |z| < support * lambda about
  /// `pole`, equal to -pole outside it. Shrinking lambda is a pure chart dilation.
  static TraceFamily bubble(double lambda, const Vec3& pole = e3) {
    TraceFamily f;
    f.kind = Kind::bubble;
    f.lambda = lambda;
    f.pole = pole;
    return f;
  }
  /// Conformal dilation z -> z / lambda of the sphere about `pole` (identity at lambda = 1).
  static TraceFamily mobius_bubble(double lambda, const Vec3& pole = e3) {
    TraceFamily f = bubble(lambda, pole);
    f.kind = Kind::mobius_bubble;
    return f;
  }
  static TraceFamily k_bubbles(double lambda, std::vector<Vec3> poles, std::vector<int> signs,
                               const Vec3& background = e3) {
    TraceFamily f;
    f.kind = Kind::k_bubbles;
    f.lambda = lambda;
    f.poles = std::move(poles);
    f.signs = std::move(signs);
    f.background = background;
    return f;
  }
  static TraceFamily perturbed(TraceFamily base, double delta, int mode = 0) {
    TraceFamily f;
    f.kind = Kind::perturbed;
    f.delta = delta;
    f.mode = mode;
    f.base = std::make_shared<const TraceFamily>(std::move(base));
    return f;
  }
};

/// Chord radius of the cap a perturbation is confined to.
inline constexpr double perturbation_cap_radius = 0.3;

/// Centre of the perturbation cap selected by `mode` (fixed off-pole directions).
inline Vec3 perturbation_center(int mode) {
  static const Vec3 table[] = {{1.0, 0.5, 0.3}, {-0.4, 1.0, 0.2}, {0.3, -0.6, 0.8}, {-0.7, -0.5, -0.4}};
  return normalized(table[((mode % 4) + 4) % 4]);
}

/// Evenly spread poles for k bubbles: on the equator for k <= 4, else a spiral.
inline std::vector<Vec3> default_poles(int k) {
  std::vector<Vec3> out;
  if (k <= 0) return out;
  if (k <= 4) {
    for (int i = 0; i < k; ++i) {
      const double a = 2.0 * pi * i / k;
      out.push_back({std::cos(a), std::sin(a), 0.0});
    }
    return out;
  }
  const double golden = pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < k; ++i) {
    const double z = 0.8 * (1.0 - 2.0 * (i + 0.5) / k);
    const double r = std::sqrt(1.0 - z * z);
    out.push_back({r * std::cos(golden * i), r * std::sin(golden * i), z});
  }
  return out;
}

namespace detail {

/// Orthonormal tangent frame (a, b) with a x b = n.
inline std::pair<Vec3, Vec3> tangent_frame(const Vec3& n) {
  const Vec3 seed = std::abs(n.z) < 0.9 ? e3 : e1;
  const Vec3 a = normalized(cross(seed, n));
  const Vec3 b = cross(n, a);
  return {a, b};
}

/// Stereographic coordinate of x in the tangent plane at `pole` (pole -> 0, -pole -> infinity).
struct Stereo {
  Vec3 pole, a, b;
  explicit Stereo(const Vec3& p) : pole(normalized(p)) {
    const auto fr = tangent_frame(pole);
    a = fr.first;
    b = fr.second;
  }
  /// Returns false at the antipode.
  bool forward(const Vec3& x, double& wa, double& wb) const {
    const double den = 1.0 + dot(x, pole);
    if (den < 1e-14) return false;
    wa = dot(x, a) / den;
    wb = dot(x, b) / den;
    return true;
  }
  Vec3 inverse(double wa, double wb) const {
    const double r2 = wa * wa + wb * wb;
    return (2.0 * wa * a + 2.0 * wb * b + (1.0 - r2) * pole) / (1.0 + r2);
  }
};

inline Vec3 family_value(const TraceFamily& f, const Vec3& position) {
  const Vec3 x = normalized(position);
  switch (f.kind) {
    case TraceFamily::Kind::identity: return x;
    case TraceFamily::Kind::constant: return normalized(f.background);
    case TraceFamily::Kind::mobius_bubble: {
      const Stereo st(f.pole);
      double wa, wb;
      if (!st.forward(x, wa, wb)) return -st.pole;
      return normalized(st.inverse(wa / f.lambda, wb / f.lambda));
    }
    case TraceFamily::Kind::bubble: {
      const Stereo st(f.pole);
      double za, zb;
      if (!st.forward(x, za, zb)) return -st.pole;
      const double radius = f.support * f.lambda;
      za /= radius;
      zb /= radius;
      const double rr = za * za + zb * zb;
      if (rr >= 1.0) return -st.pole;
      const double scale = 2.0 / (1.0 - rr);
      return normalized(st.inverse(scale * za, scale * zb));
    }
    case TraceFamily::Kind::k_bubbles: {
      const Vec3 bg = normalized(f.background);
      // Target chart: 0 -> -background, infinity -> background.
      const Stereo target(-bg);
      const double cap_angle = 2.0 * std::asin(std::min(1.0, f.lambda));
      const double cap_r = std::tan(0.5 * cap_angle);
      for (std::size_t i = 0; i < f.poles.size(); ++i) {
        const Stereo st(f.poles[i]);
        double za, zb;
        if (!st.forward(x, za, zb)) continue;
        const double rr = (za * za + zb * zb) / (cap_r * cap_r);
        if (rr >= 1.0) continue;
        const double scale = 2.0 / (cap_r * (1.0 - rr));
        double wa = scale * za, wb = scale * zb;
        if (f.signs[i] < 0) wb = -wb;
        return normalized(target.inverse(wa, wb));
      }
      return bg;
    }
    case TraceFamily::Kind::perturbed: {
      const Vec3 v = family_value(*f.base, position);
      const Vec3 q = perturbation_center(f.mode);
      const double d = distance(x, q);
      if (d >= perturbation_cap_radius || f.delta == 0.0) return v;
      const double c = std::cos(0.5 * pi * d / perturbation_cap_radius);
      return normalized(rotation(q, f.delta * c * c) * v);
    }
  }
  return x;
}

inline void validate_family(const TraceFamily& f) {
  switch (f.kind) {
    case TraceFamily::Kind::bubble:
    case TraceFamily::Kind::mobius_bubble:
      if (!(f.lambda > 0.0 && f.lambda <= 1.0)) throw InvalidArgument("bubble: lambda must lie in (0,1]");
      if (norm(f.pole) < 1e-12) throw InvalidArgument("bubble: zero pole");
      if (!(f.support > 0.0)) throw InvalidArgument("bubble: support must be positive");
      break;
    case TraceFamily::Kind::k_bubbles:
      if (!(f.lambda > 0.0 && f.lambda <= 0.5)) throw InvalidArgument("k_bubbles: lambda must lie in (0,1/2]");
      if (f.poles.size() != f.signs.size()) throw InvalidArgument("k_bubbles: poles/signs size mismatch");
      for (int sgn : f.signs)
        if (sgn != 1 && sgn != -1) throw InvalidArgument("k_bubbles: signs must be +1 or -1");
      for (std::size_t i = 0; i < f.poles.size(); ++i)
        for (std::size_t j = i + 1; j < f.poles.size(); ++j)
          if (distance(normalized(f.poles[i]), normalized(f.poles[j])) < 4.0 * f.lambda)
            throw InvalidArgument("k_bubbles: overlapping bubbles");
      break;
    case TraceFamily::Kind::perturbed:
      if (!f.base) throw InvalidArgument("perturbed: missing base family");
      validate_family(*f.base);
      break;
    default: break;
  }
}

}  // namespace detail

/// Evaluates the family at every vertex (positions are radially projected first).
inline BoundaryTrace make_trace(const TraceFamily& f, const std::shared_ptr<const Surface>& surface) {
  detail::validate_family(f);
  std::vector<Vec3> v;
  v.reserve(surface->size());
  for (const auto& p : surface->positions) v.push_back(detail::family_value(f, p));
  return BoundaryTrace(surface, std::move(v));
}

/// Interior point used to orient boundary triangles outward.
inline Vec3 orientation_center(const Surface& s) {
  Vec3 c;
  for (std::size_t v = 0; v < s.size(); ++v) c += s.weights[v] * s.positions[v];
  return c / s.total_area();
}

/// Signed solid angle of the spherical triangle (a, b, c).
inline double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double num = dot(a, cross(b, c));
  const double den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
  return 2.0 * std::atan2(num, den);
}

/// Topological degree of a trace: signed image area over 4π with outward-oriented triangles.
inline double trace_degree(const BoundaryTrace& t) {
  const auto& s = t.surface();
  const Vec3 c0 = orientation_center(s);
  double total = 0.0;
  for (const auto& tri : s.triangles) {
    const Vec3& a = s.positions[tri[0]];
    const Vec3& b = s.positions[tri[1]];
    const Vec3& c = s.positions[tri[2]];
    const double orient = dot(cross(b - a, c - a), (a + b + c) / 3.0 - c0) >= 0.0 ? 1.0 : -1.0;
    total += orient * solid_angle(t.values()[tri[0]], t.values()[tri[1]], t.values()[tri[2]]);
  }
  return total / (4.0 * pi);
}

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> lambdas;
  std::vector<double> values;
};

/// Least-squares slope of log y against log x.
inline ScalingFit fit_log_slope(std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() != ys.size() || xs.size() < 3) throw InvalidArgument("fit: need at least 3 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0 && ys[i] > 0.0)) throw InvalidArgument("fit: values must be positive");
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  ScalingFit fit;
  fit.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / m;
  fit.lambdas = std::move(xs);
  fit.values = std::move(ys);
  return fit;
}

/// Fits the exponent of [bubble(λ)]^p against λ on `surface`.
inline ScalingFit fit_scaling_exponent(const std::shared_ptr<const Surface>& surface, std::vector<double> lambdas,
                                       const SeminormParams& prm, const Vec3& pole = e3) {
  if (lambdas.size() < 3) throw InvalidArgument("fit_scaling_exponent: fewer than 3 lambdas");
  const auto [lo, hi] = std::minmax_element(lambdas.begin(), lambdas.end());
  if (*hi < 4.0 * *lo * (1.0 - 1e-12)) throw InvalidArgument("fit_scaling_exponent: lambdas must span a factor >= 4");
  std::vector<double> values;
  for (double l : lambdas) values.push_back(gagliardo_seminorm_p(make_trace(TraceFamily::bubble(l, pole), surface), prm));
  return fit_log_slope(std::move(lambdas), std::move(values));
}

}  // namespace hmlab
