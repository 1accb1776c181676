#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hmlab/field.hpp"

using namespace hmlab;

namespace {

std::size_t node_at(const DomainGrid& g, const Vec3& p) {
  auto idx = [&](double c) { return static_cast<int>(std::lround((c + 1.0) / g.h())); };
  return g.index(idx(p.x), idx(p.y), idx(p.z));
}

void expect_vec(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.x, b.x, tol);
  EXPECT_NEAR(a.y, b.y, tol);
  EXPECT_NEAR(a.z, b.z, tol);
}

}  // namespace

TEST(Hedgehog, RadialValues) {
  auto g = build_domain(DomainKind::ball, 9);
  auto u = hedgehog(g, {0, 0, 0});
  expect_vec(u[node_at(*g, {1, 0, 0})], {1, 0, 0}, 1e-15);
  expect_vec(u[node_at(*g, {0, -0.5, 0})], {0, -1, 0}, 1e-15);
  auto v = hedgehog(build_domain(DomainKind::ball, 11), {0.2, 0, 0});
  expect_vec(v[node_at(v.grid(), {0.2, 0, 0.4})], {0, 0, 1}, 1e-15);
}

TEST(Hedgehog, CoincidentNodeGetsE3) {
  auto g = build_domain(DomainKind::ball, 9);
  auto u = hedgehog(g, {0, 0, 0});
  expect_vec(u[node_at(*g, {0, 0, 0})], e3, 0.0);
}

TEST(Fields, UnitInvariantEnforced) {
  auto g = build_domain(DomainKind::cube, 9);
  std::vector<Vec3> nodes(g->node_count(), e3), verts(g->surface().size(), e3);
  nodes[g->interior_nodes().front()] = {0, 0, 1.0 + 1e-9};
  EXPECT_THROW(SphereField(g, nodes, verts), InvalidArgument);
  EXPECT_NO_THROW(VectorField(g, nodes, verts));
  nodes[g->interior_nodes().front()] = {std::nan(""), 0, 0};
  EXPECT_THROW(VectorField(g, nodes, verts), InvalidArgument);
  EXPECT_THROW(BoundaryTrace(g->surface_ptr(), std::vector<Vec3>(g->surface().size(), Vec3{2, 0, 0})), InvalidArgument);
}

TEST(Fields, UnmaskedNodesHoldNaN) {
  auto g = build_domain(DomainKind::ball, 9);
  auto u = constant_field(g, e3);
  for (std::size_t i = 0; i < g->node_count(); ++i)
    if (!g->masked(i)) {
      EXPECT_TRUE(std::isnan(u[i].x));
    }
}

TEST(RestrictTrace, ConstantField) {
  auto g = build_domain(DomainKind::half_ball, 17);
  const auto t = restrict_trace(constant_field(g, e3));
  for (const auto& v : t.values()) expect_vec(v, e3, 1e-14);
}

TEST(RestrictTrace, HedgehogGivesIdentityMap) {
  auto g = build_domain(DomainKind::ball, 33);
  const auto t = restrict_trace(hedgehog(g, {0, 0, 0}));
  for (std::size_t v = 0; v < t.size(); ++v)
    EXPECT_LE(distance(t.values()[v], normalized(g->surface().positions[v])), 2.0 * g->h());
}

TEST(RestrictTrace, OffCentreHedgehogMatchesDirectEvaluation) {
  auto g = build_domain(DomainKind::ball, 33);
  const Vec3 c{0, 0, 0.3};
  const auto t = restrict_trace(hedgehog(g, c));
  for (std::size_t v = 0; v < t.size(); ++v) {
    const Vec3 x = g->surface().positions[v];
    const Vec3 expected = (x - c) / norm(x - c);
    EXPECT_LE(distance(t.values()[v], expected), 2.0 * g->h());
  }
}

TEST(Trilinear, ReproducesLinearFunctions) {
  auto g = build_domain(DomainKind::cube, 9);
  std::vector<Vec3> nodes(g->node_count());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Vec3 x = g->position(i);
    nodes[i] = {2.0 * x.x - x.y, x.z + 0.5, x.x + x.y + x.z};
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  for (int t = 0; t < 50; ++t) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    const auto v = trilinear(*g, nodes, p);
    ASSERT_TRUE(v.has_value());
    expect_vec(*v, {2.0 * p.x - p.y, p.z + 0.5, p.x + p.y + p.z}, 1e-13);
  }
  EXPECT_FALSE(trilinear(*g, nodes, {1.5, 0, 0}).has_value());
}

TEST(ShellStencils, ConvexWeightsOnNearbyVertices) {
  for (auto kind : {DomainKind::cube, DomainKind::ball, DomainKind::half_ball}) {
    auto g = build_domain(kind, 17);
    const auto st = shell_stencils(*g);
    EXPECT_EQ(st.size(), g->shell_nodes().size());
    for (const auto& s : st) {
      double sum = 0.0;
      for (double w : s.weights) {
        EXPECT_GE(w, -1e-12);
        sum += w;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      for (auto v : s.vertices) EXPECT_LE(distance(g->surface().positions[v], g->position(s.node)), 3.0 * g->h());
    }
  }
}

TEST(ShellStencils, ConstantTraceGivesConstantShell) {
  auto g = build_domain(DomainKind::ball, 17);
  const BoundaryTrace t(g->surface_ptr(), std::vector<Vec3>(g->surface().size(), e2));
  for (const auto& [idx, v] : shell_values(t, shell_stencils(*g))) expect_vec(v, e2, 1e-14);
}

TEST(RotateValues, PreservesUnitNorm) {
  auto g = build_domain(DomainKind::ball, 17);
  const auto r = rotation(normalized(Vec3{1, 2, 3}), 0.7);
  const auto u = rotate_values(hedgehog(g, {0.1, 0, 0}), r);
  for (auto idx : g->masked_nodes()) EXPECT_NEAR(norm(u[idx]), 1.0, 1e-12);
}
