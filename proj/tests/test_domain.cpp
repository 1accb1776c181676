#include <gtest/gtest.h>

#include <cmath>

#include "hmlab/domain.hpp"

using namespace hmlab;

TEST(BuildDomain, RejectsEvenOrSmallN) {
  EXPECT_THROW(build_domain(DomainKind::ball, 32), InvalidArgument);
  EXPECT_THROW(build_domain(DomainKind::cube, 7), InvalidArgument);
  EXPECT_NO_THROW(build_domain(DomainKind::cube, 9));
}

TEST(BuildDomain, ParsesKinds) {
  EXPECT_EQ(parse_domain_kind("ball"), DomainKind::ball);
  EXPECT_EQ(parse_domain_kind("half-ball"), DomainKind::half_ball);
  EXPECT_EQ(parse_domain_kind("cube"), DomainKind::cube);
  EXPECT_THROW(parse_domain_kind("torus"), InvalidArgument);
}

TEST(BuildDomain, CubeNinePartition) {
  auto g = build_domain(DomainKind::cube, 9);
  EXPECT_DOUBLE_EQ(g->h(), 0.25);
  EXPECT_EQ(g->masked_nodes().size(), 729u);
  EXPECT_EQ(g->interior_nodes().size(), 343u);
  EXPECT_EQ(g->shell_nodes().size(), 729u - 343u);
  const auto& s = g->surface();
  EXPECT_EQ(s.size(), 386u);              // boundary nodes of the 9^3 lattice
  EXPECT_EQ(s.triangles.size(), 768u);    // 6 faces x 64 squares x 2
  EXPECT_NEAR(s.total_area(), 24.0, 1e-12);
}

TEST(BuildDomain, InteriorNodesHaveSixMaskedNeighbours) {
  for (auto kind : {DomainKind::cube, DomainKind::ball, DomainKind::half_ball}) {
    auto g = build_domain(kind, 17);
    for (auto idx : g->interior_nodes()) {
      const auto [i, j, k] = g->ijk(idx);
      EXPECT_TRUE(g->masked(i + 1, j, k) && g->masked(i - 1, j, k) && g->masked(i, j + 1, k) &&
                  g->masked(i, j - 1, k) && g->masked(i, j, k + 1) && g->masked(i, j, k - 1));
    }
    for (auto idx : g->masked_nodes()) EXPECT_TRUE(g->contains(g->position(idx), 1e-12));
  }
}

TEST(BuildDomain, SurfaceOnAnalyticBoundary) {
  for (auto kind : {DomainKind::ball, DomainKind::half_ball}) {
    auto g = build_domain(kind, 33);
    for (const auto& x : g->surface().positions) {
      double d = std::abs(norm(x) - 1.0);
      if (kind == DomainKind::half_ball) d = std::min(d, std::abs(x.z));
      EXPECT_LE(d, 0.5 * g->h());
    }
  }
}

TEST(BuildDomain, BallAreaWithinOnePercent) {
  auto g = build_domain(DomainKind::ball, 33);
  EXPECT_NEAR(g->surface().total_area() / (4.0 * pi), 1.0, 0.01);
}

TEST(BuildDomain, HalfBallTaggedAreas) {
  auto g = build_domain(DomainKind::half_ball, 33);
  EXPECT_NEAR(g->surface().tagged_area(SurfaceTag::flat) / pi, 1.0, 0.01);
  EXPECT_NEAR(g->surface().tagged_area(SurfaceTag::curved) / (2.0 * pi), 1.0, 0.01);
  double wsum = 0.0;
  for (double w : g->surface().weights) wsum += w;
  EXPECT_NEAR(wsum / (3.0 * pi), 1.0, 0.01);
}

TEST(BuildDomain, AreaAndVolumeConvergeAtLeastFirstOrder) {
  for (auto kind : {DomainKind::ball, DomainKind::half_ball}) {
    double area_err[3], vol_err[3];
    int a = 0;
    for (int n : {17, 33, 65}) {
      auto g = build_domain(kind, n);
      area_err[a] = std::abs(g->surface().total_area() - g->analytic_area());
      vol_err[a] = std::abs(g->grid_volume() - g->analytic_volume());
      ++a;
    }
    EXPECT_GE(area_err[0] / area_err[1], 1.7) << to_string(kind);
    EXPECT_GE(area_err[1] / area_err[2], 1.7) << to_string(kind);
    EXPECT_GE(vol_err[0] / vol_err[1], 1.7) << to_string(kind);
    EXPECT_GE(vol_err[1] / vol_err[2], 1.7) << to_string(kind);
  }
}

TEST(BuildDomain, Deterministic) {
  auto a = build_domain(DomainKind::half_ball, 17);
  auto b = build_domain(DomainKind::half_ball, 17);
  EXPECT_EQ(a->masked_nodes(), b->masked_nodes());
  ASSERT_EQ(a->surface().size(), b->surface().size());
  for (std::size_t v = 0; v < a->surface().size(); ++v) {
    EXPECT_EQ(a->surface().positions[v].x, b->surface().positions[v].x);
    EXPECT_EQ(a->surface().weights[v], b->surface().weights[v]);
  }
}

TEST(BuildDomain, IndexRoundTrip) {
  auto g = build_domain(DomainKind::cube, 9);
  for (std::size_t idx = 0; idx < g->node_count(); idx += 37) {
    const auto [i, j, k] = g->ijk(idx);
    EXPECT_EQ(g->index(i, j, k), idx);
  }
  EXPECT_DOUBLE_EQ(g->position(4, 4, 4).x, 0.0);
}

TEST(BuildDomain, QuadratureVolumeMatchesAnalytic) {
  for (auto kind : {DomainKind::cube, DomainKind::ball, DomainKind::half_ball}) {
    auto g = build_domain(kind, 33);
    EXPECT_NEAR(g->quadrature_volume() / g->analytic_volume(), 1.0, 0.005) << to_string(kind);
  }
}
