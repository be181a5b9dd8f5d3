#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kcm/phase_grid.hpp"

using namespace kcm;

namespace {

// Dense polar sum of ∫_V v^p dv, independent of the library's node layout.
double dense_moment(int n, double s, int px, int py) {
  const int nr = 4000, na = n == 1 ? 2 : 4000;
  const double dr = (1.0 - s) / nr;
  double sum = 0.0;
  for (int i = 0; i < nr; ++i) {
    const double r = s + (i + 0.5) * dr;
    for (int k = 0; k < na; ++k) {
      double c, sn, w;
      if (n == 1) {
        c = k == 0 ? 1.0 : -1.0;
        sn = 0.0;
        w = dr;
      } else {
        const double a = 2.0 * std::numbers::pi * (k + 0.25) / na;
        c = std::cos(a);
        sn = std::sin(a);
        w = dr * r * 2.0 * std::numbers::pi / na;
      }
      sum += w * std::pow(r * c, px) * std::pow(r * sn, py);
    }
  }
  return sum;
}

}  // namespace

TEST(VelocityQuadrature, OneDimensionalMeasureIsOne) {
  const auto q = build_velocity_quadrature(1, 0.5, 8, 8);
  EXPECT_EQ(q.size(), 16u);
  EXPECT_NEAR(q.measure(), 1.0, 1e-12);
}

TEST(VelocityQuadrature, OddMomentsVanishExactly) {
  for (int n : {1, 2})
    for (int nr : {3, 8, 17}) {
      const auto q = build_velocity_quadrature(n, 0.5, nr, 12);
      EXPECT_EQ(quadrature_moment(q, {1, 0}), 0.0);
      EXPECT_EQ(quadrature_moment(q, {0, 1}), 0.0);
      EXPECT_EQ(quadrature_moment(q, {3, 0}), 0.0);
      EXPECT_EQ(quadrature_moment(q, {2, 1}), 0.0);
    }
}

TEST(VelocityQuadrature, NodesComeInMirrorPairs) {
  const auto q = build_velocity_quadrature(2, 0.3, 5, 10);
  ASSERT_EQ(q.mirror.size(), q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto j = q.mirror[i];
    EXPECT_NEAR(q.nodes[j][0], -q.nodes[i][0], 1e-15);
    EXPECT_NEAR(q.nodes[j][1], -q.nodes[i][1], 1e-15);
    EXPECT_EQ(q.weights[j], q.weights[i]);
  }
}

TEST(VelocityQuadrature, SecondMomentOneDimensional) {
  const double exact = 2.0 * (1.0 - 0.125) / 3.0;
  EXPECT_NEAR(annulus_second_moment(1, 0.5), exact, 1e-15);
  const auto q = build_velocity_quadrature(1, 0.5, 8, 2);
  EXPECT_NEAR(quadrature_moment(q, {2, 0}) / exact - 1.0, 0.0, 1e-3);
  EXPECT_NEAR(dense_moment(1, 0.5, 2, 0), exact, 1e-7);
}

TEST(VelocityQuadrature, SecondMomentTwoDimensional) {
  const double exact = 2.0 * std::numbers::pi * 0.9375 / 8.0;
  EXPECT_NEAR(exact, 0.736310, 1e-6);
  EXPECT_NEAR(dense_moment(2, 0.5, 2, 0), exact, 1e-7);
  const auto q = build_velocity_quadrature(2, 0.5, 16, 16);
  EXPECT_NEAR(quadrature_moment(q, {2, 0}), exact, 1e-3 * exact);
  EXPECT_NEAR(quadrature_moment(q, {0, 2}), exact, 1e-3 * exact);
  EXPECT_NEAR(quadrature_moment(q, {1, 1}), 0.0, 1e-14);
}

TEST(VelocityQuadrature, MeasureMatchesAnnulus) {
  for (int n : {1, 2})
    for (double s : {0.0, 0.25, 0.5, 0.9}) {
      const auto q = build_velocity_quadrature(n, s, 6, 8);
      EXPECT_NEAR(q.measure(), annulus_measure(n, s), 1e-12) << n << " " << s;
    }
}

TEST(VelocityQuadrature, RefinementGainsFourfold) {
  for (int n : {1, 2}) {
    const double exact = annulus_second_moment(n, 0.5);
    double prev = 0.0;
    for (int level = 0; level < 3; ++level) {
      const int nr = 4 << level;
      const auto q = build_velocity_quadrature(n, 0.5, nr, n == 1 ? 2 : 8 << level);
      const double err = std::abs(quadrature_moment(q, {2, 0}) - exact);
      if (level > 0) {
        EXPECT_GE(prev / err, 4.0 * (1.0 - 1e-6)) << "n=" << n << " level " << level;
      }
      prev = err;
    }
  }
}

TEST(VelocityQuadrature, RejectsInvalidInput) {
  EXPECT_THROW(build_velocity_quadrature(3, 0.5, 8, 8), ConfigError);
  EXPECT_THROW(build_velocity_quadrature(1, 1.0, 8, 8), ConfigError);
  EXPECT_THROW(build_velocity_quadrature(1, -0.1, 8, 8), ConfigError);
  EXPECT_THROW(build_velocity_quadrature(2, 0.5, 1, 8), ConfigError);
  EXPECT_THROW(build_velocity_quadrature(2, 0.5, 8, 7), ConfigError);
}

TEST(ActivityGrid, SmallSubdivisions) {
  const auto a1 = build_activity_grid(1);
  ASSERT_EQ(a1.size(), 1u);
  EXPECT_NEAR(a1.areas[0], 0.5, 1e-15);
  const auto a2 = build_activity_grid(2);
  ASSERT_EQ(a2.size(), 4u);
  for (double a : a2.areas) EXPECT_NEAR(a, 0.125, 1e-15);
  EXPECT_THROW(build_activity_grid(0), ConfigError);
}

TEST(ActivityGrid, AreasCentroidAndInterior) {
  for (int n : {1, 3, 6, 11}) {
    const auto ay = build_activity_grid(n);
    EXPECT_EQ(ay.size(), static_cast<std::size_t>(n * n));
    EXPECT_NEAR(ay.measure(), 0.5, 1e-12);
    Vec2 c{0.0, 0.0};
    for (std::size_t i = 0; i < ay.size(); ++i) {
      c = c + ay.areas[i] * ay.centroids[i];
      const auto& y = ay.centroids[i];
      EXPECT_GT(y[0], 0.0);
      EXPECT_GT(y[1], 0.0);
      EXPECT_LT(y[0] + y[1], 1.0);
    }
    EXPECT_NEAR(c[0] / 0.5, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(c[1] / 0.5, 1.0 / 3.0, 1e-12);
  }
}

TEST(ActivityGrid, BoundaryFacesCoverThePerimeter) {
  const auto ay = build_activity_grid(5);
  double len = 0.0;
  for (const auto& f : ay.boundary) {
    len += f.length;
    EXPECT_NEAR(norm(f.normal), 1.0, 1e-14);
    // outward: the normal points away from the centroid of its cell
    EXPECT_GT(dot(f.normal, f.midpoint - ay.centroids[f.cell]), 0.0);
  }
  EXPECT_NEAR(len, 2.0 + std::sqrt(2.0), 1e-12);
}

TEST(ThetaGrid, OneDimensionIsTwoPoints) {
  const auto t = build_theta_grid(1, 8);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.nodes[0][0], -1.0);
  EXPECT_EQ(t.nodes[1][0], 1.0);
  EXPECT_EQ(t.weights[0], 1.0);
  EXPECT_EQ(t.weights[1], 1.0);
}

TEST(ThetaGrid, TwoDimensionWeights) {
  const auto t = build_theta_grid(2, 12);
  EXPECT_NEAR(t.measure(), 2.0 * std::numbers::pi, 1e-12);
  for (const auto& v : t.nodes) EXPECT_NEAR(norm(v), 1.0, 1e-15);
  EXPECT_THROW(build_theta_grid(2, 5), ConfigError);
}

TEST(SpaceGrid, PeriodicShifts) {
  const auto s = build_space_grid(2, 2.0, 4);
  EXPECT_EQ(s.size(), 16u);
  EXPECT_DOUBLE_EQ(s.spacing(0), 0.5);
  EXPECT_EQ(s.shift(s.index(0, 2), 0, -1), s.index(3, 2));
  EXPECT_EQ(s.shift(s.index(1, 3), 1, 1), s.index(1, 0));
  EXPECT_THROW(build_space_grid(1, 0.0, 8), ConfigError);
  EXPECT_THROW(build_space_grid(1, 1.0, 2), ConfigError);
}

TEST(PhaseGrid, DefaultSizes) {
  const auto g = build_phase_grid(GridSpec{});
  EXPECT_EQ(g.nx(), 64u);
  EXPECT_EQ(g.nv(), 16u);
  EXPECT_EQ(g.ny(), 36u);
  EXPECT_EQ(g.kinetic_size(), 64u * 16u * 36u);
  EXPECT_EQ(g.at(1, 0, 0), 16u * 36u);
}
