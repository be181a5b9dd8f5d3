#include <gtest/gtest.h>

#include "kcm/verification.hpp"

using namespace kcm;

namespace {

PhaseGrid hgrid(int n = 1, int cells = 32) {
  GridSpec g;
  g.dim = n;
  g.cells = cells;
  g.activity_subdivision = 1;
  return build_phase_grid(g);
}

HydroState state_from(const HydroSolver& hs, const PhaseGrid& g, const InitialData& d) {
  const auto prof = macro_profile(g, d);
  std::vector<Vec2> m(g.nx());
  for (std::size_t x = 0; x < g.nx(); ++x) m[x] = prof.rho[x] * prof.U[x];
  return hs.make_state(prof.rho, m, prof.Q, prof.L);
}

}  // namespace

TEST(HydroStep, UniformStateWithoutSourcesIsStationary) {
  const auto g = hgrid();
  ModelParams p;
  p.b = p.d = 2.0;
  HydroSolver hs(g, p, pressure_coefficient(1, 0.5));
  InitialData d;
  d.profile = "uniform";
  HydroState s = state_from(hs, g, d);
  for (int n = 0; n < 20; ++n) hs.step(s, hs.max_dt(s));
  for (std::size_t x = 0; x < g.nx(); ++x) {
    EXPECT_NEAR(s.rho[x], 1.0, 1e-14);
    EXPECT_NEAR(s.m[x][0], 0.0, 1e-14);
  }
}

TEST(HydroStep, MassExactMomentumByImpulseClosureExact) {
  InitialData d;
  d.l0 = 0.5;
  for (const auto& c : hydro_checks(hgrid(), ModelParams{}, d)) {
    if (c.name.find("acoustic") != std::string::npos || c.name.find("g(theta)") != std::string::npos) continue;
    EXPECT_TRUE(c.pass) << format_check(c);
  }
}

TEST(HydroStep, PureSystemHasNoSources) {
  const auto g = hgrid();
  ModelParams p;
  p.b = p.d = 2.0;
  HydroSolver hs(g, p, pressure_coefficient(1, 0.5));
  InitialData d;
  d.l0 = 0.5;
  HydroState s = state_from(hs, g, d);
  for (int n = 0; n < 5; ++n) {
    const Vec2 imp = hs.step(s, 0.9 * hs.max_dt(s));
    EXPECT_EQ(imp[0], 0.0);
    EXPECT_EQ(imp[1], 0.0);
  }
}

TEST(HydroStep, HaptotaxisToggleChangesOnlyH) {
  const auto g = hgrid();
  InitialData d;
  d.l0 = 0.5;
  ModelParams both, hap_only, chem_only;
  hap_only.d = 2.0;
  chem_only.b = 2.0;
  const double c2 = pressure_coefficient(1, 0.5);
  HydroSolver h1(g, both, c2), h2(g, hap_only, c2), h3(g, chem_only, c2);
  const HydroState s = state_from(h1, g, d);
  const auto s1 = h1.sources(s.rho, s.m, s);
  const auto s2 = h2.sources(s.rho, s.m, s);
  const auto s3 = h3.sources(s.rho, s.m, s);
  for (std::size_t x = 0; x < g.nx(); ++x) EXPECT_NEAR(norm(s1[x] - s2[x] - s3[x]), 0.0, 1e-14);
}

TEST(HydroStep, CflViolationRejected) {
  const auto g = hgrid();
  HydroSolver hs(g, ModelParams{}, pressure_coefficient(1, 0.5));
  HydroState s = state_from(hs, g, InitialData{});
  EXPECT_THROW(hs.step(s, 2.0 * hs.max_dt(s)), CflError);
}

TEST(HydroStep, AcousticSpeedMatchesSoundSpeed) {
  const double c2 = pressure_coefficient(1, 0.5);
  EXPECT_NEAR(acoustic_speed(256, c2, 0.5) / std::sqrt(c2), 1.0, 0.02);
}

TEST(DegradationWeight, VanishesInOneDimension) {
  const auto g = hgrid(1);
  for (double v : g_theta(g.theta, g.velocity)) EXPECT_EQ(v, 0.0);
}

TEST(DegradationWeight, PolarIntegralInTwoDimensions) {
  GridSpec s;
  s.dim = 2;
  s.cells = 3;
  s.radial_nodes = 64;
  s.angular_nodes = 256;
  s.activity_subdivision = 1;
  const auto g = build_phase_grid(s);
  const auto gt = g_theta(g.theta, g.velocity);
  for (std::size_t t = 0; t < gt.size(); ++t) {
    EXPECT_NEAR(gt[t], 0.856194, 1e-3);
    // θ and -θ
    for (std::size_t u = 0; u < gt.size(); ++u)
      if (norm(g.theta.nodes[t] + g.theta.nodes[u]) < 1e-12) {
        EXPECT_NEAR(gt[t], gt[u], 1e-12);
      }
  }
}

TEST(LimitChemicals, IsotropicQIsAFixedPoint) {
  const auto g = hgrid(2, 4);
  ModelParams p;
  p.kappa = 0.0;
  p.chi = 0.3;
  HydroSolver hs(g, p, pressure_coefficient(2, 0.5));
  std::vector<double> Q(g.nx() * g.ntheta(), 0.3);
  HydroState s = hs.make_state(std::vector<double>(g.nx(), 1.0), std::vector<Vec2>(g.nx(), {0.0, 0.0}), Q,
                               std::vector<double>(g.nx(), 0.2));
  for (double v : hs.isotropy_term(s)) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(LimitChemicals, IsotropyTermIntegratesToZero) {
  const auto g = hgrid(2, 4);
  ModelParams p;
  p.chi = 0.3;
  HydroSolver hs(g, p, pressure_coefficient(2, 0.5));
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    HydroState s = hs.make_state(random_field(rng, g.nx(), 0.1, 2.0), std::vector<Vec2>(g.nx(), {0.0, 0.0}),
                                 random_field(rng, g.nx() * g.ntheta(), 0.0, 1.0), random_field(rng, g.nx(), 0.0, 1.0));
    const auto iso = hs.isotropy_term(s);
    for (std::size_t x = 0; x < g.nx(); ++x) {
      double sum = 0.0;
      for (std::size_t t = 0; t < g.ntheta(); ++t) sum += g.theta.weights[t] * iso[x * g.ntheta() + t];
      EXPECT_NEAR(sum, 0.0, 1e-14);
    }
  }
}

TEST(LimitChemicals, FiberTotalConstantInOneDimensionWithoutRates) {
  const auto g = hgrid(1, 8);
  ModelParams p;
  p.k1 = p.km1 = p.k2 = p.km2 = 0.0;
  HydroSolver hs(g, p, pressure_coefficient(1, 0.5));
  InitialData d;
  HydroState s = state_from(hs, g, d);
  const auto q0 = qbar_field(s.Q, g);
  hs.limit_chemicals(s, 1.0);
  const auto q1 = qbar_field(s.Q, g);
  for (std::size_t x = 0; x < g.nx(); ++x) EXPECT_NEAR(q1[x], q0[x], 1e-14);
}

TEST(Nondimensionalize, DefinitionsOfEpsAndExponents) {
  ScaledParams target;
  target.eps = 0.1;
  target.a = 0.5;
  target.b = 1.0;
  target.d = 2.0;
  target.k1 = target.km1 = target.k2 = target.km2 = 1.0;
  const auto dim = dimensionalize(target, 1, 2.0, 1.5, 1.0, 1.0);
  EXPECT_NEAR(dim.tau * dim.p_l, 10.0, 1e-12);
  EXPECT_NEAR(dim.p_h, dim.p_l * 0.1, 1e-12);
  const auto s = nondimensionalize(dim);
  EXPECT_NEAR(s.eps, 0.1, 1e-14);
  EXPECT_EQ(s.b, 1.0);
  EXPECT_EQ(s.d, 2.0);
  EXPECT_NEAR(s.a, 0.5, 1e-12);
  EXPECT_NEAR(s.transport_residual, 0.0, 1e-12);
  EXPECT_NEAR(s.diffusion_residual, 0.0, 1e-12);
}

TEST(Nondimensionalize, RoundTrip) {
  for (const auto& c : scaling_checks()) EXPECT_TRUE(c.pass) << format_check(c);
}

TEST(Nondimensionalize, RegimeViolations) {
  ScaledParams t;
  t.eps = 0.1;
  t.a = 0.5;
  t.b = t.d = 1.0;
  auto dim = dimensionalize(t, 1, 1.0, 1.0, 1.0, 1.0);
  auto bad = dim;
  bad.Gbar = dim.R0 * dim.p_l * 2.0;  // a < 0
  EXPECT_THROW(nondimensionalize(bad), ConfigError);
  bad = dim;
  bad.p_h = dim.p_l;  // b = 0
  EXPECT_THROW(nondimensionalize(bad), ConfigError);
  bad = dim;
  bad.R = 2.0 * dim.R;  // normalization broken
  EXPECT_THROW(nondimensionalize(bad), ConfigError);
}

TEST(EstimateRate, ExactPowers) {
  const std::vector<double> e{0.2, 0.1, 0.05, 0.025};
  std::vector<double> one, two;
  for (double x : e) {
    one.push_back(x);
    two.push_back(x * x);
  }
  EXPECT_NEAR(estimate_rate(one, e), 1.0, 1e-12);
  EXPECT_NEAR(estimate_rate(two, e), 2.0, 1e-12);
}

TEST(EstimateRate, NoisySquareRoot) {
  const std::vector<double> e{0.2, 0.1, 0.05, 0.025};
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> r;
    for (double x : e) r.push_back(3.0 * std::sqrt(x) * (1.0 + uniform(rng, -0.05, 0.05)));
    const double s = estimate_rate(r, e);
    EXPECT_GE(s, 0.4);
    EXPECT_LE(s, 0.6);
  }
}

TEST(EstimateRate, BadInputs) {
  EXPECT_THROW(estimate_rate({1.0, 2.0}, {1.0, 2.0}), ConfigError);
  EXPECT_THROW(estimate_rate({1.0, 0.0, 2.0}, {0.1, 0.2, 0.3}), DomainError);
  EXPECT_THROW(estimate_rate({1.0, 2.0, 3.0}, {0.1, 0.1, 0.1}), DomainError);
}

TEST(Sweep, EquilibriumDataWithoutSourcesStaysAtTheLimit) {
  SweepConfig c;
  c.grid.cells = 16;
  c.grid.activity_subdivision = 1;
  c.params.b = c.params.d = 2.0;
  c.params.k1 = c.params.km1 = c.params.k2 = c.params.km2 = 0.0;
  c.params.kappa = c.params.r_L = 0.0;
  c.initial.profile = "uniform";
  c.t_final = 0.1;
  c.eps_list = {0.2, 0.1, 0.05};
  const auto rep = epsilon_sweep(c);
  for (const auto& e : rep.entries) {
    EXPECT_LT(e.rho_l1_diff, 1e-12);
    EXPECT_LT(e.kinetic_eq_distance, 1e-12);
  }
}

class SweepRegime : public ::testing::TestWithParam<std::pair<double, double>> {};

TEST_P(SweepRegime, CoarseRunApproachesEquilibrium) {
  SweepConfig c = default_sweep_config();
  c.grid.cells = 16;
  c.grid.activity_subdivision = 2;
  c.t_final = 0.25;
  c.eps_list = {0.2, 0.1, 0.05};
  c.params.b = GetParam().first;
  c.params.d = GetParam().second;
  const auto rep = epsilon_sweep(c);
  ASSERT_EQ(rep.entries.size(), 3u);
  EXPECT_TRUE(rep.monotone_eq);
  EXPECT_GT(rep.slope_eq, 0.5);
  for (const auto& e : rep.entries) {
    EXPECT_TRUE(std::isfinite(e.rho_l1_diff));
    EXPECT_TRUE(std::isfinite(e.closure_residual));
  }
}

INSTANTIATE_TEST_SUITE_P(Regimes, SweepRegime,
                         ::testing::Values(std::make_pair(1.0, 1.0), std::make_pair(1.0, 2.0),
                                           std::make_pair(2.0, 1.0), std::make_pair(2.0, 2.0)));
