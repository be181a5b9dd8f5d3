#include <gtest/gtest.h>

#include "kcm/verification.hpp"

using namespace kcm;

namespace {

PhaseGrid small_grid(int n = 1) {
  GridSpec g;
  g.dim = n;
  g.cells = 4;
  g.activity_subdivision = 2;
  return build_phase_grid(g);
}

}  // namespace

TEST(Closure, HandExample) {
  // k = 1, Q̄ = 2, L = 3: D = 2 + 3 + 1 = 6
  const Vec2 W = closure_W(2.0, 3.0, ModelParams{});
  EXPECT_NEAR(W[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(W[1], 1.0 / 2.0, 1e-15);
  const auto r = reaction_matrix(2.0, 3.0, ModelParams{});
  EXPECT_DOUBLE_EQ(r.A[0][0], 3.0);
  EXPECT_DOUBLE_EQ(r.A[0][1], 2.0);
  EXPECT_DOUBLE_EQ(r.A[1][0], 3.0);
  EXPECT_DOUBLE_EQ(r.A[1][1], 4.0);
  EXPECT_DOUBLE_EQ(r.det(), closure_denominator(2.0, 3.0, ModelParams{}));
  const Vec2 s = solve_reaction(r);
  EXPECT_NEAR(s[0], W[0], 1e-15);
  EXPECT_NEAR(s[1], W[1], 1e-15);
}

TEST(Closure, ZeroesTheMassActionField) {
  ModelParams p;
  p.k1 = 0.3;
  p.km1 = 1.7;
  p.k2 = 2.2;
  p.km2 = 0.4;
  const Vec2 W = closure_W(0.8, 1.9, p);
  const Vec2 G = eval_G(W, 0.8, 1.9, p);
  EXPECT_NEAR(G[0], 0.0, 1e-15);
  EXPECT_NEAR(G[1], 0.0, 1e-15);
}

TEST(Closure, SaturatesTowardTheHypotenuse) {
  double prev = 0.0;
  for (double q : {1.0, 10.0, 100.0, 1e4, 1e6}) {
    const Vec2 W = closure_W(q, q, ModelParams{});
    EXPECT_GT(W[0] + W[1], prev);
    EXPECT_LT(W[0] + W[1], 1.0);
    prev = W[0] + W[1];
  }
  EXPECT_NEAR(prev, 1.0, 1e-5);
}

TEST(Closure, SingularWithoutUnbinding) {
  ModelParams p;
  p.km1 = p.km2 = 0.0;
  EXPECT_THROW(closure_W(0.0, 0.0, p), DomainError);
  EXPECT_THROW(solve_reaction(reaction_matrix(0.0, 0.0, p)), DomainError);
}

TEST(Closure, RandomizedConsistency) {
  Rng rng(11);
  const auto [aw, gz] = closure_consistency(rng, 1000);
  EXPECT_LE(aw, 1e-14);
  EXPECT_LE(gz, 1e-14);
}

TEST(Equilibrium, RecoversDensityAndVelocity) {
  for (int n : {1, 2}) {
    const auto g = small_grid(n);
    ModelParams p;
    p.chi = 0.3;
    const auto k = make_kernels(g, p);
    Rng rng(5);
    const auto r = equilibrium_fidelity(g, p, rng, 20);
    EXPECT_LE(r.turning, 1e-12);
    EXPECT_LE(r.rho, 1e-12);
    EXPECT_LE(r.momentum, 1e-12);
    EXPECT_LE(r.W, 1e-12);
    std::vector<double> rho(g.nx(), 1.0);
    std::vector<Vec2> U(g.nx(), {0.0, 0.0});
    U[0] = {1.01 * max_equilibrium_speed(k), 0.0};
    EXPECT_THROW(equilibrium(rho, U, g, k), DomainError);
  }
}

TEST(Equilibrium, InKernelOfTurning) {
  const auto g = small_grid(1);
  const auto k = make_kernels(g, ModelParams{});
  std::vector<double> rho{1.0, 0.5, 2.0, 0.1};
  std::vector<Vec2> U{{0.1, 0.0}, {-0.2, 0.0}, {0.0, 0.0}, {0.3, 0.0}};
  const auto Lf = apply_Lturn(equilibrium(rho, U, g, k), g, k);
  EXPECT_LE(max_abs(Lf), 1e-13);
}

TEST(Pressure, CoefficientValues) {
  EXPECT_NEAR(pressure_coefficient(1, 0.5), 7.0 / 12.0, 1e-15);
  EXPECT_NEAR(std::sqrt(pressure_coefficient(1, 0.5)), 0.763763, 1e-6);
  // the literal formula with an extra factor 2 gives 7/6
  EXPECT_NEAR(2.0 * pressure_coefficient(1, 0.5), 7.0 / 6.0, 1e-15);
  EXPECT_NEAR(pressure_coefficient(2, 0.5), 15.0 / 48.0, 1e-15);
}

TEST(Pressure, QuadratureMatchesCoefficientNotItsDouble) {
  const auto g = small_grid(1);
  const ModelParams p;
  for (Vec2 U : {Vec2{0.0, 0.0}, Vec2{0.2, 0.0}}) {
    const double good = pressure_error(g, p, pressure_coefficient(1, 0.5), 1.3, U);
    const double bad = pressure_error(g, p, 2.0 * pressure_coefficient(1, 0.5), 1.3, U);
    EXPECT_LE(good, 1e-2);
    EXPECT_GT(bad, 0.5);
  }
}

TEST(MacroMoments, ComputedFromKineticField) {
  const auto g = small_grid(1);
  const auto k = make_kernels(g, ModelParams{});
  std::vector<double> rho{1.0, 2.0, 0.0, 0.5};
  std::vector<Vec2> U{{0.1, 0.0}, {-0.3, 0.0}, {0.0, 0.0}, {0.2, 0.0}};
  const auto m = compute_moments(equilibrium(rho, U, g, k), g);
  for (std::size_t x = 0; x < g.nx(); ++x) {
    EXPECT_NEAR(m.rho[x], rho[x], 1e-13);
    EXPECT_NEAR(m.U(x)[0], U[x][0], 1e-13);
    // uniform in y: W is the centroid of the triangle
    if (rho[x] > 0.0) {
      EXPECT_NEAR(m.W(x)[0], 1.0 / 3.0, 1e-13);
      EXPECT_NEAR(m.W(x)[1], 1.0 / 3.0, 1e-13);
    }
  }
  EXPECT_EQ(m.U(2)[0], 0.0);
}

TEST(MacroMoments, SourcesAgreeWithKineticOperators) {
  Rng rng(9);
  const auto [h, c] = micro_macro_mismatch(small_grid(1), ModelParams{}, rng, 30);
  EXPECT_LE(h, 1e-10);
  EXPECT_LE(c, 1e-10);
}

TEST(MacroMoments, ChemotaxisMomentsByHand) {
  const auto g = small_grid(1);
  const auto k = make_kernels(g, ModelParams{});
  const Vec2 F{3.0, 0.0};
  const auto m = macro_kernel_moments(k, g, F);
  // K¹ = |V| χ m2 F/(1+|F|), K² = 0 by odd symmetry in v'
  EXPECT_NEAR(m.K1[0], k.measure_v * k.chi * k.m2 * 0.75, 1e-13);
  EXPECT_NEAR(m.K2[0][0], 0.0, 1e-13);
}
