#pragma once

// Measured checks of the discrete identities, conservation laws and limit
// behaviour. Each check reports the measured value next to its threshold;
// the verify subcommand and the acceptance binary both print these.

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "kcm/core.hpp"
#include "kcm/hydro.hpp"
#include "kcm/io.hpp"
#include "kcm/kernels.hpp"
#include "kcm/kinetic.hpp"
#include "kcm/moments.hpp"
#include "kcm/phase_grid.hpp"
#include "kcm/sweep.hpp"

namespace kcm {

struct Check {
  std::string name;
  double value = 0.0;
  std::string op;  // "<=", "<", ">=", ">"
  double threshold = 0.0;
  bool pass = false;
};

inline Check at_most(std::string name, double v, double thr) { return {std::move(name), v, "<=", thr, v <= thr}; }
inline Check below(std::string name, double v, double thr) { return {std::move(name), v, "<", thr, v < thr}; }
inline Check at_least(std::string name, double v, double thr) { return {std::move(name), v, ">=", thr, v >= thr}; }
inline Check above(std::string name, double v, double thr) { return {std::move(name), v, ">", thr, v > thr}; }
inline Check holds(std::string name, bool ok) { return {std::move(name), ok ? 1.0 : 0.0, ">=", 1.0, ok}; }

inline bool all_pass(const std::vector<Check>& cs) {
  for (const auto& c : cs)
    if (!c.pass) return false;
  return true;
}

inline std::string format_check(const Check& c) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-4s %-58s %.6e %s %.6e", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value,
                c.op.c_str(), c.threshold);
  return buf;
}

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Random admissible mean velocity: |U| <= frac * max equilibrium speed.
inline Vec2 random_velocity(Rng& rng, int dim, double umax) {
  if (dim == 1) return {uniform(rng, -umax, umax), 0.0};
  const double r = umax * std::sqrt(uniform(rng, 0.0, 1.0));
  const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return {r * std::cos(a), r * std::sin(a)};
}

inline std::vector<double> random_field(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> f(n);
  for (auto& v : f) v = uniform(rng, lo, hi);
  return f;
}

// ---------------------------------------------------------------------------
// Velocity quadrature.

/// Max relative error of discrete ∫ v_i v_k dv against δ_ik m2.
inline double second_moment_error(const VelocityQuadrature& q) {
  const double exact = annulus_second_moment(q.dim, q.speed_ratio);
  double err = 0.0;
  for (int i = 0; i < q.dim; ++i)
    for (int k = 0; k < q.dim; ++k) {
      std::array<int, 2> pw{0, 0};
      pw[static_cast<std::size_t>(i)] += 1;
      pw[static_cast<std::size_t>(k)] += 1;
      const double target = i == k ? exact : 0.0;
      err = std::max(err, std::abs(quadrature_moment(q, pw) - target) / exact);
    }
  return err;
}

inline VelocityQuadrature refined(const GridSpec& g, int factor) {
  return build_velocity_quadrature(g.dim, g.speed_ratio, g.radial_nodes * factor,
                                   g.dim == 1 ? g.angular_nodes : g.angular_nodes * factor);
}

// The midpoint rule's error for these polynomial moments is exactly
// proportional to h^2, so an ideal refinement gives a ratio of 4 up to
// rounding; 1e-6 relative absorbs the rounding only.
inline constexpr double refinement_ratio_min = 4.0 * (1.0 - 1e-6);

inline std::vector<Check> quadrature_checks(const GridSpec& spec) {
  std::vector<Check> out;
  const auto q = build_velocity_quadrature(spec.dim, spec.speed_ratio, spec.radial_nodes, spec.angular_nodes);
  double odd = 0.0;
  for (int i = 0; i < spec.dim; ++i) {
    std::array<int, 2> pw{0, 0};
    pw[static_cast<std::size_t>(i)] = 1;
    odd = std::max(odd, std::abs(quadrature_moment(q, pw)));
  }
  out.push_back(at_most("quadrature: |discrete int v dv| (exact zero)", odd, 0.0));
  out.push_back(at_most("quadrature: |sum of weights - |V||",
                        std::abs(q.measure() - annulus_measure(spec.dim, spec.speed_ratio)), 1e-12));
  const double e0 = second_moment_error(q);
  const double e1 = second_moment_error(refined(spec, 2));
  out.push_back(at_most("quadrature: second-moment relative error", e0, 1e-3));
  out.push_back(at_least("quadrature: second-moment error reduction (x2 nodes)", e0 / e1, refinement_ratio_min));
  return out;
}

inline std::vector<Check> grid_checks(const GridSpec& spec) {
  std::vector<Check> out;
  const auto ay = build_activity_grid(spec.activity_subdivision);
  double area = 0.0;
  Vec2 c{0.0, 0.0};
  for (std::size_t i = 0; i < ay.size(); ++i) {
    area += ay.areas[i];
    c = c + ay.areas[i] * ay.centroids[i];
  }
  out.push_back(at_most("activity grid: |sum of areas - 1/2|", std::abs(area - 0.5), 1e-12));
  out.push_back(at_most("activity grid: |centroid - (1/3, 1/3)|", norm(c - Vec2{area / 3.0, area / 3.0}) / area, 1e-12));
  if (spec.dim == 2) {
    const auto th = build_theta_grid(2, spec.theta_nodes);
    double w = 0.0;
    for (double x : th.weights) w += x;
    out.push_back(at_most("theta grid: |sum of weights - 2 pi|", std::abs(w - 2.0 * std::numbers::pi), 1e-12));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kernels and the turning operator.

inline std::vector<Check> kernel_checks(const PhaseGrid& g, const ModelParams& p, Rng& rng) {
  std::vector<Check> out;
  const KernelSet k = make_kernels(g, p);
  for (const auto& c : validate_kernels(k, g).checks) out.push_back(at_most("kernels: " + c.name, c.value, 1e-10));
  out.push_back(at_most("kernels: |beta m2 - lambda |V|| (momentum relation)", std::abs(k.relation_residual()), 1e-14));
  double lip = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Vec2 F = random_velocity(rng, g.dim(), 5.0), G = random_velocity(rng, g.dim(), 5.0);
    const double d = norm(F - G);
    if (d < 1e-12) continue;
    for (const auto& v : g.velocity.nodes)
      lip = std::max(lip, std::abs(eval_chemo_kernel(F, v, k) - eval_chemo_kernel(G, v, k)) / d);
  }
  out.push_back(at_most("kernels: chemotaxis Lipschitz constant / (2 chi)", lip / (2.0 * std::max(k.chi, 1e-300)), 1.0));
  return out;
}

/// Max over (x, y) of |∫ r dv| and |∫ v r dv|.
inline std::pair<double, double> velocity_moments_of(const std::vector<double>& r, const PhaseGrid& g) {
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t x = 0; x < g.nx(); ++x)
    for (std::size_t y = 0; y < g.ny(); ++y) {
      double s = 0.0;
      Vec2 j{0.0, 0.0};
      for (std::size_t v = 0; v < g.nv(); ++v) {
        const double c = g.velocity.weights[v] * r[g.at(x, v, y)];
        s += c;
        j = j + c * g.velocity.nodes[v];
      }
      m0 = std::max(m0, std::abs(s));
      m1 = std::max(m1, norm(j));
    }
  return {m0, m1};
}

struct SolvabilityResult {
  double mass = 0.0, momentum = 0.0, perturbed_momentum = 0.0;
};

/// Solvability conditions of the turning operator on random inputs, and the
/// momentum residual after breaking the discrete λ-β relation by 10%.
inline SolvabilityResult solvability(const PhaseGrid& g, const ModelParams& p, Rng& rng, int draws) {
  KernelSet k = make_kernels(g, p);
  KernelSet bad = k;
  bad.beta *= 1.1;
  SolvabilityResult r;
  for (int i = 0; i < draws; ++i) {
    const auto f = random_field(rng, g.kinetic_size(), 0.0, 1.0);
    const auto [m0, m1] = velocity_moments_of(apply_Lturn(f, g, k), g);
    r.mass = std::max(r.mass, m0);
    r.momentum = std::max(r.momentum, m1);
    r.perturbed_momentum = std::max(r.perturbed_momentum, velocity_moments_of(apply_Lturn(f, g, bad), g).second);
  }
  return r;
}

inline std::vector<Check> solvability_checks(const PhaseGrid& g, const ModelParams& p, Rng& rng, int draws = 50) {
  const auto r = solvability(g, p, rng, draws);
  return {at_most("turning: max |int L(f) dv| on random f", r.mass, 1e-12),
          at_most("turning: max |int v L(f) dv| on random f", r.momentum, 1e-12),
          above("turning: |int v L(f) dv| with beta off by 10%", r.perturbed_momentum, 1e-4)};
}

/// Conservation in v of the haptotaxis and chemotaxis operators, and in y of
/// the activity flux, on random inputs.
inline std::vector<Check> operator_conservation_checks(const PhaseGrid& g, const ModelParams& p, Rng& rng, int draws = 5) {
  const KernelSet k = make_kernels(g, p);
  double h0 = 0.0, c0 = 0.0, y0 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const auto f = random_field(rng, g.kinetic_size(), 0.0, 1.0);
    const auto Q = random_field(rng, g.nx() * g.ntheta(), 0.0, 1.0);
    const auto L = random_field(rng, g.nx(), 0.0, 1.0);
    h0 = std::max(h0, velocity_moments_of(apply_H(f, Q, g, k), g).first);
    c0 = std::max(c0, velocity_moments_of(apply_C(f, L, g, k), g).first);
    const auto yf = apply_y_flux(f, qbar_field(Q, g), L, g, p);
    for (std::size_t x = 0; x < g.nx(); ++x)
      for (std::size_t v = 0; v < g.nv(); ++v) {
        double s = 0.0;
        for (std::size_t y = 0; y < g.ny(); ++y) s += g.activity.areas[y] * yf[g.at(x, v, y)];
        y0 = std::max(y0, std::abs(s));
      }
  }
  return {at_most("haptotaxis: max |int H(f) dv|", h0, 1e-12), at_most("chemotaxis: max |int C(f) dv|", c0, 1e-12),
          at_most("activity flux: max |int div_y(G f) dy|", y0, 1e-12)};
}

// ---------------------------------------------------------------------------
// Equilibrium, closure and macroscopic sources.

struct EquilibriumResult {
  double turning = 0.0, rho = 0.0, momentum = 0.0, W = 0.0;
};

inline EquilibriumResult equilibrium_fidelity(const PhaseGrid& g, const ModelParams& p, Rng& rng, int draws) {
  const KernelSet k = make_kernels(g, p);
  EquilibriumResult r;
  for (int i = 0; i < draws; ++i) {
    const double rho = uniform(rng, 0.1, 2.0);
    const Vec2 U = random_velocity(rng, g.dim(), 0.99 * max_equilibrium_speed(k));
    const auto M = equilibrium(std::vector<double>(g.nx(), rho), std::vector<Vec2>(g.nx(), U), g, k);
    r.turning = std::max(r.turning, max_abs(apply_Lturn(M, g, k)));
    const auto m = compute_moments(M, g);
    for (std::size_t x = 0; x < g.nx(); ++x) {
      r.rho = std::max(r.rho, std::abs(m.rho[x] - rho));
      r.momentum = std::max(r.momentum, norm(m.mom[x] - rho * U));
      r.W = std::max(r.W, norm(m.W(x) - Vec2{1.0 / 3.0, 1.0 / 3.0}));
    }
  }
  return r;
}

inline std::vector<Check> equilibrium_checks(const PhaseGrid& g, const ModelParams& p, Rng& rng, int draws = 20) {
  const auto r = equilibrium_fidelity(g, p, rng, draws);
  return {at_most("equilibrium: max |L(M)| pointwise", r.turning, 1e-12),
          at_most("equilibrium: max |rho(M) - rho|", r.rho, 1e-12),
          at_most("equilibrium: max |rhoU(M) - rho U|", r.momentum, 1e-12),
          at_most("equilibrium: max |W(M) - (1/3, 1/3)|", r.W, 1e-12)};
}

inline std::pair<double, double> closure_consistency(Rng& rng, int draws) {
  double aw = 0.0, gz = 0.0;
  for (int i = 0; i < draws; ++i) {
    ModelParams p;
    p.k1 = uniform(rng, 0.1, 2.0);
    p.km1 = uniform(rng, 0.1, 2.0);
    p.k2 = uniform(rng, 0.1, 2.0);
    p.km2 = uniform(rng, 0.1, 2.0);
    const double q = uniform(rng, 0.0, 2.0), l = uniform(rng, 0.0, 2.0);
    const Vec2 W = closure_W(q, l, p);
    const auto sys = reaction_matrix(q, l, p);
    const Vec2 r = matvec(sys.A, W) - sys.b;
    aw = std::max({aw, std::abs(r[0]), std::abs(r[1])});
    const Vec2 G = eval_G(W, q, l, p);
    gz = std::max({gz, std::abs(G[0]), std::abs(G[1])});
  }
  return {aw, gz};
}

inline std::vector<Check> closure_checks(Rng& rng, int draws = 1000) {
  const auto [aw, gz] = closure_consistency(rng, draws);
  return {at_most("closure: max ||A W - b||_inf", aw, 1e-14), at_most("closure: max |G(W)| (mass-action steady state)", gz, 1e-14)};
}

/// Largest relative mismatch between the macroscopic sources and the
/// v-moments of the microscopic operators applied to M_{ρ,U}.
inline std::pair<double, double> micro_macro_mismatch(const PhaseGrid& g, const ModelParams& p, Rng& rng, int draws) {
  const KernelSet k = make_kernels(g, p);
  const auto hm = haptotaxis_moments(k, g);
  double eh = 0.0, ec = 0.0;
  for (int i = 0; i < draws; ++i) {
    std::vector<double> rho(g.nx());
    std::vector<Vec2> U(g.nx());
    for (std::size_t x = 0; x < g.nx(); ++x) {
      rho[x] = uniform(rng, 0.1, 2.0);
      U[x] = random_velocity(rng, g.dim(), 0.9 * max_equilibrium_speed(k));
    }
    const auto Q = random_field(rng, g.nx() * g.ntheta(), 0.0, 1.0);
    const auto L = random_field(rng, g.nx(), 0.0, 0.05 * g.space.min_spacing());
    const auto M = equilibrium(rho, U, g, k);
    const auto H = apply_H(M, Q, g, k);
    const auto C = apply_C(M, L, g, k);
    const auto grad = gradient(L, g.space);
    for (std::size_t x = 0; x < g.nx(); ++x) {
      Vec2 hv{0.0, 0.0}, cv{0.0, 0.0};
      for (std::size_t v = 0; v < g.nv(); ++v)
        for (std::size_t y = 0; y < g.ny(); ++y) {
          const double w = g.velocity.weights[v] * g.activity.areas[y];
          hv = hv + (w * H[g.at(x, v, y)]) * g.velocity.nodes[v];
          cv = cv + (w * C[g.at(x, v, y)]) * g.velocity.nodes[v];
        }
      const auto cm = macro_kernel_moments(k, g, grad[x]);
      const auto s = macro_sources(rho[x], U[x], &Q[x * g.ntheta()], hm, cm, k, g);
      eh = std::max(eh, norm(hv - s.H) / std::max(1.0, norm(s.H)));
      ec = std::max(ec, norm(cv - s.C) / std::max(1.0, norm(s.C)));
    }
  }
  return {eh, ec};
}

inline std::vector<Check> micro_macro_checks(const PhaseGrid& g, const ModelParams& p, Rng& rng, int draws = 100) {
  const auto [eh, ec] = micro_macro_mismatch(g, p, rng, draws);
  return {at_most("sources: |int v H(M) - H(rho,U,Q)|", eh, 1e-10), at_most("sources: |int v C(M) - C(rho,U,L)|", ec, 1e-10)};
}

/// Relative error of the quadrature pressure of M_{ρ,U} against
/// coeff ρ I - ρ U⊗U, for one (ρ, U).
inline double pressure_error(const PhaseGrid& g, const ModelParams& p, double coeff, double rho, const Vec2& U) {
  const KernelSet k = make_kernels(g, p);
  const auto M = equilibrium(std::vector<double>(g.nx(), rho), std::vector<Vec2>(g.nx(), U), g, k);
  const auto m = compute_moments(M, g);
  const Mat2 uu = outer(U, U);
  double err = 0.0, scale = 0.0;
  for (int i = 0; i < g.dim(); ++i)
    for (int j = 0; j < g.dim(); ++j) {
      const double target = (i == j ? coeff * rho : 0.0) - rho * uu[i][j];
      err = std::max(err, std::abs(m.P[0][i][j] - target));
      scale = std::max(scale, std::abs(target));
    }
  return err / scale;
}

/// Pressure identity at the default grid and its gain under velocity refinement.
inline std::vector<Check> pressure_checks(const GridSpec& spec, const ModelParams& p, double coeff,
                                          const std::string& label) {
  GridSpec fine = spec;
  fine.radial_nodes *= 2;
  if (spec.dim == 2) fine.angular_nodes *= 2;
  fine.cells = 3;
  GridSpec base = spec;
  base.cells = 3;
  const auto g0 = build_phase_grid(base), g1 = build_phase_grid(fine);
  const Vec2 U = spec.dim == 1 ? Vec2{0.2, 0.0} : Vec2{0.15, -0.1};
  const double e0 = pressure_error(g0, p, coeff, 1.3, U);
  const double e1 = pressure_error(g1, p, coeff, 1.3, U);
  return {at_most("pressure (" + label + "): relative error", e0, 1e-3),
          at_least("pressure (" + label + "): error reduction (x2 nodes)", e0 / e1, refinement_ratio_min)};
}

// ---------------------------------------------------------------------------
// Kinetic time stepping.

inline double auto_dt(double limit, double cfl, double t_final) {
  const double target = cfl * limit;
  const int steps = std::max(1, static_cast<int>(std::ceil(t_final / target)));
  return t_final / steps;
}

struct CompoundTotals {
  double mass, fiber, chem;
};

inline CompoundTotals compound_totals(const KineticState& s, const PhaseGrid& g) {
  const auto m = compute_moments(s.f, g);
  const auto qb = qbar_field(s.Q, g);
  CompoundTotals c{0.0, 0.0, 0.0};
  for (std::size_t x = 0; x < g.nx(); ++x) {
    c.mass += m.rho[x];
    c.fiber += qb[x] + m.rhoW[x][0];
    c.chem += s.L[x] + m.rhoW[x][1];
  }
  const double dx = g.space.cell_volume();
  return {c.mass * dx, c.fiber * dx, c.chem * dx};
}

struct ConservationResult {
  double mass_drift = 0.0;  // relative, kinetic run with the configured rates
  double fiber_drift = 0.0, chem_drift = 0.0;  // relative, κ = r_L = D_L = 0
  double min_f = 0.0, min_Q = 0.0, min_L = 0.0;
  double desQ_margin = 0.0;
};

/// Mass drift over `steps` steps, and drift of ∫(Q̄ + ρW1) and ∫(L + ρW2) when
/// degradation, decay and diffusion are off. The binding exchange carries
/// the factor ε^{1-a} between the fiber and cell equations, so the compound
/// totals are conserved as written only at ε = 1.
inline ConservationResult conservation(const PhaseGrid& g, const ModelParams& p, const InitialData& d, int steps) {
  ConservationResult r;
  {
    KineticSolver ks(g, p);
    KineticState s = well_prepared_state(g, ks.kernels(), d);
    const double dt = 0.9 * ks.max_dt();
    const double m0 = total_mass(s.f, g);
    AprioriMonitor mon(g, p);
    mon.observe(s);
    for (int n = 0; n < steps; ++n) {
      ks.step(s, dt);
      mon.observe(s);
    }
    r.mass_drift = std::abs(total_mass(s.f, g) - m0) / m0;
    r.min_f = mon.min_f();
    r.min_Q = mon.min_Q();
    r.desQ_margin = mon.min_desQ_margin();
    double lmin = 0.0;
    for (const auto& rec : mon.records) lmin = std::min(lmin, rec.norms.Lmin);
    r.min_L = lmin;
  }
  {
    ModelParams q = p;
    q.kappa = q.r_L = q.D_L = 0.0;
    q.eps = 1.0;
    KineticSolver ks(g, q);
    KineticState s = well_prepared_state(g, ks.kernels(), d);
    const double dt = 0.9 * ks.max_dt();
    const auto c0 = compound_totals(s, g);
    double fd = 0.0, cd = 0.0;
    for (int n = 0; n < steps; ++n) {
      ks.step(s, dt);
      const auto c = compound_totals(s, g);
      fd = std::max(fd, std::abs(c.fiber - c0.fiber) / c0.fiber);
      cd = std::max(cd, std::abs(c.chem - c0.chem) / c0.chem);
    }
    r.fiber_drift = fd;
    r.chem_drift = cd;
  }
  return r;
}

inline std::vector<Check> conservation_checks(const PhaseGrid& g, const ModelParams& p, const InitialData& d,
                                              double compound_tol, int steps = 100) {
  const auto r = conservation(g, p, d, steps);
  return {below("kinetic: relative mass drift over 100 steps", r.mass_drift, 1e-10),
          below("kinetic: relative drift of int(Qbar + rho W1)", r.fiber_drift, compound_tol),
          below("kinetic: relative drift of int(L + rho W2)", r.chem_drift, compound_tol),
          at_least("kinetic: min f along the run", r.min_f, -1e-12),
          at_least("kinetic: min Q along the run", r.min_Q, -1e-12),
          at_least("kinetic: min L along the run", r.min_L, -1e-12),
          at_least("kinetic: a priori fiber bound margin", r.desQ_margin, 0.0)};
}

struct QOracleResult {
  std::vector<double> dts, errors;
  double order = 0.0;
  double min_Q = 0.0;
};

/// Fiber integrator against the exponential-integrator formula with frozen
/// cells, at three step sizes.
inline QOracleResult q_oracle(const PhaseGrid& g, const ModelParams& p, const InitialData& d, double t_end,
                              double dt0) {
  const KernelSet k = make_kernels(g, p);
  const KineticState s = well_prepared_state(g, k, d);
  QOracleResult r;
  r.min_Q = min_value(s.Q);
  const auto exact = exact_Q_solution(s.f, s.Q, {}, t_end, g, p);
  r.min_Q = std::min(r.min_Q, min_value(exact));
  for (double dt : {dt0, 0.5 * dt0, 0.25 * dt0}) {
    const auto Q = integrate_Q(s.f, s.Q, {}, t_end, dt, g, p);
    double e = 0.0;
    for (std::size_t i = 0; i < Q.size(); ++i) e = std::max(e, std::abs(Q[i] - exact[i]));
    r.dts.push_back(dt);
    r.errors.push_back(e);
    r.min_Q = std::min(r.min_Q, min_value(Q));
  }
  r.order = std::log2(r.errors[1] / r.errors[2]);
  return r;
}

inline std::vector<Check> q_oracle_checks(const PhaseGrid& g, const ModelParams& p, const InitialData& d) {
  const auto r = q_oracle(g, p, d, 1.0, 0.02);
  return {below("fiber ODE: max error vs exact formula (finest dt)", r.errors.back(), 1e-8),
          at_least("fiber ODE: observed order", r.order, 2.0), at_least("fiber ODE: min Q", r.min_Q, -1e-12)};
}

struct PicardCheckResult {
  PicardResult picard;
  double max_ratio = 0.0;
  double direct_distance = 0.0;
  double tol = 0.0;
};

inline PicardCheckResult picard_check(const PhaseGrid& g, const ModelParams& p, const InitialData& d, double T0,
                                      double dt, double tol, int max_iter, int substeps) {
  KineticSolver ks(g, p);
  ks.fixed_reaction_substeps = substeps;
  KineticState init = well_prepared_state(g, ks.kernels(), d);
  init.L.assign(g.nx(), 0.0);
  PicardCheckResult r;
  r.tol = tol;
  r.picard = picard_iterate(ks, init, T0, dt, tol, max_iter);
  for (std::size_t i = 1; i < r.picard.residuals.size(); ++i)
    r.max_ratio = std::max(r.max_ratio, r.picard.residuals[i] / r.picard.residuals[i - 1]);
  const int steps = static_cast<int>(r.picard.trajectory.size()) - 1;
  const double h = T0 / steps;
  std::vector<KineticState> direct{init};
  KineticState s = init;
  for (int n = 0; n < steps; ++n) {
    ks.step(s, h);
    direct.push_back(s);
  }
  r.direct_distance = trajectory_distance(r.picard.trajectory, direct, g);
  return r;
}

inline std::vector<Check> picard_checks(const PhaseGrid& g, const ModelParams& p, const InitialData& d, double T0,
                                        double dt, double tol, int max_iter) {
  const auto r = picard_check(g, p, d, T0, dt, tol, max_iter, 4);
  return {holds("picard: converged", r.picard.converged),
          below("picard: max ratio of successive residuals", r.max_ratio, 1.0),
          below("picard: fixed point vs direct coupled solve / tol", r.direct_distance / r.tol, 5.0)};
}

// ---------------------------------------------------------------------------
// Limit system.

/// Phase speed of a small standing density wave in the source-free limit
/// system, from the zero crossings of its Fourier amplitude.
inline double acoustic_speed(int cells, double c2, double speed_ratio) {
  GridSpec spec;
  spec.dim = 1;
  spec.speed_ratio = speed_ratio;
  spec.cells = cells;
  spec.radial_nodes = 4;
  spec.activity_subdivision = 1;
  const auto g = build_phase_grid(spec);
  ModelParams p;
  p.b = p.d = 2.0;  // no momentum sources
  p.kappa = 0.0;
  HydroSolver hs(g, p, c2);
  const double k = 2.0 * std::numbers::pi / g.space.length[0];
  const double delta = 1e-4;
  std::vector<double> rho(g.nx());
  for (std::size_t x = 0; x < g.nx(); ++x) rho[x] = 1.0 + delta * std::sin(k * g.space.center(x)[0]);
  HydroState s = hs.make_state(rho, std::vector<Vec2>(g.nx(), {0.0, 0.0}),
                               std::vector<double>(g.nx() * g.ntheta(), 0.5), std::vector<double>(g.nx(), 0.0));
  auto amp = [&](const HydroState& h) {
    double a = 0.0;
    for (std::size_t x = 0; x < g.nx(); ++x) a += (h.rho[x] - 1.0) * std::sin(k * g.space.center(x)[0]);
    return 2.0 * a / static_cast<double>(g.nx());
  };
  const double period = 2.0 * std::numbers::pi / (k * std::sqrt(c2));
  const double dt = auto_dt(hs.max_dt(s), 0.9, period / 200.0);
  std::vector<double> crossings;
  double prev = amp(s), tprev = 0.0;
  while (crossings.size() < 5 && s.t < 4.0 * period) {
    hs.step(s, dt);
    const double a = amp(s);
    if ((prev > 0.0) != (a > 0.0)) crossings.push_back(tprev + dt * prev / (prev - a));
    prev = a;
    tprev = s.t;
  }
  if (crossings.size() < 2) return 0.0;
  const double half_period = (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
  return std::numbers::pi / (half_period * k);
}

inline std::vector<Check> hydro_checks(const PhaseGrid& g, const ModelParams& p, const InitialData& d) {
  std::vector<Check> out;
  const double c2 = pressure_coefficient(g.dim(), g.velocity.speed_ratio);
  {
    HydroSolver hs(g, p, c2);
    const auto prof = macro_profile(g, d);
    std::vector<Vec2> m0(g.nx());
    for (std::size_t x = 0; x < g.nx(); ++x) m0[x] = prof.rho[x] * prof.U[x];
    HydroState s = hs.make_state(prof.rho, m0, prof.Q, prof.L);
    const double dx = g.space.cell_volume();
    double mass_err = 0.0, mom_err = 0.0, closure_err = 0.0;
    const double dt = 0.9 * hs.max_dt(s);
    for (int n = 0; n < 50; ++n) {
      double m_before = 0.0;
      Vec2 p_before{0.0, 0.0};
      for (std::size_t x = 0; x < g.nx(); ++x) {
        m_before += s.rho[x] * dx;
        p_before = p_before + dx * s.m[x];
      }
      const Vec2 impulse = hs.step(s, std::min(dt, 0.9 * hs.max_dt(s)));
      double m_after = 0.0;
      Vec2 p_after{0.0, 0.0};
      for (std::size_t x = 0; x < g.nx(); ++x) {
        m_after += s.rho[x] * dx;
        p_after = p_after + dx * s.m[x];
        const auto sys = reaction_matrix(qbar_field(s.Q, g)[x], s.L[x], hs.params());
        const Vec2 r = matvec(sys.A, s.W[x]) - sys.b;
        closure_err = std::max({closure_err, std::abs(r[0]), std::abs(r[1])});
      }
      mass_err = std::max(mass_err, std::abs(m_after - m_before) / m_before);
      mom_err = std::max(mom_err, norm(p_after - p_before - impulse));
    }
    out.push_back(at_most("hydro: relative mass change per step", mass_err, 1e-12));
    out.push_back(at_most("hydro: |momentum change - source impulse|", mom_err, 1e-10));
    out.push_back(at_most("hydro: max ||A W - b|| of the closure", closure_err, 1e-13));
  }
  {
    const double c = acoustic_speed(256, c2, g.velocity.speed_ratio);
    out.push_back(at_most("hydro: acoustic speed / sqrt(c2) - 1", std::abs(c / std::sqrt(c2) - 1.0), 0.02));
  }
  {
    // Isotropy relaxation of Q with frozen cells: Q - Q̄/|S| decays at rate R.
    ModelParams q = p;
    q.kappa = 0.0;
    q.r_L = 0.0;
    q.D_L = 0.0;
    HydroSolver hs(g, q, c2);
    const std::size_t nt = g.ntheta();
    std::vector<double> Q(g.nx() * nt);
    for (std::size_t x = 0; x < g.nx(); ++x)
      for (std::size_t t = 0; t < nt; ++t) Q[x * nt + t] = 0.5 * (1.0 + 0.4 * g.theta.nodes[t][0]);
    HydroState s = hs.make_state(std::vector<double>(g.nx(), 1.0), std::vector<Vec2>(g.nx(), {0.0, 0.0}), Q,
                                 std::vector<double>(g.nx(), 0.3));
    const double qbar = qbar_field(s.Q, g)[0];
    const double R = isotropy_rate(1.0, qbar, 0.3, q);
    const double dev0 = s.Q[0] - qbar / sphere_measure(g.dim());
    const double T = 0.5 / R;
    for (int n = 0; n < 200; ++n) hs.limit_chemicals(s, T / 200.0);
    const double dev1 = s.Q[0] - qbar / sphere_measure(g.dim());
    const double measured = -std::log(dev1 / dev0) / T;
    out.push_back(at_most("hydro: isotropy relaxation rate / formula - 1", std::abs(measured / R - 1.0), 0.02));
    double integral = 0.0;
    const auto iso = hs.isotropy_term(s);
    for (std::size_t x = 0; x < g.nx(); ++x) {
      double sum = 0.0;
      for (std::size_t t = 0; t < nt; ++t) sum += g.theta.weights[t] * iso[x * nt + t];
      integral = std::max(integral, std::abs(sum));
    }
    out.push_back(at_most("hydro: |theta-integral of the isotropy term|", integral, 1e-14));
  }
  {
    GridSpec s2;
    s2.dim = 2;
    s2.speed_ratio = 0.5;
    s2.cells = 3;
    s2.radial_nodes = 64;
    s2.angular_nodes = 256;
    s2.activity_subdivision = 1;
    const auto g2 = build_phase_grid(s2);
    const auto gt = g_theta(g2.theta, g2.velocity);
    const double exact = 0.5 * (1.0 - 0.25) * (2.0 * std::numbers::pi - 4.0);
    double err = 0.0;
    for (double v : gt) err = std::max(err, std::abs(v - exact));
    out.push_back(at_most("hydro: |g(theta) - (1-s^2)/2 (2 pi - 4)| (n=2)", err, 1e-3));
  }
  return out;
}

inline std::vector<Check> scaling_checks() {
  std::vector<Check> out;
  ScaledParams s;
  s.eps = 0.1;
  s.a = 0.5;
  s.b = 1.0;
  s.d = 2.0;
  s.kappa = 0.7;
  s.r_L = 0.3;
  s.k1 = 2.0;
  s.km1 = 1.5;
  s.k2 = 0.8;
  s.km2 = 1.2;
  const auto back = nondimensionalize(dimensionalize(s, 2, 3.0, 0.4, 1.7, 2.5));
  const double err = std::max({std::abs(back.eps - s.eps), std::abs(back.a - s.a), std::abs(back.b - s.b),
                               std::abs(back.d - s.d), std::abs(back.kappa - s.kappa) / s.kappa,
                               std::abs(back.r_L - s.r_L) / s.r_L, std::abs(back.k1 - s.k1) / s.k1,
                               std::abs(back.km1 - s.km1) / s.km1, std::abs(back.k2 - s.k2) / s.k2,
                               std::abs(back.km2 - s.km2) / s.km2});
  out.push_back(at_most("scaling: scaled -> dimensional -> scaled", err, 1e-12));
  std::vector<double> e{0.2, 0.1, 0.05, 0.025}, r;
  for (double x : e) r.push_back(3.0 * x * x);
  out.push_back(at_most("scaling: |estimate_rate(3 eps^2) - 2|", std::abs(estimate_rate(r, e) - 2.0), 1e-12));
  return out;
}

inline std::vector<Check> io_checks(const RunConfig& cfg, Rng& rng) {
  std::vector<Check> out;
  const RunConfig back = parse_config(serialize_config(cfg));
  out.push_back(holds("io: config round trip", back == cfg));
  std::vector<Field> fields{{"a", {3, 2}, random_field(rng, 6, -1.0, 1.0)}, {"b", {0}, {}}};
  fields[0].data[0] = -0.0;
  fields[0].data[1] = std::numeric_limits<double>::denorm_min();
  const auto dec = decode_fields(encode_fields(fields));
  bool same = dec.size() == fields.size();
  for (std::size_t i = 0; same && i < dec.size(); ++i)
    same = dec[i].name == fields[i].name && dec[i].shape == fields[i].shape && dec[i].data.size() == fields[i].data.size() &&
           std::memcmp(dec[i].data.data(), fields[i].data.data(), dec[i].data.size() * sizeof(double)) == 0;
  out.push_back(holds("io: KCM1 container round trip is bit-identical", same));
  return out;
}

// ---------------------------------------------------------------------------

struct NamedSuite {
  std::string name;
  std::vector<Check> checks;
};

/// Every invariant suite on the configured grid and parameters.
inline std::vector<NamedSuite> verify_suite(const RunConfig& cfg) {
  Rng rng(cfg.run.seed);
  const PhaseGrid g = build_phase_grid(cfg.grid);
  const ModelParams& p = cfg.params;
  std::vector<NamedSuite> out;
  out.push_back({"phase_grid", quadrature_checks(cfg.grid)});
  for (auto& c : grid_checks(cfg.grid)) out.back().checks.push_back(c);
  out.push_back({"kernels", kernel_checks(g, p, rng)});
  out.push_back({"turning", solvability_checks(g, p, rng)});
  for (auto& c : operator_conservation_checks(g, p, rng)) out.back().checks.push_back(c);
  out.push_back({"moments", equilibrium_checks(g, p, rng)});
  for (auto& c : closure_checks(rng)) out.back().checks.push_back(c);
  for (auto& c : micro_macro_checks(g, p, rng)) out.back().checks.push_back(c);
  for (auto& c : pressure_checks(cfg.grid, p, pressure_coefficient(g.dim(), g.velocity.speed_ratio), "quadrature value"))
    out.back().checks.push_back(c);
  InitialData d = cfg.initial;
  if (d.profile == "zero") d.profile = "wave";
  out.push_back({"kinetic", conservation_checks(g, p, d, 1e-8)});
  for (auto& c : q_oracle_checks(g, p, d)) out.back().checks.push_back(c);
  for (auto& c : picard_checks(g, p, d, cfg.run.picard_t0, cfg.run.picard_dt, cfg.run.picard_tol, cfg.run.picard_max_iter))
    out.back().checks.push_back(c);
  out.push_back({"hydro", hydro_checks(g, p, d)});
  for (auto& c : scaling_checks()) out.back().checks.push_back(c);
  out.push_back({"io", io_checks(cfg, rng)});
  return out;
}

}  // namespace kcm
