#pragma once

// High-field limit: the macroscopic system for (ρ, ρU) with the closure for W
// and the limit fiber/chemoattractant equations, the nondimensionalization
// map, and the ε-sweep that compares kinetic runs against the limit.

#include <cmath>
#include <string>
#include <vector>

#include "kcm/core.hpp"
#include "kcm/kernels.hpp"
#include "kcm/kinetic.hpp"
#include "kcm/moments.hpp"
#include "kcm/phase_grid.hpp"

namespace kcm {

/// g(θ) = ∫_V (1 - |θ·v/|v||) dv on the θ-grid.
inline std::vector<double> g_theta(const ThetaGrid& theta, const VelocityQuadrature& quad) {
  std::vector<double> g(theta.size(), 0.0);
  for (std::size_t t = 0; t < theta.size(); ++t)
    for (std::size_t v = 0; v < quad.size(); ++v)
      g[t] += quad.weights[v] * (1.0 - std::abs(dot(theta.nodes[t], quad.nodes[v])) / norm(quad.nodes[v]));
  return g;
}

struct HydroState {
  std::vector<double> rho;
  std::vector<Vec2> m;  // ρU
  std::vector<Vec2> W;  // closure, refreshed every step
  std::vector<double> Q;
  std::vector<double> L;
  double t = 0.0;
};

/// Relaxation rate of Q toward isotropy, k1 k-1 k-2 ρ / D (0 when D = 0).
inline double isotropy_rate(double rho, double qbar, double l, const ModelParams& p) {
  const double D = closure_denominator(qbar, l, p);
  return D > 0.0 ? p.k1 * p.km1 * p.km2 * rho / D : 0.0;
}

inline Vec2 closure_or_zero(double qbar, double l, const ModelParams& p) {
  return closure_denominator(qbar, l, p) > 0.0 ? closure_W(qbar, l, p) : Vec2{0.0, 0.0};
}

class HydroSolver {
 public:
  /// `c2` is the pressure coefficient; pass pressure_coefficient(n, s) for the
  /// continuous value or kernels.lambda / kernels.beta to match a velocity grid.
  HydroSolver(const PhaseGrid& grid, const ModelParams& params, double c2)
      : grid_(grid), params_(params), kernels_(make_kernels(grid, params)), c2_(c2),
        g_(g_theta(grid.theta, grid.velocity)), hap_(haptotaxis_moments(kernels_, grid)) {}

  const ModelParams& params() const { return params_; }
  double c2() const { return c2_; }
  double sound_speed() const { return std::sqrt(c2_); }
  const KernelSet& kernels() const { return kernels_; }

  HydroState make_state(const std::vector<double>& rho, const std::vector<Vec2>& m, const std::vector<double>& Q,
                        const std::vector<double>& L) const {
    HydroState s{rho, m, {}, Q, L, 0.0};
    refresh_closure(s);
    return s;
  }

  double max_dt(const HydroState& s) const {
    double r = 0.0;
    for (int d = 0; d < grid_.dim(); ++d) r += max_speed(s) / grid_.space.spacing(d);
    return 0.5 / r;
  }

  /// Strang step: limit chemicals (dt/2), flow (dt), limit chemicals (dt/2).
  /// Returns ∫ (δ_{b,1} H + δ_{d,1} C) dx integrated over the flow substep.
  Vec2 step(HydroState& s, double dt) const {
    const double lim = max_dt(s);
    if (dt > lim * (1.0 + 1e-12)) throw CflError("hydro time step exceeds the CFL limit", dt, lim);
    limit_chemicals(s, 0.5 * dt);
    const Vec2 impulse = flow(s, dt);
    limit_chemicals(s, 0.5 * dt);
    refresh_closure(s);
    s.t += dt;
    return impulse;
  }

  /// SSP-RK2 for the mass/momentum system with local Lax-Friedrichs fluxes.
  Vec2 flow(HydroState& s, double dt) const {
    const std::size_t nx = grid_.nx();
    std::vector<double> r0(nx), r1(nx), rho1(nx);
    std::vector<Vec2> q0(nx), q1(nx), m1(nx);
    std::vector<Vec2> src0(nx), src1(nx);
    rates(s.rho, s.m, s, r0, q0, src0);
    for (std::size_t x = 0; x < nx; ++x) {
      rho1[x] = s.rho[x] + dt * r0[x];
      m1[x] = s.m[x] + dt * q0[x];
    }
    rates(rho1, m1, s, r1, q1, src1);
    Vec2 impulse{0.0, 0.0};
    const double dx = grid_.space.cell_volume();
    for (std::size_t x = 0; x < nx; ++x) {
      s.rho[x] = 0.5 * s.rho[x] + 0.5 * (rho1[x] + dt * r1[x]);
      s.m[x] = 0.5 * s.m[x] + 0.5 * (m1[x] + dt * q1[x]);
      impulse = impulse + (0.5 * dt * dx) * (src0[x] + src1[x]);
    }
    return impulse;
  }

  /// Limit equations for Q and L over dt (ρ, U frozen):
  ///   ∂t Q = -κ ρ/|V| g(θ) Q + R (Q̄/|S| - Q),  R = k1 k-1 k-2 ρ / D
  ///   ∂t L =  κ ρ/|V| ∫ g Q dθ - r_L L + D_L ΔL
  void limit_chemicals(HydroState& s, double dt) const {
    const auto& p = params_;
    const std::size_t nx = grid_.nx(), nt = grid_.ntheta();
    double bound = p.r_L;
    for (std::size_t x = 0; x < nx; ++x) {
      const double qbar = qbar_at(s.Q, x);
      double gmax = 0.0;
      for (double gv : g_) gmax = std::max(gmax, gv);
      bound = std::max(bound, p.kappa * s.rho[x] / kernels_.measure_v * gmax + isotropy_rate(s.rho[x], qbar, s.L[x], p));
    }
    const double h = grid_.space.min_spacing();
    if (p.D_L > 0.0) bound = std::max(bound, p.r_L + 2.0 * grid_.dim() * p.D_L / (h * h));
    const int m = std::max(1, static_cast<int>(std::ceil(dt * bound / 0.5)));
    const double sub = dt / m;
    std::vector<double> rq(s.Q.size()), rl(nx), Q1(s.Q.size()), L1(nx);
    for (int i = 0; i < m; ++i) {
      chem_rates(s.Q, s.L, s.rho, rq, rl);
      for (std::size_t k = 0; k < s.Q.size(); ++k) Q1[k] = s.Q[k] + sub * rq[k];
      for (std::size_t x = 0; x < nx; ++x) L1[x] = s.L[x] + sub * rl[x];
      chem_rates(Q1, L1, s.rho, rq, rl);
      for (std::size_t k = 0; k < s.Q.size(); ++k) s.Q[k] = 0.5 * s.Q[k] + 0.5 * (Q1[k] + sub * rq[k]);
      for (std::size_t x = 0; x < nx; ++x) s.L[x] = 0.5 * s.L[x] + 0.5 * (L1[x] + sub * rl[x]);
    }
    (void)nt;
  }

  /// Relaxation part of the limit Q equation alone (for tests).
  std::vector<double> isotropy_term(const HydroState& s) const {
    std::vector<double> out(s.Q.size());
    const std::size_t nt = grid_.ntheta();
    const double inv_s = 1.0 / sphere_measure(grid_.dim());
    for (std::size_t x = 0; x < grid_.nx(); ++x) {
      const double qbar = qbar_at(s.Q, x);
      const double R = isotropy_rate(s.rho[x], qbar, s.L[x], params_);
      for (std::size_t t = 0; t < nt; ++t) out[x * nt + t] = R * (qbar * inv_s - s.Q[x * nt + t]);
    }
    return out;
  }

  void refresh_closure(HydroState& s) const {
    s.W.resize(grid_.nx());
    for (std::size_t x = 0; x < grid_.nx(); ++x) s.W[x] = closure_or_zero(qbar_at(s.Q, x), s.L[x], params_);
  }

  /// Momentum sources at every x-cell with the regime selectors applied.
  std::vector<Vec2> sources(const std::vector<double>& rho, const std::vector<Vec2>& m, const HydroState& s) const {
    std::vector<Vec2> out(grid_.nx(), {0.0, 0.0});
    const bool hap = params_.haptotaxis_active(), chem = params_.chemotaxis_active();
    if (!hap && !chem) return out;
    const auto grad = gradient(s.L, grid_.space);
    for (std::size_t x = 0; x < grid_.nx(); ++x) {
      const Vec2 U = rho[x] > rho_floor ? (1.0 / rho[x]) * m[x] : Vec2{0.0, 0.0};
      const auto cm = chem ? macro_kernel_moments(kernels_, grid_, grad[x]) : MacroKernelMoments{};
      const auto src = macro_sources(rho[x], U, &s.Q[x * grid_.ntheta()], hap_, chem ? cm : hap_, kernels_, grid_);
      if (hap) out[x] = out[x] + src.H;
      if (chem) out[x] = out[x] + src.C;
    }
    return out;
  }

 private:
  double qbar_at(const std::vector<double>& Q, std::size_t x) const {
    double q = 0.0;
    for (std::size_t t = 0; t < grid_.ntheta(); ++t) q += grid_.theta.weights[t] * Q[x * grid_.ntheta() + t];
    return q;
  }

  double max_speed(const HydroState& s) const {
    double u = 0.0;
    for (std::size_t x = 0; x < grid_.nx(); ++x)
      if (s.rho[x] > rho_floor) u = std::max(u, norm(s.m[x]) / s.rho[x]);
    return u + std::sqrt(c2_);
  }

  void rates(const std::vector<double>& rho, const std::vector<Vec2>& m, const HydroState& s,
             std::vector<double>& drho, std::vector<Vec2>& dm, std::vector<Vec2>& src) const {
    const auto& sp = grid_.space;
    const std::size_t nx = grid_.nx();
    src = sources(rho, m, s);
    for (std::size_t x = 0; x < nx; ++x) {
      drho[x] = 0.0;
      dm[x] = src[x];
    }
    auto speed = [&](std::size_t x) {
      return (rho[x] > rho_floor ? norm(m[x]) / rho[x] : 0.0) + std::sqrt(c2_);
    };
    for (int d = 0; d < sp.dim; ++d) {
      const auto du = static_cast<std::size_t>(d);
      const double inv_h = 1.0 / sp.spacing(d);
      for (std::size_t x = 0; x < nx; ++x) {
        // flux through the face between x and its right neighbour
        const std::size_t r = sp.shift(x, d, 1);
        const double a = std::max(speed(x), speed(r));
        const double frho = 0.5 * (m[x][du] + m[r][du]) - 0.5 * a * (rho[r] - rho[x]);
        Vec2 fm{0.0, 0.0};
        for (std::size_t k = 0; k < 2; ++k) {
          const double pl = k == du ? c2_ * rho[x] : 0.0;
          const double pr = k == du ? c2_ * rho[r] : 0.0;
          fm[k] = 0.5 * (pl + pr) - 0.5 * a * (m[r][k] - m[x][k]);
        }
        drho[x] -= frho * inv_h;
        drho[r] += frho * inv_h;
        dm[x] = dm[x] - inv_h * fm;
        dm[r] = dm[r] + inv_h * fm;
      }
    }
  }

  void chem_rates(const std::vector<double>& Q, const std::vector<double>& L, const std::vector<double>& rho,
                  std::vector<double>& rq, std::vector<double>& rl) const {
    const auto& p = params_;
    const std::size_t nt = grid_.ntheta();
    const double inv_s = 1.0 / sphere_measure(grid_.dim());
    const auto lap = laplacian(L, grid_.space);
    for (std::size_t x = 0; x < grid_.nx(); ++x) {
      const double qbar = qbar_at(Q, x);
      const double R = isotropy_rate(rho[x], qbar, L[x], p);
      const double deg = p.kappa * rho[x] / kernels_.measure_v;
      double prod = 0.0;
      for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t i = x * nt + t;
        rq[i] = -deg * g_[t] * Q[i] + R * (qbar * inv_s - Q[i]);
        prod += grid_.theta.weights[t] * g_[t] * Q[i];
      }
      rl[x] = deg * prod - p.r_L * L[x] + p.D_L * lap[x];
    }
  }

  const PhaseGrid& grid_;
  ModelParams params_;
  KernelSet kernels_;
  double c2_;
  std::vector<double> g_;
  MacroKernelMoments hap_;
};

// ---------------------------------------------------------------------------
// Nondimensionalization.

struct DimensionalParams {
  int n = 1;
  double tau = 1.0, R = 1.0, s2 = 1.0, R0 = 1.0, fbar = 1.0;
  double p_l = 1.0, p_h = 1.0, p_c = 1.0, Gbar = 1.0;
  double kappa = 0.0, r_L = 0.0, D_L = 1.0;
  double k1 = 0.0, km1 = 0.0, k2 = 0.0, km2 = 0.0;
};

struct ScaledParams {
  double eps = 0.0, a = 0.0, b = 0.0, d = 0.0;
  double kappa = 0.0, r_L = 0.0, k1 = 0.0, km1 = 0.0, k2 = 0.0, km2 = 0.0;
  double transport_residual = 0.0;  // s2 τ / R - 1
  double diffusion_residual = 0.0;  // τ D_L / R^2 - 1
};

namespace detail {
inline double snap_exponent(double e) { return std::abs(e - std::round(e)) < 1e-12 ? std::round(e) : e; }
}  // namespace detail

inline ScaledParams nondimensionalize(const DimensionalParams& in) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("nondimensionalize: ") + name + " must be > 0");
  };
  positive(in.tau, "tau");
  positive(in.R, "R");
  positive(in.s2, "s2");
  positive(in.R0, "R0");
  positive(in.fbar, "fbar");
  positive(in.p_l, "p_l");
  positive(in.p_h, "p_h");
  positive(in.p_c, "p_c");
  positive(in.Gbar, "Gbar");
  sphere_measure(in.n);

  ScaledParams s;
  s.transport_residual = in.s2 * in.tau / in.R - 1.0;
  s.diffusion_residual = in.tau * in.D_L / (in.R * in.R) - 1.0;
  if (std::abs(s.transport_residual) > 1e-9 || std::abs(s.diffusion_residual) > 1e-9)
    throw ConfigError("nondimensionalize: normalization needs R = s2 tau and D_L = R^2 / tau");

  s.eps = 1.0 / (in.tau * in.p_l);
  if (!(s.eps < 1.0)) throw ConfigError("nondimensionalize: tau * p_l must exceed 1 (eps < 1)");
  const double le = std::log(s.eps);
  s.a = detail::snap_exponent(std::log(in.Gbar / (in.R0 * in.p_l)) / le);
  s.b = detail::snap_exponent(std::log(in.p_h / in.p_l) / le);
  s.d = detail::snap_exponent(std::log(in.p_c / in.p_l) / le);
  if (!(s.a > 0.0 && s.a < 1.0))
    throw ConfigError("regime violation: reaction exponent a = " + std::to_string(s.a) + " must satisfy 0 < a < 1");
  if (!(s.b >= 1.0)) throw ConfigError("regime violation: haptotaxis exponent b must be >= 1");
  if (!(s.d >= 1.0)) throw ConfigError("regime violation: chemotaxis exponent d must be >= 1");

  const double base = in.tau * in.R0 * in.R0 * std::pow(in.s2, in.n) * in.fbar;
  s.kappa = base * in.kappa;
  s.r_L = in.tau * in.r_L;
  s.k1 = base * in.R0 * in.k1;
  s.k2 = base * in.R0 * in.k2;
  s.km1 = base * in.km1;
  s.km2 = base * in.km2;
  return s;
}

/// Inverse map for given reference scales (τ, s2, R0, f̄): builds dimensional
/// parameters that satisfy the normalization and reproduce `s`.
inline DimensionalParams dimensionalize(const ScaledParams& s, int n, double tau, double s2, double R0, double fbar) {
  DimensionalParams d;
  d.n = n;
  d.tau = tau;
  d.s2 = s2;
  d.R0 = R0;
  d.fbar = fbar;
  d.R = s2 * tau;
  d.D_L = d.R * d.R / tau;
  d.p_l = 1.0 / (s.eps * tau);
  d.Gbar = std::pow(s.eps, s.a) * R0 * d.p_l;
  d.p_h = std::pow(s.eps, s.b) * d.p_l;
  d.p_c = std::pow(s.eps, s.d) * d.p_l;
  const double base = tau * R0 * R0 * std::pow(s2, n) * fbar;
  d.kappa = s.kappa / base;
  d.r_L = s.r_L / tau;
  d.k1 = s.k1 / (base * R0);
  d.k2 = s.k2 / (base * R0);
  d.km1 = s.km1 / base;
  d.km2 = s.km2 / base;
  return d;
}

// ---------------------------------------------------------------------------

/// Least-squares slope of log(error) against log(ε).
inline double estimate_rate(const std::vector<double>& errors, const std::vector<double>& eps) {
  if (errors.size() != eps.size() || errors.size() < 3) throw ConfigError("estimate_rate: need >= 3 paired values");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0.0) || !(eps[i] > 0.0)) throw DomainError("estimate_rate: values must be positive");
    const double x = std::log(eps[i]), y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (!(den > 1e-12 * n * sxx)) throw DomainError("estimate_rate: epsilons must not all be equal");
  return (n * sxy - sx * sy) / den;
}

}  // namespace kcm
