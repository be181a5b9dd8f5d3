#pragma once

// Velocity/activity moments of the cell distribution, the local equilibrium
// of the turning operator, the receptor closure and the macroscopic sources.

#include <cmath>
#include <string>
#include <vector>

#include "kcm/core.hpp"
#include "kcm/kernels.hpp"
#include "kcm/phase_grid.hpp"

namespace kcm {

inline constexpr double rho_floor = 1e-14;

struct MomentSet {
  std::vector<double> rho;
  std::vector<Vec2> mom;   // ρU
  std::vector<Vec2> rhoW;  // ∫∫ y f
  std::vector<Mat2> P;     // ∫∫ (v-U)⊗(v-U) f
  std::vector<Mat2> Myv;   // ∫∫ y⊗v f

  std::size_t size() const { return rho.size(); }
  Vec2 U(std::size_t x) const { return rho[x] > rho_floor ? (1.0 / rho[x]) * mom[x] : Vec2{0.0, 0.0}; }
  Vec2 W(std::size_t x) const { return rho[x] > rho_floor ? (1.0 / rho[x]) * rhoW[x] : Vec2{0.0, 0.0}; }
};

inline MomentSet compute_moments(const std::vector<double>& f, const PhaseGrid& g) {
  const auto& vq = g.velocity;
  const auto& ay = g.activity;
  MomentSet m;
  const std::size_t nx = g.nx();
  m.rho.assign(nx, 0.0);
  m.mom.assign(nx, {0.0, 0.0});
  m.rhoW.assign(nx, {0.0, 0.0});
  m.P.assign(nx, Mat2{});
  m.Myv.assign(nx, Mat2{});
  parallel_for(nx, [&](std::size_t x) {
    double rho = 0.0;
    Vec2 mom{0.0, 0.0}, w{0.0, 0.0};
    Mat2 vv{}, yv{};
    for (std::size_t v = 0; v < g.nv(); ++v) {
      double fy = 0.0;
      Vec2 yfy{0.0, 0.0};
      for (std::size_t y = 0; y < g.ny(); ++y) {
        const double c = ay.areas[y] * f[g.at(x, v, y)];
        fy += c;
        yfy = yfy + c * ay.centroids[y];
      }
      const double wv = vq.weights[v];
      const Vec2& vel = vq.nodes[v];
      rho += wv * fy;
      mom = mom + (wv * fy) * vel;
      w = w + wv * yfy;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          vv[i][j] += wv * fy * vel[i] * vel[j];
          yv[i][j] += wv * yfy[i] * vel[j];
        }
    }
    m.rho[x] = rho;
    m.mom[x] = mom;
    m.rhoW[x] = w;
    m.Myv[x] = yv;
    const Vec2 U = m.U(x);
    // ∫(v-U)⊗(v-U) f = ∫ v⊗v f - U⊗(ρU) - (ρU)⊗U + ρ U⊗U
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) m.P[x][i][j] = vv[i][j] - U[i] * mom[j] - mom[i] * U[j] + rho * U[i] * U[j];
  });
  return m;
}

/// Largest |U| for which M_{ρ,U} stays nonnegative on |v| <= 1.
inline double max_equilibrium_speed(const KernelSet& k) { return 1.0 / k.beta_over_lambda(); }

/// M_{ρ,U}(v, y) = ρ/(|V||Y|) (1 + (β/λ) v·U) evaluated on the grid, one (ρ, U) per x-cell.
inline std::vector<double> equilibrium(const std::vector<double>& rho, const std::vector<Vec2>& U,
                                       const PhaseGrid& g, const KernelSet& k) {
  if (rho.size() != g.nx() || U.size() != g.nx()) throw ConfigError("equilibrium: field sizes do not match the grid");
  const double bl = k.beta_over_lambda();
  for (std::size_t x = 0; x < g.nx(); ++x) {
    if (norm(U[x]) * bl > 1.0 + 1e-15)
      throw DomainError("equilibrium: |U| = " + std::to_string(norm(U[x])) +
                        " makes M negative; max allowed |U| = " + std::to_string(1.0 / bl));
    if (rho[x] < 0.0) throw DomainError("equilibrium: negative density");
  }
  const double vy = k.measure_v * g.activity.measure();
  std::vector<double> f(g.kinetic_size());
  for (std::size_t x = 0; x < g.nx(); ++x)
    for (std::size_t v = 0; v < g.nv(); ++v) {
      const double val = rho[x] / vy * (1.0 + bl * dot(g.velocity.nodes[v], U[x]));
      for (std::size_t y = 0; y < g.ny(); ++y) f[g.at(x, v, y)] = val;
    }
  return f;
}

// ---------------------------------------------------------------------------

struct ReactionSystem {
  Mat2 A;
  Vec2 b;
  double det() const { return A[0][0] * A[1][1] - A[0][1] * A[1][0]; }
};

inline ReactionSystem reaction_matrix(double qbar, double l, const ModelParams& p) {
  ReactionSystem r;
  r.A = {{{p.k1 * qbar + p.km1, p.k1 * qbar}, {p.k2 * l, p.k2 * l + p.km2}}};
  r.b = {p.k1 * qbar, p.k2 * l};
  return r;
}

/// Denominator of the closure; equals det A.
inline double closure_denominator(double qbar, double l, const ModelParams& p) {
  return p.k1 * p.km2 * qbar + p.km1 * p.k2 * l + p.km1 * p.km2;
}

/// Steady receptor occupancy W = (k1 k-2 Q̄, k-1 k2 L) / D, i.e. the zero of G.
inline Vec2 closure_W(double qbar, double l, const ModelParams& p) {
  const double D = closure_denominator(qbar, l, p);
  if (!(D > 0.0)) throw DomainError("closure undefined: k1 k-2 Q̄ + k-1 k2 L + k-1 k-2 = 0");
  return {p.k1 * p.km2 * qbar / D, p.km1 * p.k2 * l / D};
}

/// Solves A W = b by Cramer's rule; same failure condition as closure_W.
inline Vec2 solve_reaction(const ReactionSystem& r) {
  const double D = r.det();
  if (!(std::abs(D) > 0.0)) throw DomainError("reaction matrix is singular (no unbinding)");
  return {(r.b[0] * r.A[1][1] - r.A[0][1] * r.b[1]) / D, (r.A[0][0] * r.b[1] - r.A[1][0] * r.b[0]) / D};
}

// ---------------------------------------------------------------------------

/// Sound-speed coefficient c^2 of the equilibrium pressure,
/// ∫ v⊗v M dv dy = c^2 ρ I with c^2 = (1 - s^{n+2}) / ((n+2)(1 - s^n)).
inline double pressure_coefficient(int n, double s) {
  return (1.0 - std::pow(s, n + 2)) / ((n + 2.0) * (1.0 - std::pow(s, n)));
}

/// P0 = c^2 ρ I - ρ U⊗U.
inline Mat2 pressure_equilibrium(double rho, const Vec2& U, int n, double s) {
  const double c2 = pressure_coefficient(n, s);
  Mat2 P = outer(U, U);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) P[i][j] = (i == j && i < n ? c2 * rho : 0.0) - rho * P[i][j];
  return P;
}

// ---------------------------------------------------------------------------

struct MacroKernelMoments {
  std::vector<Vec2> psi1;  // Ψ¹(θ) = ∫∫ v ψ dv dv'
  std::vector<Mat2> psi2;  // Ψ²(θ) = ∫∫ v⊗v' ψ dv dv'
  Vec2 K1{0.0, 0.0};       // ∫∫ v K dv dv'
  Mat2 K2{};               // ∫∫ v⊗v' K dv dv'
};

/// Double-velocity quadratures of the kernel moments (ψ and K are evaluated
/// pointwise, so no structural shortcut is taken here).
inline MacroKernelMoments macro_kernel_moments(const KernelSet& k, const PhaseGrid& g, const Vec2& gradL) {
  const auto& vq = g.velocity;
  MacroKernelMoments m;
  m.psi1.assign(g.ntheta(), {0.0, 0.0});
  m.psi2.assign(g.ntheta(), Mat2{});
  for (std::size_t t = 0; t < g.ntheta(); ++t) {
    for (std::size_t i = 0; i < vq.size(); ++i) {
      const double psi = eval_haptotaxis_kernel(vq.nodes[i], t, k);
      for (std::size_t j = 0; j < vq.size(); ++j) {
        const double w = vq.weights[i] * vq.weights[j] * psi;
        m.psi1[t] = m.psi1[t] + w * vq.nodes[i];
        const Mat2 o = outer(vq.nodes[i], vq.nodes[j]);
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) m.psi2[t][a][b] += w * o[a][b];
      }
    }
  }
  for (std::size_t i = 0; i < vq.size(); ++i) {
    const double kv = eval_chemo_kernel(gradL, vq.nodes[i], k);
    for (std::size_t j = 0; j < vq.size(); ++j) {
      const double w = vq.weights[i] * vq.weights[j] * kv;
      m.K1 = m.K1 + w * vq.nodes[i];
      const Mat2 o = outer(vq.nodes[i], vq.nodes[j]);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) m.K2[a][b] += w * o[a][b];
    }
  }
  return m;
}

/// Haptotaxis part of the kernel moments only (independent of ∇L).
inline MacroKernelMoments haptotaxis_moments(const KernelSet& k, const PhaseGrid& g) {
  return macro_kernel_moments(k, g, {0.0, 0.0});
}

/// Macroscopic momentum sources at one x-cell:
///   H = ρ/|V| ( Σ_θ (Ψ¹ + (β/λ) Ψ² U) Q w_θ - Q̄ |V| U )
///   C = ρ α2/|V| ( K¹ + ((β/λ) K² - |V| I) U )
/// `q` holds Q(θ) on the θ-grid.
struct MacroSources {
  Vec2 H;
  Vec2 C;
};

inline MacroSources macro_sources(double rho, const Vec2& U, const double* q, const MacroKernelMoments& hm,
                                  const MacroKernelMoments& cm, const KernelSet& k, const PhaseGrid& g) {
  const double bl = k.beta_over_lambda();
  const double V = k.measure_v;
  Vec2 sum{0.0, 0.0};
  double qbar = 0.0;
  for (std::size_t t = 0; t < g.ntheta(); ++t) {
    const double wq = g.theta.weights[t] * q[t];
    sum = sum + wq * (hm.psi1[t] + bl * matvec(hm.psi2[t], U));
    qbar += wq;
  }
  MacroSources s;
  s.H = (rho / V) * (sum - (qbar * V) * U);
  const Vec2 ku = bl * matvec(cm.K2, U) - V * U;
  s.C = (rho * k.alpha2 / V) * (cm.K1 + ku);
  return s;
}

}  // namespace kcm
