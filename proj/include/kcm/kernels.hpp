#pragma once

// Model parameters, the mass-action drift G, and the three interaction
// kernels (haptotaxis ψ, turning T, chemotaxis K) on a discrete velocity set.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kcm/core.hpp"
#include "kcm/phase_grid.hpp"

namespace kcm {

struct ModelParams {
  // reaction rates for  Q̄ + R <-> Q̄R  and  L + R <-> LR
  double k1 = 1.0, km1 = 1.0, k2 = 1.0, km2 = 1.0;
  double kappa = 1.0;  // fiber degradation
  double r_L = 1.0;    // chemoattractant decay
  double D_L = 1.0;    // chemoattractant diffusion
  double alpha1 = 0.5, alpha2 = 0.5;
  // Turning kernel T = λ + β v·v'. When beta <= 0 it is derived from λ so that
  // the discrete momentum condition holds; when lambda <= 0, λ = 1/|V|.
  double lambda = 0.0;
  double beta = 0.0;
  double chi = 0.5;  // chemotactic sensitivity
  // scaling
  double eps = 0.1, a = 0.5, b = 1.0, d = 1.0;

  bool haptotaxis_active() const { return b == 1.0; }
  bool chemotaxis_active() const { return d == 1.0; }
};

inline void validate_params(const ModelParams& p) {
  auto nonneg = [](double x, const char* name) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(std::string(name) + " must be a finite value >= 0");
  };
  nonneg(p.k1, "k1");
  nonneg(p.km1, "k_-1");
  nonneg(p.k2, "k2");
  nonneg(p.km2, "k_-2");
  nonneg(p.kappa, "kappa");
  nonneg(p.r_L, "r_L");
  nonneg(p.D_L, "D_L");
  nonneg(p.alpha1, "alpha1");
  nonneg(p.alpha2, "alpha2");
  nonneg(p.chi, "chi");
  if (std::abs(p.alpha1 + p.alpha2 - 1.0) > 1e-12) throw ConfigError("alpha1 + alpha2 must equal 1");
  if (!(p.eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(p.a > 0.0 && p.a < 1.0)) throw ConfigError("scaling exponent a must satisfy 0 < a < 1");
  if (!(p.b >= 1.0)) throw ConfigError("scaling exponent b must satisfy b >= 1");
  if (!(p.d >= 1.0)) throw ConfigError("scaling exponent d must satisfy d >= 1");
}

/// Mass-action drift in the activity triangle (scaled, R0 = 1).
inline Vec2 eval_G(const Vec2& y, double qbar, double l, const ModelParams& p) {
  const double free = 1.0 - y[0] - y[1];
  return {p.k1 * free * qbar - p.km1 * y[0], p.k2 * free * l - p.km2 * y[1]};
}

/// β/λ implied by the continuous relation λ(1-s^n)(n+2) = β(1-s^{n+2}).
inline double continuous_beta_over_lambda(int n, double s) {
  return (n + 2.0) * (1.0 - std::pow(s, n)) / (1.0 - std::pow(s, n + 2));
}

struct KernelSet {
  const PhaseGrid* grid = nullptr;
  double measure_v = 0.0;  // discrete |V|
  double m2 = 0.0;         // discrete ∫ v_0^2 dv
  double lambda = 0.0;
  double beta = 0.0;
  double alpha1 = 0.0, alpha2 = 0.0;
  double chi = 0.0;
  std::vector<double> psi_norm;  // Z(θ) per θ node

  double beta_over_lambda() const { return beta / lambda; }
  /// Residual of the discrete momentum relation β m2 = λ |V|.
  double relation_residual() const { return beta * m2 - lambda * measure_v; }
};

/// Builds the default kernel family on the grid. β is derived from λ on the
/// actual quadrature so that ∫ v L(f) dv = 0 holds to rounding.
inline KernelSet make_kernels(const PhaseGrid& grid, const ModelParams& p) {
  KernelSet k;
  k.grid = &grid;
  k.measure_v = grid.velocity.measure();
  k.m2 = grid.velocity.second_moment();
  k.lambda = p.lambda > 0.0 ? p.lambda : 1.0 / k.measure_v;
  k.beta = p.beta > 0.0 ? p.beta : k.lambda * k.measure_v / k.m2;
  if (p.lambda > 0.0 && p.beta > 0.0 && std::abs(k.beta * k.m2 - k.lambda * k.measure_v) > 1e-12 * k.lambda * k.measure_v)
    throw ConfigError("lambda and beta violate the momentum relation on this grid; give only one of them");
  k.alpha1 = p.alpha1;
  k.alpha2 = p.alpha2;
  k.chi = p.chi;
  if (k.chi * grid.velocity.max_speed() >= 1.0 / k.measure_v)
    throw ConfigError("chi too large: chemotaxis kernel would become negative (need chi * max|v| < 1/|V|)");

  k.psi_norm.resize(grid.ntheta());
  for (std::size_t t = 0; t < grid.ntheta(); ++t) {
    double z = 0.0;
    for (std::size_t i = 0; i < grid.nv(); ++i)
      z += grid.velocity.weights[i] * (1.0 + dot(grid.velocity.nodes[i], grid.theta.nodes[t]));
    k.psi_norm[t] = z;
  }
  return k;
}

inline double eval_turning_kernel(const Vec2& v, const Vec2& vp, const KernelSet& k) {
  return k.lambda + k.beta * dot(v, vp);
}

/// ψ(v; v', θ) = (1 + v·θ) / Z(θ), independent of v'.
inline double eval_haptotaxis_kernel(const Vec2& v, std::size_t theta, const KernelSet& k) {
  return (1.0 + dot(v, k.grid->theta.nodes[theta])) / k.psi_norm[theta];
}

inline Vec2 chemo_bias(const Vec2& F) {
  const double s = 1.0 / (1.0 + norm(F));
  return {F[0] * s, F[1] * s};
}

/// K[F](v, v') = 1/|V| + χ v·F/(1+|F|), independent of v'.
inline double eval_chemo_kernel(const Vec2& F, const Vec2& v, const KernelSet& k) {
  return 1.0 / k.measure_v + k.chi * dot(v, chemo_bias(F));
}

struct KernelCheck {
  std::string name;
  double value;
  bool pass;
};

struct KernelReport {
  std::vector<KernelCheck> checks;
  double min_turning = 0.0;  // informational
  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Measures the discrete normalization and positivity conditions of the three
/// kernels. Every listed violation must be below 1e-10 to pass.
inline KernelReport validate_kernels(const KernelSet& k, const PhaseGrid& grid) {
  const auto& vq = grid.velocity;
  const double tol = 1e-10;
  KernelReport r;
  auto add = [&](const std::string& name, double v) { r.checks.push_back({name, v, v < tol}); };

  double psi_norm = 0.0, psi_neg = 0.0;
  for (std::size_t t = 0; t < grid.ntheta(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < vq.size(); ++i) {
      const double p = eval_haptotaxis_kernel(vq.nodes[i], t, k);
      s += vq.weights[i] * p;
      psi_neg = std::max(psi_neg, -p);
    }
    psi_norm = std::max(psi_norm, std::abs(s - 1.0));
  }
  add("haptotaxis normalization |int psi dv - 1|", psi_norm);
  add("haptotaxis negativity", psi_neg);

  // ∫ T(v, v') dv / (λ|V|) = 1 and the momentum relation ∫ v T(v, v') dv = λ|V| v'
  double t_norm = 0.0, t_mom = 0.0;
  double t_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < vq.size(); ++j) {
    double s = 0.0;
    Vec2 m{0.0, 0.0};
    for (std::size_t i = 0; i < vq.size(); ++i) {
      const double t = eval_turning_kernel(vq.nodes[i], vq.nodes[j], k);
      t_min = std::min(t_min, t);
      s += vq.weights[i] * t;
      m = m + (vq.weights[i] * t) * vq.nodes[i];
    }
    t_norm = std::max(t_norm, std::abs(s / (k.lambda * k.measure_v) - 1.0));
    const Vec2 target = (k.lambda * k.measure_v) * vq.nodes[j];
    t_mom = std::max(t_mom, norm(m - target) / (k.lambda * k.measure_v));
  }
  add("turning normalization |int T dv / (lambda|V|) - 1|", t_norm);
  add("turning momentum relation |int v T dv - lambda|V| v'|", t_mom);
  r.min_turning = t_min;

  // Chemotaxis: sample a few gradients, including large ones.
  double c_norm = 0.0, c_neg = 0.0;
  const std::array<Vec2, 5> samples{{{0.0, 0.0}, {0.3, 0.0}, {-2.0, 0.5}, {50.0, -20.0}, {1e6, 1e6}}};
  for (const auto& F0 : samples) {
    const Vec2 F = grid.dim() == 1 ? Vec2{F0[0], 0.0} : F0;
    double s = 0.0;
    for (std::size_t i = 0; i < vq.size(); ++i) {
      const double kv = eval_chemo_kernel(F, vq.nodes[i], k);
      s += vq.weights[i] * kv;
      c_neg = std::max(c_neg, -kv);
    }
    c_norm = std::max(c_norm, std::abs(s - 1.0));
  }
  add("chemotaxis normalization |int K dv - 1|", c_norm);
  add("chemotaxis negativity", c_neg);
  return r;
}

}  // namespace kcm
