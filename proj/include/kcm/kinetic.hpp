#pragma once

// Kinetic solver for the scaled cell/fiber/chemoattractant system
//
//   ∂t f + v·∇x f + ε^{a-1} ∇y·(G(y, Q̄, L) f) = ε^{b-1} H(f,Q) + ε^{-1} L(f) + ε^{d-1} C(f,L)
//   ∂t Q = -κ D_θ[f] Q - k1 X[f] Q + k-1/|S| Y1[f]
//   ∂t L =  κ ∫ D_θ[f] Q dθ - r_L L + D_L ΔL - k2 X[f] L + k-2 Y2[f]
//
// with D_θ[f] = ∫∫ (1 - |θ·v/|v||) f, X[f] = ∫∫ (1 - y1 - y2) f, Yi[f] = ∫∫ yi f.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "kcm/core.hpp"
#include "kcm/kernels.hpp"
#include "kcm/moments.hpp"
#include "kcm/phase_grid.hpp"

namespace kcm {

struct KineticState {
  std::vector<double> f;  // (x, v, y), see PhaseGrid::at
  std::vector<double> Q;  // (x, θ): x * ntheta + θ
  std::vector<double> L;  // x
  double t = 0.0;
};

inline KineticState zero_state(const PhaseGrid& g) {
  KineticState s;
  s.f.assign(g.kinetic_size(), 0.0);
  s.Q.assign(g.nx() * g.ntheta(), 0.0);
  s.L.assign(g.nx(), 0.0);
  return s;
}

// ---------------------------------------------------------------------------
// Reductions over (v, y) at one x-cell.

inline double integrate_vy(const std::vector<double>& f, const PhaseGrid& g, std::size_t x) {
  double s = 0.0;
  for (std::size_t v = 0; v < g.nv(); ++v) {
    double fy = 0.0;
    for (std::size_t y = 0; y < g.ny(); ++y) fy += g.activity.areas[y] * f[g.at(x, v, y)];
    s += g.velocity.weights[v] * fy;
  }
  return s;
}

inline double total_mass(const std::vector<double>& f, const PhaseGrid& g) {
  double m = 0.0;
  for (std::size_t x = 0; x < g.nx(); ++x) m += integrate_vy(f, g, x);
  return m * g.space.cell_volume();
}

inline std::vector<double> qbar_field(const std::vector<double>& Q, const PhaseGrid& g) {
  std::vector<double> qb(g.nx(), 0.0);
  for (std::size_t x = 0; x < g.nx(); ++x)
    for (std::size_t t = 0; t < g.ntheta(); ++t) qb[x] += g.theta.weights[t] * Q[x * g.ntheta() + t];
  return qb;
}

/// Integrals of f that drive the chemical equations.
struct FiberIntegrals {
  std::vector<double> X;    // ∫∫ (1 - y1 - y2) f
  std::vector<double> Y1;   // ∫∫ y1 f
  std::vector<double> Y2;   // ∫∫ y2 f
  std::vector<double> Deg;  // (x, θ): ∫∫ (1 - |θ·v̂|) f
  std::vector<double> rho;
};

/// Degradation weights 1 - |θ·v/|v|| on the (θ, v) grid.
inline std::vector<double> degradation_weights(const PhaseGrid& g) {
  std::vector<double> w(g.ntheta() * g.nv());
  for (std::size_t t = 0; t < g.ntheta(); ++t)
    for (std::size_t v = 0; v < g.nv(); ++v) {
      const Vec2& vel = g.velocity.nodes[v];
      w[t * g.nv() + v] = 1.0 - std::abs(dot(g.theta.nodes[t], vel)) / norm(vel);
    }
  return w;
}

inline FiberIntegrals fiber_integrals(const std::vector<double>& f, const PhaseGrid& g,
                                      const std::vector<double>& degw) {
  FiberIntegrals r;
  const std::size_t nx = g.nx(), nt = g.ntheta();
  r.X.assign(nx, 0.0);
  r.Y1.assign(nx, 0.0);
  r.Y2.assign(nx, 0.0);
  r.rho.assign(nx, 0.0);
  r.Deg.assign(nx * nt, 0.0);
  parallel_for(nx, [&](std::size_t x) {
    std::vector<double> fy(g.nv());
    for (std::size_t v = 0; v < g.nv(); ++v) {
      double s = 0.0, s1 = 0.0, s2 = 0.0;
      for (std::size_t y = 0; y < g.ny(); ++y) {
        const double c = g.activity.areas[y] * f[g.at(x, v, y)];
        s += c;
        s1 += c * g.activity.centroids[y][0];
        s2 += c * g.activity.centroids[y][1];
      }
      const double w = g.velocity.weights[v];
      fy[v] = w * s;
      r.rho[x] += w * s;
      r.Y1[x] += w * s1;
      r.Y2[x] += w * s2;
    }
    r.X[x] = r.rho[x] - r.Y1[x] - r.Y2[x];
    for (std::size_t t = 0; t < nt; ++t) {
      double d = 0.0;
      for (std::size_t v = 0; v < g.nv(); ++v) d += degw[t * g.nv() + v] * fy[v];
      r.Deg[x * nt + t] = d;
    }
  });
  return r;
}

// ---------------------------------------------------------------------------
// Spatial differences (periodic).

inline std::vector<Vec2> gradient(const std::vector<double>& L, const SpaceGrid& s) {
  std::vector<Vec2> gr(s.size(), {0.0, 0.0});
  for (std::size_t c = 0; c < s.size(); ++c)
    for (int d = 0; d < s.dim; ++d)
      gr[c][static_cast<std::size_t>(d)] = (L[s.shift(c, d, 1)] - L[s.shift(c, d, -1)]) / (2.0 * s.spacing(d));
  return gr;
}

inline std::vector<double> laplacian(const std::vector<double>& L, const SpaceGrid& s) {
  std::vector<double> out(s.size(), 0.0);
  for (std::size_t c = 0; c < s.size(); ++c)
    for (int d = 0; d < s.dim; ++d) {
      const double h = s.spacing(d);
      out[c] += (L[s.shift(c, d, 1)] - 2.0 * L[c] + L[s.shift(c, d, -1)]) / (h * h);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Activity-space drift.
//
// Mass in cell c moves to two angularly adjacent neighbours c1, c2 at rates
// w1, w2 >= 0 chosen so that w1 (y_c1 - y_c) + w2 (y_c2 - y_c) = R_c. The
// scheme is conservative, positive for dt (w1 + w2) <= 1, and moves the first
// y-moment by exactly ∫ R f. Away from ∂Y, R_c = G(y_c). In cells touching ∂Y
// the centroid drift can point out of Y, where no neighbour lies; there R_c is
// the projection of G onto the inward cone of the touching faces, the cell is
// counted as a boundary projection, and R - G is kept so the chemical
// exchange can use the realized drift.

struct YTransfer {
  struct Cell {
    std::array<std::size_t, 2> target{0, 0};
    std::array<double, 2> rate{0.0, 0.0};
    double out = 0.0;
    Vec2 shift{0.0, 0.0};  // realized drift - G(y_c)
  };
  std::vector<Cell> cells;
  std::size_t projected = 0;
};

/// Euclidean projection of G onto {R : R·n <= 0 for every n in `normals`}.
inline Vec2 project_inward(const Vec2& G, const std::vector<Vec2>& normals) {
  auto feasible = [&](const Vec2& R) {
    for (const auto& n : normals)
      if (dot(R, n) > 0.0) return false;
    return true;
  };
  if (feasible(G)) return G;
  Vec2 best{0.0, 0.0};
  double dist = norm(G);
  for (const auto& n : normals) {
    const double gn = dot(G, n);
    if (gn <= 0.0) continue;
    Vec2 R = G - gn * n;
    // remove round-off along n
    if (dot(R, n) > 0.0) R = R - dot(R, n) * n;
    bool ok = true;
    for (const auto& m : normals)
      if (dot(R, m) > 1e-15 * norm(G)) ok = false;
    if (ok && norm(G - R) < dist) {
      best = R;
      dist = norm(G - R);
    }
  }
  return best;
}

inline void build_y_transfer(const ActivityGrid& ay, double qbar, double l, const ModelParams& p, YTransfer& tr) {
  for (const auto& face : ay.boundary) {
    const double gn = dot(eval_G(face.midpoint, qbar, l, p), face.normal);
    if (gn > 1e-12) throw DomainError("activity drift points out of the triangle on a boundary face (G·n = " +
                                      std::to_string(gn) + ")");
  }
  std::vector<std::vector<Vec2>> normals(ay.size());
  for (const auto& face : ay.boundary) normals[face.cell].push_back(face.normal);
  tr.cells.assign(ay.size(), {});
  tr.projected = 0;
  for (std::size_t c = 0; c < ay.size(); ++c) {
    const Vec2 G = eval_G(ay.centroids[c], qbar, l, p);
    const Vec2 R = normals[c].empty() ? G : project_inward(G, normals[c]);
    auto& cell = tr.cells[c];
    if (R[0] != G[0] || R[1] != G[1]) ++tr.projected;
    if (R[0] == 0.0 && R[1] == 0.0) {
      cell.shift = R - G;
      continue;
    }
    const auto& nb = ay.neighbours[c];
    bool found = false;
    for (std::size_t i = 0; i < nb.size() && !found; ++i) {
      const auto& a = nb[i];
      const auto& b = nb[(i + 1) % nb.size()];
      const double det = cross(a.offset, b.offset);
      if (!(det > 0.0)) continue;
      const double w1 = cross(R, b.offset) / det;
      const double w2 = cross(a.offset, R) / det;
      const double tol = -1e-14 * norm(R) / ay.spacing;
      if (w1 >= tol && w2 >= tol) {
        cell.target = {a.cell, b.cell};
        cell.rate = {std::max(w1, 0.0), std::max(w2, 0.0)};
        found = true;
      }
    }
    if (!found) {
      // single neighbour along the ray of R (R lies on a face of the cone)
      double best = 0.0;
      for (const auto& n : nb) {
        const double cosang = dot(R, n.offset) / (norm(R) * norm(n.offset));
        if (cosang > best) {
          best = cosang;
          cell.target = {n.cell, n.cell};
          cell.rate = {dot(R, n.offset) / dot(n.offset, n.offset), 0.0};
        }
      }
      if (best < 1.0 - 1e-12) ++tr.projected;
    }
    cell.out = cell.rate[0] + cell.rate[1];
    const Vec2 realized = cell.rate[0] * (ay.centroids[cell.target[0]] - ay.centroids[c]) +
                          cell.rate[1] * (ay.centroids[cell.target[1]] - ay.centroids[c]);
    cell.shift = realized - G;
  }
}

/// ∫ (R - G) f dy dv at one x-cell: the part of the realized y-moment change
/// not carried by G(y_c).
inline Vec2 drift_shift(const YTransfer& tr, const std::vector<double>& f, const PhaseGrid& g, std::size_t x) {
  Vec2 s{0.0, 0.0};
  for (std::size_t y = 0; y < g.ny(); ++y) {
    const Vec2& d = tr.cells[y].shift;
    if (d[0] == 0.0 && d[1] == 0.0) continue;
    double m = 0.0;
    for (std::size_t v = 0; v < g.nv(); ++v) m += g.velocity.weights[v] * f[g.at(x, v, y)];
    s = s + (g.activity.areas[y] * m) * d;
  }
  return s;
}

/// Largest total outflow rate of any cell for the given chemical levels.
inline double max_y_outflow(const YTransfer& tr) {
  double m = 0.0;
  for (const auto& c : tr.cells) m = std::max(m, c.out);
  return m;
}

/// Applies the discrete divergence ∇y·(G f) for one (x, v) column: `in` and
/// `out` are strided views over y with unit stride; out is overwritten with
/// scale * divergence added.
inline void add_y_divergence(const YTransfer& tr, const double* in, double scale, double* out) {
  for (std::size_t c = 0; c < tr.cells.size(); ++c) {
    const auto& cell = tr.cells[c];
    if (cell.out == 0.0) continue;
    const double fc = in[c];
    out[c] += scale * cell.out * fc;
    out[cell.target[0]] -= scale * cell.rate[0] * fc;
    out[cell.target[1]] -= scale * cell.rate[1] * fc;
  }
}

// ---------------------------------------------------------------------------
// Operators returning rate arrays over (x, v, y).

inline std::vector<double> apply_H(const std::vector<double>& f, const std::vector<double>& Q, const PhaseGrid& g,
                                   const KernelSet& k) {
  std::vector<double> out(g.kinetic_size(), 0.0);
  const std::size_t nt = g.ntheta();
  parallel_for(g.nx(), [&](std::size_t x) {
    std::vector<double> gain(g.nv(), 0.0);
    double qbar = 0.0;
    for (std::size_t t = 0; t < nt; ++t) qbar += g.theta.weights[t] * Q[x * nt + t];
    for (std::size_t v = 0; v < g.nv(); ++v)
      for (std::size_t t = 0; t < nt; ++t)
        gain[v] += g.theta.weights[t] * Q[x * nt + t] * eval_haptotaxis_kernel(g.velocity.nodes[v], t, k);
    for (std::size_t y = 0; y < g.ny(); ++y) {
      double rho = 0.0;
      for (std::size_t v = 0; v < g.nv(); ++v) rho += g.velocity.weights[v] * f[g.at(x, v, y)];
      for (std::size_t v = 0; v < g.nv(); ++v) out[g.at(x, v, y)] = rho * gain[v] - qbar * f[g.at(x, v, y)];
    }
  });
  return out;
}

/// α1 [ (1/(λ|V|)) ∫ (λ + β v·v') f(v') dv' - f(v) ].
inline std::vector<double> apply_Lturn(const std::vector<double>& f, const PhaseGrid& g, const KernelSet& k) {
  std::vector<double> out(g.kinetic_size(), 0.0);
  const double norm_t = 1.0 / (k.lambda * k.measure_v);
  parallel_for(g.nx(), [&](std::size_t x) {
    for (std::size_t y = 0; y < g.ny(); ++y) {
      double rho = 0.0;
      Vec2 j{0.0, 0.0};
      for (std::size_t v = 0; v < g.nv(); ++v) {
        const double c = g.velocity.weights[v] * f[g.at(x, v, y)];
        rho += c;
        j = j + c * g.velocity.nodes[v];
      }
      for (std::size_t v = 0; v < g.nv(); ++v) {
        const double gain = norm_t * (k.lambda * rho + k.beta * dot(g.velocity.nodes[v], j));
        out[g.at(x, v, y)] = k.alpha1 * (gain - f[g.at(x, v, y)]);
      }
    }
  });
  return out;
}

inline std::vector<double> apply_C(const std::vector<double>& f, const std::vector<double>& L, const PhaseGrid& g,
                                   const KernelSet& k) {
  std::vector<double> out(g.kinetic_size(), 0.0);
  const auto grad = gradient(L, g.space);
  parallel_for(g.nx(), [&](std::size_t x) {
    std::vector<double> kv(g.nv());
    for (std::size_t v = 0; v < g.nv(); ++v) kv[v] = eval_chemo_kernel(grad[x], g.velocity.nodes[v], k);
    for (std::size_t y = 0; y < g.ny(); ++y) {
      double rho = 0.0;
      for (std::size_t v = 0; v < g.nv(); ++v) rho += g.velocity.weights[v] * f[g.at(x, v, y)];
      for (std::size_t v = 0; v < g.nv(); ++v)
        out[g.at(x, v, y)] = k.alpha2 * (rho * kv[v] - f[g.at(x, v, y)]);
    }
  });
  return out;
}

/// Discrete ∇y·(G(y, Q̄, L) f). `qbar` and `L` are per x-cell.
inline std::vector<double> apply_y_flux(const std::vector<double>& f, const std::vector<double>& qbar,
                                        const std::vector<double>& L, const PhaseGrid& g, const ModelParams& p) {
  std::vector<double> out(g.kinetic_size(), 0.0);
  std::vector<YTransfer> tr(g.nx());
  for (std::size_t x = 0; x < g.nx(); ++x) build_y_transfer(g.activity, qbar[x], L[x], p, tr[x]);
  parallel_for(g.nx(), [&](std::size_t x) {
    for (std::size_t v = 0; v < g.nv(); ++v) add_y_divergence(tr[x], &f[g.at(x, v, 0)], 1.0, &out[g.at(x, v, 0)]);
  });
  return out;
}

/// First-order upwind v·∇x f on the periodic box.
inline std::vector<double> apply_transport(const std::vector<double>& f, const PhaseGrid& g) {
  std::vector<double> out(g.kinetic_size(), 0.0);
  const auto& s = g.space;
  parallel_for(g.nx(), [&](std::size_t x) {
    for (int d = 0; d < s.dim; ++d) {
      const double inv_h = 1.0 / s.spacing(d);
      const std::size_t xm = s.shift(x, d, -1), xp = s.shift(x, d, 1);
      for (std::size_t v = 0; v < g.nv(); ++v) {
        const double vd = g.velocity.nodes[v][static_cast<std::size_t>(d)];
        if (vd == 0.0) continue;
        const std::size_t nb = vd > 0.0 ? xm : xp;
        for (std::size_t y = 0; y < g.ny(); ++y) {
          const double fc = f[g.at(x, v, y)], fn = f[g.at(nb, v, y)];
          out[g.at(x, v, y)] += vd > 0.0 ? vd * (fc - fn) * inv_h : vd * (fn - fc) * inv_h;
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Coefficient sources. Every right-hand-side evaluation of the reaction block
// asks its source for the state that supplies the coefficients (Q̄ and L in G,
// Q in H, ∇L in C, f in the chemical equations). The coupled system uses the
// current stage state itself; the Picard scheme replays the previous iterate.

class CoefficientSource {
 public:
  virtual ~CoefficientSource() = default;
  virtual const KineticState& coefficients(const KineticState& current) = 0;
};

class CoupledSource final : public CoefficientSource {
 public:
  const KineticState& coefficients(const KineticState& current) override { return current; }
};

/// Replays stage states of a previous solve (or zero if none) and records the
/// current stage states for the next iterate.
class ReplaySource final : public CoefficientSource {
 public:
  ReplaySource(const std::vector<KineticState>* previous, const KineticState* zero)
      : previous_(previous), zero_(zero) {}
  const KineticState& coefficients(const KineticState& current) override {
    recorded.push_back(current);
    if (previous_ == nullptr) return *zero_;
    if (index_ >= previous_->size()) throw DomainError("replay source exhausted: stage schedules differ between iterates");
    return (*previous_)[index_++];
  }
  std::vector<KineticState> recorded;

 private:
  const std::vector<KineticState>* previous_;
  const KineticState* zero_;
  std::size_t index_ = 0;
};

// ---------------------------------------------------------------------------

struct StepReport {
  int reaction_substeps = 0;
  int diffusion_substeps = 0;
  std::size_t y_projected = 0;
};

class KineticSolver {
 public:
  KineticSolver(const PhaseGrid& grid, const ModelParams& params)
      : grid_(grid), params_(params), kernels_(make_kernels(grid, params)), degw_(degradation_weights(grid)) {
    validate_params(params_);
  }

  const PhaseGrid& grid() const { return grid_; }
  const ModelParams& params() const { return params_; }
  const KernelSet& kernels() const { return kernels_; }
  KernelSet& mutable_kernels() { return kernels_; }
  const std::vector<double>& degradation() const { return degw_; }

  /// Fixed number of reaction substeps per step (0 = derive from the rates).
  int fixed_reaction_substeps = 0;

  /// Transport stability/positivity limit.
  double max_dt() const {
    double r = 0.0;
    for (int d = 0; d < grid_.dim(); ++d) {
      double vmax = 0.0;
      for (const auto& v : grid_.velocity.nodes) vmax = std::max(vmax, std::abs(v[static_cast<std::size_t>(d)]));
      r += vmax / grid_.space.spacing(d);
    }
    return 0.5 / r;
  }

  StepReport step(KineticState& s, double dt) const {
    CoupledSource c;
    return step(s, dt, c);
  }

  /// Strang splitting:
  ///   transport+diffusion(dt/2) relax(dt/2) reactions(dt) relax(dt/2) transport+diffusion(dt/2)
  StepReport step(KineticState& s, double dt, CoefficientSource& src) const {
    if (!(dt > 0.0)) throw CflError("time step must be positive", dt, max_dt());
    if (dt > max_dt() * (1.0 + 1e-12))
      throw CflError("time step exceeds the transport CFL limit", dt, max_dt());
    StepReport rep;
    transport(s.f, 0.5 * dt);
    rep.diffusion_substeps += diffuse(s.L, 0.5 * dt);
    relax(s.f, 0.5 * dt);
    reactions(s, dt, src, rep);
    relax(s.f, 0.5 * dt);
    rep.diffusion_substeps += diffuse(s.L, 0.5 * dt);
    transport(s.f, 0.5 * dt);
    s.t += dt;
    return rep;
  }

  // -- split substeps (public for tests) ------------------------------------

  /// SSP-RK2 upwind transport.
  void transport(std::vector<double>& f, double dt) const {
    auto r1 = apply_transport(f, grid_);
    std::vector<double> f1(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) f1[i] = f[i] - dt * r1[i];
    auto r2 = apply_transport(f1, grid_);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.5 * f[i] + 0.5 * (f1[i] - dt * r2[i]);
  }

  /// Explicit diffusion of L, subcycled to D dt/h^2 <= 1/(2n).
  int diffuse(std::vector<double>& L, double dt) const {
    if (params_.D_L == 0.0) return 0;
    const double h = grid_.space.min_spacing();
    const double limit = 0.45 * h * h / (2.0 * grid_.dim() * params_.D_L);
    const int m = static_cast<int>(std::ceil(dt / limit));
    const double sub = dt / m;
    for (int i = 0; i < m; ++i) {
      const auto lap = laplacian(L, grid_.space);
      for (std::size_t c = 0; c < L.size(); ++c) L[c] += sub * params_.D_L * lap[c];
    }
    return m;
  }

  /// Exact solution of ∂t f = ε^{-1} L(f): L(f) = α1 (Πf - f) with Π the
  /// projection onto the kernel, so Πf is invariant and f - Πf decays.
  void relax(std::vector<double>& f, double dt) const {
    const double decay = std::exp(-kernels_.alpha1 * dt / params_.eps);
    const double norm_t = 1.0 / (kernels_.lambda * kernels_.measure_v);
    const auto& g = grid_;
    parallel_for(g.nx(), [&](std::size_t x) {
      for (std::size_t y = 0; y < g.ny(); ++y) {
        double rho = 0.0;
        Vec2 j{0.0, 0.0};
        for (std::size_t v = 0; v < g.nv(); ++v) {
          const double c = g.velocity.weights[v] * f[g.at(x, v, y)];
          rho += c;
          j = j + c * g.velocity.nodes[v];
        }
        for (std::size_t v = 0; v < g.nv(); ++v) {
          const double pf = norm_t * (kernels_.lambda * rho + kernels_.beta * dot(g.velocity.nodes[v], j));
          double& fv = f[g.at(x, v, y)];
          fv = pf + decay * (fv - pf);
        }
      }
    });
  }

  /// Reaction block: activity drift, haptotaxis, chemotaxis and the chemical
  /// reactions, integrated together with SSP-RK3 so the binding exchange
  /// between Q, L and the y-moments of f cancels exactly.
  void reactions(KineticState& s, double dt, CoefficientSource& src, StepReport& rep) const {
    int m = fixed_reaction_substeps;
    if (m <= 0) {
      const KineticState& c = src.coefficients(s);
      m = std::max(1, static_cast<int>(std::ceil(dt * reaction_rate_bound(c) / 0.8)));
    }
    rep.reaction_substeps += m;
    const double h = dt / m;
    KineticState k1 = s, k2 = s, tmp = s;
    for (int i = 0; i < m; ++i) {
      // SSP-RK3 (Shu-Osher)
      rhs(s, src, tmp, rep);
      axpy_state(s, h, tmp, k1);
      rhs(k1, src, tmp, rep);
      axpy_state(k1, h, tmp, k2);
      combine(0.75, s, 0.25, k2, k2);
      rhs(k2, src, tmp, rep);
      axpy_state(k2, h, tmp, k1);
      combine(1.0 / 3.0, s, 2.0 / 3.0, k1, s);
    }
  }

  /// Upper bound of the loss rates in the reaction block (positivity limit of
  /// each forward-Euler stage is 1 / bound).
  double reaction_rate_bound(const KineticState& c) const {
    const auto& p = params_;
    const auto qbar = qbar_field(c.Q, grid_);
    const auto fi = fiber_integrals(c.f, grid_, degw_);
    double ymax = 0.0, qmax = 0.0, qloss = 0.0, lloss = 0.0;
    YTransfer tr;
    for (std::size_t x = 0; x < grid_.nx(); ++x) {
      build_y_transfer(grid_.activity, qbar[x], c.L[x], p, tr);
      ymax = std::max(ymax, max_y_outflow(tr));
      qmax = std::max(qmax, qbar[x]);
      double dmax = 0.0;
      for (std::size_t t = 0; t < grid_.ntheta(); ++t) dmax = std::max(dmax, fi.Deg[x * grid_.ntheta() + t]);
      qloss = std::max(qloss, p.kappa * dmax + p.k1 * std::max(fi.X[x], 0.0));
      lloss = std::max(lloss, p.r_L + p.k2 * std::max(fi.X[x], 0.0));
    }
    const double ea = std::pow(p.eps, p.a - 1.0), eb = std::pow(p.eps, p.b - 1.0), ed = std::pow(p.eps, p.d - 1.0);
    const double floss = ea * ymax + eb * qmax + ed * kernels_.alpha2;
    return std::max({floss, qloss, lloss, 1e-300});
  }

  /// Right-hand side of the reaction block for unknowns `u` with coefficients
  /// from `src`.
  void rhs(const KineticState& u, CoefficientSource& src, KineticState& out, StepReport& rep) const {
    const KineticState& c = src.coefficients(u);
    const auto& g = grid_;
    const auto& p = params_;
    const std::size_t nt = g.ntheta();
    const double ea = std::pow(p.eps, p.a - 1.0), eb = std::pow(p.eps, p.b - 1.0), ed = std::pow(p.eps, p.d - 1.0);
    const auto qbar = qbar_field(c.Q, g);
    const auto grad = gradient(c.L, g.space);
    const auto fi = fiber_integrals(c.f, g, degw_);
    std::vector<YTransfer> tr(g.nx());
    for (std::size_t x = 0; x < g.nx(); ++x) {
      build_y_transfer(g.activity, qbar[x], c.L[x], p, tr[x]);
      if (integrate_vy(u.f, g, x) > 0.0) rep.y_projected += tr[x].projected;
    }

    out.f.assign(u.f.size(), 0.0);
    parallel_for(g.nx(), [&](std::size_t x) {
      std::vector<double> gain(g.nv(), 0.0), kv(g.nv());
      for (std::size_t v = 0; v < g.nv(); ++v) {
        for (std::size_t t = 0; t < nt; ++t)
          gain[v] += g.theta.weights[t] * c.Q[x * nt + t] * eval_haptotaxis_kernel(g.velocity.nodes[v], t, kernels_);
        kv[v] = eval_chemo_kernel(grad[x], g.velocity.nodes[v], kernels_);
      }
      for (std::size_t v = 0; v < g.nv(); ++v)
        add_y_divergence(tr[x], &u.f[g.at(x, v, 0)], -ea, &out.f[g.at(x, v, 0)]);
      for (std::size_t y = 0; y < g.ny(); ++y) {
        double rho = 0.0;
        for (std::size_t v = 0; v < g.nv(); ++v) rho += g.velocity.weights[v] * u.f[g.at(x, v, y)];
        for (std::size_t v = 0; v < g.nv(); ++v) {
          const double fv = u.f[g.at(x, v, y)];
          out.f[g.at(x, v, y)] += eb * (rho * gain[v] - qbar[x] * fv) + ed * kernels_.alpha2 * (rho * kv[v] - fv);
        }
      }
    });

    const double inv_s = 1.0 / sphere_measure(g.dim());
    out.Q.assign(u.Q.size(), 0.0);
    out.L.assign(u.L.size(), 0.0);
    for (std::size_t x = 0; x < g.nx(); ++x) {
      double prod = 0.0;
      const Vec2 shift = drift_shift(tr[x], c.f, g, x);
      for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t i = x * nt + t;
        out.Q[i] = -p.kappa * fi.Deg[i] * u.Q[i] - p.k1 * fi.X[x] * u.Q[i] + inv_s * (p.km1 * fi.Y1[x] - shift[0]);
        prod += g.theta.weights[t] * fi.Deg[i] * c.Q[i];
      }
      out.L[x] = p.kappa * prod - p.r_L * u.L[x] - p.k2 * fi.X[x] * u.L[x] + p.km2 * fi.Y2[x] - shift[1];
    }
  }

 private:
  static void axpy_state(const KineticState& a, double h, const KineticState& r, KineticState& out) {
    auto ax = [h](const std::vector<double>& x, const std::vector<double>& y, std::vector<double>& o) {
      o.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) o[i] = x[i] + h * y[i];
    };
    ax(a.f, r.f, out.f);
    ax(a.Q, r.Q, out.Q);
    ax(a.L, r.L, out.L);
    out.t = a.t;
  }
  static void combine(double wa, const KineticState& a, double wb, const KineticState& b, KineticState& out) {
    auto cb = [wa, wb](const std::vector<double>& x, const std::vector<double>& y, std::vector<double>& o) {
      o.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) o[i] = wa * x[i] + wb * y[i];
    };
    cb(a.f, b.f, out.f);
    cb(a.Q, b.Q, out.Q);
    cb(a.L, b.L, out.L);
  }

  const PhaseGrid& grid_;
  ModelParams params_;
  KernelSet kernels_;
  std::vector<double> degw_;
};

// ---------------------------------------------------------------------------
// Fiber equation with frozen cells: ∂t Q = J Q + S with
//   J = -κ D_θ[f*] - k1 X[f*],   S = k-1/|S| Y1[f*] + h.

inline double phi1(double z) { return z == 0.0 ? 1.0 : std::expm1(z) / z; }

inline std::vector<double> exact_Q_solution(const std::vector<double>& fstar, const std::vector<double>& Q0,
                                            const std::vector<double>& h, double t, const PhaseGrid& g,
                                            const ModelParams& p) {
  const auto fi = fiber_integrals(fstar, g, degradation_weights(g));
  const double inv_s = 1.0 / sphere_measure(g.dim());
  std::vector<double> Q(Q0.size());
  for (std::size_t x = 0; x < g.nx(); ++x)
    for (std::size_t th = 0; th < g.ntheta(); ++th) {
      const std::size_t i = x * g.ntheta() + th;
      const double J = -p.kappa * fi.Deg[i] - p.k1 * fi.X[x];
      const double S = p.km1 * inv_s * fi.Y1[x] + (h.empty() ? 0.0 : h[i]);
      Q[i] = std::exp(J * t) * Q0[i] + S * t * phi1(J * t);
    }
  return Q;
}

/// Integrates the frozen-cell fiber equation with the solver's SSP-RK3 stages.
inline std::vector<double> integrate_Q(const std::vector<double>& fstar, const std::vector<double>& Q0,
                                       const std::vector<double>& h, double t, double dt, const PhaseGrid& g,
                                       const ModelParams& p) {
  const auto fi = fiber_integrals(fstar, g, degradation_weights(g));
  const double inv_s = 1.0 / sphere_measure(g.dim());
  auto rate = [&](const std::vector<double>& Q, std::vector<double>& r) {
    r.resize(Q.size());
    for (std::size_t x = 0; x < g.nx(); ++x)
      for (std::size_t th = 0; th < g.ntheta(); ++th) {
        const std::size_t i = x * g.ntheta() + th;
        r[i] = -p.kappa * fi.Deg[i] * Q[i] - p.k1 * fi.X[x] * Q[i] + p.km1 * inv_s * fi.Y1[x] +
               (h.empty() ? 0.0 : h[i]);
      }
  };
  const int m = std::max(1, static_cast<int>(std::llround(t / dt)));
  const double step = t / m;
  std::vector<double> Q = Q0, q1(Q.size()), q2(Q.size()), r;
  for (int n = 0; n < m; ++n) {
    rate(Q, r);
    for (std::size_t i = 0; i < Q.size(); ++i) q1[i] = Q[i] + step * r[i];
    rate(q1, r);
    for (std::size_t i = 0; i < Q.size(); ++i) q2[i] = 0.75 * Q[i] + 0.25 * (q1[i] + step * r[i]);
    rate(q2, r);
    for (std::size_t i = 0; i < Q.size(); ++i) Q[i] = Q[i] / 3.0 + 2.0 / 3.0 * (q2[i] + step * r[i]);
  }
  return Q;
}

// ---------------------------------------------------------------------------
// Norms and monitors.

struct StateNorms {
  double f1 = 0, finf = 0, Q1 = 0, Qinf = 0, L1 = 0, Linf = 0, gradL1 = 0;
  double mass = 0, fmin = 0, Qmin = 0, Lmin = 0;
};

inline StateNorms state_norms(const KineticState& s, const PhaseGrid& g) {
  StateNorms n;
  const double dx = g.space.cell_volume();
  n.fmin = s.f.empty() ? 0.0 : s.f[0];
  for (std::size_t x = 0; x < g.nx(); ++x)
    for (std::size_t v = 0; v < g.nv(); ++v)
      for (std::size_t y = 0; y < g.ny(); ++y) {
        const double val = s.f[g.at(x, v, y)];
        n.f1 += dx * g.velocity.weights[v] * g.activity.areas[y] * std::abs(val);
        n.mass += dx * g.velocity.weights[v] * g.activity.areas[y] * val;
        n.finf = std::max(n.finf, std::abs(val));
        n.fmin = std::min(n.fmin, val);
      }
  n.Qmin = s.Q.empty() ? 0.0 : s.Q[0];
  for (std::size_t x = 0; x < g.nx(); ++x)
    for (std::size_t t = 0; t < g.ntheta(); ++t) {
      const double q = s.Q[x * g.ntheta() + t];
      n.Q1 += dx * g.theta.weights[t] * std::abs(q);
      n.Qinf = std::max(n.Qinf, std::abs(q));
      n.Qmin = std::min(n.Qmin, q);
    }
  n.Lmin = s.L.empty() ? 0.0 : s.L[0];
  for (double l : s.L) {
    n.L1 += dx * std::abs(l);
    n.Linf = std::max(n.Linf, std::abs(l));
    n.Lmin = std::min(n.Lmin, l);
  }
  for (const auto& gr : gradient(s.L, g.space)) n.gradL1 += dx * (std::abs(gr[0]) + std::abs(gr[1]));
  return n;
}

/// Records norms along a run and checks the a priori fiber bound
///   ‖Q(t)‖_p <= ‖Q0‖_p + C_p ∫_0^t ‖ρ‖_p
/// with C_∞ = k-1/|S| (pointwise in θ) and C_1 = k-1 (after integrating over θ).
class AprioriMonitor {
 public:
  struct Record {
    double t;
    StateNorms norms;
    double rho1, rhoinf;
    double desQ_margin_inf, desQ_margin_1;  // bound - actual, must stay >= 0
  };

  AprioriMonitor(const PhaseGrid& g, const ModelParams& p) : g_(g), p_(p) {}

  void observe(const KineticState& s) {
    Record r;
    r.t = s.t;
    r.norms = state_norms(s, g_);
    const auto fi = fiber_integrals(s.f, g_, degradation_weights(g_));
    r.rho1 = 0.0;
    r.rhoinf = 0.0;
    for (double v : fi.rho) {
      r.rho1 += g_.space.cell_volume() * std::abs(v);
      r.rhoinf = std::max(r.rhoinf, std::abs(v));
    }
    if (records.empty()) {
      q0inf_ = r.norms.Qinf;
      q01_ = r.norms.Q1;
    } else {
      // Upper Riemann sum of ∫‖ρ‖ so the check is not tripped by quadrature error.
      const Record& prev = records.back();
      const double dt = r.t - prev.t;
      int_rho1_ += dt * std::max(prev.rho1, r.rho1);
      int_rhoinf_ += dt * std::max(prev.rhoinf, r.rhoinf);
    }
    const double cinf = p_.km1 / sphere_measure(g_.dim());
    const double c1 = p_.km1;
    r.desQ_margin_inf = q0inf_ + cinf * int_rhoinf_ - r.norms.Qinf;
    r.desQ_margin_1 = q01_ + c1 * int_rho1_ - r.norms.Q1;
    records.push_back(r);
  }

  double min_desQ_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& r : records) m = std::min({m, r.desQ_margin_inf, r.desQ_margin_1});
    return m;
  }
  double min_Q() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& r : records) m = std::min(m, r.norms.Qmin);
    return m;
  }
  double min_f() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& r : records) m = std::min(m, r.norms.fmin);
    return m;
  }
  /// False if a norm became non-finite.
  bool finite() const {
    for (const auto& r : records)
      if (!std::isfinite(r.norms.f1) || !std::isfinite(r.norms.Q1) || !std::isfinite(r.norms.L1)) return false;
    return true;
  }

  std::vector<Record> records;

 private:
  const PhaseGrid& g_;
  ModelParams p_;
  double q0inf_ = 0.0, q01_ = 0.0;
  double int_rho1_ = 0.0, int_rhoinf_ = 0.0;
};

// ---------------------------------------------------------------------------
// Picard iteration for the uncoupled linear problems.

/// Distance in the norm ‖f‖1 + ‖f‖∞ + ‖Q‖1 + ‖Q‖∞ + ‖L‖1 + ‖L‖∞ + ‖∇L‖1 at one time.
inline double x_distance(const KineticState& a, const KineticState& b, const PhaseGrid& g) {
  KineticState d;
  d.f.resize(a.f.size());
  d.Q.resize(a.Q.size());
  d.L.resize(a.L.size());
  for (std::size_t i = 0; i < a.f.size(); ++i) d.f[i] = a.f[i] - b.f[i];
  for (std::size_t i = 0; i < a.Q.size(); ++i) d.Q[i] = a.Q[i] - b.Q[i];
  for (std::size_t i = 0; i < a.L.size(); ++i) d.L[i] = a.L[i] - b.L[i];
  const auto n = state_norms(d, g);
  return n.f1 + n.finf + n.Q1 + n.Qinf + n.L1 + n.Linf + n.gradL1;
}

/// Sup over time levels of x_distance.
inline double trajectory_distance(const std::vector<KineticState>& a, const std::vector<KineticState>& b,
                                  const PhaseGrid& g) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, x_distance(a[i], b[i], g));
  return m;
}

struct PicardResult {
  std::vector<KineticState> trajectory;  // states at t = 0, dt, ..., T0
  std::vector<double> residuals;         // X-distance between successive iterates
  bool converged = false;
  int iterations = 0;
};

/// Iterates (f^j, Q^j, L^j) = T(f^{j-1}, Q^{j-1}, L^{j-1}) from the zero
/// iterate. Each application of T solves the linear problems with the
/// coefficients taken from the previous iterate at the same stage.
inline PicardResult picard_iterate(const KineticSolver& solver, const KineticState& initial, double T0, double dt,
                                   double tol, int max_iter) {
  if (!(T0 > 0.0)) throw ConfigError("picard: T0 must be positive");
  if (solver.fixed_reaction_substeps <= 0)
    throw ConfigError("picard: the solver needs a fixed reaction substep count so stage schedules match");
  const auto& g = solver.grid();
  const int steps = std::max(1, static_cast<int>(std::llround(T0 / dt)));
  const double h = T0 / steps;
  KineticState start = initial;
  start.L.assign(g.nx(), 0.0);
  start.t = 0.0;
  const KineticState zero = zero_state(g);

  PicardResult res;
  std::vector<KineticState> prev_traj(static_cast<std::size_t>(steps) + 1, zero);
  std::vector<KineticState> prev_stages;
  bool have_prev = false;
  for (int it = 1; it <= max_iter; ++it) {
    ReplaySource src(have_prev ? &prev_stages : nullptr, &zero);
    std::vector<KineticState> traj;
    traj.reserve(static_cast<std::size_t>(steps) + 1);
    KineticState s = start;
    traj.push_back(s);
    for (int n = 0; n < steps; ++n) {
      solver.step(s, h, src);
      traj.push_back(s);
    }
    const double r = trajectory_distance(traj, prev_traj, g);
    res.residuals.push_back(r);
    res.iterations = it;
    prev_traj = std::move(traj);
    prev_stages = std::move(src.recorded);
    have_prev = true;
    if (r < tol) {
      res.converged = true;
      break;
    }
  }
  res.trajectory = std::move(prev_traj);
  return res;
}

}  // namespace kcm
