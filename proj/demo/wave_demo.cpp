// Kinetic model at small eps next to its hyperbolic limit, started from the
// same well-prepared travelling-wave data. Prints density profiles of both.

#include <cstdio>

#include "kcm/hydro.hpp"
#include "kcm/kinetic.hpp"
#include "kcm/sweep.hpp"

int main(int argc, char** argv) {
  using namespace kcm;
  SweepConfig cfg = default_sweep_config();
  cfg.params.eps = argc > 1 ? std::atof(argv[1]) : 0.05;
  const PhaseGrid g = build_phase_grid(cfg.grid);

  KineticSolver ks(g, cfg.params);
  KineticState s = well_prepared_state(g, ks.kernels(), cfg.initial);
  const int steps = static_cast<int>(std::ceil(cfg.t_final / (0.9 * ks.max_dt())));
  for (int n = 0; n < steps; ++n) ks.step(s, cfg.t_final / steps);

  HydroSolver hs(g, cfg.params, ks.kernels().lambda / ks.kernels().beta);
  const auto prof = macro_profile(g, cfg.initial);
  std::vector<Vec2> m0(g.nx());
  for (std::size_t x = 0; x < g.nx(); ++x) m0[x] = prof.rho[x] * prof.U[x];
  HydroState h = hs.make_state(prof.rho, m0, prof.Q, prof.L);
  const int hsteps = static_cast<int>(std::ceil(cfg.t_final / (0.9 * hs.max_dt(h))));
  for (int n = 0; n < hsteps; ++n) hs.step(h, cfg.t_final / hsteps);

  const auto mom = compute_moments(s.f, g);
  std::printf("eps = %g, t = %g\n%8s %12s %12s %12s %12s\n", cfg.params.eps, cfg.t_final, "x", "rho_kin", "rho_lim",
              "W1_kin", "W1_lim");
  for (std::size_t x = 0; x < g.nx(); x += 4)
    std::printf("%8.4f %12.6f %12.6f %12.6f %12.6f\n", g.space.center(x)[0], mom.rho[x], h.rho[x], mom.W(x)[0], h.W[x][0]);
  std::printf("||f - M||_1 = %.4e, closure residual = %.4e\n", equilibrium_distance(s.f, g, ks.kernels()),
              closure_residual(s, g, cfg.params));
}
