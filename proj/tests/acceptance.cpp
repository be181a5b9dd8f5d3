#include <chrono>
#include <cstdio>

#include "kcm/runner.hpp"

using namespace kcm;

namespace {

int failures = 0;

void report(int id, const std::string& title, const std::vector<Check>& checks, double seconds) {
  const bool ok = all_pass(checks);
  if (!ok) ++failures;
  std::printf("%-4s criterion %2d  %-44s (%.1fs)\n", ok ? "PASS" : "FAIL", id, title.c_str(), seconds);
  for (const auto& c : checks)
    std::printf("        %s\n", format_check(c).c_str());
  std::fflush(stdout);
}

template <class Fn>
void criterion(int id, const std::string& title, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Check> checks;
  try {
    checks = fn();
  } catch (const std::exception& e) {
    checks = {holds(std::string("exception: ") + e.what(), false)};
  }
  report(id, title, checks, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::vector<Check> first(std::vector<Check> v, std::size_t n) {
  v.resize(std::min(n, v.size()));
  return v;
}

bool same_artifacts(const Artifacts& a, const Artifacts& b) {
  if (a.files.size() != b.files.size() || a.status != b.status) return false;
  for (std::size_t i = 0; i < a.files.size(); ++i)
    if (a.files[i] != b.files[i]) return false;
  return true;
}

}  // namespace

int main() {
  const RunConfig cfg;
  const PhaseGrid g = build_phase_grid(cfg.grid);
  const ModelParams& p = cfg.params;
  InitialData d = cfg.initial;
  const int n = g.dim();
  const double s = g.velocity.speed_ratio;
  // Coefficient exactly as the acceptance statement writes it.
  const double stated_c2 = 2.0 * (1.0 - std::pow(s, n + 2)) / ((n + 2.0) * (1.0 - std::pow(s, n)));

  criterion(1, "quadrature identities", [&] { return quadrature_checks(cfg.grid); });
  criterion(2, "solvability of the turning operator", [&] {
    Rng rng(cfg.run.seed);
    return solvability_checks(g, p, rng, 50);
  });
  criterion(3, "equilibrium", [&] {
    Rng rng(cfg.run.seed + 1);
    return first(equilibrium_checks(g, p, rng, 20), 3);
  });
  criterion(4, "closure", [&] {
    Rng rng(cfg.run.seed + 2);
    return closure_checks(rng, 1000);
  });
  criterion(5, "micro-macro source identity", [&] {
    Rng rng(cfg.run.seed + 3);
    return micro_macro_checks(g, p, rng, 100);
  });
  criterion(6, "pressure with the stated coefficient", [&] {
    return pressure_checks(cfg.grid, p, stated_c2, "stated coefficient");
  });
  criterion(7, "conservation", [&] { return first(conservation_checks(g, p, d, 1e-6, 100), 3); });
  criterion(8, "fiber equation oracle", [&] { return q_oracle_checks(g, p, d); });
  criterion(9, "Picard contraction", [&] {
    return picard_checks(g, p, d, 0.05, cfg.run.picard_dt, cfg.run.picard_tol, cfg.run.picard_max_iter);
  });
  criterion(10, "high-field limit", [&] {
    SweepConfig sc = default_sweep_config();
    sc.eps_list = {0.2, 0.1, 0.05, 0.025};
    const auto r = epsilon_sweep(sc);
    const double a = sc.params.a;
    return std::vector<Check>{
        holds("limit: |f - M|_1 decreases monotonically", r.monotone_eq),
        at_most("limit: |slope of |f - M|_1 - 1|", std::abs(r.slope_eq - 1.0), 0.3),
        at_most("limit: |slope of closure residual - (1 - a)|", std::abs(r.slope_closure - (1.0 - a)), 0.3),
        holds("limit: kinetic vs hydro L1(rho) decreases monotonically", r.monotone_rho)};
  });
  criterion(11, "acoustic speed against the stated value", [&] {
    const double c = acoustic_speed(256, pressure_coefficient(n, s), s);
    return std::vector<Check>{at_most("hydro: |measured speed / sqrt(stated c2) - 1|",
                                      std::abs(c / std::sqrt(stated_c2) - 1.0), 0.02)};
  });
  criterion(12, "determinism across worker counts", [&] {
    std::vector<Check> out;
    const int saved = worker_count();
    for (const char* cmd : {"verify", "simulate-kinetic"}) {
      std::vector<Artifacts> runs;
      for (int w : {1, 2, 8}) {
        set_worker_count(w);
        runs.push_back(run_subcommand(cmd, cfg));
      }
      out.push_back(holds(std::string(cmd) + ": outputs identical for 1, 2, 8 workers",
                          same_artifacts(runs[0], runs[1]) && same_artifacts(runs[0], runs[2])));
      out.push_back(holds(std::string(cmd) + ": produced files", !runs[0].files.empty()));
    }
    set_worker_count(saved);
    return out;
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
