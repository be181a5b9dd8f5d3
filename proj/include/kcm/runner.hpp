#pragma once

// Subcommand orchestration. Every run returns its artifacts as in-memory
// files so the CLI can write them and tests can compare bytes directly.

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "kcm/core.hpp"
#include "kcm/hydro.hpp"
#include "kcm/io.hpp"
#include "kcm/kinetic.hpp"
#include "kcm/moments.hpp"
#include "kcm/sweep.hpp"
#include "kcm/verification.hpp"

namespace kcm {

struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;  // name, bytes
  std::vector<std::string> log;
  int status = 0;

  void add(std::string name, std::string bytes) { files.emplace_back(std::move(name), std::move(bytes)); }
  const std::string* find(const std::string& name) const {
    for (const auto& [n, b] : files)
      if (n == name) return &b;
    return nullptr;
  }
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"simulate-kinetic", "simulate-hydro", "limit-sweep", "picard", "verify"};
  return s;
}

inline std::string snapshot_name(const std::string& prefix, long long step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06lld.kcm", prefix.c_str(), step);
  return buf;
}

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline Field vec2_field(const std::string& name, const std::vector<Vec2>& v) {
  Field f{name, {v.size(), 2}, {}};
  f.data.reserve(2 * v.size());
  for (const auto& x : v) {
    f.data.push_back(x[0]);
    f.data.push_back(x[1]);
  }
  return f;
}

namespace detail {

inline const Field* find_field(const std::vector<Field>& fs, const std::string& name) {
  for (const auto& f : fs)
    if (f.name == name) return &f;
  return nullptr;
}

inline std::vector<double> field_data(const std::vector<Field>& fs, const std::string& name, std::size_t size,
                                      bool required) {
  const Field* f = find_field(fs, name);
  if (!f) {
    if (required) throw IoError("initial data file has no field '" + name + "'");
    return std::vector<double>(size, 0.0);
  }
  if (f->data.size() != size)
    throw IoError("initial data field '" + name + "' has " + std::to_string(f->data.size()) + " values, expected " +
                  std::to_string(size));
  return f->data;
}

inline std::vector<Vec2> vec2_data(const std::vector<Field>& fs, const std::string& name, std::size_t nx) {
  const auto raw = field_data(fs, name, 2 * nx, false);
  std::vector<Vec2> out(nx);
  for (std::size_t x = 0; x < nx; ++x) out[x] = {raw[2 * x], raw[2 * x + 1]};
  return out;
}

}  // namespace detail

/// Initial kinetic state from the configured profile or container. A
/// container holds either f (x, v, y) or rho (x) with an optional U (x, 2),
/// plus Q (x, θ) and an optional L (x).
inline KineticState initial_kinetic_state(const RunConfig& cfg, const PhaseGrid& g, const KernelSet& k) {
  if (cfg.initial.profile != "file") return well_prepared_state(g, k, cfg.initial);
  const auto fs = read_fields(cfg.run.initial_file);
  KineticState s;
  if (detail::find_field(fs, "f")) {
    s.f = detail::field_data(fs, "f", g.kinetic_size(), true);
  } else {
    s.f = equilibrium(detail::field_data(fs, "rho", g.nx(), true), detail::vec2_data(fs, "U", g.nx()), g, k);
  }
  s.Q = detail::field_data(fs, "Q", g.nx() * g.ntheta(), true);
  s.L = detail::field_data(fs, "L", g.nx(), false);
  return s;
}

inline std::vector<Field> kinetic_fields(const KineticState& s, const PhaseGrid& g) {
  const auto m = compute_moments(s.f, g);
  std::vector<Vec2> U(g.nx()), W(g.nx());
  for (std::size_t x = 0; x < g.nx(); ++x) {
    U[x] = m.U(x);
    W[x] = m.W(x);
  }
  return {{"time", {1}, {s.t}},
          {"f", {g.nx(), g.nv(), g.ny()}, s.f},
          {"Q", {g.nx(), g.ntheta()}, s.Q},
          {"L", {g.nx()}, s.L},
          {"rho", {g.nx()}, m.rho},
          vec2_field("U", U),
          vec2_field("W", W)};
}

inline Artifacts run_simulate_kinetic(const RunConfig& cfg) {
  Artifacts a;
  const PhaseGrid g = build_phase_grid(cfg.grid);
  KineticSolver ks(g, cfg.params);
  ks.fixed_reaction_substeps = cfg.run.reaction_substeps;
  KineticState s = initial_kinetic_state(cfg, g, ks.kernels());
  const double dt = cfg.run.dt > 0.0 ? cfg.run.dt : auto_dt(ks.max_dt(), cfg.run.cfl, cfg.run.t_final);
  const long long steps = std::max(1LL, std::llround(cfg.run.t_final / dt));
  a.log.push_back("simulate-kinetic: " + std::to_string(steps) + " steps of dt = " + fmt("%.6e", dt));

  const std::vector<std::string> cols{"step",        "t",           "mass",     "momentum_x", "momentum_y",
                                      "rhoW1",       "rhoW2",       "Qbar",     "L",          "f_min",
                                      "Q_min",       "eq_distance", "closure_residual", "y_projected"};
  std::vector<std::vector<double>> rows;
  std::size_t projected = 0;
  auto record = [&](long long n) {
    const auto m = compute_moments(s.f, g);
    const auto qb = qbar_field(s.Q, g);
    const double dx = g.space.cell_volume();
    double mass = 0.0, w1 = 0.0, w2 = 0.0, q = 0.0, l = 0.0;
    Vec2 mom{0.0, 0.0};
    for (std::size_t x = 0; x < g.nx(); ++x) {
      mass += m.rho[x];
      mom = mom + m.mom[x];
      w1 += m.rhoW[x][0];
      w2 += m.rhoW[x][1];
      q += qb[x];
      l += s.L[x];
    }
    rows.push_back({static_cast<double>(n), s.t, mass * dx, mom[0] * dx, mom[1] * dx, w1 * dx, w2 * dx, q * dx, l * dx,
                    min_value(s.f), min_value(s.Q), equilibrium_distance(s.f, g, ks.kernels()),
                    closure_residual(s, g, cfg.params), static_cast<double>(projected)});
    if (cfg.output.snapshots && (n % cfg.output.cadence == 0 || n == steps))
      a.add(snapshot_name("kinetic", n), encode_fields(kinetic_fields(s, g)));
  };
  record(0);
  for (long long n = 1; n <= steps; ++n) {
    projected += ks.step(s, dt).y_projected;
    record(n);
  }
  if (cfg.output.timeseries) a.add("kinetic_moments.csv", format_timeseries(cols, rows));
  a.add("config.ini", serialize_config(cfg));
  a.log.push_back("simulate-kinetic: final mass " + fmt("%.12e", rows.back()[2]) + ", min f " + fmt("%.3e", rows.back()[9]));
  return a;
}

inline Artifacts run_simulate_hydro(const RunConfig& cfg) {
  Artifacts a;
  const PhaseGrid g = build_phase_grid(cfg.grid);
  HydroSolver hs(g, cfg.params, pressure_coefficient(g.dim(), g.velocity.speed_ratio));
  std::vector<double> rho, Q, L;
  std::vector<Vec2> m;
  if (cfg.initial.profile == "file") {
    const KineticState k = initial_kinetic_state(cfg, g, hs.kernels());
    const auto mo = compute_moments(k.f, g);
    rho = mo.rho;
    m = mo.mom;
    Q = k.Q;
    L = k.L;
  } else {
    const auto prof = macro_profile(g, cfg.initial);
    rho = prof.rho;
    m.resize(g.nx());
    for (std::size_t x = 0; x < g.nx(); ++x) m[x] = prof.rho[x] * prof.U[x];
    Q = prof.Q;
    L = prof.L;
  }
  HydroState s = hs.make_state(rho, m, Q, L);
  const double dt = cfg.run.dt > 0.0 ? cfg.run.dt : auto_dt(hs.max_dt(s), cfg.run.cfl, cfg.run.t_final);
  const long long steps = std::max(1LL, std::llround(cfg.run.t_final / dt));
  a.log.push_back("simulate-hydro: " + std::to_string(steps) + " steps of dt = " + fmt("%.6e", dt) +
                  ", c = " + fmt("%.6f", hs.sound_speed()));
  const std::vector<std::string> cols{"step", "t", "mass", "momentum_x", "momentum_y", "Qbar", "L", "rho_min",
                                      "impulse_x", "impulse_y"};
  std::vector<std::vector<double>> rows;
  Vec2 impulse{0.0, 0.0};
  auto record = [&](long long n) {
    const double dx = g.space.cell_volume();
    const auto qb = qbar_field(s.Q, g);
    double mass = 0.0, q = 0.0, l = 0.0;
    Vec2 mom{0.0, 0.0};
    for (std::size_t x = 0; x < g.nx(); ++x) {
      mass += s.rho[x];
      mom = mom + s.m[x];
      q += qb[x];
      l += s.L[x];
    }
    rows.push_back({static_cast<double>(n), s.t, mass * dx, mom[0] * dx, mom[1] * dx, q * dx, l * dx, min_value(s.rho),
                    impulse[0], impulse[1]});
    if (cfg.output.snapshots && (n % cfg.output.cadence == 0 || n == steps))
      a.add(snapshot_name("hydro", n), encode_fields({{"time", {1}, {s.t}},
                                                      {"rho", {g.nx()}, s.rho},
                                                      vec2_field("m", s.m),
                                                      vec2_field("W", s.W),
                                                      {"Q", {g.nx(), g.ntheta()}, s.Q},
                                                      {"L", {g.nx()}, s.L}}));
  };
  record(0);
  for (long long n = 1; n <= steps; ++n) {
    impulse = impulse + hs.step(s, dt);
    record(n);
  }
  if (cfg.output.timeseries) a.add("hydro_moments.csv", format_timeseries(cols, rows));
  a.add("config.ini", serialize_config(cfg));
  return a;
}

inline SweepConfig sweep_config_from(const RunConfig& cfg) {
  SweepConfig sc;
  sc.grid = cfg.grid;
  sc.params = cfg.params;
  sc.initial = cfg.initial;
  sc.eps_list = cfg.run.eps_list;
  sc.t_final = cfg.run.t_final;
  sc.dt = cfg.run.dt;
  return sc;
}

/// Text report: header, one row per ε, slope and monotonicity footer rows.
inline std::string format_sweep(const ConvergenceReport& r) {
  std::vector<std::vector<double>> rows;
  for (const auto& e : r.entries)
    rows.push_back({e.eps, e.rho_l1_diff, e.closure_residual, e.kinetic_eq_distance, static_cast<double>(e.y_projected)});
  std::string out =
      format_timeseries({"epsilon", "rho_L1_diff", "closure_residual", "kinetic_eq_distance", "y_projected"}, rows);
  char buf[256];
  std::snprintf(buf, sizeof buf, "# slope,%.16e,%.16e,%.16e,\n", r.slope_rho, r.slope_closure, r.slope_eq);
  out += buf;
  std::snprintf(buf, sizeof buf, "# monotone,%d,%d,%d,\n", r.monotone_rho ? 1 : 0, r.monotone_closure ? 1 : 0,
                r.monotone_eq ? 1 : 0);
  out += buf;
  return out;
}

inline Artifacts run_limit_sweep(const RunConfig& cfg) {
  Artifacts a;
  const auto r = epsilon_sweep(sweep_config_from(cfg));
  a.add("sweep.csv", format_sweep(r));
  for (const auto& e : r.entries)
    a.log.push_back("eps " + fmt("%.4f", e.eps) + "  rho diff " + fmt("%.4e", e.rho_l1_diff) + "  closure " +
                    fmt("%.4e", e.closure_residual) + "  eq distance " + fmt("%.4e", e.kinetic_eq_distance));
  a.log.push_back("slopes: rho " + fmt("%.3f", r.slope_rho) + ", closure " + fmt("%.3f", r.slope_closure) +
                  " (expected " + fmt("%.2f", 1.0 - cfg.params.a) + "), eq distance " + fmt("%.3f", r.slope_eq) +
                  " (expected 1)");
  if (!(r.monotone_rho && r.monotone_closure && r.monotone_eq)) {
    a.log.push_back("limit-sweep: distances do not decrease monotonically with eps");
    a.status = 1;
  }
  return a;
}

inline Artifacts run_picard(const RunConfig& cfg) {
  Artifacts a;
  const PhaseGrid g = build_phase_grid(cfg.grid);
  const int substeps = cfg.run.reaction_substeps > 0 ? cfg.run.reaction_substeps : 4;
  const auto r = picard_check(g, cfg.params, cfg.initial, cfg.run.picard_t0, cfg.run.picard_dt, cfg.run.picard_tol,
                              cfg.run.picard_max_iter, substeps);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < r.picard.residuals.size(); ++i)
    rows.push_back({static_cast<double>(i + 1), r.picard.residuals[i],
                    i == 0 ? 0.0 : r.picard.residuals[i] / r.picard.residuals[i - 1]});
  std::string out = format_timeseries({"iteration", "residual", "ratio"}, rows);
  out += "# direct_solve_distance," + fmt("%.16e", r.direct_distance) + "\n";
  a.add("picard.csv", out);
  a.log.push_back("picard: " + std::to_string(r.picard.iterations) + " iterations, last residual " +
                  fmt("%.3e", r.picard.residuals.back()) + ", distance to direct solve " + fmt("%.3e", r.direct_distance));
  if (!r.picard.converged) {
    a.log.push_back("picard: not contractive within picard_max_iter iterations (reduce picard_t0)");
    a.status = 1;
  }
  return a;
}

inline Artifacts run_verify(const RunConfig& cfg) {
  Artifacts a;
  std::string report;
  int failures = 0;
  for (const auto& suite : verify_suite(cfg)) {
    report += "[" + suite.name + "]\n";
    for (const auto& c : suite.checks) {
      const std::string line = format_check(c);
      report += line + "\n";
      a.log.push_back(line);
      if (!c.pass) ++failures;
    }
  }
  report += "failures: " + std::to_string(failures) + "\n";
  a.add("verify.txt", report);
  a.log.push_back("verify: " + std::to_string(failures) + " failing check(s)");
  a.status = failures == 0 ? 0 : 1;
  return a;
}

/// Runs one subcommand. Solver and I/O errors are reported through the log
/// and a nonzero status rather than propagated.
inline Artifacts run_subcommand(const std::string& cmd, const RunConfig& cfg) {
  try {
    if (cmd == "simulate-kinetic") return run_simulate_kinetic(cfg);
    if (cmd == "simulate-hydro") return run_simulate_hydro(cfg);
    if (cmd == "limit-sweep") return run_limit_sweep(cfg);
    if (cmd == "picard") return run_picard(cfg);
    if (cmd == "verify") return run_verify(cfg);
  } catch (const CflError& e) {
    Artifacts a;
    a.log.push_back(std::string("CFL violation: ") + e.what() + " (requested dt " + fmt("%.6e", e.requested_dt) +
                    ", max dt " + fmt("%.6e", e.max_dt) + ")");
    a.status = 3;
    return a;
  } catch (const std::exception& e) {
    Artifacts a;
    a.log.push_back(std::string("error: ") + e.what());
    a.status = 2;
    return a;
  }
  throw ConfigError("unknown subcommand '" + cmd + "'");
}

}  // namespace kcm
