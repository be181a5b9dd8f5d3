#pragma once

// Run configuration (sectioned key = value text), the KCM1 binary field
// container and delimited time-series output.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "kcm/core.hpp"
#include "kcm/hydro.hpp"
#include "kcm/kernels.hpp"
#include "kcm/phase_grid.hpp"
#include "kcm/sweep.hpp"

namespace kcm {

struct ScalingConfig {
  std::string mode = "scaled";  // scaled | dimensional
  double eps = 0.1, a = 0.5, b = 1.0, d = 1.0;
  // dimensional inputs (mode = dimensional); [params] rates are then dimensional too
  double tau = 1.0, R = 1.0, s2 = 1.0, R0 = 1.0, fbar = 1.0;
  double p_l = 1.0, p_h = 1.0, p_c = 1.0, Gbar = 1.0;
};

struct KernelConfig {
  std::string turning = "linear";
  std::string haptotaxis = "linear";
  std::string chemotaxis = "saturating";
};

struct RunSection {
  double t_final = 1.25;
  double dt = 0.0;    // 0: auto
  double cfl = 0.9;   // fraction of the stability limit used when dt = 0
  std::uint64_t seed = 12345;
  int reaction_substeps = 0;
  std::vector<double> eps_list{0.2, 0.1, 0.05, 0.025};
  double picard_t0 = 0.05;
  double picard_dt = 0.005;
  double picard_tol = 1e-10;
  int picard_max_iter = 40;
  std::string initial_file;  // KCM1 container read when initial = file
};

struct OutputConfig {
  std::string directory = "out";
  int cadence = 10;  // steps between snapshots
  bool snapshots = true;
  bool timeseries = true;
};

struct RunConfig {
  GridSpec grid;
  ModelParams params;
  KernelConfig kernels;
  ScalingConfig scaling;
  InitialData initial;
  RunSection run;
  OutputConfig output;

  RunConfig() {
    const SweepConfig s = default_sweep_config();
    grid = s.grid;
    params = s.params;
    initial = s.initial;
    run.t_final = s.t_final;
    run.eps_list = s.eps_list;
    scaling.eps = params.eps;
    scaling.a = params.a;
    scaling.b = params.b;
    scaling.d = params.d;
  }
};

/// Config error tied to one key; parse_config adds the line number.
struct ConfigKeyError : ConfigError {
  ConfigKeyError(std::string sec, std::string k, const std::string& msg)
      : ConfigError("[" + sec + "] " + k + ": " + msg), section(std::move(sec)), key(std::move(k)) {}
  std::string section, key;
};

namespace detail {

using FieldRef = std::variant<double*, int*, std::uint64_t*, bool*, std::string*, std::vector<double>*>;

struct FieldDesc {
  const char* section;
  const char* key;
  FieldRef ref;
};

inline std::vector<FieldDesc> config_fields(RunConfig& c) {
  return {
      {"grid", "dimension", &c.grid.dim},
      {"grid", "speed_ratio", &c.grid.speed_ratio},
      {"grid", "radial_nodes", &c.grid.radial_nodes},
      {"grid", "angular_nodes", &c.grid.angular_nodes},
      {"grid", "activity_subdivision", &c.grid.activity_subdivision},
      {"grid", "theta_nodes", &c.grid.theta_nodes},
      {"grid", "cells", &c.grid.cells},
      {"grid", "box_length", &c.grid.box_length},
      {"params", "k1", &c.params.k1},
      {"params", "k_1", &c.params.km1},
      {"params", "k2", &c.params.k2},
      {"params", "k_2", &c.params.km2},
      {"params", "kappa", &c.params.kappa},
      {"params", "r_L", &c.params.r_L},
      {"params", "D_L", &c.params.D_L},
      {"params", "alpha2", &c.params.alpha2},
      {"kernels", "turning", &c.kernels.turning},
      {"kernels", "haptotaxis", &c.kernels.haptotaxis},
      {"kernels", "chemotaxis", &c.kernels.chemotaxis},
      {"kernels", "lambda", &c.params.lambda},
      {"kernels", "beta", &c.params.beta},
      {"kernels", "chi", &c.params.chi},
      {"kernels", "alpha1", &c.params.alpha1},
      {"scaling", "mode", &c.scaling.mode},
      {"scaling", "eps", &c.scaling.eps},
      {"scaling", "a", &c.scaling.a},
      {"scaling", "b", &c.scaling.b},
      {"scaling", "d", &c.scaling.d},
      {"scaling", "tau", &c.scaling.tau},
      {"scaling", "R", &c.scaling.R},
      {"scaling", "s2", &c.scaling.s2},
      {"scaling", "R0", &c.scaling.R0},
      {"scaling", "fbar", &c.scaling.fbar},
      {"scaling", "p_l", &c.scaling.p_l},
      {"scaling", "p_h", &c.scaling.p_h},
      {"scaling", "p_c", &c.scaling.p_c},
      {"scaling", "Gbar", &c.scaling.Gbar},
      {"run", "t_final", &c.run.t_final},
      {"run", "dt", &c.run.dt},
      {"run", "cfl", &c.run.cfl},
      {"run", "seed", &c.run.seed},
      {"run", "reaction_substeps", &c.run.reaction_substeps},
      {"run", "eps_list", &c.run.eps_list},
      {"run", "picard_t0", &c.run.picard_t0},
      {"run", "picard_dt", &c.run.picard_dt},
      {"run", "picard_tol", &c.run.picard_tol},
      {"run", "picard_max_iter", &c.run.picard_max_iter},
      {"run", "initial", &c.initial.profile},
      {"run", "initial_file", &c.run.initial_file},
      {"run", "rho0", &c.initial.rho0},
      {"run", "amplitude", &c.initial.amplitude},
      {"run", "velocity", &c.initial.velocity},
      {"run", "q0", &c.initial.q0},
      {"run", "q_aniso", &c.initial.q_aniso},
      {"run", "width", &c.initial.width},
      {"run", "l0", &c.initial.l0},
      {"output", "directory", &c.output.directory},
      {"output", "cadence", &c.output.cadence},
      {"output", "snapshots", &c.output.snapshots},
      {"output", "timeseries", &c.output.timeseries},
  };
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a real number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected a real number, got '" + v + "'");
  return x;
}

inline long long parse_integer(const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return x;
}

inline void assign(const FieldRef& ref, const std::string& v) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          *p = parse_double(v);
        } else if constexpr (std::is_same_v<T, int>) {
          const long long x = parse_integer(v);
          if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("integer out of range: " + v);
          *p = static_cast<int>(x);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          std::size_t pos = 0;
          unsigned long long x = 0;
          try {
            if (!v.empty() && v[0] == '-') throw ConfigError("");
            x = std::stoull(v, &pos);
          } catch (const std::exception&) {
            pos = 0;
          }
          if (pos == 0 || pos != v.size()) throw ConfigError("expected a nonnegative integer, got '" + v + "'");
          *p = x;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (v == "true" || v == "1" || v == "yes" || v == "on") *p = true;
          else if (v == "false" || v == "0" || v == "no" || v == "off") *p = false;
          else throw ConfigError("expected a boolean, got '" + v + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = v;
        } else {
          p->clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) p->push_back(parse_double(trim(item)));
          if (p->empty()) throw ConfigError("expected a comma-separated list of reals");
        }
      },
      ref);
}

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string render(const FieldRef& ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) return format_real(*p);
        else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) return std::to_string(*p);
        else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::string>) return *p;
        else {
          std::string s;
          for (std::size_t i = 0; i < p->size(); ++i) s += (i ? ", " : "") + format_real((*p)[i]);
          return s;
        }
      },
      ref);
}

inline std::string env_name(const std::string& section, const std::string& key) {
  std::string n = "KCM_" + section + "_" + key;
  for (auto& ch : n) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return n;
}

}  // namespace detail

/// Moves the scaling section into the model parameters; in dimensional mode
/// the rates in [params] are read as dimensional and converted.
inline void resolve_scaling(RunConfig& c) {
  if (c.scaling.mode == "scaled") {
    c.params.eps = c.scaling.eps;
    c.params.a = c.scaling.a;
    c.params.b = c.scaling.b;
    c.params.d = c.scaling.d;
    return;
  }
  if (c.scaling.mode != "dimensional") throw ConfigKeyError("scaling", "mode", "must be 'scaled' or 'dimensional'");
  DimensionalParams d;
  d.n = c.grid.dim;
  d.tau = c.scaling.tau;
  d.R = c.scaling.R;
  d.s2 = c.scaling.s2;
  d.R0 = c.scaling.R0;
  d.fbar = c.scaling.fbar;
  d.p_l = c.scaling.p_l;
  d.p_h = c.scaling.p_h;
  d.p_c = c.scaling.p_c;
  d.Gbar = c.scaling.Gbar;
  d.kappa = c.params.kappa;
  d.r_L = c.params.r_L;
  d.D_L = c.params.D_L;
  d.k1 = c.params.k1;
  d.km1 = c.params.km1;
  d.k2 = c.params.k2;
  d.km2 = c.params.km2;
  const ScaledParams s = nondimensionalize(d);
  c.params.eps = s.eps;
  c.params.a = s.a;
  c.params.b = s.b;
  c.params.d = s.d;
  c.params.kappa = s.kappa;
  c.params.r_L = s.r_L;
  c.params.D_L = 1.0;
  c.params.k1 = s.k1;
  c.params.km1 = s.km1;
  c.params.k2 = s.k2;
  c.params.km2 = s.km2;
  // From here on the config is an ordinary scaled one, so serializing it does
  // not convert the rates a second time.
  c.scaling.mode = "scaled";
  c.scaling.eps = s.eps;
  c.scaling.a = s.a;
  c.scaling.b = s.b;
  c.scaling.d = s.d;
}

/// Checks every field against the preconditions of the module it feeds.
/// Works on an already resolved config (see resolve_scaling).
inline void validate_config(const RunConfig& c) {
  auto need = [](bool ok, const char* sec, const char* key, const std::string& msg) {
    if (!ok) throw ConfigKeyError(sec, key, msg);
  };
  need(c.grid.dim == 1 || c.grid.dim == 2, "grid", "dimension", "must be 1 or 2");
  need(c.grid.speed_ratio >= 0.0 && c.grid.speed_ratio < 1.0, "grid", "speed_ratio", "must lie in [0, 1)");
  need(c.grid.radial_nodes >= 2, "grid", "radial_nodes", "must be >= 2");
  need(c.grid.angular_nodes >= 2 && c.grid.angular_nodes % 2 == 0, "grid", "angular_nodes", "must be even and >= 2");
  need(c.grid.activity_subdivision >= 1, "grid", "activity_subdivision", "must be >= 1");
  need(c.grid.theta_nodes >= 2 && c.grid.theta_nodes % 2 == 0, "grid", "theta_nodes", "must be even and >= 2");
  need(c.grid.cells >= 3, "grid", "cells", "must be >= 3");
  need(c.grid.box_length > 0.0, "grid", "box_length", "must be > 0");

  const auto& p = c.params;
  const std::pair<double, const char*> rates[] = {{p.k1, "k1"},     {p.km1, "k_1"}, {p.k2, "k2"},   {p.km2, "k_2"},
                                                  {p.kappa, "kappa"}, {p.r_L, "r_L"}, {p.D_L, "D_L"}, {p.alpha2, "alpha2"}};
  for (const auto& [v, name] : rates) need(std::isfinite(v) && v >= 0.0, "params", name, "must be a finite value >= 0");
  need(p.alpha1 >= 0.0, "kernels", "alpha1", "must be >= 0");
  need(std::abs(p.alpha1 + p.alpha2 - 1.0) <= 1e-12, "kernels", "alpha1", "alpha1 + alpha2 must equal 1");
  need(p.chi >= 0.0, "kernels", "chi", "must be >= 0");
  need(p.lambda >= 0.0, "kernels", "lambda", "must be >= 0 (0 selects 1/|V|)");
  need(p.beta >= 0.0, "kernels", "beta", "must be >= 0 (0 derives it from lambda)");
  need(c.kernels.turning == "linear", "kernels", "turning", "only 'linear' (T = lambda + beta v.v') is available");
  need(c.kernels.haptotaxis == "linear", "kernels", "haptotaxis", "only 'linear' (psi = (1 + v.theta)/Z) is available");
  need(c.kernels.chemotaxis == "saturating", "kernels", "chemotaxis",
       "only 'saturating' (K = 1/|V| + chi v.F/(1+|F|)) is available");

  need(p.eps > 0.0, "scaling", "eps", "must be > 0");
  need(p.a > 0.0 && p.a < 1.0, "scaling", "a", "must satisfy 0 < a < 1");
  need(p.b >= 1.0, "scaling", "b", "must satisfy b >= 1");
  need(p.d >= 1.0, "scaling", "d", "must satisfy d >= 1");

  need(c.run.t_final > 0.0, "run", "t_final", "must be > 0");
  need(c.run.dt >= 0.0, "run", "dt", "must be >= 0 (0 selects the CFL step)");
  need(c.run.cfl > 0.0 && c.run.cfl <= 1.0, "run", "cfl", "must lie in (0, 1]");
  need(c.run.reaction_substeps >= 0, "run", "reaction_substeps", "must be >= 0");
  need(c.run.eps_list.size() >= 3, "run", "eps_list", "needs at least 3 values");
  for (std::size_t i = 0; i < c.run.eps_list.size(); ++i) {
    need(c.run.eps_list[i] > 0.0, "run", "eps_list", "values must be > 0");
    if (i) need(c.run.eps_list[i] < c.run.eps_list[i - 1], "run", "eps_list", "values must be strictly descending");
  }
  need(c.run.picard_t0 > 0.0, "run", "picard_t0", "must be > 0");
  need(c.run.picard_dt > 0.0 && c.run.picard_dt <= c.run.picard_t0, "run", "picard_dt", "must lie in (0, picard_t0]");
  need(c.run.picard_tol > 0.0, "run", "picard_tol", "must be > 0");
  need(c.run.picard_max_iter >= 1, "run", "picard_max_iter", "must be >= 1");

  const auto& d = c.initial;
  const char* profiles[] = {"zero", "uniform", "gaussian", "two_bump", "wave", "file"};
  need(std::find(std::begin(profiles), std::end(profiles), d.profile) != std::end(profiles), "run", "initial",
       "must be one of zero, uniform, gaussian, two_bump, wave, file");
  need(d.profile != "file" || !c.run.initial_file.empty(), "run", "initial_file", "required when initial = file");
  need(d.rho0 >= 0.0, "run", "rho0", "must be >= 0");
  need(d.rho0 - std::abs(d.amplitude) >= 0.0, "run", "amplitude", "density would become negative");
  need(d.q0 >= 0.0, "run", "q0", "must be >= 0");
  need(std::abs(d.q_aniso) <= 1.0, "run", "q_aniso", "|q_aniso| must be <= 1 so Q stays nonnegative");
  need(d.width > 0.0, "run", "width", "must be > 0");
  need(d.l0 >= 0.0, "run", "l0", "must be >= 0");

  need(!c.output.directory.empty(), "output", "directory", "must not be empty");
  need(c.output.cadence >= 1, "output", "cadence", "must be >= 1");

  // Cross-module checks: grid construction and kernel admissibility.
  const PhaseGrid g = build_phase_grid(c.grid);
  make_kernels(g, p);
  validate_params(p);
}

/// Parses sectioned `key = value` text. Comments start with '#' or ';'.
/// Errors carry the offending line number.
inline RunConfig parse_config(const std::string& text) {
  RunConfig c;
  auto fields = detail::config_fields(c);
  std::map<std::string, int> seen;  // "section.key" -> line
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  auto where = [&](int ln) { return "line " + std::to_string(ln) + ": "; };
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    const auto hash = s.find_first_of("#;");
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where(line) + "malformed section header '" + s + "'");
      section = detail::trim(s.substr(1, s.size() - 2));
      const char* known[] = {"grid", "params", "kernels", "scaling", "run", "output"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known))
        throw ConfigError(where(line) + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where(line) + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where(line) + "key outside of any section");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    const std::string full = section + "." + key;
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const detail::FieldDesc& f) { return f.section == section && f.key == key; });
    if (it == fields.end()) throw ConfigError(where(line) + "unknown key '" + key + "' in [" + section + "]");
    if (auto prev = seen.find(full); prev != seen.end())
      throw ConfigError(where(line) + "duplicate key '" + full + "' (first set on line " +
                        std::to_string(prev->second) + ")");
    seen[full] = line;
    try {
      detail::assign(it->ref, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where(line) + full + ": " + e.what());
    }
  }
  for (const auto& f : fields) {
    const std::string name = detail::env_name(f.section, f.key);
    if (const char* v = std::getenv(name.c_str())) {
      try {
        detail::assign(f.ref, detail::trim(v));
      } catch (const ConfigError& e) {
        throw ConfigError("environment " + name + ": " + e.what());
      }
    }
  }
  try {
    resolve_scaling(c);
    validate_config(c);
  } catch (const ConfigKeyError& e) {
    const auto pos = seen.find(e.section + "." + e.key);
    if (pos != seen.end()) throw ConfigError(where(pos->second) + e.what());
    throw;
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Writes every key; parse_config(serialize_config(c)) reproduces c.
inline std::string serialize_config(const RunConfig& cfg) {
  RunConfig c = cfg;
  std::string out, section;
  for (const auto& f : detail::config_fields(c)) {
    if (section != f.section) {
      section = f.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(f.key) + " = " + detail::render(f.ref) + "\n";
  }
  return out;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return serialize_config(a) == serialize_config(b); }

// ---------------------------------------------------------------------------
// KCM1 container:
//   "KCM1" | u32 version | u8 little-endian flag | u32 field count
//   per field: u32 name length | name | u8 type (1 = f64) | u32 rank | u64 dims[rank] | f64 data
// Integers and reals are stored in the byte order named by the flag.

struct Field {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

inline constexpr std::uint32_t container_version = 1;

namespace detail {

template <class T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

template <class T>
T byteswap_value(T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  bool swap = false;
  template <class T>
  T get() {
    if (pos + sizeof(T) > buf.size()) throw IoError("KCM1: truncated container");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return swap ? byteswap_value(v) : v;
  }
};

}  // namespace detail

inline std::string encode_fields(const std::vector<Field>& fields) {
  std::string out = "KCM1";
  detail::put<std::uint32_t>(out, container_version);
  detail::put<std::uint8_t>(out, std::endian::native == std::endian::little ? 1 : 0);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(fields.size()));
  for (const auto& f : fields) {
    std::uint64_t n = 1;
    for (auto d : f.shape) n *= d;
    if (n != f.data.size()) throw IoError("KCM1: field '" + f.name + "' shape does not match its data");
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.name.size()));
    out += f.name;
    detail::put<std::uint8_t>(out, 1);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.shape.size()));
    for (auto d : f.shape) detail::put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(f.data.data()), f.data.size() * sizeof(double));
  }
  return out;
}

inline std::vector<Field> decode_fields(const std::string& buf) {
  if (buf.size() < 4 || buf.compare(0, 4, "KCM1") != 0) throw IoError("KCM1: bad magic bytes");
  detail::Reader r{buf, 4};
  std::uint32_t version;
  std::memcpy(&version, buf.data() + 4, 4);
  r.pos = 8;
  if (buf.size() < 9) throw IoError("KCM1: truncated container");
  const bool little = buf[8] != 0;
  r.swap = little != (std::endian::native == std::endian::little);
  if (r.swap) version = detail::byteswap_value(version);
  if (version != container_version) throw IoError("KCM1: unsupported version " + std::to_string(version));
  r.pos = 9;
  const auto count = r.get<std::uint32_t>();
  std::vector<Field> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Field f;
    const auto len = r.get<std::uint32_t>();
    if (r.pos + len > buf.size()) throw IoError("KCM1: truncated field name");
    f.name = buf.substr(r.pos, len);
    r.pos += len;
    if (r.get<std::uint8_t>() != 1) throw IoError("KCM1: field '" + f.name + "' has an unsupported element type");
    const auto rank = r.get<std::uint32_t>();
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      f.shape.push_back(r.get<std::uint64_t>());
      n *= f.shape.back();
    }
    if (r.pos + n * sizeof(double) > buf.size()) throw IoError("KCM1: truncated data for '" + f.name + "'");
    f.data.resize(n);
    for (std::uint64_t k = 0; k < n; ++k) f.data[k] = r.get<double>();
    out.push_back(std::move(f));
  }
  if (r.pos != buf.size()) throw IoError("KCM1: trailing bytes after the last field");
  return out;
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_fields(const std::string& path, const std::vector<Field>& fields) {
  write_bytes(path, encode_fields(fields));
}
inline std::vector<Field> read_fields(const std::string& path) { return decode_fields(read_bytes(path)); }

// ---------------------------------------------------------------------------

/// Comma-separated table: header line, then one line per row with every value
/// in %.16e (17 significant digits).
inline std::string format_timeseries(const std::vector<std::string>& columns,
                                     const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += '\n';
  char buf[40];
  for (const auto& r : rows) {
    if (r.size() != columns.size()) throw ConfigError("timeseries: row width does not match the header");
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.16e", r[i]);
      if (i) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

inline void write_timeseries(const std::string& path, const std::vector<std::string>& columns,
                             const std::vector<std::vector<double>>& rows) {
  write_bytes(path, format_timeseries(columns, rows));
}

}  // namespace kcm
