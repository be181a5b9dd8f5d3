#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace kcm {

/// Invalid user configuration (bad ranges, unknown keys, inconsistent options).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numerical precondition does not hold (undefined closure, negative equilibrium, ...).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Requested time step exceeds the stability/positivity limit.
struct CflError : std::runtime_error {
  CflError(const std::string& what, double requested, double limit)
      : std::runtime_error(what), requested_dt(requested), max_dt(limit) {}
  double requested_dt;
  double max_dt;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Small fixed-size linear algebra. Velocities live in R^n with n <= 2; unused
// components are kept at zero so n = 1 and n = 2 share one code path.
using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

inline double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec2& a) { return std::sqrt(dot(a, a)); }
inline double cross(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }
inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec2 operator*(double s, const Vec2& a) { return {s * a[0], s * a[1]}; }

inline Mat2 outer(const Vec2& a, const Vec2& b) {
  return {{{a[0] * b[0], a[0] * b[1]}, {a[1] * b[0], a[1] * b[1]}}};
}
inline Vec2 matvec(const Mat2& m, const Vec2& x) {
  return {m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]};
}

/// Lebesgue measure of the unit sphere S^{n-1} (counting measure for n = 1).
inline double sphere_measure(int n) {
  if (n == 1) return 2.0;
  if (n == 2) return 2.0 * std::numbers::pi;
  throw ConfigError("dimension must be 1 or 2, got " + std::to_string(n));
}

// ---------------------------------------------------------------------------
// Parallel execution over index ranges.
//
// Work is split into contiguous chunks; callers only write to disjoint output
// slots, and every reduction in the library is done serially afterwards, so
// results do not depend on the worker count.

namespace detail {
inline std::atomic<int>& worker_count_storage() {
  static std::atomic<int> count{1};
  return count;
}
}  // namespace detail

inline void set_worker_count(int workers) {
  detail::worker_count_storage().store(std::max(1, workers));
}
inline int worker_count() { return detail::worker_count_storage().load(); }

template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(worker_count());
  if (workers <= 1 || count < 2 * workers) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
}

// Norm helpers on flat arrays.
inline double max_abs(const std::vector<double>& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}
inline double min_value(const std::vector<double>& a) {
  double m = a.empty() ? 0.0 : a.front();
  for (double x : a) m = std::min(m, x);
  return m;
}

}  // namespace kcm
