#pragma once

// Discretizations of the phase space (x, v, y) and of the fiber directions.
//
//   x : periodic box in R^n, uniform cells
//   v : annulus V = [s, 1] x S^{n-1}, midpoint rule in radius x uniform angles
//   y : open triangle Y = {y1, y2 > 0, y1 + y2 < 1}, uniform triangulation
//   θ : S^{n-1}, {-1, +1} for n = 1 and uniform angles for n = 2

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kcm/core.hpp"

namespace kcm {

/// Exact |V| = |S^{n-1}| (1 - s^n) / n.
inline double annulus_measure(int n, double s) {
  return sphere_measure(n) * (1.0 - std::pow(s, n)) / n;
}

/// Exact diagonal second moment ∫_V v_i^2 dv = |S^{n-1}| (1 - s^{n+2}) / (n (n+2)).
inline double annulus_second_moment(int n, double s) {
  return sphere_measure(n) * (1.0 - std::pow(s, n + 2)) / (n * (n + 2.0));
}

struct VelocityQuadrature {
  int dim = 1;
  double speed_ratio = 0.0;
  int radial_count = 0;
  int angular_count = 0;
  std::vector<Vec2> nodes;
  std::vector<double> weights;
  /// mirror[i] is the index of the node -nodes[i].
  std::vector<std::size_t> mirror;

  std::size_t size() const { return nodes.size(); }
  double measure() const {
    double m = 0.0;
    for (double w : weights) m += w;
    return m;
  }
  /// Discrete ∫_V v_0^2 dv (equal to the v_1^2 moment for n = 2).
  double second_moment() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m += weights[i] * nodes[i][0] * nodes[i][0];
    return m;
  }
  double max_speed() const {
    double m = 0.0;
    for (const auto& v : nodes) m = std::max(m, norm(v));
    return m;
  }
};

/// Builds the symmetric velocity rule on V = [s,1] x S^{n-1}.
///
/// Radial nodes sit at cell midpoints with weights Δr r^{n-1}; for n = 2 the
/// angles are 2π(k + 1/2)/angular_count. An even angular count makes the rule
/// invariant under v -> -v, so every odd moment vanishes to rounding.
inline VelocityQuadrature build_velocity_quadrature(int n, double s, int radial_count,
                                                    int angular_count) {
  if (n != 1 && n != 2) throw ConfigError("velocity quadrature: dimension must be 1 or 2");
  if (!(s >= 0.0 && s < 1.0)) throw ConfigError("velocity quadrature: speed ratio must lie in [0, 1)");
  if (radial_count < 2) throw ConfigError("velocity quadrature: radial_count must be >= 2");
  if (n == 2 && (angular_count < 2 || angular_count % 2 != 0))
    throw ConfigError("velocity quadrature: angular_count must be even and >= 2");

  VelocityQuadrature q;
  q.dim = n;
  q.speed_ratio = s;
  q.radial_count = radial_count;
  q.angular_count = n == 1 ? 2 : angular_count;
  const double dr = (1.0 - s) / radial_count;

  if (n == 1) {
    // Ordered -r_{N-1}, ..., -r_0, r_0, ..., r_{N-1}; mirror is i -> size-1-i.
    const auto total = static_cast<std::size_t>(2 * radial_count);
    q.nodes.resize(total);
    q.weights.assign(total, dr);
    for (int j = 0; j < radial_count; ++j) {
      const double r = s + (j + 0.5) * dr;
      q.nodes[static_cast<std::size_t>(radial_count + j)] = {r, 0.0};
      q.nodes[static_cast<std::size_t>(radial_count - 1 - j)] = {-r, 0.0};
    }
    q.mirror.resize(total);
    for (std::size_t i = 0; i < total; ++i) q.mirror[i] = total - 1 - i;
    return q;
  }

  const double dphi = 2.0 * std::numbers::pi / angular_count;
  for (int j = 0; j < radial_count; ++j) {
    const double r = s + (j + 0.5) * dr;
    for (int k = 0; k < angular_count; ++k) {
      const double phi = (k + 0.5) * dphi;
      q.nodes.push_back({r * std::cos(phi), r * std::sin(phi)});
      q.weights.push_back(r * dr * dphi);
    }
  }
  // Exact antipodes: reuse the mirrored node's coordinates so v and -v cancel
  // bit-for-bit in odd moments.
  q.mirror.resize(q.size());
  const int half = angular_count / 2;
  for (int j = 0; j < radial_count; ++j) {
    for (int k = 0; k < half; ++k) {
      const auto a = static_cast<std::size_t>(j * angular_count + k);
      const auto b = static_cast<std::size_t>(j * angular_count + k + half);
      q.nodes[b] = {-q.nodes[a][0], -q.nodes[a][1]};
      q.mirror[a] = b;
      q.mirror[b] = a;
    }
  }
  return q;
}

/// Multi-index power p = (p0, p1); returns Σ_i w_i v_i0^{p0} v_i1^{p1}.
inline double quadrature_moment(const VelocityQuadrature& quad, std::array<int, 2> powers) {
  if (powers[0] < 0 || powers[1] < 0) throw ConfigError("quadrature_moment: negative power");
  // Pair each node with its mirror so odd moments cancel exactly.
  double sum = 0.0;
  for (std::size_t i = 0; i < quad.size(); ++i) {
    const std::size_t m = quad.mirror[i];
    if (m < i) continue;
    auto term = [&](std::size_t k) {
      return quad.weights[k] * std::pow(quad.nodes[k][0], powers[0]) *
             std::pow(quad.nodes[k][1], powers[1]);
    };
    sum += m == i ? term(i) : term(i) + term(m);
  }
  return sum;
}

// ---------------------------------------------------------------------------

/// Uniform triangulation of the activity triangle with cell-centred unknowns.
///
/// With N = subdivision and h = 1/N, "up" cell (i, j) has vertices
/// (i, j), (i+1, j), (i, j+1) (times h) and "down" cell (i, j) has vertices
/// (i+1, j), (i, j+1), (i+1, j+1). There are N^2 cells of area h^2 / 2.
struct ActivityGrid {
  struct BoundaryFace {
    std::size_t cell;
    Vec2 midpoint;
    Vec2 normal;  // outward unit normal
    double length;
  };
  struct Neighbour {
    std::size_t cell;
    Vec2 offset;  // centroid(neighbour) - centroid(self)
  };

  int subdivision = 0;
  double spacing = 0.0;
  std::vector<Vec2> centroids;
  std::vector<double> areas;
  std::vector<BoundaryFace> boundary;
  /// Cells whose centroid lies within √2 spacings (this includes the
  /// tangential neighbours along the hypotenuse), sorted by offset angle.
  std::vector<std::vector<Neighbour>> neighbours;

  std::size_t size() const { return centroids.size(); }
  double measure() const {
    double a = 0.0;
    for (double x : areas) a += x;
    return a;
  }
};

inline ActivityGrid build_activity_grid(int subdivision) {
  if (subdivision < 1) throw ConfigError("activity grid: subdivision must be >= 1");
  ActivityGrid g;
  g.subdivision = subdivision;
  const int n = subdivision;
  const double h = 1.0 / n;
  g.spacing = h;

  for (int j = 0; j < n; ++j) {
    for (int i = 0; i + j <= n - 1; ++i) {
      const std::size_t up = g.size();
      g.centroids.push_back({(i + 1.0 / 3.0) * h, (j + 1.0 / 3.0) * h});
      g.areas.push_back(0.5 * h * h);
      if (j == 0) g.boundary.push_back({up, {(i + 0.5) * h, 0.0}, {0.0, -1.0}, h});
      if (i == 0) g.boundary.push_back({up, {0.0, (j + 0.5) * h}, {-1.0, 0.0}, h});
      if (i + j == n - 1) {
        const double r = 1.0 / std::sqrt(2.0);
        g.boundary.push_back({up, {(i + 0.5) * h, (j + 0.5) * h}, {r, r}, h * std::sqrt(2.0)});
      }
      if (i + j <= n - 2) {
        g.centroids.push_back({(i + 2.0 / 3.0) * h, (j + 2.0 / 3.0) * h});
        g.areas.push_back(0.5 * h * h);
      }
    }
  }

  g.neighbours.resize(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) {
    for (std::size_t o = 0; o < g.size(); ++o) {
      if (o == c) continue;
      const Vec2 d = g.centroids[o] - g.centroids[c];
      if (norm(d) <= 1.001 * std::sqrt(2.0) * h) g.neighbours[c].push_back({o, d});
    }
    auto& nb = g.neighbours[c];
    std::sort(nb.begin(), nb.end(), [](const ActivityGrid::Neighbour& a, const ActivityGrid::Neighbour& b) {
      return std::atan2(a.offset[1], a.offset[0]) < std::atan2(b.offset[1], b.offset[0]);
    });
  }
  return g;
}

// ---------------------------------------------------------------------------

struct ThetaGrid {
  int dim = 1;
  std::vector<Vec2> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
  double measure() const {
    double m = 0.0;
    for (double w : weights) m += w;
    return m;
  }
};

inline ThetaGrid build_theta_grid(int n, int count) {
  ThetaGrid t;
  t.dim = n;
  if (n == 1) {
    t.nodes = {{-1.0, 0.0}, {1.0, 0.0}};
    t.weights = {1.0, 1.0};
    return t;
  }
  if (n != 2) throw ConfigError("theta grid: dimension must be 1 or 2");
  if (count < 2 || count % 2 != 0) throw ConfigError("theta grid: count must be even and >= 2");
  const double dphi = 2.0 * std::numbers::pi / count;
  for (int k = 0; k < count; ++k) {
    const double phi = (k + 0.5) * dphi;
    t.nodes.push_back({std::cos(phi), std::sin(phi)});
    t.weights.push_back(dphi);
  }
  return t;
}

// ---------------------------------------------------------------------------

/// Periodic box [0, L0) x [0, L1) (second axis unused for n = 1).
struct SpaceGrid {
  int dim = 1;
  std::array<double, 2> length{1.0, 1.0};
  std::array<int, 2> cells{1, 1};

  std::size_t size() const {
    return static_cast<std::size_t>(cells[0]) * static_cast<std::size_t>(dim == 2 ? cells[1] : 1);
  }
  double spacing(int axis) const { return length[static_cast<std::size_t>(axis)] / cells[static_cast<std::size_t>(axis)]; }
  double cell_volume() const { return dim == 2 ? spacing(0) * spacing(1) : spacing(0); }
  double min_spacing() const { return dim == 2 ? std::min(spacing(0), spacing(1)) : spacing(0); }

  std::size_t index(int i0, int i1) const {
    return static_cast<std::size_t>(i1) * static_cast<std::size_t>(cells[0]) + static_cast<std::size_t>(i0);
  }
  /// Periodic neighbour of cell c along axis by offset +-1.
  std::size_t shift(std::size_t c, int axis, int offset) const {
    const int i0 = static_cast<int>(c % static_cast<std::size_t>(cells[0]));
    const int i1 = static_cast<int>(c / static_cast<std::size_t>(cells[0]));
    if (axis == 0) return index((i0 + offset + cells[0]) % cells[0], i1);
    return index(i0, (i1 + offset + cells[1]) % cells[1]);
  }
  Vec2 center(std::size_t c) const {
    const auto i0 = static_cast<double>(c % static_cast<std::size_t>(cells[0]));
    const auto i1 = static_cast<double>(c / static_cast<std::size_t>(cells[0]));
    return {(i0 + 0.5) * spacing(0), dim == 2 ? (i1 + 0.5) * spacing(1) : 0.0};
  }
};

inline SpaceGrid build_space_grid(int n, double box_length, int cells_per_axis) {
  if (n != 1 && n != 2) throw ConfigError("space grid: dimension must be 1 or 2");
  if (!(box_length > 0.0)) throw ConfigError("space grid: box length must be positive");
  if (cells_per_axis < 3) throw ConfigError("space grid: need at least 3 cells per axis");
  SpaceGrid g;
  g.dim = n;
  g.length = {box_length, box_length};
  g.cells = {cells_per_axis, n == 2 ? cells_per_axis : 1};
  return g;
}

// ---------------------------------------------------------------------------

struct GridSpec {
  int dim = 1;
  double speed_ratio = 0.5;
  int radial_nodes = 8;
  int angular_nodes = 8;
  int activity_subdivision = 6;
  int theta_nodes = 8;
  int cells = 64;
  double box_length = 1.0;
};

struct PhaseGrid {
  SpaceGrid space;
  VelocityQuadrature velocity;
  ActivityGrid activity;
  ThetaGrid theta;

  int dim() const { return space.dim; }
  std::size_t nx() const { return space.size(); }
  std::size_t nv() const { return velocity.size(); }
  std::size_t ny() const { return activity.size(); }
  std::size_t ntheta() const { return theta.size(); }
  /// Flat index into a cell distribution f(x, v, y).
  std::size_t at(std::size_t x, std::size_t v, std::size_t y) const { return (x * nv() + v) * ny() + y; }
  std::size_t kinetic_size() const { return nx() * nv() * ny(); }
};

inline PhaseGrid build_phase_grid(const GridSpec& spec) {
  PhaseGrid g;
  g.space = build_space_grid(spec.dim, spec.box_length, spec.cells);
  g.velocity = build_velocity_quadrature(spec.dim, spec.speed_ratio, spec.radial_nodes, spec.angular_nodes);
  g.activity = build_activity_grid(spec.activity_subdivision);
  g.theta = build_theta_grid(spec.dim, spec.theta_nodes);
  return g;
}

}  // namespace kcm
