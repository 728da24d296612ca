#pragma once

// Free streaming d_t f + omega . grad_x f = 0 on the periodic grid. Every
// angular node moves with its own constant velocity, so each (node, axis)
// line is an independent 1-D periodic translation. Two schemes: a
// conservative semi-Lagrangian remap of the MC-limited piecewise linear
// reconstruction (exact for integer shifts, no CFL limit), and first-order
// upwind (CFL <= 1). Two-dimensional grids are split axis by axis.

#include "vicsek/errors.hpp"
#include "vicsek/field.hpp"
#include "vicsek/parallel.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace vicsek {

enum class TransportScheme { SemiLagrangian, Upwind };

namespace detail {

inline double mc_slope(double left, double mid, double right) {
  const double dm = mid - left;
  const double dp = right - mid;
  if (dm * dp <= 0.0) return 0.0;
  const double s = std::fmin(std::fmin(2.0 * std::fabs(dm), 2.0 * std::fabs(dp)), 0.5 * std::fabs(dm + dp));
  return dm > 0.0 ? s : -s;
}

// Shifts a periodic line of cell averages by `shift` cells.
inline void remap_line(std::vector<double>& line, double shift, std::vector<double>& scratch) {
  const long n = static_cast<long>(line.size());
  const double fl = std::floor(shift);
  const double alpha = shift - fl;
  const long m = static_cast<long>(fl);
  auto wrap = [n](long k) { return ((k % n) + n) % n; };
  scratch.resize(line.size());
  if (alpha == 0.0) {
    for (long i = 0; i < n; ++i) scratch[i] = line[wrap(i - m)];
    line.swap(scratch);
    return;
  }
  std::vector<double> slope(line.size());
  for (long k = 0; k < n; ++k) slope[k] = mc_slope(line[wrap(k - 1)], line[k], line[wrap(k + 1)]);
  const double corr = 0.5 * alpha * (1.0 - alpha);
  for (long i = 0; i < n; ++i) {
    const long k0 = wrap(i - m);
    const long k1 = wrap(i - m - 1);
    scratch[i] = alpha * line[k1] + corr * slope[k1] + (1.0 - alpha) * line[k0] - corr * slope[k0];
  }
  line.swap(scratch);
}

inline void upwind_line(std::vector<double>& line, double courant, std::vector<double>& scratch) {
  const std::size_t n = line.size();
  scratch.resize(n);
  if (courant >= 0.0) {
    for (std::size_t i = 0; i < n; ++i) scratch[i] = line[i] - courant * (line[i] - line[(i + n - 1) % n]);
  } else {
    for (std::size_t i = 0; i < n; ++i) scratch[i] = line[i] - courant * (line[(i + 1) % n] - line[i]);
  }
  line.swap(scratch);
}

}  // namespace detail

/// Largest |v| tau / dx over the nodes; the upwind scheme needs this <= 1.
inline double transport_cfl(const SpatialGrid& grid, const AngularGrid<2>& angles, double tau) {
  double m = 0.0;
  for (std::size_t j = 0; j < angles.size(); ++j)
    for (int a = 0; a < grid.dim(); ++a) m = std::fmax(m, std::fabs(angles.node(j)[a]) * tau / grid.dx());
  return m;
}

/// Advances f by `tau` under pure transport, in place.
inline void transport(DistributionField<2>& f, double tau, TransportScheme scheme, unsigned threads = 1) {
  const SpatialGrid& g = f.space();
  const AngularGrid<2>& ag = f.angles();
  if (scheme == TransportScheme::Upwind) {
    const double cfl = transport_cfl(g, ag, tau);
    if (cfl > 1.0)
      throw StabilityError("transport: upwind CFL number " + std::to_string(cfl) + " exceeds 1", cfl, 1.0);
  }
  const std::size_t n = g.n();
  const std::size_t nodes = f.nodes();
  std::vector<double>& v = f.values();
  const std::size_t lines_per_axis = g.dim() == 1 ? 1 : n;

  for (int axis = 0; axis < g.dim(); ++axis) {
    parallel_for(nodes, threads, [&](std::size_t j) {
      const double vel = ag.node(j)[axis];
      if (vel == 0.0) return;
      const double shift = vel * tau / g.dx();
      std::vector<double> line(n), scratch;
      for (std::size_t l = 0; l < lines_per_axis; ++l) {
        auto cell_of = [&](std::size_t i) {
          if (g.dim() == 1) return i;
          return axis == 0 ? g.flat(i, l) : g.flat(l, i);
        };
        for (std::size_t i = 0; i < n; ++i) line[i] = v[cell_of(i) * nodes + j];
        if (scheme == TransportScheme::SemiLagrangian)
          detail::remap_line(line, shift, scratch);
        else
          detail::upwind_line(line, shift, scratch);
        for (std::size_t i = 0; i < n; ++i) v[cell_of(i) * nodes + j] = line[i];
      }
    });
  }
}

}  // namespace vicsek
