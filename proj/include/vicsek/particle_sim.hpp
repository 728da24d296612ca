#pragma once

// Stochastic N-agent alignment dynamics on T^{d_x} x S^{D-1}:
//   dX_i = omega_i dt,
//   d omega_i = P_{omega_i perp} nu(omega_i . Obar_i) Obar_i dt + sqrt(2 mu) P_{omega_i perp} o dB_i,
// with Obar_i = Jbar_i / |Jbar_i| and Jbar_i the sum of omega_j over the
// particles within distance R (self included). The integrator is the
// projected Euler step followed by renormalization onto the sphere; the
// renormalization produces the Stratonovich drift to first order.

#include "vicsek/errors.hpp"
#include "vicsek/field.hpp"
#include "vicsek/linalg.hpp"
#include "vicsek/model.hpp"
#include "vicsek/parallel.hpp"
#include "vicsek/rng.hpp"
#include "vicsek/sphere_calculus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace vicsek {

template <int D>
struct ParticleEnsemble {
  int dim_x = 1;
  double length = 1.0;
  std::vector<double> positions;  // particle-major, dim_x per particle
  std::vector<Direction<D>> directions;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  double time = 0.0;

  std::size_t size() const noexcept { return directions.size(); }
  double x(std::size_t i, int axis = 0) const noexcept { return positions[i * dim_x + axis]; }

  void validate() const {
    if (dim_x < 1 || dim_x > D) throw DomainError("ParticleEnsemble: need 1 <= dim_x <= D");
    if (!(length > 0.0)) throw DomainError("ParticleEnsemble: length must be positive");
    if (positions.size() != directions.size() * static_cast<std::size_t>(dim_x))
      throw DomainError("ParticleEnsemble: position count does not match particle count");
    for (double p : positions)
      if (!(p >= 0.0 && p < length)) throw DomainError("ParticleEnsemble: position outside the torus");
  }
};

enum class TiePolicy { Keep, Random };
enum class NeighborMethod { Auto, CellList, Sweep };

template <int D>
struct SimParams {
  double radius = 0.1;
  double mu = 1.0;
  double dt = 1e-3;
  FrequencySpec nu = FrequencySpec::constant(1.0);
  TiePolicy tie = TiePolicy::Keep;
  NeighborMethod neighbors = NeighborMethod::Auto;
  unsigned threads = 1;

  void validate() const {
    if (!(radius > 0.0)) throw DomainError("SimParams: radius must be positive");
    if (!(mu >= 0.0)) throw DomainError("SimParams: mu must be >= 0");
    if (!(dt > 0.0)) throw DomainError("SimParams: dt must be positive");
  }

  /// Message when the per-step noise amplitude sqrt(2 mu dt) is not small.
  std::optional<std::string> small_angle_warning() const {
    const double amp = std::sqrt(2.0 * mu * dt);
    if (amp > 0.2) return "noise amplitude sqrt(2 mu dt) = " + std::to_string(amp) + " is not small";
    return std::nullopt;
  }
};

inline double wrap_periodic(double x, double length) {
  double y = x - length * std::floor(x / length);
  if (y >= length) y = 0.0;
  return y;
}

inline double min_image(double d, double length) { return d - length * std::round(d / length); }

/// Neighbor sums Jbar_i over a fixed snapshot of the ensemble. Cell lists use
/// cells of edge >= R. For d_x = 1 a sorted prefix-sum sweep gives every
/// Jbar_i in O(N log N) regardless of how many neighbors each particle has.
template <int D>
class NeighborSearch {
 public:
  NeighborSearch(const ParticleEnsemble<D>& ens, double radius, NeighborMethod method)
      : ens_(ens), radius_(radius) {
    if (method == NeighborMethod::Auto) {
      const double expected = static_cast<double>(ens.size()) * std::fmin(1.0, 2.0 * radius / ens.length);
      method = (ens.dim_x == 1 && expected > 32.0) ? NeighborMethod::Sweep : NeighborMethod::CellList;
    }
    if (method == NeighborMethod::Sweep && ens.dim_x != 1)
      throw DomainError("NeighborSearch: the sweep method needs dim_x = 1");
    method_ = method;
    if (method_ == NeighborMethod::Sweep)
      build_sweep();
    else
      build_cells();
  }

  NeighborMethod method() const noexcept { return method_; }

  Vec<D> flux(std::size_t i) const { return method_ == NeighborMethod::Sweep ? sweep_flux(i) : cell_flux(i); }

  std::vector<Vec<D>> all(unsigned threads = 1) const {
    std::vector<Vec<D>> out(ens_.size());
    if (method_ == NeighborMethod::Sweep)
      sweep_all(out);
    else
      parallel_for(ens_.size(), threads, [&](std::size_t i) { out[i] = flux(i); });
    return out;
  }

 private:
  void build_cells() {
    ncell_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ens_.length / radius_)));
    std::size_t total = 1;
    for (int a = 0; a < ens_.dim_x; ++a) total *= ncell_;
    std::vector<std::size_t> count(total + 1, 0);
    cell_of_.resize(ens_.size());
    for (std::size_t i = 0; i < ens_.size(); ++i) {
      cell_of_[i] = cell_index(i);
      ++count[cell_of_[i] + 1];
    }
    for (std::size_t c = 0; c < total; ++c) count[c + 1] += count[c];
    start_ = count;
    members_.resize(ens_.size());
    for (std::size_t i = 0; i < ens_.size(); ++i) members_[count[cell_of_[i]]++] = static_cast<std::uint32_t>(i);
  }

  std::size_t axis_cell(double x) const {
    return std::min(ncell_ - 1, static_cast<std::size_t>(x / ens_.length * static_cast<double>(ncell_)));
  }

  std::size_t cell_index(std::size_t i) const {
    std::size_t c = 0;
    for (int a = 0; a < ens_.dim_x; ++a) c = c * ncell_ + axis_cell(ens_.x(i, a));
    return c;
  }

  Vec<D> cell_flux(std::size_t i) const {
    // Stencil of neighboring cells; deduplicated when there are fewer than 3 per axis.
    std::vector<std::size_t> axis_ids[3];
    for (int a = 0; a < ens_.dim_x; ++a) {
      const long c = static_cast<long>(axis_cell(ens_.x(i, a)));
      const long n = static_cast<long>(ncell_);
      for (long o = -1; o <= 1; ++o) axis_ids[a].push_back(static_cast<std::size_t>(((c + o) % n + n) % n));
      std::sort(axis_ids[a].begin(), axis_ids[a].end());
      axis_ids[a].erase(std::unique(axis_ids[a].begin(), axis_ids[a].end()), axis_ids[a].end());
    }
    std::vector<std::size_t> cells{0};
    for (int a = 0; a < ens_.dim_x; ++a) {
      std::vector<std::size_t> next;
      for (std::size_t base : cells)
        for (std::size_t id : axis_ids[a]) next.push_back(base * ncell_ + id);
      cells.swap(next);
    }
    std::sort(cells.begin(), cells.end());
    const double r2 = radius_ * radius_;
    Vec<D> acc{};
    for (std::size_t c : cells) {
      for (std::size_t k = start_[c]; k < start_[c + 1]; ++k) {
        const std::size_t j = members_[k];
        double d2 = 0.0;
        for (int a = 0; a < ens_.dim_x; ++a) {
          const double d = min_image(ens_.x(j, a) - ens_.x(i, a), ens_.length);
          d2 += d * d;
        }
        if (d2 <= r2) acc += ens_.directions[j].vec();
      }
    }
    return acc;
  }

  void build_sweep() {
    const std::size_t n = ens_.size();
    std::vector<std::pair<double, std::uint32_t>> keyed(n);
    for (std::size_t i = 0; i < n; ++i) keyed[i] = {ens_.x(i), static_cast<std::uint32_t>(i)};
    std::sort(keyed.begin(), keyed.end());
    order_.resize(n);
    sorted_x_.resize(n);
    prefix_.assign(n + 1, Vec<D>{});
    for (std::size_t k = 0; k < n; ++k) {
      order_[k] = keyed[k].second;
      sorted_x_[k] = keyed[k].first;
      prefix_[k + 1] = prefix_[k] + ens_.directions[order_[k]].vec();
    }
  }

  // Sum over sorted particles with lo <= x <= hi.
  Vec<D> range_sum(double lo, double hi) const {
    const auto b = std::lower_bound(sorted_x_.begin(), sorted_x_.end(), lo) - sorted_x_.begin();
    const auto e = std::upper_bound(sorted_x_.begin(), sorted_x_.end(), hi) - sorted_x_.begin();
    if (e <= b) return Vec<D>{};
    return prefix_[e] - prefix_[b];
  }

  Vec<D> sweep_flux(std::size_t i) const {
    const double L = ens_.length;
    if (2.0 * radius_ >= L) return prefix_.back();
    const double x = ens_.x(i);
    const double lo = x - radius_;
    const double hi = x + radius_;
    if (lo < 0.0) return range_sum(0.0, hi) + range_sum(lo + L, L);
    if (hi >= L) return range_sum(lo, L) + range_sum(0.0, hi - L);
    return range_sum(lo, hi);
  }

  // Same windows as sweep_flux, visited in sorted order: every window end is
  // monotone in x, so four forward-moving cursors replace the binary searches.
  void sweep_all(std::vector<Vec<D>>& out) const {
    const std::size_t n = ens_.size();
    const double L = ens_.length;
    if (2.0 * radius_ >= L) {
      std::fill(out.begin(), out.end(), prefix_.back());
      return;
    }
    std::size_t b = 0, e = 0, bw = 0, ew = 0;  // ew: right end of the wrapped window near x = L
    auto lower = [&](std::size_t& c, double v) {
      while (c < n && sorted_x_[c] < v) ++c;
      return c;
    };
    auto upper = [&](std::size_t& c, double v) {
      while (c < n && sorted_x_[c] <= v) ++c;
      return c;
    };
    auto sum = [&](std::size_t lo, std::size_t hi) { return hi <= lo ? Vec<D>{} : prefix_[hi] - prefix_[lo]; };
    for (std::size_t k = 0; k < n; ++k) {
      const double x = sorted_x_[k];
      const double lo = x - radius_;
      const double hi = x + radius_;
      Vec<D> acc;
      if (lo < 0.0) {
        acc = sum(lower(b, 0.0), upper(e, hi)) + sum(lower(bw, lo + L), n);
      } else if (hi >= L) {
        const std::size_t i0 = lower(b, lo), i1 = upper(e, L);
        acc = sum(i0, i1) + sum(0, upper(ew, hi - L));
      } else {
        acc = sum(lower(b, lo), upper(e, hi));
      }
      out[order_[k]] = acc;
    }
  }

  const ParticleEnsemble<D>& ens_;
  double radius_;
  NeighborMethod method_ = NeighborMethod::CellList;
  std::size_t ncell_ = 1;
  std::vector<std::size_t> cell_of_, start_;
  std::vector<std::uint32_t> members_;
  std::vector<std::uint32_t> order_;
  std::vector<double> sorted_x_;
  std::vector<Vec<D>> prefix_;
};

/// Jbar_i for one particle. Builds the search structure; use NeighborSearch
/// directly when all particles are needed.
template <int D>
Vec<D> neighbor_flux(const ParticleEnsemble<D>& ens, const SimParams<D>& params, std::size_t i) {
  return NeighborSearch<D>(ens, params.radius, params.neighbors).flux(i);
}

template <int D>
Vec<D> random_direction(CounterRng& rng) {
  if constexpr (D == 2) {
    const double t = 2.0 * M_PI * rng.uniform();
    return {std::cos(t), std::sin(t)};
  } else {
    for (;;) {
      Vec<3> v{rng.normal(), rng.normal(), rng.normal()};
      const double n = norm(v);
      if (n > 1e-12) return (1.0 / n) * v;
    }
  }
}

/// One Jacobi-style step: all neighbor sums use the positions and directions
/// at the start of the step; particle i draws from the stream (seed, i, step).
template <int D>
ParticleEnsemble<D> sde_step(const ParticleEnsemble<D>& ens, const SimParams<D>& params) {
  std::vector<Vec<D>> fluxes;
  if (!params.nu.is_off()) fluxes = NeighborSearch<D>(ens, params.radius, params.neighbors).all(params.threads);
  ParticleEnsemble<D> out = ens;
  const double amp = std::sqrt(2.0 * params.mu * params.dt);
  parallel_for(ens.size(), params.threads, [&](std::size_t i) {
    CounterRng rng(ens.seed, i, ens.step);
    const Direction<D>& w = ens.directions[i];
    Vec<D> next = w.vec();
    if (!params.nu.is_off()) {
      const double jn = norm(fluxes[i]);
      Vec<D> target;
      if (jn > 0.0)
        target = (1.0 / jn) * fluxes[i];
      else
        target = params.tie == TiePolicy::Keep ? w.vec() : random_direction<D>(rng);
      next += (params.dt * params.nu.nu(dot(w.vec(), target))) * project_tangent(w, target);
    }
    if (amp > 0.0) {
      Vec<D> xi;
      for (int k = 0; k < D; ++k) xi[k] = rng.normal();
      next += amp * project_tangent(w, xi);
    }
    if (!all_finite(next)) throw NumericalError("sde_step: non-finite direction for particle " + std::to_string(i));
    const Direction<D> nd = Direction<D>::normalized(next);
    out.directions[i] = nd;
    for (int a = 0; a < ens.dim_x; ++a)
      out.positions[i * ens.dim_x + a] = wrap_periodic(ens.x(i, a) + params.dt * nd[a], ens.length);
  });
  out.step = ens.step + 1;
  out.time = ens.time + params.dt;
  return out;
}

// ---------------------------------------------------------------------------
// Initialization and diagnostics

/// Rejection sampling from an unnormalized density f0(x, omega) <= bound.
/// Draws come from a single sequential stream derived from `seed`.
template <int D>
ParticleEnsemble<D> sample_ensemble(std::size_t n, int dim_x, double length, std::uint64_t seed,
                                    const std::function<double(const double* x, const Vec<D>& omega)>& f0,
                                    double bound) {
  if (!(bound > 0.0)) throw DomainError("sample_ensemble: density bound must be positive");
  ParticleEnsemble<D> ens;
  ens.dim_x = dim_x;
  ens.length = length;
  ens.seed = seed;
  ens.positions.resize(n * dim_x);
  ens.directions.reserve(n);
  CounterRng rng(seed, 0xffffffffffffffffULL, 0);
  std::vector<double> x(dim_x);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > 100000000) throw DomainError("sample_ensemble: rejection sampler is not accepting");
      for (int a = 0; a < dim_x; ++a) x[a] = wrap_periodic(rng.uniform() * length, length);
      const Vec<D> w = random_direction<D>(rng);
      const double v = f0(x.data(), w);
      if (v > bound * (1.0 + 1e-12)) throw DomainError("sample_ensemble: density exceeds the given bound");
      if (rng.uniform() * bound < v) {
        for (int a = 0; a < dim_x; ++a) ens.positions[i * dim_x + a] = x[a];
        ens.directions.push_back(Direction<D>::normalized(w));
        break;
      }
    }
  }
  return ens;
}

struct EnsembleSummary {
  double time = 0.0;
  double order_parameter = 0.0;  // |sum omega_i| / N
  double mean_abs_Jbar = 0.0;
  double mean_alignment = 0.0;  // mean omega_i . Obar_i
  double polar_angle = 0.0;     // direction of sum omega_i in the (e1, e2) plane
};

template <int D>
EnsembleSummary summarize(const ParticleEnsemble<D>& ens, const SimParams<D>& params) {
  EnsembleSummary s;
  s.time = ens.time;
  const std::size_t n = ens.size();
  if (n == 0) return s;
  const auto fluxes = NeighborSearch<D>(ens, params.radius, params.neighbors).all(params.threads);
  std::vector<double> comp(n), jn(n), al(n);
  Vec<D> total{};
  for (int k = 0; k < D; ++k) {
    for (std::size_t i = 0; i < n; ++i) comp[i] = ens.directions[i][k];
    total[k] = pairwise_sum(comp);
  }
  for (std::size_t i = 0; i < n; ++i) {
    jn[i] = norm(fluxes[i]);
    al[i] = jn[i] > 0.0 ? dot(ens.directions[i].vec(), fluxes[i]) / jn[i] : 1.0;
  }
  const double inv = 1.0 / static_cast<double>(n);
  s.order_parameter = norm(total) * inv;
  s.mean_abs_Jbar = pairwise_sum(jn) * inv;
  s.mean_alignment = pairwise_sum(al) * inv;
  s.polar_angle = std::atan2(total[1], total[0]);
  return s;
}

/// Largest deviation of |omega_i| from 1.
template <int D>
double max_norm_defect(const ParticleEnsemble<D>& ens) {
  double m = 0.0;
  for (const auto& d : ens.directions) m = std::fmax(m, std::fabs(norm(d.vec()) - 1.0));
  return m;
}

namespace detail {

inline std::vector<double> discrete_gaussian(std::size_t n, double width_cells) {
  std::vector<double> w(n, 0.0);
  if (!(width_cells > 0.0)) {
    w[0] = 1.0;
    return w;
  }
  double total = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    const double o = (2 * m <= n) ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(n);
    w[m] = std::exp(-0.5 * o * o / (width_cells * width_cells));
    total += w[m];
  }
  for (double& x : w) x /= total;
  return w;
}

inline void circular_smooth(std::vector<double>& v, std::size_t stride, std::size_t count, std::size_t offset,
                            const std::vector<double>& w) {
  std::vector<double> line(count), out(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) line[i] = v[offset + i * stride];
  for (std::size_t i = 0; i < count; ++i) {
    double s = 0.0;
    for (std::size_t m = 0; m < count; ++m) s += w[m] * line[(i + count - m) % count];
    out[i] = s;
  }
  for (std::size_t i = 0; i < count; ++i) v[offset + i * stride] = out[i];
}

}  // namespace detail

/// Histogram of the ensemble on (spatial cell, nearest angular node), scaled
/// so the phase-space mass is 1. bandwidth > 0 applies a periodic Gaussian of
/// that many grid cells along each spatial axis and, for D = 2, along theta.
template <int D>
DistributionField<D> empirical_density(const ParticleEnsemble<D>& ens, const SpatialGrid& sgrid,
                                       std::shared_ptr<const AngularGrid<D>> agrid, double bandwidth = 0.0) {
  if (sgrid.dim() != ens.dim_x || sgrid.length() != ens.length)
    throw GridMismatch("empirical_density: spatial grid does not match the ensemble torus");
  DistributionField<D> f(sgrid, agrid, ens.time);
  const std::size_t n = ens.size();
  if (n == 0) return f;
  const std::size_t nodes = agrid->size();
  auto& v = f.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx[2] = {0, 0};
    for (int a = 0; a < ens.dim_x; ++a)
      idx[a] = std::min(sgrid.n() - 1, static_cast<std::size_t>(ens.x(i, a) / sgrid.dx()));
    const std::size_t cell = sgrid.flat(idx[0], idx[1]);
    std::size_t node = 0;
    if constexpr (D == 2) {
      const double th = std::atan2(ens.directions[i][1], ens.directions[i][0]);
      const long k = std::lround(th / agrid->spacing());
      node = static_cast<std::size_t>(((k % static_cast<long>(nodes)) + static_cast<long>(nodes)) %
                                      static_cast<long>(nodes));
    } else {
      double best = -2.0;
      for (std::size_t j = 0; j < nodes; ++j) {
        const double c = dot(agrid->node(j).vec(), ens.directions[i].vec());
        if (c > best) {
          best = c;
          node = j;
        }
      }
    }
    v[cell * nodes + node] += 1.0;
  }
  for (std::size_t c = 0; c < sgrid.cells(); ++c)
    for (std::size_t j = 0; j < nodes; ++j)
      v[c * nodes + j] /= static_cast<double>(n) * sgrid.cell_volume() * agrid->weight(j);

  if (bandwidth > 0.0) {
    const auto wx = detail::discrete_gaussian(sgrid.n(), bandwidth);
    const std::size_t ncell = sgrid.n();
    for (std::size_t j = 0; j < nodes; ++j) {
      if (sgrid.dim() == 1) {
        detail::circular_smooth(v, nodes, ncell, j, wx);
      } else {
        for (std::size_t l = 0; l < ncell; ++l) {
          detail::circular_smooth(v, nodes * ncell, ncell, l * nodes + j, wx);
          detail::circular_smooth(v, nodes, ncell, l * ncell * nodes + j, wx);
        }
      }
    }
    if constexpr (D == 2) {
      const auto wt = detail::discrete_gaussian(nodes, bandwidth);
      for (std::size_t c = 0; c < sgrid.cells(); ++c) detail::circular_smooth(v, 1, nodes, c * nodes, wt);
    }
  }
  f.record_mass();
  return f;
}

}  // namespace vicsek
