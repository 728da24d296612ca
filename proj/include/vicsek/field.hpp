#pragma once

#include "vicsek/errors.hpp"
#include "vicsek/parallel.hpp"
#include "vicsek/sphere_calculus.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vicsek {

/// Periodic torus T^{dim} = [0, length)^dim with `n` cells per axis.
class SpatialGrid {
 public:
  SpatialGrid(int dim, std::size_t n, double length) : dim_(dim), n_(n), length_(length) {
    if (dim != 1 && dim != 2) throw DomainError("SpatialGrid: dimension must be 1 or 2");
    if (n == 0 || (n & (n - 1)) != 0) throw DomainError("SpatialGrid: cells per axis must be a power of two");
    if (!(length > 0.0)) throw DomainError("SpatialGrid: length must be positive");
  }

  int dim() const noexcept { return dim_; }
  std::size_t n() const noexcept { return n_; }
  double length() const noexcept { return length_; }
  double dx() const noexcept { return length_ / static_cast<double>(n_); }
  std::size_t cells() const noexcept { return dim_ == 1 ? n_ : n_ * n_; }
  double cell_volume() const noexcept { return dim_ == 1 ? dx() : dx() * dx(); }
  double volume() const noexcept { return dim_ == 1 ? length_ : length_ * length_; }

  /// Multi-index of a flat cell index (row-major, x fastest in the last slot).
  std::array<std::size_t, 2> index(std::size_t cell) const noexcept {
    if (dim_ == 1) return {cell, 0};
    return {cell / n_, cell % n_};
  }

  std::size_t flat(std::size_t i, std::size_t j = 0) const noexcept { return dim_ == 1 ? i : i * n_ + j; }

  /// Cell center coordinate along an axis.
  double center(std::size_t i) const noexcept { return (static_cast<double>(i) + 0.5) * dx(); }

  bool operator==(const SpatialGrid& o) const noexcept {
    return dim_ == o.dim_ && n_ == o.n_ && length_ == o.length_;
  }

 private:
  int dim_;
  std::size_t n_;
  double length_;
};

/// Discretized one-particle density f(x, omega, t): cell averages in x, point
/// values at the angular nodes. Storage is [cell][node].
template <int D>
class DistributionField {
 public:
  DistributionField(SpatialGrid space, std::shared_ptr<const AngularGrid<D>> angles, double time = 0.0)
      : space_(space), angles_(std::move(angles)), values_(space_.cells() * angles_->size(), 0.0), time_(time) {}

  DistributionField(SpatialGrid space, std::shared_ptr<const AngularGrid<D>> angles,
                    std::vector<double> values, double time)
      : space_(space), angles_(std::move(angles)), values_(std::move(values)), time_(time) {
    if (values_.size() != space_.cells() * angles_->size())
      throw GridMismatch("DistributionField: value count does not match grids");
    record_mass();
  }

  const SpatialGrid& space() const noexcept { return space_; }
  const AngularGrid<D>& angles() const noexcept { return *angles_; }
  const std::shared_ptr<const AngularGrid<D>>& angles_ptr() const noexcept { return angles_; }

  std::size_t cells() const noexcept { return space_.cells(); }
  std::size_t nodes() const noexcept { return angles_->size(); }

  double& at(std::size_t cell, std::size_t node) noexcept { return values_[cell * nodes() + node]; }
  double at(std::size_t cell, std::size_t node) const noexcept { return values_[cell * nodes() + node]; }

  std::span<double> cell(std::size_t c) noexcept { return {values_.data() + c * nodes(), nodes()}; }
  std::span<const double> cell(std::size_t c) const noexcept { return {values_.data() + c * nodes(), nodes()}; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double time() const noexcept { return time_; }
  void set_time(double t) noexcept { time_ = t; }

  /// Mass recorded by the last call to record_mass() (construction from values).
  double initial_mass() const noexcept { return initial_mass_; }
  void record_mass() { initial_mass_ = mass(); }

  /// Integral of f over the phase space D = T^dim x S^{D-1}.
  double mass() const {
    std::vector<double> per_cell(cells());
    for (std::size_t c = 0; c < cells(); ++c) per_cell[c] = integrate_sphere(cell(c), *angles_);
    return pairwise_sum(per_cell) * space_.cell_volume();
  }

  double max_value() const {
    double m = -INFINITY;
    for (double v : values_) m = std::fmax(m, v);
    return m;
  }
  double min_value() const {
    double m = INFINITY;
    for (double v : values_) m = std::fmin(m, v);
    return m;
  }

  bool compatible(const DistributionField& o) const noexcept {
    return space_ == o.space_ && angles_->same_layout(*o.angles_);
  }

 private:
  SpatialGrid space_;
  std::shared_ptr<const AngularGrid<D>> angles_;
  std::vector<double> values_;
  double time_ = 0.0;
  double initial_mass_ = 0.0;
};

template <int D>
inline void require_compatible(const DistributionField<D>& a, const DistributionField<D>& b, const char* who) {
  if (!a.compatible(b)) throw GridMismatch(std::string(who) + ": fields live on different grids");
}

}  // namespace vicsek
