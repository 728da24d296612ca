#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace vicsek {

/// Ambient vector in R^D. Plain aggregate so it stays trivially copyable.
template <int D>
using Vec = std::array<double, D>;

template <std::size_t D>
constexpr std::array<double, D> operator+(const std::array<double, D>& a, const std::array<double, D>& b) {
  std::array<double, D> r{};
  for (std::size_t k = 0; k < D; ++k) r[k] = a[k] + b[k];
  return r;
}

template <std::size_t D>
constexpr std::array<double, D> operator-(const std::array<double, D>& a, const std::array<double, D>& b) {
  std::array<double, D> r{};
  for (std::size_t k = 0; k < D; ++k) r[k] = a[k] - b[k];
  return r;
}

template <std::size_t D>
constexpr std::array<double, D> operator*(double s, const std::array<double, D>& a) {
  std::array<double, D> r{};
  for (std::size_t k = 0; k < D; ++k) r[k] = s * a[k];
  return r;
}

template <std::size_t D>
constexpr std::array<double, D>& operator+=(std::array<double, D>& a, const std::array<double, D>& b) {
  for (std::size_t k = 0; k < D; ++k) a[k] += b[k];
  return a;
}

template <std::size_t D>
constexpr double dot(const std::array<double, D>& a, const std::array<double, D>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < D; ++k) s += a[k] * b[k];
  return s;
}

template <std::size_t D>
inline double norm(const std::array<double, D>& a) {
  return std::sqrt(dot(a, a));
}

template <std::size_t D>
inline double max_abs(const std::array<double, D>& a) {
  double m = 0.0;
  for (std::size_t k = 0; k < D; ++k) m = std::fmax(m, std::fabs(a[k]));
  return m;
}

template <std::size_t D>
inline bool all_finite(const std::array<double, D>& a) {
  for (std::size_t k = 0; k < D; ++k)
    if (!std::isfinite(a[k])) return false;
  return true;
}

/// Surface measure |S^{D-1}|.
template <int D>
constexpr double sphere_area() {
  static_assert(D == 2 || D == 3, "only S^1 and S^2 are supported");
  if constexpr (D == 2)
    return 2.0 * M_PI;
  else
    return 4.0 * M_PI;
}

}  // namespace vicsek
