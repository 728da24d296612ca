#pragma once

// Projection algebra on S^{d-1} and the discrete angular operators.
//
// For d = 2 the circle is sampled uniformly, theta_j = 2 pi j / N, and the
// operators are Fourier spectral: the gradient of f is (d f / d theta) tau with
// tau = (-sin theta, cos theta), the divergence of g tau is d g / d theta, and
// the Laplace–Beltrami operator multiplies mode k by -k^2. For d = 3 only
// quadrature is provided (Gauss–Legendre in cos(theta) times a uniform azimuth).

#include "vicsek/errors.hpp"
#include "vicsek/fft.hpp"
#include "vicsek/linalg.hpp"
#include "vicsek/quadrature.hpp"

#include <cmath>
#include <complex>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace vicsek {

inline constexpr double kUnitTolerance = 1e-12;
inline constexpr double kTangentTolerance = 1e-10;

/// A unit vector in R^D.
template <int D>
class Direction {
 public:
  static_assert(D == 2 || D == 3);

  /// Validates |v| = 1 within `tol`.
  static Direction checked(const Vec<D>& v, double tol = kUnitTolerance) {
    const double n = norm(v);
    if (!std::isfinite(n) || std::fabs(n - 1.0) > tol)
      throw DomainError("Direction: vector has norm " + std::to_string(n) + ", expected 1");
    return Direction(v);
  }

  static Direction normalized(const Vec<D>& v) {
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("Direction: cannot normalize a zero vector");
    return Direction((1.0 / n) * v);
  }

  /// Circle direction for angle theta (D == 2 only).
  static Direction from_angle(double theta)
    requires(D == 2)
  {
    return Direction(Vec<2>{std::cos(theta), std::sin(theta)});
  }

  /// Sphere direction from polar angle (from e_z) and azimuth (D == 3 only).
  static Direction from_spherical(double polar, double azimuth)
    requires(D == 3)
  {
    const double s = std::sin(polar);
    return Direction(Vec<3>{s * std::cos(azimuth), s * std::sin(azimuth), std::cos(polar)});
  }

  const Vec<D>& vec() const noexcept { return v_; }
  double operator[](int k) const noexcept { return v_[k]; }
  operator const Vec<D>&() const noexcept { return v_; }

 private:
  explicit Direction(const Vec<D>& v) : v_(v) {}
  Vec<D> v_;
};

/// P_{omega-perp} v = v - (omega . v) omega.
template <int D>
inline Vec<D> project_tangent(const Direction<D>& omega, const std::type_identity_t<Vec<D>>& v) {
  const double c = dot(omega.vec(), v);
  return v - c * omega.vec();
}

/// Same as above for a raw vector; rejects non-unit omega.
template <std::size_t N>
inline std::array<double, N> project_tangent(const std::array<double, N>& omega, const std::array<double, N>& v) {
  return project_tangent(Direction<static_cast<int>(N)>::checked(omega), v);
}

namespace detail {

/// Fourier machinery for a uniform circle grid.
class SpectralCircle {
 public:
  explicit SpectralCircle(std::size_t n) : n_(n), fft_(n) {
    const std::size_t m = n / 2 + 1;
    deriv_.resize(m);
    lap_.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double kk = static_cast<double>(k);
      // The Nyquist mode has no odd partner, so its first derivative is zeroed;
      // this keeps the differentiation matrix real and skew-symmetric.
      const bool nyquist = (n % 2 == 0) && (k == n / 2);
      deriv_[k] = nyquist ? std::complex<double>(0.0, 0.0) : std::complex<double>(0.0, kk);
      lap_[k] = -kk * kk;
    }
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t modes() const noexcept { return n_ / 2 + 1; }
  const RealFft& fft() const noexcept { return fft_; }
  const std::vector<std::complex<double>>& derivative_symbol() const noexcept { return deriv_; }
  const std::vector<double>& laplacian_symbol() const noexcept { return lap_; }

  void derivative(std::span<const double> in, std::span<double> out) const {
    std::vector<std::complex<double>> c(modes());
    fft_.forward(in, c);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] *= deriv_[k];
    fft_.inverse(c, out);
  }

  void second_derivative(std::span<const double> in, std::span<double> out) const {
    std::vector<std::complex<double>> c(modes());
    fft_.forward(in, c);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] *= lap_[k];
    fft_.inverse(c, out);
  }

 private:
  std::size_t n_;
  RealFft fft_;
  std::vector<std::complex<double>> deriv_;
  std::vector<double> lap_;
};

}  // namespace detail

/// Nodes and positive weights discretizing the integral over S^{D-1}.
template <int D>
class AngularGrid {
 public:
  static_assert(D == 2 || D == 3);

  /// Uniform circle grid theta_j = 2 pi j / n with weights 2 pi / n.
  static AngularGrid uniform(std::size_t n)
    requires(D == 2)
  {
    if (n < 4) throw DomainError("AngularGrid: need at least 4 nodes on the circle");
    AngularGrid g;
    const double dtheta = 2.0 * M_PI / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double th = dtheta * static_cast<double>(j);
      g.nodes_.push_back(Direction<2>::from_angle(th));
      g.weights_.push_back(dtheta);
      g.theta_.push_back(th);
      g.tangent_.push_back(Vec<2>{-std::sin(th), std::cos(th)});
    }
    g.spectral_ = std::make_shared<const detail::SpectralCircle>(n);
    return g;
  }

  /// Gauss–Legendre in u = cos(polar) tensor a uniform azimuth.
  static AngularGrid gauss_azimuthal(int n_polar, int n_azimuth)
    requires(D == 3)
  {
    if (n_polar < 2 || n_azimuth < 3) throw DomainError("AngularGrid: sphere grid too coarse");
    AngularGrid g;
    const QuadratureRule gl = gauss_legendre(n_polar);
    const double dphi = 2.0 * M_PI / n_azimuth;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double u = gl.nodes[i];
      const double s = std::sqrt(std::fmax(0.0, 1.0 - u * u));
      for (int j = 0; j < n_azimuth; ++j) {
        const double phi = dphi * j;
        g.nodes_.push_back(Direction<3>::normalized(Vec<3>{s * std::cos(phi), s * std::sin(phi), u}));
        g.weights_.push_back(gl.weights[i] * dphi);
      }
    }
    return g;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Direction<D>& node(std::size_t j) const noexcept { return nodes_[j]; }
  double weight(std::size_t j) const noexcept { return weights_[j]; }
  const std::vector<Direction<D>>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  double theta(std::size_t j) const noexcept
    requires(D == 2)
  {
    return theta_[j];
  }
  /// Unit tangent (-sin theta, cos theta) at node j.
  const Vec<2>& tangent(std::size_t j) const noexcept
    requires(D == 2)
  {
    return tangent_[j];
  }
  double spacing() const noexcept
    requires(D == 2)
  {
    return 2.0 * M_PI / static_cast<double>(nodes_.size());
  }
  const detail::SpectralCircle& spectral() const noexcept
    requires(D == 2)
  {
    return *spectral_;
  }

  bool same_layout(const AngularGrid& other) const noexcept {
    return this == &other || (size() == other.size() && weights_ == other.weights_);
  }

 private:
  AngularGrid() = default;

  std::vector<Direction<D>> nodes_;
  std::vector<double> weights_;
  std::vector<double> theta_;
  std::vector<Vec<2>> tangent_;
  std::shared_ptr<const detail::SpectralCircle> spectral_;
};

/// Per-node ambient vectors, each orthogonal to its node direction.
template <int D>
class TangentField {
 public:
  /// Projects every vector onto the tangent plane of its node.
  static TangentField project(const AngularGrid<D>& grid, std::vector<Vec<D>> raw) {
    check_size(grid, raw);
    for (std::size_t j = 0; j < raw.size(); ++j) raw[j] = project_tangent(grid.node(j), raw[j]);
    return TangentField(std::move(raw));
  }

  /// Accepts vectors that are already tangent within `tol`, rejects otherwise.
  static TangentField checked(const AngularGrid<D>& grid, std::vector<Vec<D>> raw,
                              double tol = kTangentTolerance) {
    check_size(grid, raw);
    for (std::size_t j = 0; j < raw.size(); ++j) {
      const double n = dot(grid.node(j).vec(), raw[j]);
      if (!(std::fabs(n) <= tol * std::fmax(1.0, max_abs(raw[j]))))
        throw DomainError("TangentField: value at node " + std::to_string(j) +
                          " has normal component " + std::to_string(n));
    }
    return TangentField(std::move(raw));
  }

  static TangentField zero(const AngularGrid<D>& grid) {
    return TangentField(std::vector<Vec<D>>(grid.size(), Vec<D>{}));
  }

  std::size_t size() const noexcept { return values_.size(); }
  const Vec<D>& operator[](std::size_t j) const noexcept { return values_[j]; }
  const std::vector<Vec<D>>& values() const noexcept { return values_; }

 private:
  explicit TangentField(std::vector<Vec<D>> v) : values_(std::move(v)) {}

  static void check_size(const AngularGrid<D>& grid, const std::vector<Vec<D>>& raw) {
    if (raw.size() != grid.size()) throw GridMismatch("TangentField: size does not match grid");
  }

  std::vector<Vec<D>> values_;
};

namespace detail {

inline void require_finite(std::span<const double> f, const char* who) {
  for (std::size_t j = 0; j < f.size(); ++j)
    if (!std::isfinite(f[j]))
      throw DomainError(std::string(who) + ": non-finite value at node " + std::to_string(j));
}

inline void require_size(const AngularGrid<2>& grid, std::size_t n, const char* who) {
  if (n != grid.size()) throw GridMismatch(std::string(who) + ": field size does not match grid");
}

}  // namespace detail

/// Spectral gradient on S^1: (d f / d theta) tau.
inline TangentField<2> angular_gradient(const AngularGrid<2>& grid, std::span<const double> f) {
  detail::require_size(grid, f.size(), "angular_gradient");
  detail::require_finite(f, "angular_gradient");
  std::vector<double> df(f.size());
  grid.spectral().derivative(f, df);
  std::vector<Vec<2>> v(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) v[j] = df[j] * grid.tangent(j);
  return TangentField<2>::project(grid, std::move(v));
}

/// Spectral divergence on S^1 of a tangent field g tau: d g / d theta.
inline std::vector<double> angular_divergence(const AngularGrid<2>& grid, const TangentField<2>& field) {
  detail::require_size(grid, field.size(), "angular_divergence");
  std::vector<double> g(field.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = dot(field[j], grid.tangent(j));
  detail::require_finite(g, "angular_divergence");
  std::vector<double> out(g.size());
  grid.spectral().derivative(g, out);
  return out;
}

/// Divergence of raw ambient vectors; rejects input that is not tangent.
inline std::vector<double> angular_divergence(const AngularGrid<2>& grid, std::vector<Vec<2>> raw,
                                              double tol = kTangentTolerance) {
  return angular_divergence(grid, TangentField<2>::checked(grid, std::move(raw), tol));
}

/// Spectral Laplace–Beltrami on S^1 (second theta derivative).
inline std::vector<double> laplace_beltrami(const AngularGrid<2>& grid, std::span<const double> f) {
  detail::require_size(grid, f.size(), "laplace_beltrami");
  detail::require_finite(f, "laplace_beltrami");
  std::vector<double> out(f.size());
  grid.spectral().second_derivative(f, out);
  return out;
}

/// Sum_j w_j f_j.
template <int D>
inline double integrate_sphere(std::span<const double> f, const AngularGrid<D>& grid) {
  if (f.size() != grid.size()) throw GridMismatch("integrate_sphere: field size does not match grid");
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) s += grid.weight(j) * f[j];
  return s;
}

}  // namespace vicsek
