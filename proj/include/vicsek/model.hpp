#pragma once

// Constitutive pieces of the kinetic alignment model: the turning frequency
// nu and its antiderivative sigma, the observation kernel K, the flux J(f),
// the regularized director J / (|J| + eps), the expanded force coefficients,
// and the Fisher–von Mises equilibria together with the order parameter c(mu).

#include "vicsek/errors.hpp"
#include "vicsek/fft.hpp"
#include "vicsek/field.hpp"
#include "vicsek/linalg.hpp"
#include "vicsek/quadrature.hpp"
#include "vicsek/sphere_calculus.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

namespace vicsek {

// ---------------------------------------------------------------------------
// Interaction frequency

/// nu(c) for c = omega . Omega in [-1, 1], with derivatives and the
/// antiderivative sigma normalized so that sigma(0) = 0.
class FrequencySpec {
 public:
  enum class Family { Constant, Affine, Tabulated };

  /// nu = nu0. nu0 = 0 is accepted and switches the alignment force off.
  static FrequencySpec constant(double nu0) {
    if (!(nu0 >= 0.0) || !std::isfinite(nu0)) throw DomainError("FrequencySpec: constant nu must be >= 0");
    FrequencySpec s(Family::Constant);
    s.a_ = nu0;
    return s;
  }

  /// nu = a + b c with a > |b| so that nu > 0 on [-1, 1].
  static FrequencySpec affine(double a, double b) {
    if (!(a > std::fabs(b)) || !std::isfinite(a) || !std::isfinite(b))
      throw DomainError("FrequencySpec: affine nu needs a > |b|");
    FrequencySpec s(Family::Affine);
    s.a_ = a;
    s.b_ = b;
    return s;
  }

  /// Cubic B-spline through samples of nu at uniformly spaced c in [-1, 1].
  static FrequencySpec tabulated(std::vector<double> samples) {
    if (samples.size() < 5) throw DomainError("FrequencySpec: tabulated nu needs at least 5 samples");
    for (double v : samples)
      if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("FrequencySpec: tabulated nu must be positive");
    FrequencySpec s(Family::Tabulated);
    const double h = 2.0 / static_cast<double>(samples.size() - 1);
    // Third-order one-sided differences for the end slopes; Boost's own estimate is first order.
    const auto& y = samples;
    const std::size_t n = y.size();
    const double left = (-11.0 * y[0] + 18.0 * y[1] - 9.0 * y[2] + 2.0 * y[3]) / (6.0 * h);
    const double right = (11.0 * y[n - 1] - 18.0 * y[n - 2] + 9.0 * y[n - 3] - 2.0 * y[n - 4]) / (6.0 * h);
    s.spline_ = std::make_shared<const Spline>(samples.begin(), samples.end(), -1.0, h, left, right);
    s.samples_ = std::move(samples);
    for (int i = 0; i <= 2000; ++i) {
      const double c = -1.0 + i * 1e-3;
      if (!(s.nu(c) > 0.0)) throw DomainError("FrequencySpec: tabulated nu interpolant is not positive");
    }
    s.build_sigma_table();
    return s;
  }

  Family family() const noexcept { return family_; }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  const std::vector<double>& samples() const noexcept { return samples_; }

  /// True when nu vanishes identically.
  bool is_off() const noexcept { return family_ == Family::Constant && a_ == 0.0; }

  double nu(double c) const {
    c = clamp_arg(c);
    switch (family_) {
      case Family::Constant: return a_;
      case Family::Affine: return a_ + b_ * c;
      case Family::Tabulated: return (*spline_)(c);
    }
    return 0.0;
  }

  double dnu(double c) const {
    c = clamp_arg(c);
    switch (family_) {
      case Family::Constant: return 0.0;
      case Family::Affine: return b_;
      case Family::Tabulated: return spline_->prime(c);
    }
    return 0.0;
  }

  double d2nu(double c) const {
    c = clamp_arg(c);
    if (family_ == Family::Tabulated) return spline_->double_prime(c);
    return 0.0;
  }

  /// Antiderivative with sigma(0) = 0. Tabulated nu uses a composite
  /// Gauss–Legendre rule from 0 to c.
  double sigma(double c) const {
    c = clamp_arg(c);
    switch (family_) {
      case Family::Constant: return a_ * c;
      case Family::Affine: return a_ * c + 0.5 * b_ * c * c;
      case Family::Tabulated: return tabulated_sigma(c);
    }
    return 0.0;
  }

  /// sup over [-1, 1] of |nu|.
  double sup_nu() const {
    switch (family_) {
      case Family::Constant: return a_;
      case Family::Affine: return a_ + std::fabs(b_);
      case Family::Tabulated: return sampled_sup([this](double c) { return std::fabs(nu(c)); });
    }
    return 0.0;
  }

  /// sup over [-1, 1] of |nu'|.
  double sup_dnu() const {
    switch (family_) {
      case Family::Constant: return 0.0;
      case Family::Affine: return std::fabs(b_);
      case Family::Tabulated: return sampled_sup([this](double c) { return std::fabs(dnu(c)); });
    }
    return 0.0;
  }

  std::string describe() const {
    switch (family_) {
      case Family::Constant: return "constant(" + std::to_string(a_) + ")";
      case Family::Affine: return "affine(" + std::to_string(a_) + "," + std::to_string(b_) + ")";
      case Family::Tabulated: return "tabulated(" + std::to_string(samples_.size()) + " samples)";
    }
    return "?";
  }

 private:
  using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

  explicit FrequencySpec(Family f) : family_(f) {}

  static double clamp_arg(double c) {
    // omega . Omega of unit vectors may overshoot by a few ulps.
    constexpr double slack = 1e-12;
    if (!(c >= -1.0 - slack && c <= 1.0 + slack))
      throw DomainError("FrequencySpec: argument " + std::to_string(c) + " outside [-1, 1]");
    return std::clamp(c, -1.0, 1.0);
  }

  template <class F>
  static double sampled_sup(F&& g) {
    double m = 0.0;
    for (int i = 0; i <= 4000; ++i) m = std::fmax(m, g(-1.0 + i * 5e-4));
    return m;
  }

  // sigma at the table knots, accumulated outward from c = 0.
  void build_sigma_table() {
    const std::size_t n = samples_.size();
    knot_h_ = 2.0 / static_cast<double>(n - 1);
    knot_sigma_.assign(n, 0.0);
    std::vector<double> knots(n);
    for (std::size_t i = 0; i < n; ++i) knots[i] = -1.0 + knot_h_ * static_cast<double>(i);
    // Locate the interval containing 0 and integrate from 0 to each knot.
    for (std::size_t i = 0; i < n; ++i) knot_sigma_[i] = integrate_nu(0.0, knots[i]);
  }

  double integrate_nu(double from, double to) const {
    if (from == to) return 0.0;
    const double sign = to > from ? 1.0 : -1.0;
    double lo = std::fmin(from, to);
    const double hi = std::fmax(from, to);
    static const QuadratureRule rule = gauss_legendre(4);
    double total = 0.0;
    while (lo < hi) {
      // Panels aligned with spline knots so each piece is a single cubic.
      const double k = std::floor((lo + 1.0) / knot_h_ + 1e-12);
      double next = -1.0 + (k + 1.0) * knot_h_;
      if (next <= lo) next = lo + knot_h_;
      next = std::fmin(next, hi);
      const double half = 0.5 * (next - lo);
      const double mid = 0.5 * (next + lo);
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) total += half * rule.weights[q] * (*spline_)(mid + half * rule.nodes[q]);
      lo = next;
    }
    return sign * total;
  }

  double tabulated_sigma(double c) const {
    // Nearest knot toward zero, then the remaining partial panel.
    const double t = (c + 1.0) / knot_h_;
    std::size_t i0 = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, static_cast<double>(samples_.size() - 1)));
    const double k0 = -1.0 + knot_h_ * static_cast<double>(i0);
    return knot_sigma_[i0] + integrate_nu(k0, c);
  }

  Family family_;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<double> samples_;
  std::shared_ptr<const Spline> spline_;
  double knot_h_ = 0.0;
  std::vector<double> knot_sigma_;
};

/// Antiderivative of nu evaluated at c; see FrequencySpec::sigma.
inline double sigma(const FrequencySpec& nu, double c) { return nu.sigma(c); }

// ---------------------------------------------------------------------------
// Observation kernel

/// Isotropic periodic kernel discretized as cell-integrated weights
/// w_m = int_{cell m} K(|z|) dz, so that J_i = sum_j w_{i-j} m_j. The
/// Gaussian and top-hat families have unit L1 norm.
class KernelSpec {
 public:
  enum class Family { Dirac, Gaussian, TopHat };

  static KernelSpec dirac(const SpatialGrid& grid) {
    KernelSpec k(Family::Dirac, grid, 0.0);
    k.weights_.assign(grid.cells(), 0.0);
    k.weights_[0] = 1.0;
    return k;
  }

  /// Periodized Gaussian with standard deviation `width`.
  static KernelSpec gaussian(const SpatialGrid& grid, double width) {
    if (!(width > 0.0)) throw DomainError("KernelSpec: gaussian width must be positive");
    KernelSpec k(Family::Gaussian, grid, width);
    const std::vector<double> w1 = gaussian_weights_1d(grid, width);
    k.weights_ = separable(grid, w1);
    k.build_transform();
    return k;
  }

  /// Periodized indicator of the ball of radius `radius`, normalized to unit mass.
  static KernelSpec tophat(const SpatialGrid& grid, double radius) {
    if (!(radius > 0.0)) throw DomainError("KernelSpec: top-hat radius must be positive");
    KernelSpec k(Family::TopHat, grid, radius);
    if (grid.dim() == 1) {
      k.weights_ = tophat_weights_1d(grid, radius);
    } else {
      k.weights_ = tophat_weights_2d(grid, radius);
    }
    k.build_transform();
    return k;
  }

  Family family() const noexcept { return family_; }
  double width() const noexcept { return width_; }
  const SpatialGrid& grid() const noexcept { return grid_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  double l1_norm() const {
    double s = 0.0;
    for (double w : weights_) s += std::fabs(w);
    return s;
  }

  /// Periodic discrete convolution out = w * in.
  void convolve(std::span<const double> in, std::span<double> out) const {
    if (in.size() != grid_.cells() || out.size() != grid_.cells())
      throw GridMismatch("KernelSpec: field size does not match kernel grid");
    if (family_ == Family::Dirac) {
      std::copy(in.begin(), in.end(), out.begin());
      return;
    }
    std::vector<std::complex<double>> c(fft_->complex_size());
    fft_->forward(in, c);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] *= transform_[k];
    fft_->inverse(c, out);
  }

  std::string describe() const {
    switch (family_) {
      case Family::Dirac: return "dirac";
      case Family::Gaussian: return "gaussian(" + std::to_string(width_) + ")";
      case Family::TopHat: return "tophat(" + std::to_string(width_) + ")";
    }
    return "?";
  }

 private:
  KernelSpec(Family f, const SpatialGrid& g, double w) : family_(f), grid_(g), width_(w) {}

  void build_transform() {
    std::vector<std::size_t> shape = grid_.dim() == 1 ? std::vector<std::size_t>{grid_.n()}
                                                      : std::vector<std::size_t>{grid_.n(), grid_.n()};
    fft_ = std::make_shared<const RealFft>(shape);
    transform_.resize(fft_->complex_size());
    fft_->forward(weights_, transform_);
  }

  // Signed offset of periodic index m in [0, n): m or m - n, whichever is nearer 0.
  static double offset(std::size_t m, std::size_t n) {
    const double mm = static_cast<double>(m);
    return (2 * m <= n) ? mm : mm - static_cast<double>(n);
  }

  static std::vector<double> gaussian_weights_1d(const SpatialGrid& g, double s) {
    const std::size_t n = g.n();
    const double dx = g.dx();
    const double L = g.length();
    const int images = static_cast<int>(std::ceil(8.0 * s / L)) + 1;
    std::vector<double> w(n, 0.0);
    const double inv = 1.0 / (std::sqrt(2.0) * s);
    for (std::size_t m = 0; m < n; ++m) {
      const double c = offset(m, n) * dx;
      double acc = 0.0;
      for (int i = -images; i <= images; ++i) {
        const double lo = c - 0.5 * dx + i * L;
        const double hi = c + 0.5 * dx + i * L;
        acc += 0.5 * (std::erf(hi * inv) - std::erf(lo * inv));
      }
      w[m] = acc;
    }
    return w;
  }

  static std::vector<double> tophat_weights_1d(const SpatialGrid& g, double r) {
    const std::size_t n = g.n();
    const double dx = g.dx();
    const double L = g.length();
    const int images = static_cast<int>(std::ceil(r / L)) + 1;
    std::vector<double> w(n, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
      const double c = offset(m, n) * dx;
      double acc = 0.0;
      for (int i = -images; i <= images; ++i) {
        const double lo = std::fmax(c - 0.5 * dx + i * L, -r);
        const double hi = std::fmin(c + 0.5 * dx + i * L, r);
        if (hi > lo) acc += hi - lo;
      }
      w[m] = acc / (2.0 * r);
    }
    return w;
  }

  static std::vector<double> tophat_weights_2d(const SpatialGrid& g, double r) {
    const std::size_t n = g.n();
    const double dx = g.dx();
    const double L = g.length();
    const int images = static_cast<int>(std::ceil(r / L)) + 1;
    constexpr int sub = 16;
    std::vector<double> w(n * n, 0.0);
    double total = 0.0;
    for (std::size_t m1 = 0; m1 < n; ++m1) {
      for (std::size_t m2 = 0; m2 < n; ++m2) {
        const double c1 = offset(m1, n) * dx;
        const double c2 = offset(m2, n) * dx;
        double acc = 0.0;
        for (int i1 = -images; i1 <= images; ++i1)
          for (int i2 = -images; i2 <= images; ++i2)
            for (int a = 0; a < sub; ++a)
              for (int b = 0; b < sub; ++b) {
                const double z1 = c1 + i1 * L + ((a + 0.5) / sub - 0.5) * dx;
                const double z2 = c2 + i2 * L + ((b + 0.5) / sub - 0.5) * dx;
                if (z1 * z1 + z2 * z2 <= r * r) acc += 1.0;
              }
        w[m1 * n + m2] = acc;
        total += acc;
      }
    }
    if (!(total > 0.0)) throw DomainError("KernelSpec: top-hat radius is below grid resolution");
    for (double& x : w) x /= total;
    return w;
  }

  static std::vector<double> separable(const SpatialGrid& g, const std::vector<double>& w1) {
    if (g.dim() == 1) return w1;
    const std::size_t n = g.n();
    std::vector<double> w(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) w[i * n + j] = w1[i] * w1[j];
    return w;
  }

  Family family_;
  SpatialGrid grid_;
  double width_;
  std::vector<double> weights_;
  std::shared_ptr<const RealFft> fft_;
  std::vector<std::complex<double>> transform_;
};

// ---------------------------------------------------------------------------
// Moments

/// Per-cell flux J(x), optionally with the regularized director.
template <int D>
struct MomentField {
  std::vector<Vec<D>> flux;
  std::vector<Vec<D>> director;  // empty until director_eps() fills it
  std::vector<double> speed;     // |J| per cell
  double min_speed = 0.0;
  std::size_t argmin = 0;
  double eps = std::numeric_limits<double>::quiet_NaN();

  std::size_t cells() const noexcept { return flux.size(); }
  bool has_director() const noexcept { return director.size() == flux.size(); }

  /// Membership in the class A_alpha: |J| > alpha in every cell.
  bool admissible(double alpha) const noexcept { return min_speed > alpha; }

  static MomentField zero(std::size_t cells) {
    MomentField m;
    m.flux.assign(cells, Vec<D>{});
    m.director.assign(cells, Vec<D>{});
    m.speed.assign(cells, 0.0);
    m.eps = 0.0;
    return m;
  }

  /// A field holding the same frozen director in every cell.
  static MomentField uniform_director(std::size_t cells, const Vec<D>& omega) {
    MomentField m = zero(cells);
    for (auto& d : m.director) d = omega;
    return m;
  }
};

inline constexpr double kFluxRoundoff = 1e-13;

/// J(f)(x) = (K *_x m)(x) with m(x) = int omega f(x, omega) d omega.
template <int D>
MomentField<D> flux_J(const DistributionField<D>& f, const KernelSpec& kernel) {
  if (!(kernel.grid() == f.space())) throw GridMismatch("flux_J: kernel and field use different spatial grids");
  const std::size_t nc = f.cells();
  const auto& ag = f.angles();
  std::array<std::vector<double>, D> local;
  for (auto& v : local) v.assign(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    auto fc = f.cell(c);
    Vec<D> acc{};
    double mass = 0.0;
    for (std::size_t j = 0; j < fc.size(); ++j) {
      acc += (ag.weight(j) * fc[j]) * ag.node(j).vec();
      mass += ag.weight(j) * std::fabs(fc[j]);
    }
    // A first moment at rounding level is the zero moment of omega-uniform data;
    // J / eps would otherwise amplify the rounding noise.
    if (norm(acc) <= kFluxRoundoff * mass) acc = Vec<D>{};
    for (int k = 0; k < D; ++k) local[k][c] = acc[k];
  }
  MomentField<D> out;
  out.flux.assign(nc, Vec<D>{});
  std::vector<double> conv(nc);
  for (int k = 0; k < D; ++k) {
    kernel.convolve(local[k], conv);
    for (std::size_t c = 0; c < nc; ++c) out.flux[c][k] = conv[c];
  }
  out.speed.resize(nc);
  out.min_speed = INFINITY;
  for (std::size_t c = 0; c < nc; ++c) {
    out.speed[c] = norm(out.flux[c]);
    if (out.speed[c] < out.min_speed) {
      out.min_speed = out.speed[c];
      out.argmin = c;
    }
  }
  return out;
}

/// Fills director = J / (|J| + eps). eps = 0 requires |J| > 0 everywhere.
template <int D>
MomentField<D> director_eps(MomentField<D> m, double eps) {
  if (!(eps >= 0.0)) throw DomainError("director_eps: eps must be >= 0");
  m.director.resize(m.flux.size());
  for (std::size_t c = 0; c < m.flux.size(); ++c) {
    const double s = m.speed[c];
    if (eps == 0.0 && !(s > 0.0))
      throw AdmissibilityError("director_eps: |J| = 0 in cell " + std::to_string(c) + " with eps = 0", c);
    m.director[c] = (1.0 / (s + eps)) * m.flux[c];
  }
  m.eps = eps;
  return m;
}

// ---------------------------------------------------------------------------
// Force coefficients of the expanded linear equation
//   d_t f + omega . grad_x f + psi1 . grad_omega f + (psi2 + psi3) f = mu Lap_omega f

template <int D>
struct ForceCoefficients {
  TangentField<D> psi1;
  std::vector<double> psi2;
  std::vector<double> psi3;
};

/// psi1 = nu(w.O) P O, psi2 = nu'(w.O) |P O|^2, psi3 = -(D-1) nu(w.O) w.O.
/// Requires |Omega| <= 1.
template <int D>
ForceCoefficients<D> force_coefficients(const std::type_identity_t<Vec<D>>& omega_bar, const FrequencySpec& nu, const AngularGrid<D>& grid) {
  const std::size_t n = grid.size();
  std::vector<Vec<D>> p1(n);
  std::vector<double> p2(n), p3(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& w = grid.node(j);
    const double c = dot(w.vec(), omega_bar);
    const Vec<D> proj = project_tangent(w, omega_bar);
    const double v = nu.nu(c);
    p1[j] = v * proj;
    p2[j] = nu.dnu(c) * dot(proj, proj);
    p3[j] = -(D - 1) * v * c;
  }
  return {TangentField<D>::project(grid, std::move(p1)), std::move(p2), std::move(p3)};
}

// ---------------------------------------------------------------------------
// Fisher–von Mises equilibria

template <int D>
struct FvMState {
  double rho = 1.0;
  Direction<D> director;
  double mu = 1.0;
};

/// rho exp(sigma(omega . Omega) / mu) / Z with Z from quadrature on `grid`.
template <int D>
class FisherVonMises {
 public:
  FisherVonMises(const FvMState<D>& state, FrequencySpec nu, const AngularGrid<D>& grid)
      : state_(state), nu_(std::move(nu)) {
    if (!(state.mu > 0.0)) throw DomainError("FisherVonMises: mu must be positive");
    if (!(state.rho > 0.0)) throw DomainError("FisherVonMises: rho must be positive");
    peak_ = nu_.sigma(1.0);
    std::vector<double> e(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) e[j] = unnormalized(grid.node(j).vec());
    z_ = integrate_sphere(e, grid);
  }

  double density(const Vec<D>& omega) const { return state_.rho * unnormalized(omega) / z_; }

  std::vector<double> on_grid(const AngularGrid<D>& grid) const {
    std::vector<double> out(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) out[j] = density(grid.node(j).vec());
    return out;
  }

  /// Normalization with the factor exp(sigma(1)/mu) removed.
  double scaled_normalization() const noexcept { return z_; }
  const FvMState<D>& state() const noexcept { return state_; }

 private:
  double unnormalized(const Vec<D>& omega) const {
    const double c = dot(omega, state_.director.vec());
    return std::exp((nu_.sigma(c) - peak_) / state_.mu);
  }

  FvMState<D> state_;
  FrequencySpec nu_;
  double peak_ = 0.0;
  double z_ = 1.0;
};

template <int D>
double fvm_density(const FvMState<D>& state, const std::type_identity_t<Vec<D>>& omega, const FrequencySpec& nu, const AngularGrid<D>& grid) {
  return FisherVonMises<D>(state, nu, grid).density(omega);
}

/// Order parameter on S^2:
///   c(mu) = int u exp(sigma(u)/mu) du / int exp(sigma(u)/mu) du over [-1, 1],
/// by 64-node Gauss–Legendre panels graded toward the peak at u = 1.
inline double c_of_mu(double mu, const FrequencySpec& nu) {
  if (!(mu > 0.0)) throw DomainError("c_of_mu: mu must be positive");
  const double slope = std::fmax(nu.nu(1.0), 1e-300);
  const double width = std::fmin(2.0, mu / slope);
  std::vector<double> breaks{1.0};
  for (double h = width; 1.0 - h > -1.0; h *= 2.0) breaks.push_back(1.0 - h);
  breaks.push_back(-1.0);
  std::reverse(breaks.begin(), breaks.end());
  const QuadratureRule rule = composite_gauss_legendre(breaks, 64);
  const double peak = nu.sigma(1.0);
  double num = 0.0, den = 0.0;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double u = rule.nodes[q];
    const double e = rule.weights[q] * std::exp((nu.sigma(u) - peak) / mu);
    num += u * e;
    den += e;
  }
  return num / den;
}

/// Circle analogue of c(mu): int cos(t) exp(sigma(cos t)/mu) dt / int exp(sigma(cos t)/mu) dt,
/// by the periodic trapezoid rule refined until it stops changing.
inline double c_of_mu_circle(double mu, const FrequencySpec& nu) {
  if (!(mu > 0.0)) throw DomainError("c_of_mu_circle: mu must be positive");
  const double peak = nu.sigma(1.0);
  auto ratio = [&](std::size_t n) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double t = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(n);
      const double c = std::cos(t);
      const double e = std::exp((nu.sigma(c) - peak) / mu);
      num += c * e;
      den += e;
    }
    return num / den;
  };
  std::size_t n = 64;
  double prev = ratio(n);
  while (n < (std::size_t{1} << 22)) {
    n *= 2;
    const double cur = ratio(n);
    if (std::fabs(cur - prev) <= 1e-15 * std::fmax(1.0, std::fabs(cur))) return cur;
    prev = cur;
  }
  return prev;
}

}  // namespace vicsek
