#pragma once

// Time stepping for f on T^{d_x} x S^1.
//
// Each step solves the nonlinear eps-regularized equation by Picard iteration
// on frozen-director linear problems. A linear step is Strang split: half a
// step of free transport, one full step of
//   d_t f + psi1 . grad_omega f + (psi2 + psi3) f = mu Lap_omega f
// per spatial cell, then half a step of transport. The angular part uses a
// second-order exponential time differencing scheme (ETDRK2) in the Fourier
// basis: diffusion is integrated exactly, advection and reaction explicitly.
// The scheme keeps exact semi-discrete steady states fixed and reduces to
// the exact spectral heat flow when the force vanishes.
//
// The exponential shift f = e^{lambda t} f_bar used in existence proofs is not
// applied; it does not change the solution.

#include "vicsek/errors.hpp"
#include "vicsek/field.hpp"
#include "vicsek/model.hpp"
#include "vicsek/parallel.hpp"
#include "vicsek/sphere_calculus.hpp"
#include "vicsek/transport.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vicsek {

enum class AngularForm { Expanded, Divergence };

struct SolverConfig {
  double mu = 1.0;
  double eps = 1e-6;
  double dt = 1e-3;
  double t_final = 1.0;
  double picard_tol_rel = 1e-10;  // relative to the initial mass
  int picard_max_iter = 20;
  std::vector<double> p_list{1.0, 2.0, INFINITY};
  double alpha = 0.1;
  FrequencySpec nu = FrequencySpec::constant(1.0);
  std::shared_ptr<const KernelSpec> kernel;  // null means dirac on the field grid
  TransportScheme transport = TransportScheme::SemiLagrangian;
  AngularForm angular_form = AngularForm::Expanded;
  std::size_t snapshot_every = 0;
  std::string dump_path;  // where a diagnostic snapshot goes if NaNs appear
  unsigned threads = 1;

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw DomainError(std::string("SolverConfig: ") + what);
    };
    need(mu > 0.0, "mu must be positive");
    need(eps >= 0.0, "eps must be >= 0");
    need(dt > 0.0, "dt must be positive");
    need(t_final >= 0.0, "t_final must be >= 0");
    need(picard_tol_rel > 0.0, "picard_tol_rel must be positive");
    need(picard_max_iter >= 1, "picard_max_iter must be >= 1");
    need(alpha >= 0.0, "alpha must be >= 0");
    for (double p : p_list) need(p >= 1.0, "every p in p_list must be >= 1");
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_final / dt)); }
};

struct StepReport {
  double time = 0.0;
  double mass = 0.0;
  std::vector<double> lp;  // aligned with SolverConfig::p_list
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
  double angular_energy_p2 = 0.0;
  double min_abs_J = 0.0;
  double min_value = 0.0;
  int picard_iters = 0;
  double picard_residual = 0.0;
  std::vector<double> picard_residuals;
};

// ---------------------------------------------------------------------------
// Diagnostics

/// (sum over cells and nodes of w dx |f|^p)^(1/p); p = infinity gives max |f|.
inline double lp_norm(const DistributionField<2>& f, double p) {
  if (!(p >= 1.0)) throw DomainError("lp_norm: p must be >= 1");
  const auto& v = f.values();
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : v) m = std::fmax(m, std::fabs(x));
    return m;
  }
  std::vector<double> per_cell(f.cells());
  for (std::size_t c = 0; c < f.cells(); ++c) {
    auto fc = f.cell(c);
    double s = 0.0;
    for (std::size_t j = 0; j < fc.size(); ++j) s += f.angles().weight(j) * std::pow(std::fabs(fc[j]), p);
    per_cell[c] = s;
  }
  return std::pow(pairwise_sum(per_cell) * f.space().cell_volume(), 1.0 / p);
}

/// Phase-space L^p distance between two fields on the same grids.
inline double lp_distance(const DistributionField<2>& a, const DistributionField<2>& b, double p) {
  require_compatible(a, b, "lp_distance");
  if (!(p >= 1.0)) throw DomainError("lp_distance: p must be >= 1");
  const auto& va = a.values();
  const auto& vb = b.values();
  if (std::isinf(p)) {
    double m = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) m = std::fmax(m, std::fabs(va[i] - vb[i]));
    return m;
  }
  const std::size_t nodes = a.nodes();
  std::vector<double> per_cell(a.cells());
  for (std::size_t c = 0; c < a.cells(); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < nodes; ++j) {
      const double d = std::fabs(va[c * nodes + j] - vb[c * nodes + j]);
      s += a.angles().weight(j) * (p == 1.0 ? d : p == 2.0 ? d * d : std::pow(d, p));
    }
    per_cell[c] = s;
  }
  const double total = pairwise_sum(per_cell) * a.space().cell_volume();
  return p == 1.0 ? total : p == 2.0 ? std::sqrt(total) : std::pow(total, 1.0 / p);
}

/// Instantaneous integral of |grad_omega f^{p/2}|^2 over phase space.
inline double angular_energy(const DistributionField<2>& f, double p) {
  const auto& ag = f.angles();
  const std::size_t n = f.nodes();
  std::vector<double> g(n), dg(n), per_cell(f.cells());
  for (std::size_t c = 0; c < f.cells(); ++c) {
    auto fc = f.cell(c);
    for (std::size_t j = 0; j < n; ++j) g[j] = p == 2.0 ? fc[j] : std::pow(std::fmax(fc[j], 0.0), 0.5 * p);
    ag.spectral().derivative(g, dg);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += ag.weight(j) * dg[j] * dg[j];
    per_cell[c] = s;
  }
  return pairwise_sum(per_cell) * f.space().cell_volume();
}

/// C = sup|nu'| + sup|nu| + (d - 1) sup|nu| for the a priori envelopes.
inline double growth_constant(const FrequencySpec& nu, int d = 2) {
  return nu.sup_dnu() + nu.sup_nu() + (d - 1) * nu.sup_nu();
}

/// e^{C t p/(p-1)} for finite p > 1, e^{C t} for p = infinity, 1 for p = 1.
inline double lp_envelope(double C, double t, double p) {
  if (p == 1.0) return 1.0;
  if (std::isinf(p)) return std::exp(C * t);
  return std::exp(C * t * p / (p - 1.0));
}

// ---------------------------------------------------------------------------
// Linear frozen-director step

namespace detail {

inline double phi1(double z) {
  if (std::fabs(z) < 1e-5) return 1.0 + z / 2.0 + z * z / 6.0;
  return std::expm1(z) / z;
}

inline double phi2(double z) {
  if (std::fabs(z) < 1e-3) return 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0;
  return (std::expm1(z) - z) / (z * z);
}

}  // namespace detail

class LinearStepper {
 public:
  LinearStepper(const SpatialGrid& space, std::shared_ptr<const AngularGrid<2>> angles, const SolverConfig& cfg)
      : space_(space), angles_(std::move(angles)), cfg_(cfg) {
    cfg_.validate();
    const auto& sc = angles_->spectral();
    const auto& lap = sc.laplacian_symbol();
    const double h = cfg_.dt;
    e_.resize(lap.size());
    p1_.resize(lap.size());
    p2_.resize(lap.size());
    for (std::size_t k = 0; k < lap.size(); ++k) {
      const double z = cfg_.mu * lap[k] * h;
      e_[k] = std::exp(z);
      p1_[k] = h * detail::phi1(z);
      p2_[k] = h * detail::phi2(z);
    }
  }

  const SolverConfig& config() const noexcept { return cfg_; }

  /// Angular CFL number max |psi1| dt / dtheta for a frozen director field.
  double angular_cfl(const MomentField<2>& omega) const {
    double amax = 0.0;
    for (const auto& d : omega.director) amax = std::fmax(amax, cfg_.nu.sup_nu() * norm(d));
    return amax * cfg_.dt / angles_->spacing();
  }

  DistributionField<2> step(const DistributionField<2>& f, const MomentField<2>& omega) const {
    if (!(f.space() == space_) || !f.angles().same_layout(*angles_))
      throw GridMismatch("linear_step: field grids differ from stepper grids");
    if (omega.director.size() != f.cells())
      throw GridMismatch("linear_step: director field must be filled for every cell");
    for (std::size_t c = 0; c < omega.director.size(); ++c)
      if (!(norm(omega.director[c]) <= 1.0 + 1e-12))
        throw DomainError("linear_step: frozen director exceeds unit length in cell " + std::to_string(c));
    const double cfl = angular_cfl(omega);
    if (cfl > 1.0)
      throw StabilityError("linear_step: angular CFL number " + std::to_string(cfl) + " exceeds 1", cfl, 1.0);

    DistributionField<2> g = f;
    transport(g, 0.5 * cfg_.dt, cfg_.transport, cfg_.threads);
    parallel_for(g.cells(), cfg_.threads, [&](std::size_t c) { angular_cell(g.cell(c), omega.director[c]); });
    transport(g, 0.5 * cfg_.dt, cfg_.transport, cfg_.threads);
    g.set_time(f.time() + cfg_.dt);
    return g;
  }

 private:
  using Cvec = std::vector<std::complex<double>>;

  void angular_cell(std::span<double> u, const Vec<2>& omega) const {
    const auto& sc = angles_->spectral();
    const auto& fft = sc.fft();
    const std::size_t n = u.size();
    const std::size_t m = sc.modes();
    Cvec uh(m);
    fft.forward(u, uh);

    const double om = norm(omega);
    if (om == 0.0 || cfg_.nu.is_off()) {
      for (std::size_t k = 0; k < m; ++k) uh[k] *= e_[k];
      fft.inverse(uh, u);
      return;
    }

    std::vector<double> a(n), b(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& w = angles_->node(j);
      const double c = dot(w.vec(), omega);
      const Vec<2> proj = project_tangent(w, omega);
      const double v = cfg_.nu.nu(c);
      a[j] = v * dot(proj, angles_->tangent(j));
      b[j] = cfg_.nu.dnu(c) * dot(proj, proj) - v * c;
    }

    std::vector<double> work(n);
    Cvec tmp(m);
    // Explicit part N(u) = -(a du/dtheta + b u), or -d(a u)/dtheta, in Fourier space.
    auto explicit_part = [&](std::span<const double> x, const Cvec& xh, Cvec& out) {
      if (cfg_.angular_form == AngularForm::Expanded) {
        for (std::size_t k = 0; k < m; ++k) tmp[k] = xh[k] * sc.derivative_symbol()[k];
        fft.inverse(tmp, work);
        for (std::size_t j = 0; j < n; ++j) work[j] = -(a[j] * work[j] + b[j] * x[j]);
        fft.forward(work, out);
      } else {
        for (std::size_t j = 0; j < n; ++j) work[j] = a[j] * x[j];
        fft.forward(work, out);
        for (std::size_t k = 0; k < m; ++k) out[k] *= -sc.derivative_symbol()[k];
      }
    };

    Cvec n0(m), n1(m), sh(m);
    explicit_part(u, uh, n0);
    for (std::size_t k = 0; k < m; ++k) sh[k] = e_[k] * uh[k] + p1_[k] * n0[k];
    std::vector<double> s(n);
    fft.inverse(sh, s);
    explicit_part(s, sh, n1);
    for (std::size_t k = 0; k < m; ++k) sh[k] += p2_[k] * (n1[k] - n0[k]);
    fft.inverse(sh, u);
  }

  SpatialGrid space_;
  std::shared_ptr<const AngularGrid<2>> angles_;
  SolverConfig cfg_;
  std::vector<double> e_, p1_, p2_;
};

/// One linear step with the director frozen at `omega`.
inline DistributionField<2> linear_step(const DistributionField<2>& f, const MomentField<2>& omega,
                                        const SolverConfig& cfg) {
  return LinearStepper(f.space(), f.angles_ptr(), cfg).step(f, omega);
}

// ---------------------------------------------------------------------------
// Nonlinear step and time loop

struct PicardResult {
  DistributionField<2> field;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residuals;
  bool converged = false;
};

class KineticSolver {
 public:
  using SnapshotSink = std::function<void(const DistributionField<2>&, std::size_t step)>;
  using DumpSink = std::function<void(const DistributionField<2>&, const std::string& path)>;

  KineticSolver(const SpatialGrid& space, std::shared_ptr<const AngularGrid<2>> angles, SolverConfig cfg)
      : cfg_(std::move(cfg)), stepper_(space, angles, cfg_), space_(space), angles_(std::move(angles)) {
    kernel_ = cfg_.kernel ? cfg_.kernel : std::make_shared<const KernelSpec>(KernelSpec::dirac(space));
    if (!(kernel_->grid() == space)) throw GridMismatch("KineticSolver: kernel grid differs from field grid");
  }

  const SolverConfig& config() const noexcept { return cfg_; }
  const KernelSpec& kernel() const noexcept { return *kernel_; }
  const LinearStepper& stepper() const noexcept { return stepper_; }

  /// Receives the offending iterate before a NumericalError is thrown.
  void set_dump_sink(DumpSink sink) { dump_ = std::move(sink); }

  MomentField<2> director(const DistributionField<2>& g) const { return director_eps(flux_J(g, *kernel_), cfg_.eps); }

  /// g^0 = f_prev, g^{k+1} = L(f_prev; Omega_eps(J(g^k))); stops once
  /// ||g^{k+1} - g^k||_1 < tol. The iteration count is the number of
  /// residuals evaluated, so a director-independent step reports 1.
  PicardResult picard_solve(const DistributionField<2>& f_prev) const {
    const double mass = f_prev.initial_mass() > 0.0 ? f_prev.initial_mass() : f_prev.mass();
    const double tol = cfg_.picard_tol_rel * mass;
    PicardResult out{f_prev, 0, 0.0, {}, false};
    DistributionField<2> g = stepper_.step(f_prev, director(f_prev));
    check_finite(g, 0);
    for (int k = 1; k <= cfg_.picard_max_iter; ++k) {
      DistributionField<2> next = stepper_.step(f_prev, director(g));
      check_finite(next, k);
      const double r = lp_distance(next, g, 1.0);
      out.residuals.push_back(r);
      g = std::move(next);
      out.iterations = k;
      out.residual = r;
      if (r < tol) {
        out.converged = true;
        break;
      }
    }
    if (!out.converged)
      std::fprintf(stderr, "warning: Picard iteration at t=%.6g stopped at %d iterations, residual %.3e\n",
                   f_prev.time() + cfg_.dt, out.iterations, out.residual);
    g.set_time(f_prev.time() + cfg_.dt);
    out.field = std::move(g);
    return out;
  }

  StepReport report(const DistributionField<2>& f, const PicardResult* pr = nullptr) const {
    StepReport r;
    r.time = f.time();
    r.mass = f.mass();
    for (double p : cfg_.p_list) r.lp.push_back(lp_norm(f, p));
    r.l1 = lp_norm(f, 1.0);
    r.l2 = lp_norm(f, 2.0);
    r.linf = lp_norm(f, INFINITY);
    r.angular_energy_p2 = angular_energy(f, 2.0);
    r.min_abs_J = flux_J(f, *kernel_).min_speed;
    r.min_value = f.min_value();
    if (pr) {
      r.picard_iters = pr->iterations;
      r.picard_residual = pr->residual;
      r.picard_residuals = pr->residuals;
    }
    return r;
  }

  struct Trajectory {
    std::vector<StepReport> reports;
    DistributionField<2> final_field;
    std::size_t picard_warnings = 0;
  };

  /// Advances f0 to t_final, reporting every step (the first report is t = 0).
  Trajectory evolve(const DistributionField<2>& f0, const SnapshotSink& snapshots = {}) const {
    DistributionField<2> f = f0;
    if (!(f.initial_mass() > 0.0)) f.record_mass();
    Trajectory traj{{}, f};
    traj.reports.push_back(report(f));
    if (snapshots && cfg_.snapshot_every > 0) snapshots(f, 0);
    const std::size_t steps = cfg_.steps();
    for (std::size_t s = 1; s <= steps; ++s) {
      PicardResult pr = picard_solve(f);
      if (!pr.converged) ++traj.picard_warnings;
      f = std::move(pr.field);
      f.set_time(f0.time() + static_cast<double>(s) * cfg_.dt);
      traj.reports.push_back(report(f, &pr));
      if (snapshots && cfg_.snapshot_every > 0 && s % cfg_.snapshot_every == 0) snapshots(f, s);
    }
    traj.final_field = std::move(f);
    return traj;
  }

 private:
  void check_finite(const DistributionField<2>& g, int iteration) const {
    const auto& v = g.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) {
        const std::size_t cell = i / g.nodes();
        const std::size_t node = i % g.nodes();
        std::string msg = "picard_solve: non-finite value at cell " + std::to_string(cell) + ", node " +
                          std::to_string(node) + ", iteration " + std::to_string(iteration) + ", t = " +
                          std::to_string(g.time());
        if (!cfg_.dump_path.empty() && dump_) {
          dump_(g, cfg_.dump_path);
          msg += " (iterate written to " + cfg_.dump_path + ")";
        }
        throw NumericalError(msg);
      }
    }
  }

  SolverConfig cfg_;
  LinearStepper stepper_;
  SpatialGrid space_;
  std::shared_ptr<const AngularGrid<2>> angles_;
  std::shared_ptr<const KernelSpec> kernel_;
  DumpSink dump_;
};

/// One nonlinear step; see KineticSolver::picard_solve.
inline PicardResult picard_solve(const DistributionField<2>& f_prev, const SolverConfig& cfg) {
  return KineticSolver(f_prev.space(), f_prev.angles_ptr(), cfg).picard_solve(f_prev);
}

inline KineticSolver::Trajectory evolve(const DistributionField<2>& f0, const SolverConfig& cfg,
                                        const KineticSolver::SnapshotSink& snapshots = {}) {
  return KineticSolver(f0.space(), f0.angles_ptr(), cfg).evolve(f0, snapshots);
}

}  // namespace vicsek
