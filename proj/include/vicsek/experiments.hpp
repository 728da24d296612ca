#pragma once

// Experiment recipes behind the command-line front end. Each recipe reads an
// ExperimentConfig, runs the solver and/or particle simulator, writes CSV
// tables and a JSON summary (with the resolved config and an input hash)
// into the output directory, and returns the numbers it reports.

#include "vicsek/config.hpp"
#include "vicsek/errors.hpp"
#include "vicsek/field.hpp"
#include "vicsek/kinetic_solver.hpp"
#include "vicsek/model.hpp"
#include "vicsek/particle_sim.hpp"
#include "vicsek/snapshot.hpp"

#include "json.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace vicsek {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Output plumbing

class OutputDir {
 public:
  OutputDir() = default;
  explicit OutputDir(const std::string& dir) : dir_(dir) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }
  bool enabled() const noexcept { return !dir_.empty(); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

 private:
  std::filesystem::path dir_;
};

class CsvWriter {
 public:
  CsvWriter() = default;
  CsvWriter(const OutputDir& out, const std::string& name, const std::vector<std::string>& header) {
    if (!out.enabled()) return;
    file_ = std::make_unique<std::ofstream>(out.path(name));
    if (!*file_) throw std::runtime_error("cannot open " + out.path(name));
    for (std::size_t i = 0; i < header.size(); ++i) *file_ << (i ? "," : "") << header[i];
    *file_ << '\n';
  }

  void row(const std::vector<double>& values) {
    if (!file_) return;
    char buf[40];
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      *file_ << (i ? "," : "") << buf;
    }
    *file_ << '\n';
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

inline void write_json(const OutputDir& out, const std::string& name, const ojson& j) {
  if (!out.enabled()) return;
  std::ofstream f(out.path(name));
  f << j.dump(2) << '\n';
}

struct RunContext {
  ExperimentConfig cfg;
  OutputDir out;
  bool record_baseline = false;
  std::ostream* log = &std::cout;
};

/// Hash of the resolved config plus any input file it references.
inline std::string input_hash(const ExperimentConfig& c) {
  std::uint64_t h = fnv1a(to_text(c));
  if (c.ic == "file") h = fnv1a(read_text_file(c.ic_file), h);
  return hex64(h);
}

inline ojson provenance(const ExperimentConfig& c) {
  ojson cfg = ojson::object();
  for (const auto& b : detail::bindings()) cfg[b.key] = b.get(c);
  return ojson{{"config", cfg}, {"input_hash", input_hash(c)}};
}

inline void write_resolved_config(const RunContext& ctx) {
  if (!ctx.out.enabled()) return;
  std::ofstream f(ctx.out.path("config.resolved"));
  f << to_text(ctx.cfg);
}

inline ojson finite_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

// ---------------------------------------------------------------------------
// Builders

inline SpatialGrid make_spatial_grid(const ExperimentConfig& c) { return SpatialGrid(c.dim_x, c.cells, c.domain_length); }

inline std::shared_ptr<const AngularGrid<2>> make_circle_grid(std::size_t n) {
  return std::make_shared<const AngularGrid<2>>(AngularGrid<2>::uniform(n));
}

inline FrequencySpec make_frequency(const ExperimentConfig& c) {
  if (c.nu == "constant") return FrequencySpec::constant(c.nu_a);
  if (c.nu == "affine") return FrequencySpec::affine(c.nu_a, c.nu_b);
  return FrequencySpec::tabulated(c.nu_table);
}

inline std::shared_ptr<const KernelSpec> make_kernel(const ExperimentConfig& c, const SpatialGrid& g) {
  if (c.kernel == "gaussian") return std::make_shared<const KernelSpec>(KernelSpec::gaussian(g, c.kernel_width));
  if (c.kernel == "tophat") return std::make_shared<const KernelSpec>(KernelSpec::tophat(g, c.kernel_width));
  return std::make_shared<const KernelSpec>(KernelSpec::dirac(g));
}

inline SolverConfig make_solver_config(const ExperimentConfig& c, const SpatialGrid& g) {
  SolverConfig s;
  s.mu = c.mu;
  s.eps = c.eps;
  s.dt = c.dt;
  s.t_final = c.t_final;
  s.picard_tol_rel = c.picard_tol_rel;
  s.picard_max_iter = c.picard_max_iter;
  s.p_list = c.p_list;
  s.alpha = c.alpha;
  s.nu = make_frequency(c);
  s.kernel = make_kernel(c, g);
  s.transport = c.transport == "upwind" ? TransportScheme::Upwind : TransportScheme::SemiLagrangian;
  s.angular_form = c.angular_form == "divergence" ? AngularForm::Divergence : AngularForm::Expanded;
  s.snapshot_every = c.snapshot_every;
  s.dump_path = c.dump_path;
  s.threads = c.threads;
  s.validate();
  return s;
}

template <int D>
SimParams<D> make_sim_params(const ExperimentConfig& c) {
  SimParams<D> p;
  p.radius = c.radius_R;
  p.mu = c.mu;
  p.dt = c.particle_dt;
  p.nu = make_frequency(c);
  p.tie = c.tie_policy == "random" ? TiePolicy::Random : TiePolicy::Keep;
  p.neighbors = c.neighbor_method == "cell-list" ? NeighborMethod::CellList
                : c.neighbor_method == "sweep"   ? NeighborMethod::Sweep
                                                 : NeighborMethod::Auto;
  p.threads = c.threads;
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Initial conditions

struct Mode {
  double amp = 0.0;
  int kx = 0;
  int ktheta = 0;
  double phase = 0.0;
};

inline std::vector<Mode> parse_modes(const std::string& s) {
  std::vector<Mode> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream is(item);
    std::string p;
    while (std::getline(is, p, ':')) parts.push_back(detail::trim(p));
    if (parts.size() != 4) throw ConfigError("ic_modes entry '" + item + "' is not amp:kx:ktheta:phase");
    out.push_back({detail::parse_double(parts[0]), detail::parse_integer<int>(parts[1]),
                   detail::parse_integer<int>(parts[2]), detail::parse_double(parts[3])});
  }
  return out;
}

/// Continuous initial density f0(x, theta) on T^{d_x} x S^1:
///   uniform:       m / (V 2 pi)
///   fvm:           (m / V) M_{Omega}(theta)
///   perturbed-fvm: rho(x) M_{Omega(x)}(theta) (1 + sum_modes amp cos(2 pi kx x / L + ktheta theta + phase))
/// with rho(x) = (m / V)(1 + a cos(2 pi k x / L)) and Omega(x) at angle
/// angle + twist sin(2 pi x / L). Only the first spatial axis is modulated.
class InitialDensity {
 public:
  explicit InitialDensity(const ExperimentConfig& c)
      : kind_(c.ic), nu_(make_frequency(c)), mu_(c.ic_mu > 0.0 ? c.ic_mu : c.mu), length_(c.domain_length),
        rho_(c.ic_mass / std::pow(c.domain_length, c.dim_x)), amp_(c.ic_density_amp), kx_(c.ic_density_kx),
        angle_(c.ic_director_angle), twist_(c.ic_director_twist), modes_(parse_modes(c.ic_modes)) {
    if (kind_ == "fvm") {
      amp_ = 0.0;
      twist_ = 0.0;
      modes_.clear();
    }
    peak_ = nu_.sigma(1.0);
    // Normalization of the circle FvM density; the periodic trapezoid rule converges spectrally.
    const std::size_t n = 4096;
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp((nu_.sigma(std::cos(2.0 * M_PI * j / n)) - peak_) / mu_);
    z_ = z * 2.0 * M_PI / n;
  }

  double operator()(const double* x, double theta) const {
    if (kind_ == "uniform") return rho_ / (2.0 * M_PI);
    const double x0 = x[0];
    const double rho = rho_ * (1.0 + amp_ * std::cos(2.0 * M_PI * kx_ * x0 / length_));
    const double dir = angle_ + twist_ * std::sin(2.0 * M_PI * x0 / length_);
    double f = rho * std::exp((nu_.sigma(std::cos(theta - dir)) - peak_) / mu_) / z_;
    double mod = 1.0;
    for (const auto& m : modes_) mod += m.amp * std::cos(2.0 * M_PI * m.kx * x0 / length_ + m.ktheta * theta + m.phase);
    return f * mod;
  }

  /// Upper bound used by the rejection sampler.
  double bound() const {
    if (kind_ == "uniform") return rho_ / (2.0 * M_PI) * (1.0 + 1e-9);
    double mod = 1.0;
    for (const auto& m : modes_) mod += std::fabs(m.amp);
    return rho_ * (1.0 + std::fabs(amp_)) / z_ * mod * (1.0 + 1e-9);
  }

 private:
  std::string kind_;
  FrequencySpec nu_;
  double mu_, length_, rho_, amp_;
  int kx_;
  double angle_, twist_;
  std::vector<Mode> modes_;
  double peak_ = 0.0, z_ = 1.0;
};

/// Cell averages in x (4-point Gauss–Legendre per axis), node values in theta.
inline DistributionField<2> initial_field(const ExperimentConfig& c, const SpatialGrid& sg,
                                          std::shared_ptr<const AngularGrid<2>> ag) {
  if (c.ic == "file") {
    FieldSnapshot snap = read_snapshot(c.ic_file);
    if (!(snap.field.space() == sg) || snap.field.nodes() != ag->size())
      throw ConfigError("ic_file grids do not match the configured grids");
    return DistributionField<2>(sg, ag, snap.field.values(), 0.0);
  }
  const InitialDensity f0(c);
  const QuadratureRule gl = gauss_legendre(4);
  std::vector<double> v(sg.cells() * ag->size(), 0.0);
  const std::size_t nodes = ag->size();
  for (std::size_t cell = 0; cell < sg.cells(); ++cell) {
    const auto idx = sg.index(cell);
    for (std::size_t j = 0; j < nodes; ++j) {
      double acc = 0.0;
      const std::size_t q2n = sg.dim() == 2 ? gl.nodes.size() : 1;
      for (std::size_t q1 = 0; q1 < gl.nodes.size(); ++q1) {
        for (std::size_t q2 = 0; q2 < q2n; ++q2) {
          double x[2] = {(static_cast<double>(idx[0]) + 0.5 + 0.5 * gl.nodes[q1]) * sg.dx(),
                         (static_cast<double>(idx[1]) + 0.5 + 0.5 * gl.nodes[q2]) * sg.dx()};
          const double w = 0.5 * gl.weights[q1] * (sg.dim() == 2 ? 0.5 * gl.weights[q2] : 1.0);
          acc += w * f0(x, ag->theta(j));
        }
      }
      v[cell * nodes + j] = acc;
    }
  }
  return DistributionField<2>(sg, ag, std::move(v), 0.0);
}

// ---------------------------------------------------------------------------
// run-pde

inline std::vector<std::string> step_columns(const std::vector<double>& p_list) {
  std::vector<std::string> cols{"time", "mass", "l1", "l2", "linf", "angular_energy_p2", "min_abs_J", "picard_iters",
                                "picard_residual"};
  for (double p : p_list)
    if (p != 1.0 && p != 2.0 && !std::isinf(p)) cols.push_back("lp_" + detail::format_double(p));
  return cols;
}

inline std::vector<double> step_row(const StepReport& r, const std::vector<double>& p_list) {
  std::vector<double> row{r.time, r.mass, r.l1, r.l2, r.linf, r.angular_energy_p2, r.min_abs_J,
                          static_cast<double>(r.picard_iters), r.picard_residual};
  for (std::size_t i = 0; i < p_list.size(); ++i)
    if (p_list[i] != 1.0 && p_list[i] != 2.0 && !std::isinf(p_list[i])) row.push_back(r.lp[i]);
  return row;
}

struct PdeRunResult {
  KineticSolver::Trajectory trajectory;
  ojson summary;
};

/// Residual sequences per step, the payload of a Picard baseline.
inline ojson picard_baseline(const KineticSolver::Trajectory& t, const ExperimentConfig& c) {
  ojson steps = ojson::array();
  for (std::size_t s = 1; s < t.reports.size(); ++s) steps.push_back(t.reports[s].picard_residuals);
  return ojson{{"kind", "picard-residuals"}, {"input_hash", input_hash(c)}, {"residuals", steps}};
}

inline PdeRunResult run_pde(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const SpatialGrid sg = make_spatial_grid(c);
  const auto ag = make_circle_grid(c.angular_nodes);
  const SolverConfig sc = make_solver_config(c, sg);
  KineticSolver solver(sg, ag, sc);
  solver.set_dump_sink([](const DistributionField<2>& g, const std::string& path) { write_snapshot(path, g); });
  const DistributionField<2> f0 = initial_field(c, sg, ag);

  const ojson snap_meta{{"mu", c.mu}, {"eps", c.eps}, {"dt", c.dt}, {"nu", sc.nu.describe()},
                        {"kernel", solver.kernel().describe()}, {"input_hash", input_hash(c)}};
  KineticSolver::SnapshotSink sink;
  if (ctx.out.enabled() && c.snapshot_every > 0) {
    sink = [&](const DistributionField<2>& f, std::size_t step) {
      char name[64];
      std::snprintf(name, sizeof name, "snapshot_%06zu.bin", step);
      write_snapshot(ctx.out.path(name), f, snap_meta);
    };
  }
  PdeRunResult res{solver.evolve(f0, sink), {}};
  const auto& reps = res.trajectory.reports;

  CsvWriter csv(ctx.out, "steps.csv", step_columns(c.p_list));
  for (const auto& r : reps) csv.row(step_row(r, c.p_list));
  if (ctx.out.enabled()) write_snapshot(ctx.out.path("final.bin"), res.trajectory.final_field, snap_meta);

  double drift = 0.0, min_value = INFINITY, min_J = INFINITY;
  int max_iters = 0;
  for (const auto& r : reps) {
    drift = std::fmax(drift, std::fabs(r.mass - reps.front().mass) / reps.front().mass);
    min_value = std::fmin(min_value, r.min_value);
    min_J = std::fmin(min_J, r.min_abs_J);
    max_iters = std::max(max_iters, r.picard_iters);
  }
  res.summary = provenance(c);
  res.summary["experiment"] = "run-pde";
  res.summary["steps"] = reps.size() - 1;
  res.summary["max_relative_mass_drift"] = drift;
  res.summary["min_value"] = min_value;
  res.summary["min_abs_J"] = min_J;
  res.summary["admissible"] = min_J >= c.alpha;
  res.summary["max_picard_iterations"] = max_iters;
  res.summary["picard_warnings"] = res.trajectory.picard_warnings;
  write_json(ctx.out, "summary.json", res.summary);
  write_resolved_config(ctx);
  if (ctx.record_baseline) write_json(ctx.out, "baseline.json", picard_baseline(res.trajectory, c));
  return res;
}

// ---------------------------------------------------------------------------
// run-particles

struct ParticleRunReport {
  std::size_t steps = 0;
  double max_norm_defect = 0.0;
  double chi2 = 0.0;
  double chi2_critical = 0.0;  // 1% upper quantile
  bool uniform_at_1pct = false;
  double resultant = 0.0;  // |mean omega|
  std::vector<EnsembleSummary> summaries;
  ojson summary;
};

/// Pearson statistic of direction counts in `bins` equal-probability bins of
/// the uniform law (angle bins on S^1, bins in cos(polar) on S^2).
template <int D>
double direction_chi2(const ParticleEnsemble<D>& ens, std::size_t bins) {
  std::vector<double> count(bins, 0.0);
  for (const auto& d : ens.directions) {
    double u;
    if constexpr (D == 2)
      u = (std::atan2(d[1], d[0]) + M_PI) / (2.0 * M_PI);
    else
      u = 0.5 * (d[2] + 1.0);
    count[std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)))] += 1.0;
  }
  const double expected = static_cast<double>(ens.size()) / static_cast<double>(bins);
  double chi2 = 0.0;
  for (double k : count) chi2 += (k - expected) * (k - expected) / expected;
  return chi2;
}

inline double chi2_upper_quantile(std::size_t dof, double alpha) {
  boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::quantile(boost::math::complement(dist, alpha));
}

template <int D>
ParticleEnsemble<D> initial_ensemble(const ExperimentConfig& c, std::size_t n, std::uint64_t seed) {
  if constexpr (D == 2) {
    const InitialDensity f0(c);
    return sample_ensemble<2>(
        n, c.dim_x, c.domain_length, seed,
        [&](const double* x, const Vec<2>& w) { return f0(x, std::atan2(w[1], w[0])); }, f0.bound());
  } else {
    if (c.ic != "uniform") throw ConfigError("particle_dim = 3 supports ic = uniform only");
    return sample_ensemble<3>(
        n, c.dim_x, c.domain_length, seed, [](const double*, const Vec<3>&) { return 1.0; }, 1.0);
  }
}

template <int D>
ParticleRunReport run_particles_dim(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const SimParams<D> params = make_sim_params<D>(c);
  if (auto w = params.small_angle_warning()) *ctx.log << "warning: " << *w << "\n";
  ParticleEnsemble<D> ens = initial_ensemble<D>(c, c.particles, c.seed);
  ParticleRunReport rep;
  rep.steps = static_cast<std::size_t>(std::llround(c.t_final / c.particle_dt));
  CsvWriter csv(ctx.out, "particles.csv", {"time", "order_parameter", "mean_abs_Jbar", "mean_alignment", "polar_angle"});
  auto record = [&] {
    const EnsembleSummary s = summarize(ens, params);
    rep.summaries.push_back(s);
    csv.row({s.time, s.order_parameter, s.mean_abs_Jbar, s.mean_alignment, s.polar_angle});
  };
  record();
  for (std::size_t s = 1; s <= rep.steps; ++s) {
    ens = sde_step(ens, params);
    rep.max_norm_defect = std::fmax(rep.max_norm_defect, max_norm_defect(ens));
    if (c.summary_every > 0 && (s % c.summary_every == 0 || s == rep.steps)) record();
  }
  rep.chi2 = direction_chi2(ens, c.histogram_bins);
  rep.chi2_critical = chi2_upper_quantile(c.histogram_bins - 1, 0.01);
  rep.uniform_at_1pct = rep.chi2 < rep.chi2_critical;
  Vec<D> total{};
  for (const auto& d : ens.directions) total += d.vec();
  rep.resultant = norm(total) / static_cast<double>(ens.size());

  if (ctx.out.enabled()) write_ensemble(ctx.out.path("final_ensemble.bin"), ens, ojson{{"input_hash", input_hash(c)}});
  rep.summary = provenance(c);
  rep.summary["experiment"] = "run-particles";
  rep.summary["steps"] = rep.steps;
  rep.summary["max_norm_defect"] = rep.max_norm_defect;
  rep.summary["direction_chi2"] = rep.chi2;
  rep.summary["chi2_critical_1pct"] = rep.chi2_critical;
  rep.summary["uniform_at_1pct"] = rep.uniform_at_1pct;
  rep.summary["mean_direction_norm"] = rep.resultant;
  rep.summary["final_order_parameter"] = rep.summaries.back().order_parameter;
  write_json(ctx.out, "summary.json", rep.summary);
  write_resolved_config(ctx);
  if (ctx.record_baseline)
    write_json(ctx.out, "baseline.json", ojson{{"kind", "particles"}, {"input_hash", input_hash(c)},
                                               {"final_order_parameter", rep.summaries.back().order_parameter}});
  return rep;
}

inline ParticleRunReport run_particles(const RunContext& ctx) {
  return ctx.cfg.particle_dim == 3 ? run_particles_dim<3>(ctx) : run_particles_dim<2>(ctx);
}

// ---------------------------------------------------------------------------
// equilibria

struct EquilibriumRow {
  double mu = 0.0;
  double c_sphere = 0.0;
  double c_sphere_closed = NAN;  // coth(nu0/mu) - mu/nu0 for constant nu
  double c_circle = 0.0;
  double c_circle_closed = NAN;  // I1(nu0/mu) / I0(nu0/mu) for constant nu
};

struct EquilibriaReport {
  std::vector<EquilibriumRow> rows;
  double relax_l2 = 0.0;        // ||f(T) - rho M_{Omega*}||_2
  double relax_flux_error = 0.0;  // | |J| - rho c(mu) | with the circle order parameter
  double relax_director_angle = 0.0;
  double rho = 0.0;
  ojson summary;
};

/// |J| / rho of the circle FvM equilibrium; the closed form is a Bessel ratio for constant nu.
inline double circle_closed_form(double mu, double nu0) {
  const double k = nu0 / mu;
  if (k > 700.0) return 1.0 - 0.5 / k - 0.125 / (k * k);
  return std::cyl_bessel_i(1.0, k) / std::cyl_bessel_i(0.0, k);
}

inline double sphere_closed_form(double mu, double nu0) {
  const double k = nu0 / mu;
  if (k < 1e-4) return k / 3.0 - k * k * k / 45.0;
  return 1.0 / std::tanh(k) - 1.0 / k;
}

inline EquilibriaReport run_equilibria(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const FrequencySpec nu = make_frequency(c);
  EquilibriaReport rep;
  CsvWriter table(ctx.out, "equilibria.csv", {"mu", "c_sphere", "c_sphere_closed", "c_circle", "c_circle_closed"});
  for (double mu : c.eq_mu_list) {
    EquilibriumRow r;
    r.mu = mu;
    r.c_sphere = c_of_mu(mu, nu);
    r.c_circle = c_of_mu_circle(mu, nu);
    if (nu.family() == FrequencySpec::Family::Constant && nu.a() > 0.0) {
      r.c_sphere_closed = sphere_closed_form(mu, nu.a());
      r.c_circle_closed = circle_closed_form(mu, nu.a());
    }
    rep.rows.push_back(r);
    table.row({r.mu, r.c_sphere, r.c_sphere_closed, r.c_circle, r.c_circle_closed});
  }

  // Relaxation of the space-homogeneous local equation toward rho M_{Omega*}.
  const SpatialGrid sg = make_spatial_grid(c);
  const auto ag = make_circle_grid(c.angular_nodes);
  SolverConfig sc = make_solver_config(c, sg);
  KineticSolver solver(sg, ag, sc);
  const auto traj = solver.evolve(initial_field(c, sg, ag));
  const DistributionField<2>& f = traj.final_field;
  rep.rho = f.mass() / sg.volume();
  const auto J = flux_J(f, solver.kernel());
  Vec<2> mean{};
  for (const auto& j : J.flux) mean += (1.0 / static_cast<double>(J.cells())) * j;
  const Direction<2> star = Direction<2>::normalized(mean);
  rep.relax_director_angle = std::atan2(star[1], star[0]);
  const FisherVonMises<2> M(FvMState<2>{rep.rho, star, c.mu}, nu, *ag);
  const std::vector<double> m = M.on_grid(*ag);
  std::vector<double> target;
  for (std::size_t cell = 0; cell < f.cells(); ++cell) target.insert(target.end(), m.begin(), m.end());
  rep.relax_l2 = lp_distance(f, DistributionField<2>(sg, ag, target, f.time()), 2.0);
  const double cm = c_of_mu_circle(c.mu, nu);
  for (std::size_t cell = 0; cell < J.cells(); ++cell)
    rep.relax_flux_error = std::fmax(rep.relax_flux_error, std::fabs(J.speed[cell] - rep.rho * cm));

  ojson rows = ojson::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"mu", r.mu}, {"c_sphere", r.c_sphere}, {"c_sphere_closed", finite_or_null(r.c_sphere_closed)},
                    {"c_circle", r.c_circle}, {"c_circle_closed", finite_or_null(r.c_circle_closed)}});
  rep.summary = provenance(c);
  rep.summary["experiment"] = "equilibria";
  rep.summary["table"] = rows;
  rep.summary["relaxation"] = {{"t_final", f.time()}, {"rho", rep.rho}, {"director_angle", rep.relax_director_angle},
                               {"l2_distance_to_fvm", rep.relax_l2}, {"flux_error", rep.relax_flux_error}};
  write_json(ctx.out, "summary.json", rep.summary);
  write_resolved_config(ctx);
  if (ctx.record_baseline)
    write_json(ctx.out, "baseline.json",
               ojson{{"kind", "equilibria"}, {"input_hash", input_hash(c)}, {"l2_distance_to_fvm", rep.relax_l2}});
  return rep;
}

// ---------------------------------------------------------------------------
// bounds

struct BoundsReport {
  double C = 0.0;
  std::vector<double> p_list;
  std::vector<double> max_ratio;  // max over t of ||f(t)||_p / (envelope ||f0||_p); p = 1 gives relative drift
  std::vector<std::size_t> violations;
  ojson summary;
};

inline BoundsReport run_bounds(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const SpatialGrid sg = make_spatial_grid(c);
  const auto ag = make_circle_grid(c.angular_nodes);
  const SolverConfig sc = make_solver_config(c, sg);
  const auto traj = KineticSolver(sg, ag, sc).evolve(initial_field(c, sg, ag));
  BoundsReport rep;
  rep.C = growth_constant(sc.nu, 2);
  rep.p_list = c.p_list;
  rep.max_ratio.assign(c.p_list.size(), 0.0);
  rep.violations.assign(c.p_list.size(), 0);
  std::vector<std::string> cols{"time"};
  for (double p : c.p_list) {
    cols.push_back("norm_p" + detail::format_double(p));
    cols.push_back("envelope_p" + detail::format_double(p));
  }
  CsvWriter csv(ctx.out, "bounds.csv", cols);
  const auto& r0 = traj.reports.front();
  for (const auto& r : traj.reports) {
    std::vector<double> row{r.time};
    for (std::size_t i = 0; i < c.p_list.size(); ++i) {
      const double p = c.p_list[i];
      const double env = lp_envelope(rep.C, r.time, p) * r0.lp[i];
      row.push_back(r.lp[i]);
      row.push_back(env);
      double ratio;
      bool bad;
      if (p == 1.0) {
        ratio = std::fabs(r.lp[i] - r0.lp[i]) / r0.lp[i];
        bad = ratio > 1e-8;
      } else {
        ratio = r.lp[i] / env;
        bad = ratio > 1.0 + 1e-12;
      }
      rep.max_ratio[i] = std::fmax(rep.max_ratio[i], ratio);
      if (bad) ++rep.violations[i];
    }
    csv.row(row);
  }
  rep.summary = provenance(c);
  rep.summary["experiment"] = "bounds";
  rep.summary["growth_constant"] = rep.C;
  ojson per = ojson::array();
  for (std::size_t i = 0; i < c.p_list.size(); ++i)
    per.push_back({{"p", detail::format_double(c.p_list[i])}, {"max_ratio", rep.max_ratio[i]},
                   {"violations", rep.violations[i]}});
  rep.summary["norms"] = per;
  write_json(ctx.out, "summary.json", rep.summary);
  write_resolved_config(ctx);
  return rep;
}

// ---------------------------------------------------------------------------
// eps-study

struct EpsStudyReport {
  std::vector<double> ladder;
  std::vector<double> min_abs_J;  // over the whole run
  std::vector<double> diff_J_l2;  // between consecutive ladder entries, final time
  std::vector<double> diff_f_l1;
  bool admissible = true;
  bool monotone_J = true;
  bool monotone_f = true;
  double pair_a = 0.0, pair_b = 0.0;
  double pair_f_l1 = 0.0;
  double pair_J_l2 = 0.0;
  ojson summary;
};

inline double flux_l2_distance(const MomentField<2>& a, const MomentField<2>& b, double cell_volume) {
  std::vector<double> d(a.cells());
  for (std::size_t c = 0; c < a.cells(); ++c) {
    const Vec<2> e = a.flux[c] - b.flux[c];
    d[c] = dot(e, e);
  }
  return std::sqrt(pairwise_sum(d) * cell_volume);
}

inline EpsStudyReport run_eps_study(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  const SpatialGrid sg = make_spatial_grid(c);
  const auto ag = make_circle_grid(c.angular_nodes);
  const DistributionField<2> f0 = initial_field(c, sg, ag);
  EpsStudyReport rep;
  for (double e = c.eps_max; e >= c.eps_min * (1.0 - 1e-12); e *= 0.5) rep.ladder.push_back(e);
  if (c.eps_pair.size() != 2) throw ConfigError("eps_pair needs exactly two values");

  struct Run {
    DistributionField<2> f;
    MomentField<2> J;
    double min_J;
  };
  auto run = [&](double eps) {
    SolverConfig sc = make_solver_config(c, sg);
    sc.eps = eps;
    KineticSolver solver(sg, ag, sc);
    auto t = solver.evolve(f0);
    double mj = INFINITY;
    for (const auto& r : t.reports) mj = std::fmin(mj, r.min_abs_J);
    auto J = flux_J(t.final_field, solver.kernel());
    *ctx.log << "  eps = " << eps << ": min|J| = " << mj << "\n";
    return Run{std::move(t.final_field), std::move(J), mj};
  };

  CsvWriter runs_csv(ctx.out, "eps_runs.csv", {"eps", "min_abs_J", "admissible"});
  CsvWriter diff_csv(ctx.out, "eps_differences.csv", {"eps_a", "eps_b", "J_l2", "f_l1"});
  std::optional<Run> prev;
  for (double e : rep.ladder) {
    Run r = run(e);
    rep.min_abs_J.push_back(r.min_J);
    rep.admissible = rep.admissible && r.min_J >= c.alpha;
    runs_csv.row({e, r.min_J, r.min_J >= c.alpha ? 1.0 : 0.0});
    if (prev) {
      rep.diff_J_l2.push_back(flux_l2_distance(r.J, prev->J, sg.cell_volume()));
      rep.diff_f_l1.push_back(lp_distance(r.f, prev->f, 1.0));
      diff_csv.row({e * 2.0, e, rep.diff_J_l2.back(), rep.diff_f_l1.back()});
    }
    prev = std::move(r);
  }
  for (std::size_t i = 1; i < rep.diff_J_l2.size(); ++i) {
    rep.monotone_J = rep.monotone_J && rep.diff_J_l2[i] <= rep.diff_J_l2[i - 1];
    rep.monotone_f = rep.monotone_f && rep.diff_f_l1[i] <= rep.diff_f_l1[i - 1];
  }
  rep.pair_a = c.eps_pair[0];
  rep.pair_b = c.eps_pair[1];
  const Run a = run(rep.pair_a);
  const Run b = run(rep.pair_b);
  rep.pair_f_l1 = lp_distance(a.f, b.f, 1.0);
  rep.pair_J_l2 = flux_l2_distance(a.J, b.J, sg.cell_volume());
  rep.admissible = rep.admissible && a.min_J >= c.alpha && b.min_J >= c.alpha;
  diff_csv.row({rep.pair_a, rep.pair_b, rep.pair_J_l2, rep.pair_f_l1});
  if (!rep.admissible) *ctx.log << "flag: min|J| fell below alpha = " << c.alpha << "\n";

  rep.summary = provenance(c);
  rep.summary["experiment"] = "eps-study";
  rep.summary["ladder"] = rep.ladder;
  rep.summary["min_abs_J"] = rep.min_abs_J;
  rep.summary["J_l2_differences"] = rep.diff_J_l2;
  rep.summary["f_l1_differences"] = rep.diff_f_l1;
  rep.summary["monotone_J"] = rep.monotone_J;
  rep.summary["monotone_f"] = rep.monotone_f;
  rep.summary["admissible"] = rep.admissible;
  rep.summary["pair"] = {{"eps_a", rep.pair_a}, {"eps_b", rep.pair_b}, {"f_l1", rep.pair_f_l1}, {"J_l2", rep.pair_J_l2}};
  write_json(ctx.out, "summary.json", rep.summary);
  write_resolved_config(ctx);
  return rep;
}

// ---------------------------------------------------------------------------
// stability

struct StabilityVariant {
  std::string name;
  double dt = 0.0;
  std::size_t nodes = 0;
  std::vector<double> times;
  std::vector<double> distances;
  double C_hat = 0.0;  // smallest rate with D(t) <= e^{C t} D(0) at every step
  bool identical = false;
};

struct StabilityReport {
  double delta = 0.0;
  std::vector<StabilityVariant> variants;  // base first
  bool zero_delta_identical = false;
  double zero_delta_max_distance = 0.0;
  bool refinement_stable = true;
  bool envelope_holds = true;
  ojson summary;
};

/// f0 and f0 + delta h / ||h||_2 with h = f0 cos(2 pi kx x / L + ktheta theta).
inline DistributionField<2> perturbed_copy(const DistributionField<2>& f0, double delta, int kx, int ktheta) {
  if (delta == 0.0) return f0;
  const SpatialGrid& sg = f0.space();
  const auto& ag = f0.angles();
  DistributionField<2> h = f0;
  for (std::size_t cell = 0; cell < f0.cells(); ++cell) {
    const double x = sg.center(sg.index(cell)[0]);
    for (std::size_t j = 0; j < f0.nodes(); ++j)
      h.at(cell, j) = f0.at(cell, j) * std::cos(2.0 * M_PI * kx * x / sg.length() + ktheta * ag.theta(j));
  }
  const double hn = lp_norm(h, 2.0);
  DistributionField<2> g = f0;
  for (std::size_t i = 0; i < g.values().size(); ++i) g.values()[i] += delta / hn * h.values()[i];
  g.record_mass();
  return g;
}

inline StabilityVariant stability_pair(const ExperimentConfig& c, const std::string& name, double dt, std::size_t nodes,
                                       double delta) {
  ExperimentConfig v = c;
  v.dt = dt;
  v.angular_nodes = nodes;
  const SpatialGrid sg = make_spatial_grid(v);
  const auto ag = make_circle_grid(nodes);
  const SolverConfig sc = make_solver_config(v, sg);
  const KineticSolver solver(sg, ag, sc);
  DistributionField<2> f = initial_field(v, sg, ag);
  DistributionField<2> g = perturbed_copy(f, delta, c.stab_mode_kx, c.stab_mode_ktheta);
  StabilityVariant out;
  out.name = name;
  out.dt = dt;
  out.nodes = nodes;
  out.identical = f.values() == g.values();
  out.times.push_back(0.0);
  out.distances.push_back(lp_distance(f, g, 2.0));
  const std::size_t steps = sc.steps();
  double rate = -INFINITY;
  for (std::size_t s = 1; s <= steps; ++s) {
    f = solver.picard_solve(f).field;
    g = solver.picard_solve(g).field;
    const double t = static_cast<double>(s) * dt;
    out.identical = out.identical && f.values() == g.values();
    out.times.push_back(t);
    out.distances.push_back(lp_distance(f, g, 2.0));
    if (out.distances.front() > 0.0) rate = std::fmax(rate, std::log(out.distances.back() / out.distances.front()) / t);
  }
  out.C_hat = rate;
  return out;
}

inline StabilityReport run_stability(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  StabilityReport rep;
  rep.delta = c.stab_delta;
  rep.variants.push_back(stability_pair(c, "base", c.dt, c.angular_nodes, c.stab_delta));
  if (c.stab_refine) {
    rep.variants.push_back(stability_pair(c, "half_dt", 0.5 * c.dt, c.angular_nodes, c.stab_delta));
    rep.variants.push_back(stability_pair(c, "double_nodes", c.dt, 2 * c.angular_nodes, c.stab_delta));
  }
  const StabilityVariant zero = stability_pair(c, "zero_delta", c.dt, c.angular_nodes, 0.0);
  rep.zero_delta_identical = zero.identical;
  for (double d : zero.distances) rep.zero_delta_max_distance = std::fmax(rep.zero_delta_max_distance, d);

  const StabilityVariant& base = rep.variants.front();
  const double slack = c.stab_tolerance * std::fabs(base.C_hat);
  for (std::size_t k = 1; k < rep.variants.size(); ++k) {
    const auto& v = rep.variants[k];
    rep.refinement_stable = rep.refinement_stable && std::fabs(v.C_hat - base.C_hat) <= slack;
  }
  for (const auto& v : rep.variants)
    for (std::size_t i = 0; i < v.times.size(); ++i)
      if (v.distances[i] > std::exp((base.C_hat + slack) * v.times[i]) * v.distances.front() * (1.0 + 1e-12))
        rep.envelope_holds = false;

  CsvWriter csv(ctx.out, "stability.csv", {"variant", "time", "distance_l2", "envelope"});
  for (std::size_t k = 0; k < rep.variants.size(); ++k) {
    const auto& v = rep.variants[k];
    for (std::size_t i = 0; i < v.times.size(); ++i)
      csv.row({static_cast<double>(k), v.times[i], v.distances[i],
               std::exp(base.C_hat * v.times[i]) * v.distances.front()});
  }
  rep.summary = provenance(c);
  rep.summary["experiment"] = "stability";
  rep.summary["delta"] = rep.delta;
  ojson vars = ojson::array();
  for (std::size_t k = 0; k < rep.variants.size(); ++k) {
    const auto& v = rep.variants[k];
    vars.push_back({{"index", k}, {"name", v.name}, {"dt", v.dt}, {"angular_nodes", v.nodes}, {"C_hat", v.C_hat},
                    {"final_distance", v.distances.back()}});
  }
  rep.summary["variants"] = vars;
  rep.summary["refinement_stable"] = rep.refinement_stable;
  rep.summary["envelope_holds"] = rep.envelope_holds;
  rep.summary["zero_delta_identical"] = rep.zero_delta_identical;
  rep.summary["zero_delta_max_distance"] = rep.zero_delta_max_distance;
  write_json(ctx.out, "summary.json", rep.summary);
  write_resolved_config(ctx);
  return rep;
}

// ---------------------------------------------------------------------------
// meanfield-compare

/// Averages a fine field onto coarser bins: cell means in x, and in theta the
/// exact bin average of the trigonometric interpolant over
/// [theta_j - h/2, theta_j + h/2], h = 2 pi / bins.
inline DistributionField<2> coarsen(const DistributionField<2>& fine, const SpatialGrid& coarse_space,
                                    std::shared_ptr<const AngularGrid<2>> coarse_angles) {
  const SpatialGrid& fs = fine.space();
  if (fs.dim() != coarse_space.dim() || fs.length() != coarse_space.length() || fs.n() % coarse_space.n() != 0 ||
      fine.nodes() % coarse_angles->size() != 0)
    throw GridMismatch("coarsen: coarse grids must divide the fine grids");
  const std::size_t rx = fs.n() / coarse_space.n();
  const std::size_t nf = fine.nodes();
  const std::size_t nb = coarse_angles->size();
  const std::size_t stride = nf / nb;
  const double h = 2.0 * M_PI / static_cast<double>(nb);
  const auto& sc = fine.angles().spectral();
  DistributionField<2> out(coarse_space, coarse_angles, fine.time());
  std::vector<double> avg(nf), smooth(nf);
  std::vector<std::complex<double>> coef(sc.modes());
  for (std::size_t cc = 0; cc < coarse_space.cells(); ++cc) {
    std::fill(avg.begin(), avg.end(), 0.0);
    const auto ci = coarse_space.index(cc);
    const std::size_t ry = fs.dim() == 2 ? rx : 1;
    for (std::size_t a = 0; a < rx; ++a)
      for (std::size_t b = 0; b < ry; ++b) {
        const std::size_t fc = fs.dim() == 2 ? fs.flat(ci[0] * rx + a, ci[1] * rx + b) : ci[0] * rx + a;
        auto v = fine.cell(fc);
        for (std::size_t j = 0; j < nf; ++j) avg[j] += v[j] / static_cast<double>(rx * ry);
      }
    sc.fft().forward(avg, coef);
    for (std::size_t k = 1; k < coef.size(); ++k) {
      const double z = 0.5 * static_cast<double>(k) * h;
      coef[k] *= std::sin(z) / z;
    }
    sc.fft().inverse(coef, smooth);
    for (std::size_t j = 0; j < nb; ++j) out.at(cc, j) = smooth[j * stride];
  }
  out.record_mass();
  return out;
}

struct MeanFieldReport {
  std::vector<double> n_list;
  std::vector<double> checkpoints;
  std::vector<std::vector<double>> distances;  // [n][checkpoint]
  double slope = 0.0;                          // log-log slope at the last checkpoint
  bool decreasing = true;
  ojson summary;
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

inline MeanFieldReport run_meanfield(const RunContext& ctx) {
  const auto& c = ctx.cfg;
  if (c.mf_checkpoints.empty()) throw ConfigError("mf_checkpoints is empty");
  MeanFieldReport rep;
  rep.n_list = c.mf_n_list;
  rep.checkpoints = c.mf_checkpoints;
  const SpatialGrid sg = make_spatial_grid(c);
  const auto ag = make_circle_grid(c.angular_nodes);
  const SpatialGrid coarse_sg(c.dim_x, c.mf_bins_x, c.domain_length);
  const auto coarse_ag = make_circle_grid(c.mf_bins_theta);

  // PDE with the kernel matched to the particle interaction radius.
  SolverConfig sc = make_solver_config(c, sg);
  sc.kernel = std::make_shared<const KernelSpec>(KernelSpec::tophat(sg, c.radius_R));
  const KineticSolver solver(sg, ag, sc);
  DistributionField<2> f = initial_field(c, sg, ag);
  const double m0 = f.mass();
  for (double& v : f.values()) v /= m0;
  f.record_mass();
  std::vector<DistributionField<2>> pde_at;
  std::size_t done = 0;
  for (double t : rep.checkpoints) {
    const auto target = static_cast<std::size_t>(std::llround(t / c.dt));
    for (; done < target; ++done) f = solver.picard_solve(f).field;
    pde_at.push_back(coarsen(f, coarse_sg, coarse_ag));
  }

  const SimParams<2> params = make_sim_params<2>(c);
  CsvWriter csv(ctx.out, "meanfield.csv", {"N", "time", "l1_distance"});
  for (std::size_t k = 0; k < rep.n_list.size(); ++k) {
    const auto n = static_cast<std::size_t>(std::llround(rep.n_list[k]));
    ParticleEnsemble<2> ens = initial_ensemble<2>(c, n, c.seed + 7919 * (k + 1));
    std::vector<double> d;
    std::size_t steps = 0;
    for (std::size_t q = 0; q < rep.checkpoints.size(); ++q) {
      const auto target = static_cast<std::size_t>(std::llround(rep.checkpoints[q] / c.particle_dt));
      for (; steps < target; ++steps) ens = sde_step(ens, params);
      const auto emp = empirical_density<2>(ens, coarse_sg, coarse_ag, c.mf_bandwidth);
      d.push_back(lp_distance(emp, pde_at[q], 1.0));
      csv.row({rep.n_list[k], rep.checkpoints[q], d.back()});
    }
    *ctx.log << "  N = " << n << ": L1 distance " << d.back() << "\n";
    rep.distances.push_back(d);
  }
  std::vector<double> last;
  for (const auto& d : rep.distances) last.push_back(d.back());
  for (std::size_t k = 1; k < last.size(); ++k) rep.decreasing = rep.decreasing && last[k] < last[k - 1];
  rep.slope = last.size() >= 2 ? loglog_slope(rep.n_list, last) : NAN;

  rep.summary = provenance(c);
  rep.summary["experiment"] = "meanfield-compare";
  rep.summary["N"] = rep.n_list;
  rep.summary["checkpoints"] = rep.checkpoints;
  rep.summary["l1_distances"] = rep.distances;
  rep.summary["loglog_slope"] = finite_or_null(rep.slope);
  rep.summary["decreasing"] = rep.decreasing;
  write_json(ctx.out, "summary.json", rep.summary);
  write_resolved_config(ctx);
  if (ctx.record_baseline)
    write_json(ctx.out, "baseline.json",
               ojson{{"kind", "meanfield"}, {"input_hash", input_hash(c)}, {"l1_distances", rep.distances}});
  return rep;
}

// ---------------------------------------------------------------------------
// Dispatch

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"run-pde",   "run-particles", "equilibria",        "bounds",
                                              "eps-study", "stability",     "meanfield-compare"};
  return names;
}

/// Runs one recipe and returns its JSON summary.
inline ojson run_subcommand(const std::string& name, const RunContext& ctx) {
  if (name == "run-pde") return run_pde(ctx).summary;
  if (name == "run-particles") return run_particles(ctx).summary;
  if (name == "equilibria") return run_equilibria(ctx).summary;
  if (name == "bounds") return run_bounds(ctx).summary;
  if (name == "eps-study") return run_eps_study(ctx).summary;
  if (name == "stability") return run_stability(ctx).summary;
  if (name == "meanfield-compare") return run_meanfield(ctx).summary;
  throw ConfigError("unknown subcommand '" + name + "'");
}

}  // namespace vicsek
