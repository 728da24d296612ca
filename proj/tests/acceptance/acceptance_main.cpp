// Acceptance checks: one PASS/FAIL line per criterion, with tolerances and
// wall-clock budgets pinned below. Exit status is the number of failures.
//
//   acceptance [--source <repo root>] [--only <n>] [--report <file>]
//
// The report lines also go to acceptance_report.txt unless --report says otherwise.

#include "vicsek/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#ifndef VICSEK_SOURCE_DIR
#define VICSEK_SOURCE_DIR "."
#endif

using namespace vicsek;

namespace {

std::string g_root = VICSEK_SOURCE_DIR;
std::ostringstream g_sink;  // recipe progress output is not part of the report

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

RunContext context(const std::string& cfg_name) {
  RunContext ctx;
  ctx.cfg = load_config(g_root + "/configs/" + cfg_name);
  ctx.log = &g_sink;
  return ctx;
}

// Sphere-calculus identities on N = 64 with analytic data.
constexpr double kIdentityTol = 1e-10;
Outcome sphere_identities() {
  const auto g = AngularGrid<2>::uniform(64);
  const Vec<2> v{0.8, -0.35};
  std::vector<double> f(g.size()), h(g.size());
  std::vector<Vec<2>> Pv(g.size()), F(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double t = g.theta(j);
    f[j] = dot(g.node(j).vec(), v);
    Pv[j] = project_tangent(g.node(j), v);
    h[j] = std::exp(std::cos(t)) + 0.3 * std::sin(2 * t);
    F[j] = (1.0 + 0.5 * std::cos(3 * t) + 0.2 * std::sin(t)) * g.tangent(j);
  }
  const auto grad = angular_gradient(g, f);
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) e1 = std::fmax(e1, max_abs(grad[j] - Pv[j]));
  const auto div = angular_divergence(g, TangentField<2>::checked(g, Pv));
  for (std::size_t j = 0; j < g.size(); ++j) e2 = std::fmax(e2, std::fabs(div[j] + f[j]));
  const auto field = TangentField<2>::checked(g, F);
  const auto divF = angular_divergence(g, field);
  const auto gh = angular_gradient(g, h);
  std::vector<double> ibp(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) ibp[j] = h[j] * divF[j] + dot(field[j], gh[j] - h[j] * g.node(j).vec());
  const double e3 = std::fabs(integrate_sphere<2>(ibp, g));
  return {e1 <= kIdentityTol && e2 <= kIdentityTol && e3 <= kIdentityTol,
          "grad " + fmt("%.1e", e1) + ", div " + fmt("%.1e", e2) + ", ibp " + fmt("%.1e", e3) + " (tol 1e-10)"};
}

constexpr double kLangevinTol = 1e-8;
Outcome order_parameter() {
  const auto nu = FrequencySpec::constant(1.0);
  double worst = 0.0;
  for (double mu : {0.1, 0.2, 0.5, 1.0, 2.0, 10.0})
    worst = std::fmax(worst, std::fabs(c_of_mu(mu, nu) - (1.0 / std::tanh(1.0 / mu) - mu)));
  const double lo = c_of_mu(1e-3, nu), hi = c_of_mu(1e3, nu);
  return {worst <= kLangevinTol && lo > 0.998 && hi < 0.002,
          "max |c - coth(1/mu) + mu| " + fmt("%.1e", worst) + ", c(1e-3) " + fmt("%.6f", lo) + ", c(1e3) " + fmt("%.2e", hi)};
}

constexpr double kFixedPointTol = 1e-8;
constexpr double kFixedPointRatio = 100.0;
Outcome equilibrium_fixed_point() {
  const auto nu = FrequencySpec::constant(1.0);
  double err[2];
  int k = 0;
  for (std::size_t n : {16, 64}) {
    const SpatialGrid sg(1, 4, 1.0);
    auto ag = std::make_shared<const AngularGrid<2>>(AngularGrid<2>::uniform(n));
    const auto dir = Direction<2>::from_angle(0.3);
    const auto m = FisherVonMises<2>({1.0, dir, 0.2}, nu, *ag).on_grid(*ag);
    std::vector<double> v;
    for (std::size_t c = 0; c < sg.cells(); ++c) v.insert(v.end(), m.begin(), m.end());
    const DistributionField<2> f(sg, ag, v, 0.0);
    SolverConfig cfg;
    cfg.mu = 0.2;
    cfg.dt = 1e-3;
    cfg.nu = nu;
    err[k++] = lp_distance(f, linear_step(f, MomentField<2>::uniform_director(sg.cells(), dir.vec()), cfg), INFINITY);
  }
  const double ratio = err[0] / std::fmax(err[1], 1e-300);
  return {err[1] <= kFixedPointTol && ratio >= kFixedPointRatio,
          "step error " + fmt("%.1e", err[0]) + " at N=16, " + fmt("%.1e", err[1]) + " at N=64, ratio " + fmt("%.2g", ratio)};
}

constexpr double kMassDrift = 1e-8;
constexpr double kNegativity = 1e-10;
Outcome conservation() {
  const auto r = run_pde(context("regression.cfg"));
  const auto& reps = r.trajectory.reports;
  double drift = 0.0, linf = 0.0, minv = INFINITY;
  for (const auto& s : reps) {
    drift = std::fmax(drift, std::fabs(s.mass - reps.front().mass) / reps.front().mass);
    linf = std::fmax(linf, s.linf);
    minv = std::fmin(minv, s.min_value);
  }
  const bool steps_ok = reps.size() == 1001;
  return {steps_ok && drift <= kMassDrift && minv >= -kNegativity * linf,
          std::to_string(reps.size() - 1) + " steps, mass drift " + fmt("%.1e", drift) + ", min f " + fmt("%.2e", minv)};
}

Outcome lp_bounds() {
  auto ctx = context("regression.cfg");
  ctx.cfg.p_list = {2.0, INFINITY};
  const auto r = run_bounds(ctx);
  return {r.violations[0] == 0 && r.violations[1] == 0,
          "C = " + fmt("%g", r.C) + ", violations p=2: " + std::to_string(r.violations[0]) +
              ", p=inf: " + std::to_string(r.violations[1])};
}

constexpr int kMaxPicard = 5;
constexpr double kBaselineRel = 0.10;
constexpr double kRoundoffFloor = 1e-12;  // relative to mass; residuals below are rounding noise
Outcome picard() {
  auto ctx = context("regression.cfg");
  const auto r = run_pde(ctx);
  const auto& reps = r.trajectory.reports;
  std::ifstream in(g_root + "/tests/baselines/picard_regression.json");
  if (!in) return {false, "missing tests/baselines/picard_regression.json"};
  const auto base = nlohmann::json::parse(in);
  if (base.at("input_hash").get<std::string>() != input_hash(ctx.cfg))
    return {false, "baseline was recorded for a different config; re-record with --record-baseline"};
  const auto& seq = base.at("residuals");
  if (seq.size() + 1 != reps.size()) return {false, "baseline step count differs"};
  const double floor = kRoundoffFloor * reps.front().mass;
  int max_it = 0;
  bool monotone = true;
  double worst = 0.0;
  for (std::size_t s = 1; s < reps.size(); ++s) {
    const auto& res = reps[s].picard_residuals;
    max_it = std::max(max_it, reps[s].picard_iters);
    for (std::size_t k = 1; k < res.size(); ++k) monotone = monotone && res[k] < res[k - 1];
    const auto& b = seq[s - 1];
    if (b.size() != res.size()) return {false, "iteration count differs from baseline at step " + std::to_string(s)};
    for (std::size_t k = 0; k < res.size(); ++k) {
      const double ref = b[k].get<double>();
      if (ref < floor && res[k] < floor) continue;
      worst = std::fmax(worst, std::fabs(res[k] - ref) / ref);
    }
  }
  return {max_it <= kMaxPicard && monotone && worst <= kBaselineRel,
          "max iterations " + std::to_string(max_it) + ", monotone " + (monotone ? "yes" : "no") +
              ", max deviation from baseline " + fmt("%.1e", worst)};
}

constexpr double kEpsPairL1 = 1e-4;
constexpr double kAdmissibleAlpha = 0.1;
Outcome eps_limit() {
  auto ctx = context("eps_study.cfg");
  ctx.cfg.alpha = kAdmissibleAlpha;
  const auto r = run_eps_study(ctx);
  double minJ = INFINITY;
  for (double m : r.min_abs_J) minJ = std::fmin(minJ, m);
  return {r.admissible && r.pair_f_l1 < kEpsPairL1 && r.monotone_f && r.monotone_J,
          "min|J| " + fmt("%.3f", minJ) + ", ||f_1e-5 - f_1e-6||_1 " + fmt("%.1e", r.pair_f_l1) +
              ", ladder monotone " + ((r.monotone_f && r.monotone_J) ? "yes" : "no") + " over " +
              std::to_string(r.ladder.size()) + " runs"};
}

Outcome stability() {
  auto ctx = context("stability.cfg");
  ctx.cfg.stab_refine = true;
  ctx.cfg.stab_tolerance = 0.2;
  const auto r = run_stability(ctx);
  std::string rates;
  for (const auto& v : r.variants) rates += (rates.empty() ? "" : ", ") + v.name + " " + fmt("%.4f", v.C_hat);
  return {r.refinement_stable && r.envelope_holds && r.zero_delta_identical,
          "C_hat: " + rates + "; envelope " + (r.envelope_holds ? "holds" : "violated") + "; delta=0 " +
              (r.zero_delta_identical ? "bitwise identical" : "differs")};
}

constexpr double kNormDefect = 1e-12;
Outcome particles() {
  auto aligned = context("particles_norm.cfg");
  const auto a = run_particles(aligned);
  auto noise = context("particles_noise.cfg");
  const auto n = run_particles(noise);
  const bool sizes = aligned.cfg.particles == 10000 && a.steps == 10000;
  return {sizes && a.max_norm_defect <= kNormDefect && n.max_norm_defect <= kNormDefect && n.uniform_at_1pct,
          "norm defect " + fmt("%.1e", a.max_norm_defect) + " over " + std::to_string(a.steps) +
              " steps; noise chi2 " + fmt("%.2f", n.chi2) + " < " + fmt("%.2f", n.chi2_critical)};
}

Outcome meanfield() {
  const auto r = run_meanfield(context("meanfield.cfg"));
  std::string d;
  for (std::size_t k = 0; k < r.n_list.size(); ++k)
    d += (d.empty() ? "" : ", ") + ("N=" + fmt("%g", r.n_list[k]) + ": " + fmt("%.4f", r.distances[k].back()));
  const bool t_ok = std::fabs(r.checkpoints.back() - 0.5) < 1e-12;
  return {t_ok && r.decreasing && r.slope >= -0.7 && r.slope <= -0.3,
          "L1 at t=0.5 " + d + "; slope " + fmt("%.3f", r.slope)};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  std::string report_path = "acceptance_report.txt";
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--source") && i + 1 < argc) g_root = argv[++i];
    else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) only = std::atoi(argv[++i]);
    else if (!std::strcmp(argv[i], "--report") && i + 1 < argc) report_path = argv[++i];
  }
  std::ofstream report(report_path);
  const std::vector<Criterion> all{
      {1, "sphere-calculus identities", 1.0, sphere_identities},
      {2, "c(mu) closed form and limits", 1.0, order_parameter},
      {3, "equilibrium fixed point", 10.0, equilibrium_fixed_point},
      {4, "conservation and positivity", 60.0, conservation},
      {5, "Lp envelopes", 60.0, lp_bounds},
      {6, "Picard convergence", 60.0, picard},
      {7, "epsilon limit", 300.0, eps_limit},
      {8, "stability surrogate", 300.0, stability},
      {9, "particle sanity", 60.0, particles},
      {10, "mean-field trend", 600.0, meanfield},
  };
  int failures = 0;
  for (const auto& c : all) {
    if (only && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    char line[1024];
    std::snprintf(line, sizeof line, "[%s] %2d %-30s %s; %.2f s (budget %g s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                  o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", exceeded");
    std::fputs(line, stdout);
    std::fflush(stdout);
    report << line << std::flush;
  }
  return failures;
}
