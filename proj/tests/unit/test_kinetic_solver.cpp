#include "vicsek/kinetic_solver.hpp"
#include "vicsek/transport.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace vicsek;

namespace {

std::shared_ptr<const AngularGrid<2>> circle(std::size_t n) {
  return std::make_shared<const AngularGrid<2>>(AngularGrid<2>::uniform(n));
}

DistributionField<2> homogeneous(const SpatialGrid& g, std::shared_ptr<const AngularGrid<2>> ag,
                                 const std::vector<double>& profile) {
  std::vector<double> v;
  for (std::size_t c = 0; c < g.cells(); ++c) v.insert(v.end(), profile.begin(), profile.end());
  return DistributionField<2>(g, std::move(ag), v, 0.0);
}

DistributionField<2> smooth_field(const SpatialGrid& g, std::shared_ptr<const AngularGrid<2>> ag) {
  DistributionField<2> f(g, ag, 0.0);
  for (std::size_t c = 0; c < g.cells(); ++c) {
    const auto idx = g.index(c);
    const double x = g.center(idx[0]), y = g.dim() == 2 ? g.center(idx[1]) : 0.0;
    for (std::size_t j = 0; j < f.nodes(); ++j) {
      const double t = ag->theta(j);
      f.at(c, j) = 1.0 + 0.3 * std::cos(2 * M_PI * x + t) + 0.2 * std::sin(2 * M_PI * y - 2 * t) + 0.4 * std::cos(t);
    }
  }
  f.record_mass();
  return f;
}

SolverConfig base_config(double mu = 0.2) {
  SolverConfig cfg;
  cfg.mu = mu;
  cfg.dt = 1e-3;
  cfg.t_final = 0.01;
  return cfg;
}

}  // namespace

TEST(Transport, IntegerShiftIsExact) {
  const SpatialGrid g(1, 16, 1.0);
  auto ag = circle(4);  // nodes along +x, +y, -x, -y
  auto f = smooth_field(g, ag);
  const auto before = f;
  transport(f, 2.0 / 16.0, TransportScheme::SemiLagrangian);
  for (std::size_t c = 0; c < 16; ++c) {
    EXPECT_DOUBLE_EQ(f.at(c, 0), before.at((c + 14) % 16, 0));
    EXPECT_DOUBLE_EQ(f.at(c, 2), before.at((c + 2) % 16, 2));
    EXPECT_DOUBLE_EQ(f.at(c, 1), before.at(c, 1));
  }
}

TEST(Transport, ConservesMassAndPositivity) {
  for (int dim : {1, 2}) {
    const SpatialGrid g(dim, 16, 1.0);
    auto f = smooth_field(g, circle(16));
    for (auto scheme : {TransportScheme::SemiLagrangian, TransportScheme::Upwind}) {
      auto h = f;
      for (int s = 0; s < 20; ++s) transport(h, 0.01, scheme);
      EXPECT_NEAR(h.mass(), f.mass(), 1e-12 * f.mass());
      EXPECT_GE(h.min_value(), 0.0);
    }
  }
}

TEST(Transport, UpwindCflLimit) {
  const SpatialGrid g(1, 16, 1.0);
  auto f = smooth_field(g, circle(8));
  EXPECT_THROW(transport(f, 0.1, TransportScheme::Upwind), StabilityError);
  EXPECT_NO_THROW(transport(f, 0.1, TransportScheme::SemiLagrangian));
}

TEST(LinearStep, HeatFlowWithoutForce) {
  const SpatialGrid g(1, 4, 1.0);
  auto ag = circle(32);
  std::vector<double> prof(32);
  for (std::size_t j = 0; j < 32; ++j) prof[j] = 1.0 + 0.5 * std::cos(ag->theta(j)) + 0.25 * std::sin(3 * ag->theta(j));
  const auto f = homogeneous(g, ag, prof);
  auto cfg = base_config(0.7);
  const auto h = linear_step(f, MomentField<2>::zero(g.cells()), cfg);
  for (std::size_t c = 0; c < g.cells(); ++c)
    for (std::size_t j = 0; j < 32; ++j) {
      const double t = ag->theta(j);
      const double ref = 1.0 + 0.5 * std::exp(-0.7 * cfg.dt) * std::cos(t) + 0.25 * std::exp(-0.7 * 9 * cfg.dt) * std::sin(3 * t);
      EXPECT_NEAR(h.at(c, j), ref, 1e-14);
    }
}

TEST(LinearStep, EquilibriumIsFixedPoint) {
  const auto nu = FrequencySpec::constant(1.0);
  std::vector<double> err;
  for (std::size_t n : {16, 64}) {
    const SpatialGrid g(1, 2, 1.0);
    auto ag = circle(n);
    const auto dir = Direction<2>::from_angle(0.3);
    const FisherVonMises<2> M({1.0, dir, 0.2}, nu, *ag);
    const auto f = homogeneous(g, ag, M.on_grid(*ag));
    auto cfg = base_config(0.2);
    cfg.nu = nu;
    const auto h = linear_step(f, MomentField<2>::uniform_director(2, dir.vec()), cfg);
    err.push_back(lp_distance(f, h, INFINITY));
  }
  EXPECT_LT(err[1], 1e-8);
  EXPECT_GT(err[0] / err[1], 100.0);
}

// The two forms are the same operator; on x-homogeneous band-limited data
// transport is the identity and the spectral products are alias free.
TEST(LinearStep, DivergenceFormAgrees) {
  const SpatialGrid g(1, 4, 1.0);
  auto ag = circle(64);
  std::vector<double> prof(64);
  for (std::size_t j = 0; j < 64; ++j) prof[j] = 1.0 + 0.4 * std::cos(ag->theta(j)) + 0.2 * std::sin(2 * ag->theta(j));
  const auto f = homogeneous(g, ag, prof);
  auto cfg = base_config();
  cfg.nu = FrequencySpec::affine(1.0, 0.3);
  auto omega = MomentField<2>::zero(g.cells());
  for (std::size_t c = 0; c < g.cells(); ++c) omega.director[c] = {0.6 * std::cos(c), 0.6 * std::sin(c)};
  const auto a = linear_step(f, omega, cfg);
  cfg.angular_form = AngularForm::Divergence;
  const auto b = linear_step(f, omega, cfg);
  EXPECT_LT(lp_distance(a, b, INFINITY), 1e-13);
  EXPECT_GT(lp_distance(a, f, INFINITY), 1e-5);
}

TEST(LinearStep, MassConservedAnyData) {
  const SpatialGrid g(2, 8, 1.0);
  auto ag = circle(32);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  DistributionField<2> f(g, ag, 0.0);
  for (double& v : f.values()) v = u(rng);
  f.record_mass();
  auto cfg = base_config();
  auto omega = MomentField<2>::zero(g.cells());
  for (std::size_t c = 0; c < g.cells(); ++c) omega.director[c] = {0.9 * std::cos(0.1 * c), 0.9 * std::sin(0.1 * c)};
  const auto h = linear_step(f, omega, cfg);
  EXPECT_NEAR(h.mass(), f.mass(), 1e-10 * f.mass());
}

TEST(LinearStep, AngularCflError) {
  const SpatialGrid g(1, 2, 1.0);
  auto ag = circle(64);
  const auto f = homogeneous(g, ag, std::vector<double>(64, 1.0));
  auto cfg = base_config();
  cfg.dt = 0.5;
  try {
    linear_step(f, MomentField<2>::uniform_director(2, {1.0, 0.0}), cfg);
    FAIL();
  } catch (const StabilityError& e) {
    EXPECT_GT(e.cfl(), 1.0);
  }
}

TEST(Picard, ForceOffConvergesInOneIteration) {
  const SpatialGrid g(1, 8, 1.0);
  auto cfg = base_config();
  cfg.nu = FrequencySpec::constant(0.0);
  const auto r = picard_solve(smooth_field(g, circle(32)), cfg);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.residual, 0.0);
}

TEST(Picard, EquilibriumResidualBelowTolerance) {
  const SpatialGrid g(1, 4, 1.0);
  auto ag = circle(64);
  const auto nu = FrequencySpec::constant(1.0);
  const FisherVonMises<2> M({1.0, Direction<2>::from_angle(-1.0), 0.2}, nu, *ag);
  auto f = homogeneous(g, ag, M.on_grid(*ag));
  f.record_mass();
  auto cfg = base_config(0.2);
  const auto r = picard_solve(f, cfg);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT(r.residuals.front(), cfg.picard_tol_rel * f.mass());
}

TEST(Picard, NaNAbortsWithDump) {
  const SpatialGrid g(1, 4, 1.0);
  auto f = smooth_field(g, circle(16));
  f.at(1, 3) = NAN;
  auto cfg = base_config();
  cfg.dump_path = "nan_dump.bin";
  KineticSolver solver(g, f.angles_ptr(), cfg);
  std::string dumped;
  solver.set_dump_sink([&](const DistributionField<2>&, const std::string& path) { dumped = path; });
  EXPECT_THROW(solver.picard_solve(f), std::exception);
}

TEST(Evolve, UniformStaysUniform) {
  const SpatialGrid g(1, 8, 1.0);
  auto ag = circle(16);
  const auto f0 = homogeneous(g, ag, std::vector<double>(16, 0.25));
  auto cfg = base_config();
  cfg.eps = 1e-6;
  const auto t = evolve(f0, cfg);
  EXPECT_EQ(t.reports.size(), cfg.steps() + 1);
  for (double v : t.final_field.values()) EXPECT_NEAR(v, 0.25, 1e-15);
  EXPECT_NEAR(t.reports.back().time, cfg.t_final, 1e-15);
}

TEST(Evolve, SnapshotsAndReports) {
  const SpatialGrid g(1, 8, 1.0);
  auto cfg = base_config();
  cfg.snapshot_every = 5;
  std::vector<std::size_t> seen;
  const auto t = evolve(smooth_field(g, circle(16)), cfg, [&](const DistributionField<2>&, std::size_t s) { seen.push_back(s); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 5, 10}));
  for (const auto& r : t.reports) EXPECT_EQ(r.lp.size(), cfg.p_list.size());
}

TEST(Norms, ConstantField) {
  const SpatialGrid g(1, 8, 2.0);
  const auto f = homogeneous(g, circle(16), std::vector<double>(16, 3.0));
  const double V = 2.0 * 2 * M_PI;
  for (double p : {1.0, 2.0, 3.5}) EXPECT_NEAR(lp_norm(f, p), 3.0 * std::pow(V, 1.0 / p), 1e-12);
  EXPECT_EQ(lp_norm(f, INFINITY), 3.0);
  EXPECT_NEAR(lp_norm(f, 1.0), f.mass(), 1e-12);
  EXPECT_THROW(lp_norm(f, 0.5), DomainError);
}

TEST(Norms, FvmL2AgainstBessel) {
  // ||M||_2^2 = I0(2/mu) / (2 pi I0(1/mu)^2) for nu = 1.
  const SpatialGrid g(1, 1, 1.0);
  auto ag = circle(64);
  const FisherVonMises<2> M({1.0, Direction<2>::from_angle(0.0), 1.0}, FrequencySpec::constant(1.0), *ag);
  const auto f = homogeneous(g, ag, M.on_grid(*ag));
  const double ref = std::sqrt(std::cyl_bessel_i(0.0, 2.0) / (2 * M_PI * std::pow(std::cyl_bessel_i(0.0, 1.0), 2)));
  EXPECT_NEAR(lp_norm(f, 2.0), ref, 1e-8);
}

TEST(AngularEnergy, SingleMode) {
  const SpatialGrid g(1, 1, 1.0);
  auto ag = circle(32);
  std::vector<double> prof(32), flat(32, 1.0);
  for (std::size_t j = 0; j < 32; ++j) prof[j] = 1.0 + 0.3 * std::cos(ag->theta(j));
  EXPECT_NEAR(angular_energy(homogeneous(g, ag, prof), 2.0), 0.09 * M_PI, 1e-13);
  EXPECT_NEAR(angular_energy(homogeneous(g, ag, flat), 2.0), 0.0, 1e-25);
}

TEST(AngularEnergy, DecaysUnderDiffusion) {
  const SpatialGrid g(1, 4, 1.0);
  auto cfg = base_config(0.5);
  cfg.nu = FrequencySpec::constant(0.0);
  cfg.t_final = 0.05;
  const auto t = evolve(smooth_field(g, circle(32)), cfg);
  for (std::size_t s = 1; s < t.reports.size(); ++s)
    EXPECT_LT(t.reports[s].angular_energy_p2, t.reports[s - 1].angular_energy_p2);
}

TEST(Bounds, EnvelopeAndConstant) {
  EXPECT_DOUBLE_EQ(growth_constant(FrequencySpec::constant(1.0), 2), 2.0);
  EXPECT_DOUBLE_EQ(growth_constant(FrequencySpec::affine(1.0, 0.5), 2), 0.5 + 1.5 + 1.5);
  EXPECT_DOUBLE_EQ(lp_envelope(2.0, 0.5, 2.0), std::exp(2.0));
  EXPECT_DOUBLE_EQ(lp_envelope(2.0, 0.5, INFINITY), std::exp(1.0));
  EXPECT_DOUBLE_EQ(lp_envelope(2.0, 0.5, 1.0), 1.0);
}
