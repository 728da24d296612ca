#include "vicsek/particle_sim.hpp"
#include "vicsek/snapshot.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdio>

using namespace vicsek;

namespace {

ParticleEnsemble<2> make_ensemble(std::vector<double> x, std::vector<double> angles, double length = 1.0, int dim_x = 1) {
  ParticleEnsemble<2> e;
  e.dim_x = dim_x;
  e.length = length;
  e.positions = std::move(x);
  for (double a : angles) e.directions.push_back(Direction<2>::from_angle(a));
  return e;
}

SimParams<2> params(double R, double mu, double dt, double nu0 = 1.0) {
  SimParams<2> p;
  p.radius = R;
  p.mu = mu;
  p.dt = dt;
  p.nu = FrequencySpec::constant(nu0);
  return p;
}

double angle_between(const Direction<2>& a, const Direction<2>& b) { return std::acos(std::clamp(dot(a.vec(), b.vec()), -1.0, 1.0)); }

}  // namespace

TEST(Neighbors, SingleParticleSeesItself) {
  const auto e = make_ensemble({0.3}, {0.4});
  const auto J = neighbor_flux(e, params(0.1, 0, 0.01), 0);
  EXPECT_DOUBLE_EQ(J[0], std::cos(0.4));
  EXPECT_DOUBLE_EQ(J[1], std::sin(0.4));
}

TEST(Neighbors, DistantPairAndTriple) {
  const auto pair = make_ensemble({0.1, 0.6}, {0.0, 2.0});
  for (std::size_t i = 0; i < 2; ++i) {
    const auto J = neighbor_flux(pair, params(0.1, 0, 0.01), i);
    EXPECT_NEAR(norm(J - pair.directions[i].vec()), 0.0, 1e-15);
  }
  const auto tri = make_ensemble({0.5, 0.52, 0.55}, {0.0, M_PI / 2, M_PI});
  for (std::size_t i = 0; i < 3; ++i) {
    const auto J = neighbor_flux(tri, params(0.1, 0, 0.01), i);
    EXPECT_NEAR(J[0], 0.0, 1e-15);
    EXPECT_NEAR(J[1], 1.0, 1e-15);
  }
}

TEST(Neighbors, PeriodicImages) {
  const auto e = make_ensemble({0.02, 0.97}, {0.0, M_PI / 2});
  const auto J = neighbor_flux(e, params(0.1, 0, 0.01), 0);
  EXPECT_NEAR(J[0], 1.0, 1e-15);
  EXPECT_NEAR(J[1], 1.0, 1e-15);
}

TEST(Neighbors, MethodsAgree) {
  for (double R : {0.03, 0.1, 0.45, 0.6}) {
    auto e = sample_ensemble<2>(2000, 1, 1.0, 99, [](const double*, const Vec<2>&) { return 1.0; }, 1.0);
    const NeighborSearch<2> cells(e, R, NeighborMethod::CellList), sweep(e, R, NeighborMethod::Sweep);
    const auto a = cells.all(), b = sweep.all();
    for (std::size_t i = 0; i < e.size(); ++i) {
      EXPECT_LT(norm(a[i] - b[i]), 1e-9) << "R = " << R << " i = " << i;
      EXPECT_EQ(b[i], sweep.flux(i));
    }
  }
}

TEST(Neighbors, TwoDimensionalCellListBruteForce) {
  auto e = sample_ensemble<2>(500, 2, 2.0, 4, [](const double*, const Vec<2>&) { return 1.0; }, 1.0);
  const double R = 0.3;
  const NeighborSearch<2> ns(e, R, NeighborMethod::CellList);
  for (std::size_t i = 0; i < e.size(); i += 7) {
    Vec<2> ref{};
    for (std::size_t j = 0; j < e.size(); ++j) {
      const double dx = min_image(e.x(j, 0) - e.x(i, 0), 2.0), dy = min_image(e.x(j, 1) - e.x(i, 1), 2.0);
      if (dx * dx + dy * dy <= R * R) ref += e.directions[j].vec();
    }
    EXPECT_LT(norm(ns.flux(i) - ref), 1e-12);
  }
  EXPECT_THROW(NeighborSearch<2>(e, R, NeighborMethod::Sweep), DomainError);
}

TEST(SdeStep, IsolatedParticleWithoutNoise) {
  auto e = make_ensemble({0.3}, {0.7}, 1.0);
  const auto p = params(0.1, 0.0, 0.01);
  for (int s = 0; s < 10; ++s) e = sde_step(e, p);
  EXPECT_NEAR(e.directions[0][0], std::cos(0.7), 1e-15);
  EXPECT_NEAR(e.x(0), 0.3 + 0.1 * std::cos(0.7), 1e-14);
  EXPECT_EQ(e.step, 10u);
}

TEST(SdeStep, TwoBodyAlignment) {
  // Each direction turns toward the bisector: d phi / dt = -2 sin(phi / 2).
  auto e = make_ensemble({50.0, 50.01}, {0.0, 2.0}, 100.0);
  const double dt = 0.01;
  const auto p = params(40.0, 0.0, dt);
  double phi = 2.0, prev = angle_between(e.directions[0], e.directions[1]);
  for (int s = 0; s < 50; ++s) {
    e = sde_step(e, p);
    const double now = angle_between(e.directions[0], e.directions[1]);
    EXPECT_LT(now, prev);
    prev = now;
    const double h = dt / 100;
    for (int k = 0; k < 100; ++k) {
      auto rhs = [](double ph) { return -2.0 * std::sin(ph / 2.0); };
      const double k1 = rhs(phi), k2 = rhs(phi + 0.5 * h * k1), k3 = rhs(phi + 0.5 * h * k2), k4 = rhs(phi + h * k3);
      phi += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
  }
  EXPECT_NEAR(prev, phi, 5e-3);
}

TEST(SdeStep, ThreadCountDoesNotChangeResult) {
  auto e = sample_ensemble<2>(3000, 1, 1.0, 17, [](const double*, const Vec<2>&) { return 1.0; }, 1.0);
  auto p1 = params(0.1, 0.3, 1e-2), p4 = p1;
  p4.threads = 4;
  auto a = e, b = e;
  for (int s = 0; s < 5; ++s) {
    a = sde_step(a, p1);
    b = sde_step(b, p4);
  }
  EXPECT_EQ(a.positions, b.positions);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.directions[i].vec(), b.directions[i].vec());
}

TEST(SdeStep, UnitNormPreserved) {
  auto e = sample_ensemble<3>(500, 2, 1.0, 8, [](const double*, const Vec<3>&) { return 1.0; }, 1.0);
  SimParams<3> p;
  p.radius = 0.2;
  p.mu = 1.0;
  p.dt = 1e-2;
  p.nu = FrequencySpec::affine(1.0, 0.5);
  for (int s = 0; s < 200; ++s) {
    e = sde_step(e, p);
    ASSERT_LE(max_norm_defect(e), 1e-12);
  }
}

TEST(SdeStep, PureNoiseBecomesUniform) {
  auto e = sample_ensemble<2>(
      10000, 1, 1.0, 21, [](const double*, const Vec<2>& w) { return std::exp(5.0 * (w[0] - 1.0)); }, 1.0);
  const auto p = params(0.1, 1.0, 1e-2, 0.0);
  for (int s = 0; s < 500; ++s) e = sde_step(e, p);
  std::vector<double> count(16, 0.0);
  Vec<2> mean{};
  for (const auto& d : e.directions) {
    const double u = (std::atan2(d[1], d[0]) + M_PI) / (2 * M_PI);
    count[std::min<std::size_t>(15, static_cast<std::size_t>(u * 16))] += 1;
    mean += d.vec();
  }
  double chi2 = 0.0;
  for (double k : count) chi2 += (k - 625.0) * (k - 625.0) / 625.0;
  const boost::math::chi_squared dist(15);
  EXPECT_LT(chi2, boost::math::quantile(boost::math::complement(dist, 0.01)));
  EXPECT_LT(norm(mean) / 1e4, 4.0 / std::sqrt(1e4));
}

TEST(Rng, CounterStreamsAreReproducible) {
  CounterRng a(1, 2, 3), b(1, 2, 3), c(1, 2, 4);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
  CounterRng g(7, 0, 0);
  double s = 0, s2 = 0;
  for (int i = 0; i < 100000; ++i) {
    const double z = g.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / 1e5, 0.0, 0.02);
  EXPECT_NEAR(s2 / 1e5, 1.0, 0.02);
}

TEST(EmpiricalDensity, OneCellOneAngle) {
  auto e = make_ensemble({0.30, 0.31, 0.32}, {0.0, 0.0, 0.0});
  const SpatialGrid sg(1, 4, 1.0);
  auto ag = std::make_shared<const AngularGrid<2>>(AngularGrid<2>::uniform(8));
  const auto f = empirical_density<2>(e, sg, ag);
  const double expected = 1.0 / (sg.cell_volume() * ag->weight(0));
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(f.at(c, j), (c == 1 && j == 0) ? expected : 0.0);
  EXPECT_NEAR(f.mass(), 1.0, 1e-12);
}

TEST(EmpiricalDensity, UniformWithinStandardErrors) {
  auto e = sample_ensemble<2>(100000, 1, 1.0, 2, [](const double*, const Vec<2>&) { return 1.0; }, 1.0);
  const SpatialGrid sg(1, 8, 1.0);
  auto ag = std::make_shared<const AngularGrid<2>>(AngularGrid<2>::uniform(8));
  for (double bw : {0.0, 1.0}) {
    const auto f = empirical_density<2>(e, sg, ag, bw);
    EXPECT_NEAR(f.mass(), 1.0, 1e-12);
    const double p = 1.0 / 64, density = 1.0 / (2 * M_PI);
    const double se = std::sqrt(p * (1 - p) / 1e5) / p * density;
    for (double v : f.values()) EXPECT_LT(std::fabs(v - density), 5 * se);
  }
}

TEST(Snapshot, EnsembleRoundTrip) {
  auto e = sample_ensemble<3>(100, 2, 1.5, 3, [](const double*, const Vec<3>&) { return 1.0; }, 1.0);
  e.step = 12;
  e.time = 0.12;
  const std::string path = "ensemble_roundtrip.bin";
  write_ensemble(path, e);
  const auto r = read_ensemble<3>(path);
  std::remove(path.c_str());
  EXPECT_EQ(r.positions, e.positions);
  EXPECT_EQ(r.seed, e.seed);
  EXPECT_EQ(r.step, 12u);
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_EQ(r.directions[i].vec(), e.directions[i].vec());
}

TEST(Snapshot, FieldRoundTrip) {
  const SpatialGrid sg(2, 4, 1.0);
  auto ag = std::make_shared<const AngularGrid<2>>(AngularGrid<2>::uniform(8));
  DistributionField<2> f(sg, ag, 0.5);
  for (std::size_t i = 0; i < f.values().size(); ++i) f.values()[i] = std::sin(0.37 * i) + 1.0 / 3.0;
  const std::string path = "field_roundtrip.bin";
  write_snapshot(path, f);
  const auto r = read_snapshot(path);
  std::remove(path.c_str());
  EXPECT_EQ(r.field.values(), f.values());
  EXPECT_EQ(r.field.time(), 0.5);
  EXPECT_TRUE(r.field.space() == sg);
}
