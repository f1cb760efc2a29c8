#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dgp.hpp"
#include "errors.hpp"
#include "util.hpp"

using namespace wmdl;

TEST_CASE("effect surface spot values") {
  Eigen::VectorXd x(4);
  x << -0.5, 0.2, 0.6, 0.1;
  // below the x1 kink: (x1+x2+x3) + x4
  CHECK(true_delta_hom(x) == doctest::Approx(0.4).epsilon(1e-12));
  // even source: x2 term + jump for x1 < 0
  CHECK(true_delta_het(x, 2) == doctest::Approx(2.2).epsilon(1e-12));
  // odd source <= 7: x1 + x2 + x4 terms
  CHECK(true_delta_het(x, 3) == doctest::Approx(-0.5 + 0.2 + 0.1).epsilon(1e-12));

  Eigen::VectorXd hi(4);
  hi << 0.9, 0.8, 0.7, -0.3;
  CHECK(true_delta_hom(hi) == doctest::Approx(-0.3).epsilon(1e-12));  // kink off
  CHECK(true_delta_het(hi, 8) == 0.0);
}

TEST_CASE("simulate honors sizes, dimensions, and arm coverage") {
  DgpConfig c;
  c.n_sources = 10;
  c.n_total = 3005;
  c.scenario = Scenario::source_specific;
  c.seed = 11;
  const SimulatedData sim = simulate(c);
  REQUIRE(sim.data.n_sources() == 10);
  CHECK(sim.data.d_x == 4);
  CHECK(sim.data.total_rows() == 3005);
  for (int i = 0; i < 10; ++i) {
    const auto& s = sim.data.sources[i];
    CHECK(s.rows() == (i < 5 ? 301 : 300));  // remainder goes to low ids
    CHECK(s.d_z() == 1);
    CHECK(s.has_outcomes);
    for (int r = 0; r < s.rows(); ++r) {
      for (int j = 0; j < 4; ++j) REQUIRE(std::abs(s.x(r, j)) <= 1.0);
      REQUIRE(std::abs(s.z(r, 0)) <= 1.0);
    }
  }
  REQUIRE(sim.truth.beta.size() == 10);
  REQUIRE(sim.truth.m_shift.size() == 10);
  CHECK(sim.truth.beta[0].size() == 5);
  CHECK(sim.truth.beta[0] != sim.truth.beta[1]);  // confounding differs by source

  DgpConfig c1 = c;
  c1.scenario = Scenario::shared_only;
  const SimulatedData sim1 = simulate(c1);
  CHECK(sim1.data.sources[0].d_z() == 0);
  REQUIRE(sim1.truth.beta.size() == 10);
  CHECK(sim1.truth.beta[0].size() == 4);
}

TEST_CASE("zero noise makes outcomes reproduce the truth exactly") {
  DgpConfig c;
  c.n_sources = 4;
  c.n_total = 200;
  c.sigma_eps = 0.0;
  c.effect = EffectMode::heterogeneous;
  c.seed = 3;
  const SimulatedData sim = simulate(c);
  for (const auto& s : sim.data.sources) {
    for (int r = 0; r < s.rows(); ++r) {
      const Eigen::VectorXd x = s.x.row(r);
      const Eigen::VectorXd z = s.z.row(r);
      const double want =
          sim.truth.main_effect(x, z, s.id) + s.a[r] * sim.truth.delta(x, s.id);
      CHECK(s.y[r] == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("same seed reproduces the draw, different seed changes it") {
  DgpConfig c;
  c.n_sources = 3;
  c.n_total = 120;
  c.seed = 99;
  const SimulatedData a = simulate(c);
  const SimulatedData b = simulate(c);
  CHECK(a.truth.beta == b.truth.beta);
  CHECK(a.data.sources[2].y == b.data.sources[2].y);
  CHECK(a.data.sources[2].a == b.data.sources[2].a);

  c.seed = 100;
  const SimulatedData d = simulate(c);
  CHECK(a.data.sources[0].y != d.data.sources[0].y);
}

TEST_CASE("covariate densities integrate to one over the box and vanish outside") {
  DgpConfig c;
  c.n_sources = 3;
  c.n_total = 120;
  c.seed = 5;
  const SimulatedData sim = simulate(c);

  Eigen::VectorXd inside = Eigen::VectorXd::Zero(4);
  CHECK(sim.truth.x_density(inside, 1) == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
  Eigen::VectorXd outside(4);
  outside << 1.2, 0.0, 0.0, 0.0;
  CHECK(sim.truth.x_density(outside, 1) == 0.0);
  CHECK(sim.truth.x_density(outside, 2) == 0.0);

  // Each per-coordinate factor of the source-2 density integrates to 1:
  // along the axis x = v*e_j the joint equals f_j(v) * f0 / f_j(0), so
  // integrating joint/f0 over v gives 1/f_j(0).
  const Eigen::VectorXd mu = sim.truth.mu[1];
  const double f0 = sim.truth.x_density(Eigen::VectorXd::Zero(4), 2);
  REQUIRE(f0 > 0.0);
  for (int j = 0; j < 4; ++j) {
    const int grid = 4000;
    double integral = 0.0;
    for (int g = 0; g < grid; ++g) {
      const double v = -1.0 + 2.0 * (g + 0.5) / grid;
      Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
      x[j] = v;
      integral += sim.truth.x_density(x, 2) / f0 * (2.0 / grid);
    }
    // integral of f_j(v)/f_j(0) dv times f_j(0) must be 1
    const double fj0 = std::exp(-0.5 * mu[j] * mu[j]) / std::sqrt(2.0 * M_PI) /
                       (0.5 * std::erfc(-(1.0 - mu[j]) / std::sqrt(2.0)) -
                        0.5 * std::erfc(-(-1.0 - mu[j]) / std::sqrt(2.0)));
    CHECK(integral * fj0 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("average squared homogeneous effect on the target matches its closed form") {
  // E[((x1+x2+x3) 1{x1<1/2} + x4)^2] under uniform[-1,1]^4 is 49/48.
  DgpConfig c;
  c.n_sources = 2;
  c.n_total = 100;
  c.seed = 17;
  const SimulatedData sim = simulate(c);
  const Eigen::MatrixXd x = sample_covariates(sim.truth, 1, 200000, 123);
  double acc = 0.0;
  for (int r = 0; r < x.rows(); ++r) {
    const double d = true_delta_hom(x.row(r));
    acc += d * d;
  }
  acc /= x.rows();
  CHECK(acc == doctest::Approx(49.0 / 48.0).epsilon(0.02));
}

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_AS(dgp_config_from_json({{"n_sources", 10}, {"typo", 1}}), config_error);
  CHECK_THROWS_AS(dgp_config_from_json({{"scenario", "III"}}), config_error);
  CHECK_THROWS_AS(dgp_config_from_json({{"main_effect", "poly-9"}}), config_error);
  CHECK_THROWS_AS(dgp_config_from_json({{"n_sources", 10}, {"n_total", 5}}), config_error);

  const DgpConfig c = dgp_config_from_json(
      {{"scenario", "II"}, {"effect", "het"}, {"n_total", 400}, {"n_sources", 4}, {"seed", 9}});
  CHECK(c.scenario == Scenario::source_specific);
  CHECK(c.effect == EffectMode::heterogeneous);
  const nlohmann::json echo = dgp_config_to_json(c);
  CHECK(echo.at("scenario") == "source-specific");
  CHECK(dgp_config_from_json(echo).n_total == 400);
}

TEST_CASE("propensity oracle matches the logistic form") {
  DgpConfig c;
  c.n_sources = 2;
  c.n_total = 100;
  c.scenario = Scenario::source_specific;
  c.seed = 21;
  const SimulatedData sim = simulate(c);
  Eigen::VectorXd x(4);
  x << 0.3, -0.2, 0.8, -0.9;
  Eigen::VectorXd z(1);
  z << 0.4;
  Eigen::VectorXd f(5);
  f << x, z;
  for (int s = 1; s <= 2; ++s) {
    CHECK(sim.truth.propensity_pos(x, z, s) ==
          doctest::Approx(expit(f.dot(sim.truth.beta[s - 1]))).epsilon(1e-12));
  }
  CHECK(sim.truth.propensity_pos(x, z, 1) != sim.truth.propensity_pos(x, z, 2));
}

TEST_CASE("per-source main-effect tilt spans the fixed basis (1, x1, x2^2, x1*x3)") {
  DgpConfig c;
  c.n_sources = 6;
  c.n_total = 240;
  c.seed = 31;
  const SimulatedData sim = simulate(c);
  Eigen::VectorXd x(4);
  x << 0.7, -0.4, 0.1, 0.5;
  const Eigen::VectorXd z(0);
  // Subtracting each source's own tilt must leave a source-free base surface.
  const auto base = [&](int s) {
    const Eigen::VectorXd& t = sim.truth.m_shift[s - 1];
    return sim.truth.main_effect(x, z, s) - t[0] - t[1] * x[0] - t[2] * x[1] * x[1] -
           t[3] * x[0] * x[2];
  };
  for (int s = 2; s <= 6; ++s) CHECK(base(s) == doctest::Approx(base(1)).epsilon(1e-12));
  CHECK(sim.truth.main_effect(x, z, 1) != sim.truth.main_effect(x, z, 2));
}

TEST_CASE("a smaller draw is a row-prefix of a larger one at the same seed") {
  DgpConfig big;
  big.n_sources = 4;
  big.n_total = 800;
  big.scenario = Scenario::source_specific;
  big.sigma_eps = 0.1;
  big.seed = 77;
  DgpConfig small = big;
  small.n_total = 200;
  const SimulatedData lo = simulate(small);
  const SimulatedData hi = simulate(big);
  CHECK(lo.truth.beta == hi.truth.beta);
  CHECK(lo.truth.mu == hi.truth.mu);
  CHECK(lo.truth.m_shift == hi.truth.m_shift);
  for (int i = 0; i < 4; ++i) {
    const auto& a = lo.data.sources[i];
    const auto& b = hi.data.sources[i];
    REQUIRE(a.rows() == 50);
    REQUIRE(b.rows() == 200);
    CHECK(a.x == b.x.topRows(50));
    CHECK(a.z == b.z.topRows(50));
    for (int r = 0; r < 50; ++r) {
      REQUIRE(a.a[r] == b.a[r]);
      REQUIRE(a.y[r] == b.y[r]);
    }
  }
}
