#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "errors.hpp"
#include "learners.hpp"
#include "util.hpp"

using namespace wmdl;

namespace {

struct Problem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y, w;
};

Problem random_problem(int n, int d, std::uint64_t seed, double noise = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> uw(0.2, 2.0);
  Problem p;
  p.x.resize(n, d);
  p.y.resize(n);
  p.w.resize(n);
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < d; ++j) p.x(r, j) = n01(rng);
    p.y[r] = 2.0 - p.x(r, 0) + 0.5 * p.x(r, d - 1) + noise * n01(rng);
    p.w[r] = uw(rng);
  }
  return p;
}

LearnerSpec linear_spec(double ridge) {
  LearnerSpec s;
  s.kind = LearnerKind::linear;
  s.ridge = ridge;
  return s;
}

LearnerSpec gbt_spec(int rounds, int depth, double lr, int min_leaf = 1,
                     double subsample = 1.0, std::uint64_t seed = 0) {
  LearnerSpec s;
  s.kind = LearnerKind::gbt;
  s.gbt.n_rounds = rounds;
  s.gbt.max_depth = depth;
  s.gbt.learning_rate = lr;
  s.gbt.min_leaf = min_leaf;
  s.gbt.subsample = subsample;
  s.gbt.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("ridge coefficients match the closed-form normal equations") {
  const Problem p = random_problem(40, 3, 1);
  const double ridge = 0.7;
  const RegressionModel m = fit_regression(linear_spec(ridge), p.x, p.y, p.w);

  const Eigen::MatrixXd phi = expand_features(LearnerKind::linear, p.x);
  Eigen::MatrixXd a = phi.transpose() * p.w.asDiagonal() * phi;
  a.diagonal().array() += ridge;
  const Eigen::VectorXd want = a.inverse() * (phi.transpose() * (p.w.array() * p.y.array()).matrix());
  REQUIRE(m.coefficients().size() == want.size());
  CHECK((m.coefficients() - want).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("noiseless linear and quadratic targets are recovered exactly") {
  Problem p = random_problem(60, 2, 2, 0.0);
  RegressionModel lin = fit_regression(linear_spec(0.0), p.x, p.y, p.w);
  CHECK((lin.predict(p.x) - p.y).cwiseAbs().maxCoeff() < 1e-10);

  for (int r = 0; r < p.x.rows(); ++r)
    p.y[r] = 1.0 + p.x(r, 0) * p.x(r, 0) - 2.0 * p.x(r, 0) * p.x(r, 1);
  LearnerSpec s;
  s.kind = LearnerKind::poly2;
  s.ridge = 0.0;
  RegressionModel quad = fit_regression(s, p.x, p.y, p.w);
  CHECK((quad.predict(p.x) - p.y).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("an integer weight acts like row replication") {
  const Problem p = random_problem(25, 2, 3);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(25);
  w[7] = 3.0;
  const RegressionModel weighted = fit_regression(linear_spec(0.05), p.x, p.y, w);

  Eigen::MatrixXd x2(27, 2);
  Eigen::VectorXd y2(27);
  x2.topRows(25) = p.x;
  y2.head(25) = p.y;
  for (int k = 0; k < 2; ++k) {
    x2.row(25 + k) = p.x.row(7);
    y2[25 + k] = p.y[7];
  }
  const RegressionModel duplicated =
      fit_regression(linear_spec(0.05), x2, y2, Eigen::VectorXd::Ones(27));
  CHECK((weighted.coefficients() - duplicated.coefficients()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("unpenalized fits ignore a positive rescaling of the weights") {
  const Problem p = random_problem(50, 3, 4);
  const RegressionModel a = fit_regression(linear_spec(0.0), p.x, p.y, p.w);
  const RegressionModel b = fit_regression(linear_spec(0.0), p.x, p.y, 3.7 * p.w);
  CHECK((a.coefficients() - b.coefficients()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rank-deficient unpenalized designs get the minimal-norm solution") {
  Problem p = random_problem(30, 2, 5, 0.0);
  Eigen::MatrixXd x(30, 3);
  x.leftCols(2) = p.x;
  x.col(2) = p.x.col(1);  // duplicated feature
  const RegressionModel m = fit_regression(linear_spec(0.0), x, p.y, p.w);
  REQUIRE(m.coefficients().allFinite());
  // minimal norm splits the shared coefficient evenly
  CHECK(m.coefficients()[2] == doctest::Approx(m.coefficients()[3]).epsilon(1e-8));
  Eigen::VectorXd x0(3);
  x0 << 0.5, -1.0, -1.0;
  Eigen::VectorXd x0base(2);
  x0base << 0.5, -1.0;
  const RegressionModel base = fit_regression(linear_spec(0.0), p.x, p.y, p.w);
  CHECK(m.predict(x0) == doctest::Approx(base.predict(x0base)).epsilon(1e-8));
}

TEST_CASE("zero or negative weight handling") {
  const Problem p = random_problem(20, 2, 6);
  Eigen::VectorXd w = p.w;
  w[3] = -0.5;
  CHECK_THROWS_AS(fit_regression(linear_spec(0.1), p.x, p.y, w), fit_error);
  CHECK_THROWS_AS(fit_regression(linear_spec(0.1), p.x, p.y, Eigen::VectorXd::Zero(20)),
                  fit_error);
}

TEST_CASE("penalized logistic fit satisfies its stationarity condition") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int n = 400;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd w(n);
  std::vector<int> lab(n);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int r = 0; r < n; ++r) {
    x(r, 0) = n01(rng);
    x(r, 1) = n01(rng);
    w[r] = 0.5 + u01(rng);
    lab[r] = u01(rng) < expit(0.8 * x(r, 0) - 1.2 * x(r, 1)) ? 1 : 0;
  }
  const double ridge = 0.5;
  const ProbabilityModel m = fit_probability(linear_spec(ridge), x, lab, w);

  const Eigen::MatrixXd phi = expand_features(LearnerKind::linear, x);
  Eigen::VectorXd resid(n);
  for (int r = 0; r < n; ++r)
    resid[r] = w[r] * (lab[r] - expit(phi.row(r).dot(m.coefficients())));
  const Eigen::VectorXd grad = phi.transpose() * resid - 2.0 * ridge * m.coefficients();
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("logistic recovery and clipping") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int n = 6000;
  Eigen::MatrixXd x(n, 2);
  std::vector<int> lab(n);
  for (int r = 0; r < n; ++r) {
    x(r, 0) = n01(rng);
    x(r, 1) = n01(rng);
    lab[r] = u01(rng) < expit(1.0 * x(r, 0) - 0.5 * x(r, 1)) ? 1 : 0;
  }
  const ProbabilityModel m =
      fit_probability(linear_spec(1e-6), x, lab, Eigen::VectorXd::Ones(n));
  CHECK(m.coefficients()[1] == doctest::Approx(1.0).epsilon(0.15));
  CHECK(m.coefficients()[2] == doctest::Approx(-0.5).epsilon(0.25));

  Eigen::VectorXd far(2);
  far << 50.0, 0.0;
  CHECK(m.predict(far) == 0.99);  // clipped
  far << -50.0, 0.0;
  CHECK(m.predict(far) == 0.01);
}

TEST_CASE("single-class training data is rejected") {
  const Problem p = random_problem(10, 2, 9);
  std::vector<int> lab(10, 1);
  CHECK_THROWS_WITH_AS(fit_probability(linear_spec(0.1), p.x, lab, p.w),
                       doctest::Contains("single-class"), fit_error);
}

TEST_CASE("boosting nails an axis-aligned step function") {
  const int n = 200;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int r = 0; r < n; ++r) {
    x(r, 0) = u(rng);
    x(r, 1) = u(rng);
    y[r] = x(r, 0) < 0.25 ? -1.0 : 3.0;
  }
  const RegressionModel m =
      fit_regression(gbt_spec(3, 2, 1.0), x, y, Eigen::VectorXd::Ones(n));
  CHECK((m.predict(x) - y).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(m.train_curve().back() < 1e-24);
}

TEST_CASE("boosting training loss never increases") {
  const Problem p = random_problem(300, 3, 11, 0.3);
  const RegressionModel m = fit_regression(gbt_spec(80, 3, 0.1, 5), p.x, p.y, p.w);
  const auto& curve = m.train_curve();
  REQUIRE(curve.size() == 80);
  for (size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1] + 1e-12);
  CHECK(curve.back() < curve.front());
}

TEST_CASE("boosting is deterministic given a seed, including subsampling") {
  const Problem p = random_problem(250, 3, 12, 0.5);
  const LearnerSpec s = gbt_spec(40, 3, 0.1, 5, 0.7, 99);
  const RegressionModel a = fit_regression(s, p.x, p.y, p.w);
  const RegressionModel b = fit_regression(s, p.x, p.y, p.w);
  CHECK((a.predict(p.x) - b.predict(p.x)).cwiseAbs().maxCoeff() == 0.0);

  LearnerSpec s2 = s;
  s2.gbt.seed = 100;
  const RegressionModel c = fit_regression(s2, p.x, p.y, p.w);
  CHECK((a.predict(p.x) - c.predict(p.x)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("zero-weight rows do not influence boosting") {
  const Problem p = random_problem(120, 2, 13, 0.2);
  Eigen::MatrixXd x2(123, 2);
  Eigen::VectorXd y2(123), w2(123);
  x2.topRows(120) = p.x;
  y2.head(120) = p.y;
  w2.head(120) = p.w;
  for (int k = 0; k < 3; ++k) {  // wild rows, weight zero
    x2.row(120 + k) = p.x.row(k);
    y2[120 + k] = 1e6;
    w2[120 + k] = 0.0;
  }
  const LearnerSpec s = gbt_spec(30, 3, 0.1, 4);
  const RegressionModel a = fit_regression(s, p.x, p.y, p.w);
  const RegressionModel b = fit_regression(s, x2, y2, w2);
  CHECK((a.predict(p.x) - b.predict(p.x)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("min_leaf at the sample size forces a constant model") {
  const Problem p = random_problem(50, 2, 14);
  const RegressionModel m = fit_regression(gbt_spec(5, 3, 0.5, 50), p.x, p.y, p.w);
  const double wmean = (p.w.array() * p.y.array()).sum() / p.w.sum();
  Eigen::VectorXd pred = m.predict(p.x);
  for (int r = 0; r < 50; ++r) CHECK(pred[r] == doctest::Approx(wmean).epsilon(1e-12));
}

TEST_CASE("logistic boosting tracks a smooth propensity") {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int n = 4000;
  Eigen::MatrixXd x(n, 2);
  std::vector<int> lab(n);
  for (int r = 0; r < n; ++r) {
    x(r, 0) = n01(rng);
    x(r, 1) = n01(rng);
    lab[r] = u01(rng) < expit(x(r, 0) - 0.5 * x(r, 1)) ? 1 : 0;
  }
  const ProbabilityModel m =
      fit_probability(gbt_spec(150, 3, 0.1, 20), x, lab, Eigen::VectorXd::Ones(n));
  double err = 0.0;
  for (int r = 0; r < n; ++r)
    err += std::abs(m.predict(Eigen::VectorXd(x.row(r).transpose())) - expit(x(r, 0) - 0.5 * x(r, 1)));
  CHECK(err / n < 0.06);
}

TEST_CASE("cross-fit values ignore the held-out row's own outcome") {
  const Problem p = random_problem(60, 2, 16, 0.2);
  std::vector<int> fold(60);
  for (int r = 0; r < 60; ++r) fold[r] = r % 3;

  for (const LearnerSpec& s : {linear_spec(1e-6), gbt_spec(25, 2, 0.2, 3)}) {
    const CrossFitRegression base = cross_fit_regression(s, p.x, p.y, p.w, fold, 3);
    Eigen::VectorXd y2 = p.y;
    y2[0] += 100.0;  // row 0 sits in fold 0
    const CrossFitRegression bump = cross_fit_regression(s, p.x, y2, p.w, fold, 3);
    CHECK(base.oof[0] == bump.oof[0]);
    // rows in other folds trained on row 0 must move
    CHECK(base.oof[1] != bump.oof[1]);
  }
}

TEST_CASE("cross-fit catches bad folds") {
  const Problem p = random_problem(12, 2, 17);
  std::vector<int> fold(12, 0);
  CHECK_THROWS_AS(cross_fit_regression(linear_spec(0.1), p.x, p.y, p.w, fold, 2), fit_error);

  for (int r = 0; r < 12; ++r) fold[r] = r % 2;
  std::vector<int> lab(12);
  for (int r = 0; r < 12; ++r) lab[r] = fold[r];  // fold 0 trains on all-ones
  CHECK_THROWS_WITH_AS(cross_fit_probability(linear_spec(0.1), p.x, lab, p.w, fold, 2),
                       doctest::Contains("fold"), fit_error);
}

TEST_CASE("cross-fit new-point prediction averages the fold models") {
  const Problem p = random_problem(90, 2, 18, 0.3);
  std::vector<int> fold(90);
  for (int r = 0; r < 90; ++r) fold[r] = r % 3;
  const CrossFitRegression cf = cross_fit_regression(linear_spec(1e-4), p.x, p.y, p.w, fold, 3);
  Eigen::VectorXd x0(2);
  x0 << 0.3, -0.4;
  double mean = 0.0;
  for (const auto& m : cf.models) mean += m.predict(x0);
  CHECK(cf.predict_mean(x0) == doctest::Approx(mean / 3.0).epsilon(1e-15));
}

TEST_CASE("models round-trip through json") {
  const Problem p = random_problem(80, 3, 19, 0.2);
  for (const LearnerSpec& s : {linear_spec(0.01), gbt_spec(20, 3, 0.1, 4)}) {
    const RegressionModel m = fit_regression(s, p.x, p.y, p.w);
    const RegressionModel back = RegressionModel::from_json(m.to_json());
    CHECK((m.predict(p.x) - back.predict(p.x)).cwiseAbs().maxCoeff() == 0.0);
  }
  std::vector<int> lab(80);
  for (int r = 0; r < 80; ++r) lab[r] = p.y[r] > 2.0 ? 1 : 0;
  const ProbabilityModel pm = fit_probability(gbt_spec(15, 2, 0.2, 4), p.x, lab, p.w, 0.02);
  const ProbabilityModel pback = ProbabilityModel::from_json(pm.to_json());
  CHECK(pback.clip() == 0.02);
  CHECK((pm.predict(p.x) - pback.predict(p.x)).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(RegressionModel::from_json(pm.to_json()), config_error);
  CHECK_THROWS_AS(RegressionModel::from_json(nlohmann::json{{"model", "regression"}}),
                  config_error);
}

TEST_CASE("prediction rejects dimension mismatches") {
  const Problem p = random_problem(30, 3, 20);
  const RegressionModel m = fit_regression(linear_spec(0.1), p.x, p.y, p.w);
  CHECK_THROWS_AS(m.predict(Eigen::VectorXd(Eigen::VectorXd::Zero(2))), config_error);
}

TEST_CASE("learner spec json is strict and round-trips") {
  CHECK_THROWS_AS(learner_spec_from_json({{"kind", "forest"}}), config_error);
  CHECK_THROWS_AS(learner_spec_from_json({{"kind", "gbt"}, {"oops", 1}}), config_error);
  CHECK_THROWS_AS(learner_spec_from_json({{"kind", "gbt"}, {"gbt", {{"subsample", 0.0}}}}),
                  config_error);
  const LearnerSpec s = learner_spec_from_json(
      {{"kind", "poly2"}, {"ridge", 0.5}, {"gbt", {{"n_rounds", 10}}}});
  CHECK(s.kind == LearnerKind::poly2);
  CHECK(s.ridge == 0.5);
  const LearnerSpec back = learner_spec_from_json(learner_spec_to_json(s));
  CHECK(back.gbt.n_rounds == 10);
}
