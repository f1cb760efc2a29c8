#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace wmdl {

enum class LearnerKind { linear, poly2, gbt };

LearnerKind learner_kind_from_string(const std::string& s);
std::string to_string(LearnerKind k);

struct GbtParams {
  double learning_rate = 0.05;
  int max_depth = 3;
  int n_rounds = 400;
  int min_leaf = 10;
  double subsample = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LearnerSpec {
  LearnerKind kind = LearnerKind::gbt;
  double ridge = 1e-6;  // L2 penalty for the basis learners
  GbtParams gbt;

  void validate() const;
};

LearnerSpec learner_spec_from_json(const nlohmann::json& j);
nlohmann::json learner_spec_to_json(const LearnerSpec& s);

// Basis expansion used by the closed-form learners: intercept, linears, and
// for poly2 all degree-2 monomials.
int expanded_dim(LearnerKind kind, int d_in);
Eigen::VectorXd expand_features(LearnerKind kind, const Eigen::VectorXd& x);
Eigen::MatrixXd expand_features(LearnerKind kind, const Eigen::MatrixXd& x);

// Binary regression tree over raw features, stored as flat arrays.
struct Tree {
  std::vector<int> feature;       // split feature, -1 at leaves
  std::vector<double> threshold;  // go left when x[feature] < threshold
  std::vector<int> left, right;
  std::vector<double> value;  // leaf increment (learning rate already applied)

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  double predict_row(const Eigen::MatrixXd& x, int row) const;
};

struct GbtModel {
  double base = 0.0;
  std::vector<Tree> trees;
  double predict_raw(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

class RegressionModel {
 public:
  RegressionModel() = default;
  double predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  int input_dim() const { return d_in_; }
  LearnerKind kind() const { return kind_; }
  const Eigen::VectorXd& coefficients() const { return theta_; }
  const std::vector<double>& train_curve() const { return train_curve_; }

  nlohmann::json to_json() const;
  static RegressionModel from_json(const nlohmann::json& j);

  friend RegressionModel fit_regression(const LearnerSpec&, const Eigen::MatrixXd&,
                                        const Eigen::VectorXd&, const Eigen::VectorXd&);

 private:
  LearnerKind kind_ = LearnerKind::linear;
  int d_in_ = 0;
  Eigen::VectorXd theta_;  // linear / poly2
  GbtModel gbt_;
  std::vector<double> train_curve_;  // per-round weighted loss, gbt only
};

class ProbabilityModel {
 public:
  ProbabilityModel() = default;
  // P(label = 1 | x), clipped to [clip, 1 - clip].
  double predict(const Eigen::VectorXd& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  int input_dim() const { return d_in_; }
  double clip() const { return clip_; }
  const Eigen::VectorXd& coefficients() const { return theta_; }

  nlohmann::json to_json() const;
  static ProbabilityModel from_json(const nlohmann::json& j);

  friend ProbabilityModel fit_probability(const LearnerSpec&, const Eigen::MatrixXd&,
                                          const std::vector<int>&, const Eigen::VectorXd&,
                                          double);

 private:
  LearnerKind kind_ = LearnerKind::linear;
  int d_in_ = 0;
  double clip_ = 0.01;
  Eigen::VectorXd theta_;
  GbtModel gbt_;
};

// Weighted least squares with ridge penalty: minimizes
//   sum_i w_i (y_i - phi(x_i)' theta)^2 + ridge * |theta|^2.
// ridge = 0 falls back to the minimal-norm least-squares solution.
// For gbt, squared-loss boosting (leaf = weighted mean residual).
// Zero-weight rows never influence the fit; negative weights are rejected.
RegressionModel fit_regression(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& y, const Eigen::VectorXd& w);

// Penalized logistic regression via damped Newton (basis learners) or
// logistic boosting (gbt). Labels are 0/1; predictions clipped to
// [clip, 1-clip].
ProbabilityModel fit_probability(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                                 const std::vector<int>& label, const Eigen::VectorXd& w,
                                 double clip = 0.01);

struct CrossFitRegression {
  Eigen::VectorXd oof;                  // out-of-fold prediction per row
  std::vector<RegressionModel> models;  // one per fold
  double predict_mean(const Eigen::VectorXd& x) const;  // average of fold models
};

struct CrossFitProbability {
  Eigen::VectorXd oof;
  std::vector<ProbabilityModel> models;
  double predict_mean(const Eigen::VectorXd& x) const;
};

// Each row's out-of-fold value comes from the model trained with that row's
// fold held out, so oof[i] never depends on (y_i, w_i).
CrossFitRegression cross_fit_regression(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                        const std::vector<int>& fold, int n_folds);

CrossFitProbability cross_fit_probability(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                                          const std::vector<int>& label,
                                          const Eigen::VectorXd& w, const std::vector<int>& fold,
                                          int n_folds, double clip = 0.01);

}  // namespace wmdl
