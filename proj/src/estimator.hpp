#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "effect_mode.hpp"
#include "learners.hpp"
#include "nuisance.hpp"
#include "weighting.hpp"

namespace wmdl {

// Direct pseudo-outcome regressions (pooled / single-source, weighted or
// not) plus the standard meta-learner baselines.
enum class Method { wmdl, mdl, wdl, dl, t_learner, s_learner, x_learner };

Method method_from_string(const std::string& s);
std::string to_string(Method m);
bool is_direct(Method m);         // wmdl / mdl / wdl / dl
bool is_single_source(Method m);  // wdl / dl

struct EstimatorSpec {
  Method method = Method::wmdl;
  EffectMode effect = EffectMode::homogeneous;
  bool include_source_indicator = false;  // meta-learners' source-aware variants
  WeightSpec weight;                      // kind forced constant for mdl / dl
  LearnerSpec nuisance_learner;           // conditional means, propensities, variances
  LearnerSpec final_learner;              // the effect regression itself
  int n_folds = 3;
  NuisanceOptions nuisance;
  std::uint64_t seed = 0;
  // Treatment probability known by design (randomized sources): a function of
  // (a, x, source). Configs may give the constant arm probability instead;
  // an installed function is not serialized.
  KnownPropensityFn known_propensity;
  std::optional<double> known_propensity_value;

  void validate() const;
};

EstimatorSpec estimator_spec_from_json(const nlohmann::json& j);
nlohmann::json estimator_spec_to_json(const EstimatorSpec& spec);

nlohmann::json weight_spec_to_json(const WeightSpec& w);
WeightSpec weight_spec_from_json(const nlohmann::json& j);

// One observed row prepared for the final regression: y_tilde = a (y - m_hat)
// and w_tilde = weight / p_hat(a | x, z).
struct PseudoSample {
  Eigen::VectorXd x;
  int source_id = 0;
  double y_tilde = 0.0;
  double w_tilde = 0.0;
};

std::vector<PseudoSample> build_pseudo_samples(const MultiSourceData& data,
                                               const NuisanceSet& nuis,
                                               const BatchWeights& weights,
                                               const EstimatorSpec& spec);

enum class EstimateMode { homogeneous, heterogeneous, single_source, transfer };
EstimateMode estimate_mode_from_string(const std::string& s);
std::string to_string(EstimateMode m);

// A fitted treatment effect function delta; the treatment contrast (CATE) is
// tau = 2 delta. Heterogeneous estimates take (x, source); the rest take x.
struct CateEstimate {
  Method method = Method::wmdl;
  EstimateMode mode = EstimateMode::homogeneous;
  int target_source = 1;
  int d_x = 0;
  std::vector<int> source_ids;  // one-hot order when the source is an input

  RegressionModel model;           // direct methods; outcome model of s_learner
  RegressionModel mu_pos, mu_neg;  // per-arm outcome models (t_learner)
  RegressionModel d_pos, d_neg;    // per-arm effect stages (x_learner, tau scale)
  ProbabilityModel g;              // x_learner combination propensity, over x only

  bool needs_source() const { return mode == EstimateMode::heterogeneous; }

  double predict_delta(const Eigen::VectorXd& x) const;  // at the target source
  double predict_delta(const Eigen::VectorXd& x, int source_id) const;
  double predict_tau(const Eigen::VectorXd& x) const { return 2.0 * predict_delta(x); }
  double predict_tau(const Eigen::VectorXd& x, int source_id) const {
    return 2.0 * predict_delta(x, source_id);
  }
  Eigen::VectorXd predict_delta(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd predict_delta(const Eigen::MatrixXd& x, int source_id) const;

  nlohmann::json to_json() const;
  static CateEstimate from_json(const nlohmann::json& j);
};

// The full pipeline: folds, nuisances, weights, pseudo-outcomes, final
// regression (direct methods), or the meta-learner constructions.
CateEstimate fit(const MultiSourceData& data, const EstimatorSpec& spec);

// Direct methods with caller-supplied nuisances (aligned with data.sources),
// for stress tests with true or deliberately corrupted components. No source
// restriction happens here; single-source methods expect restricted data.
CateEstimate fit_with_nuisances(const MultiSourceData& data, const EstimatorSpec& spec,
                                const NuisanceSet& nuis);

}  // namespace wmdl
