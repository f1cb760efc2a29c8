#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "dataset.hpp"
#include "learners.hpp"

namespace wmdl {

// (x, z) feature helpers shared by the nuisance and effect stages.
Eigen::MatrixXd xz_matrix(const SourceData& s);
Eigen::VectorXd xz_vector(const Eigen::VectorXd& x, const Eigen::VectorXd& z);

struct NuisanceOptions {
  double prob_clip = 0.01;      // fitted probabilities live in [clip, 1-clip]
  double variance_floor = 1e-4; // fitted residual second moments are floored
};

using MeanFn = std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& z)>;
using ArmMeanFn =
    std::function<double(int a, const Eigen::VectorXd& x, const Eigen::VectorXd& z)>;
using ArmProbFn =
    std::function<double(int a, const Eigen::VectorXd& x, const Eigen::VectorXd& z)>;
using MargProbFn = std::function<double(int a, const Eigen::VectorXd& x)>;
using ArmMargFn = std::function<double(int a, const Eigen::VectorXd& x)>;

// Treatment probabilities known by design (randomized sources); a function of
// the shared covariates only.
using KnownPropensityFn =
    std::function<double(int a, const Eigen::VectorXd& x, int source_id)>;

struct MainEffectFit {
  std::vector<RegressionModel> mu_pos_models, mu_neg_models;  // per fold, over (x, z)
  Eigen::VectorXd m_oof, mu_pos_oof, mu_neg_oof;  // m = arm average

  MeanFn mean_fn() const;
  ArmMeanFn arm_mean_fn() const;
};

struct PropensityFit {
  std::vector<ProbabilityModel> models;  // per fold
  Eigen::VectorXd pos_oof;               // P(A=+1 | features), clipped
  bool uses_z = false;
};

struct VarianceFit {
  std::vector<RegressionModel> pos_models, neg_models;  // per fold, over x
  Eigen::VectorXd pos_oof, neg_oof;                     // floored
};

struct SelectionFit {
  std::vector<int> source_ids;
  std::vector<std::vector<ProbabilityModel>> models;  // [source column][fold]
  std::vector<Eigen::MatrixXd> oof;  // per source: rows x columns, floored + renormalized
};

// Conditional outcome mean E[y | x, z] on one source plus per-arm means,
// cross-fitted over the given folds.
MainEffectFit estimate_main_effect(const SourceData& s, const LearnerSpec& spec,
                                   const std::vector<int>& fold, int n_folds);

// P(A = +1 | x [, z]) on one source.
PropensityFit estimate_treat_propensity(const SourceData& s, const LearnerSpec& spec,
                                        const std::vector<int>& fold, int n_folds, bool use_z,
                                        double clip);

// Per-arm residual second moments E[(y - mu_a)^2 | x] on one source. The
// residual targets inside fold g's training set use the arm means indexed by
// g, so a row's out-of-fold value never sees that row's outcome.
VarianceFit estimate_conditional_variance(
    const SourceData& s, const LearnerSpec& spec, const std::vector<int>& fold, int n_folds,
    const std::function<double(int fold_model, int a, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& z)>& arm_mean,
    double floor);

// P(S = s | x) over all sources, one-vs-rest, renormalized with a floor so
// every component is at least `clip` and the vector sums to one.
SelectionFit estimate_selection_propensity(const MultiSourceData& data, const LearnerSpec& spec,
                                           const FoldAssignment& folds, double clip);

Eigen::VectorXd floor_and_normalize(Eigen::VectorXd p, double eps);

// Mean of g(x) * (1/p(a_i | x_i, z_i) - 1) * effect(x_i, z_i) over one
// source's rows, for each probe g. Zero (for every g in a rich class) is the
// balance condition under which a misspecified propensity still yields a
// consistent effect fit.
Eigen::VectorXd partial_balance_scores(
    const SourceData& s, const ArmProbFn& p_tilde, const MeanFn& effect,
    const std::vector<std::function<double(const Eigen::VectorXd&)>>& g_list);

struct SourceNuisance {
  int source_id = 0;
  MeanFn m_hat;
  ArmMeanFn arm_mean;
  ArmProbFn p_full;
  MargProbFn p_marg;
  ArmMargFn v_hat;
  Eigen::VectorXd m_oof, mu_pos_oof, mu_neg_oof;
  Eigen::VectorXd p_pos_full_oof, p_pos_marg_oof;
  Eigen::VectorXd v_pos_oof, v_neg_oof;
};

struct NuisanceSet {
  std::vector<int> source_ids;  // aligned with data.sources
  std::vector<SourceNuisance> per_source;
  std::vector<double> source_share;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& x)> selection;  // sums to 1
  std::vector<Eigen::MatrixXd> selection_oof;
  bool has_selection = false;
  // When supplied (oracle runs), covariate-shift ratios come straight from
  // these densities and may be exactly zero off-support.
  std::function<double(int source_id, const Eigen::VectorXd& x)> density;
  bool has_density = false;
  NuisanceOptions options;

  int index_of(int source_id) const;
};

struct NuisancePlan {
  // p_marg / v / selection are only needed by information-aware weights;
  // constant-weight estimators skip them.
  bool weight_ingredients = true;
  std::optional<KnownPropensityFn> known_propensity;
};

NuisanceSet estimate_nuisances(const MultiSourceData& data, const LearnerSpec& spec,
                               const FoldAssignment& folds, const NuisanceOptions& options,
                               const NuisancePlan& plan);

// Assemble a set from user-supplied functions (ground truth or corrupted
// variants); out-of-fold columns are filled by evaluation, probabilities are
// not refloored, and the variance floor still applies.
struct OracleComponents {
  std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& z, int s)> m;
  std::function<double(int a, const Eigen::VectorXd& x, const Eigen::VectorXd& z, int s)> p_full;
  std::function<double(int a, const Eigen::VectorXd& x, int s)> p_marg;
  std::function<double(int a, const Eigen::VectorXd& x, int s)> v;
  std::function<double(const Eigen::VectorXd& x, int s)> density;  // optional
  std::function<double(int a, const Eigen::VectorXd& x, const Eigen::VectorXd& z, int s)>
      arm_mean;  // optional
};

NuisanceSet make_oracle_nuisances(const MultiSourceData& data, const OracleComponents& parts,
                                  const NuisanceOptions& options = {});

}  // namespace wmdl
