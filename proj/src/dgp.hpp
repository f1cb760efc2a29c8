#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "effect_mode.hpp"

#include <nlohmann/json.hpp>

namespace wmdl {

enum class Scenario { shared_only, source_specific };  // without / with per-source covariates

Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);

struct DgpConfig {
  int n_sources = 10;
  int n_total = 3000;
  Scenario scenario = Scenario::shared_only;
  EffectMode effect = EffectMode::homogeneous;
  double sigma_mu = 0.3;    // spread of per-source covariate location shifts
  double sigma_main = 1.0;  // spread of per-source main-effect perturbations
  double sigma_eps = 0.1;   // outcome noise
  std::string main_effect_id = "poly-1";
  std::uint64_t seed = 0;

  void validate() const;
};

DgpConfig dgp_config_from_json(const nlohmann::json& j);
nlohmann::json dgp_config_to_json(const DgpConfig& c);

// Half the treatment effect contrast for one covariate draw; tau = 2 * delta.
double true_delta_hom(const Eigen::VectorXd& x);
double true_delta_het(const Eigen::VectorXd& x, int source_id);

// Ground truth attached to a simulated dataset: enough to evaluate the
// oracle outcome model, propensity, effect surface, and covariate densities.
// Every per-source vector is indexed so that entry 0 belongs to source 1.
struct DgpTruth {
  DgpConfig config;
  std::vector<Eigen::VectorXd> beta;       // per-source propensity coefficients over (x[,z])
  std::vector<Eigen::VectorXd> mu;         // covariate location per source
  std::vector<Eigen::VectorXd> m_shift;    // per-source main-effect coefficients on (1, x1, x2^2, x1*x3)

  double delta(const Eigen::VectorXd& x, int source_id) const;
  double main_effect(const Eigen::VectorXd& x, const Eigen::VectorXd& z, int source_id) const;
  double propensity_pos(const Eigen::VectorXd& x, const Eigen::VectorXd& z, int source_id) const;
  double outcome_mean(const Eigen::VectorXd& x, const Eigen::VectorXd& z, int a,
                      int source_id) const;
  double x_density(const Eigen::VectorXd& x, int source_id) const;

  nlohmann::json to_json() const;
};

struct SimulatedData {
  MultiSourceData data;
  DgpTruth truth;
};

// K-source draw: source 1 covariates are uniform on [-1,1]^4, the others are
// unit-variance normals with random location shifts, truncated per coordinate
// to [-1,1]. Each source confounds treatment through its own logistic
// propensity and perturbs the shared main effect by its own intercept and x1
// tilt. World parameters and each source's rows come from separate seed
// streams, so the same seed yields the same world at every sample size and a
// smaller draw is a row-prefix of a larger one.
SimulatedData simulate(const DgpConfig& config);

// Fresh covariate draws from one source's distribution (for held-out grids).
Eigen::MatrixXd sample_covariates(const DgpTruth& truth, int source_id, int n,
                                  std::uint64_t seed);

}  // namespace wmdl
