#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dgp.hpp"
#include "estimator.hpp"

#include <nlohmann/json.hpp>

namespace wmdl {

using DeltaFn = std::function<double(const Eigen::VectorXd&)>;

// Average squared error of a half-contrast predictor over held-out points
// drawn from the target population.
double mse(const DeltaFn& predict, const Eigen::MatrixXd& test_x, const DeltaFn& truth);
double mse(const CateEstimate& estimate, const Eigen::MatrixXd& test_x, const DeltaFn& truth);

struct NamedEstimator {
  std::string name;
  EstimatorSpec spec;
};

struct ExperimentConfig {
  DgpConfig dgp;  // propensity coefficients and source locations redrawn every replication
  std::vector<NamedEstimator> estimators;
  int replications = 20;
  int n_test = 1000;
  std::uint64_t master_seed = 0;
  int threads = 1;
  // Mean-MSE ordering assertions (first name expected strictly below second),
  // evaluated on demand by ordering_failures.
  std::vector<std::pair<std::string, std::string>> expect_less;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

struct EstimatorResult {
  std::string name;
  std::vector<std::optional<double>> mses;  // one per replication; empty cell = failed fit
  double mean_mse = 0.0;                    // over completed replications
  double sd_mse = 0.0;                      // sample sd (n-1 denominator); 0 below 2 values
  int n_missing = 0;
  double wall_seconds = 0.0;  // total fit+score time; logged, never written to report files
};

struct ExperimentReport {
  int replications = 0;
  std::uint64_t master_seed = 0;
  std::vector<EstimatorResult> estimators;

  const EstimatorResult& row(const std::string& name) const;
};

// Fits every configured estimator on R independently simulated training sets
// and scores each on a fresh target-source test draw. A failed fit is
// recorded as a missing cell without stopping the run; an estimator missing
// more than 20% of its replications fails the whole run. Data and seeds for
// replication r depend only on (master_seed, r), so adding or removing
// estimators never changes anyone else's numbers.
ExperimentReport run_replications(const ExperimentConfig& config);

// Double-robustness stress grid: the first configured estimator is refit with
// hand-built nuisance functions -- both correct, outcome model zeroed,
// treatment probability forced to 1/2, and both corruptions at once -- at each
// requested sample size. Weights use the true ingredients in every arm, so
// only the pseudo-outcome inputs vary. Requires the shared-covariates design
// and a direct pseudo-outcome method.
ExperimentReport robustness_suite(const ExperimentConfig& base,
                                  const std::vector<int>& sizes = {2000, 8000});

// json -> one file at `path`; csv -> `<stem>_summary.csv` (one row per
// estimator) and `<stem>_long.csv` (one row per replication, missing cells as
// NA). Returns the paths written.
std::vector<std::string> emit_report(const ExperimentReport& report, const std::string& format,
                                     const std::string& path);

nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

// Human-readable violations of "first name's mean MSE is strictly below the
// second's"; empty when every listed pair is ordered as expected.
std::vector<std::string> ordering_failures(
    const ExperimentReport& report,
    const std::vector<std::pair<std::string, std::string>>& expect_less);

}  // namespace wmdl
