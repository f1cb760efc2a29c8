#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "nuisance.hpp"

namespace wmdl {

// transfer = the information weight pointed at a covariates-only target
// source, for carrying effects over to a population without outcome data.
enum class WeightKind { constant, information, transfer };

WeightKind weight_kind_from_string(const std::string& s);
std::string to_string(WeightKind k);

struct WeightSpec {
  WeightKind kind = WeightKind::information;
  int target_source = 1;
  double cap_quantile = 0.995;  // raw weights are capped at this pooled quantile

  void validate() const;
};

// One observed row's weight, decomposed into the covariate-shift ratio
// toward the target population and the per-source precision term
//   1 / (v_pos/p_pos + v_neg/p_neg).
// The shift term is identically one on the target source itself.
struct WeightComponents {
  double shift = 1.0;
  double info = 1.0;
  double raw = 1.0;
};

WeightComponents row_weight(const MultiSourceData& data, const NuisanceSet& nuis,
                            const WeightSpec& spec, int source_index, int row);

struct BatchWeights {
  // capped and normalized to pooled mean one; zeros are preserved
  Eigen::VectorXd weights;
  std::vector<WeightComponents> components;  // raw, pre-cap
  std::vector<int> source_index, row;        // pooled-row bookkeeping
  double cap = std::numeric_limits<double>::infinity();
};

// Weights for every outcome row, pooled in source order. Rows of a
// covariates-only target contribute no weight (they carry no outcomes).
BatchWeights batch_weights(const MultiSourceData& data, const NuisanceSet& nuis,
                           const WeightSpec& spec);

}  // namespace wmdl
