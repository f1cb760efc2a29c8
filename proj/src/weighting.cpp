#include "weighting.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace wmdl {

WeightKind weight_kind_from_string(const std::string& s) {
  if (s == "constant") return WeightKind::constant;
  if (s == "information" || s == "information_aware") return WeightKind::information;
  if (s == "transfer") return WeightKind::transfer;
  throw config_error("unknown weight kind '" + s + "' (want constant|information|transfer)");
}

std::string to_string(WeightKind k) {
  switch (k) {
    case WeightKind::constant: return "constant";
    case WeightKind::information: return "information";
    default: return "transfer";
  }
}

void WeightSpec::validate() const {
  if (!(cap_quantile > 0.0) || cap_quantile > 1.0)
    throw config_error("weight cap quantile must be in (0, 1]");
}

WeightComponents row_weight(const MultiSourceData& data, const NuisanceSet& nuis,
                            const WeightSpec& spec, int source_index, int row) {
  WeightComponents wc;
  if (spec.kind == WeightKind::constant) return wc;

  const SourceData& s = data.sources[source_index];
  if (!s.has_outcomes)
    throw config_error("weights are defined for outcome rows only (source " +
                       std::to_string(s.id) + ")");
  const int target_idx = data.source_index(spec.target_source);
  if (target_idx < 0)
    throw config_error("weight target source " + std::to_string(spec.target_source) +
                       " not in the data");

  if (s.id == spec.target_source) {
    wc.shift = 1.0;  // exact by construction
  } else if (nuis.has_density) {
    const Eigen::VectorXd x = s.x.row(row);
    const double f_t = nuis.density(spec.target_source, x);
    const double f_s = nuis.density(s.id, x);
    if (f_t < 0.0 || f_s <= 0.0)
      throw fit_error("invalid density values at source " + std::to_string(s.id));
    wc.shift = f_t / f_s;  // exactly zero off the target's support
  } else if (nuis.has_selection) {
    const int si = nuis.index_of(s.id), ti = nuis.index_of(spec.target_source);
    const Eigen::MatrixXd& pi = nuis.selection_oof[source_index];
    const double pi_s = pi(row, si), pi_t = pi(row, ti);
    wc.shift = (nuis.source_share[si] / nuis.source_share[ti]) * (pi_t / pi_s);
  } else {
    throw config_error(
        "information weights need selection probabilities or densities for the shift term");
  }

  const SourceNuisance& ns = nuis.per_source[source_index];
  if (ns.p_pos_marg_oof.size() != s.rows() || ns.v_pos_oof.size() != s.rows())
    throw config_error("information weights need marginal propensity and variance estimates");
  const double p_pos = ns.p_pos_marg_oof[row];
  const double p_neg = 1.0 - p_pos;
  if (!(p_pos > 0.0) || !(p_neg > 0.0))
    throw fit_error("degenerate treatment probability in source " + std::to_string(s.id));
  wc.info = 1.0 / (ns.v_pos_oof[row] / p_pos + ns.v_neg_oof[row] / p_neg);
  wc.raw = wc.shift * wc.info;
  return wc;
}

BatchWeights batch_weights(const MultiSourceData& data, const NuisanceSet& nuis,
                           const WeightSpec& spec) {
  spec.validate();
  if (spec.kind == WeightKind::transfer) {
    const int t = data.source_index(spec.target_source);
    if (t < 0 || data.sources[t].has_outcomes)
      throw config_error("transfer weights need a covariates-only target source");
  }
  BatchWeights out;
  for (int i = 0; i < data.n_sources(); ++i) {
    const SourceData& s = data.sources[i];
    if (!s.has_outcomes) continue;
    for (int r = 0; r < s.rows(); ++r) {
      out.components.push_back(row_weight(data, nuis, spec, i, r));
      out.source_index.push_back(i);
      out.row.push_back(r);
    }
  }
  const int n = static_cast<int>(out.components.size());
  if (n == 0) throw config_error("no outcome rows to weight");
  out.weights.resize(n);
  for (int i = 0; i < n; ++i) out.weights[i] = out.components[i].raw;

  if (spec.kind != WeightKind::constant) {
    // nearest-rank quantile cap, then rescale to pooled mean one
    std::vector<double> sorted(out.weights.begin(), out.weights.end());
    std::sort(sorted.begin(), sorted.end());
    const int rank = std::max<int>(1, static_cast<int>(std::ceil(spec.cap_quantile * n)));
    out.cap = sorted[rank - 1];
    for (int i = 0; i < n; ++i) out.weights[i] = std::min(out.weights[i], out.cap);
  }
  const double mean = out.weights.mean();
  if (!(mean > 0.0)) throw fit_error("all pooled weights vanished");
  out.weights /= mean;
  return out;
}

}  // namespace wmdl
