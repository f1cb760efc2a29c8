#include "estimator.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "json_util.hpp"
#include "util.hpp"

namespace wmdl {

Method method_from_string(const std::string& s) {
  if (s == "wmdl") return Method::wmdl;
  if (s == "mdl") return Method::mdl;
  if (s == "wdl") return Method::wdl;
  if (s == "dl") return Method::dl;
  if (s == "t_learner" || s == "tl") return Method::t_learner;
  if (s == "s_learner" || s == "sl") return Method::s_learner;
  if (s == "x_learner" || s == "xl") return Method::x_learner;
  throw config_error("unknown method '" + s +
                     "' (want wmdl|mdl|wdl|dl|t_learner|s_learner|x_learner)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::wmdl: return "wmdl";
    case Method::mdl: return "mdl";
    case Method::wdl: return "wdl";
    case Method::dl: return "dl";
    case Method::t_learner: return "t_learner";
    case Method::s_learner: return "s_learner";
    default: return "x_learner";
  }
}

bool is_direct(Method m) {
  return m == Method::wmdl || m == Method::mdl || m == Method::wdl || m == Method::dl;
}

bool is_single_source(Method m) { return m == Method::wdl || m == Method::dl; }

EstimateMode estimate_mode_from_string(const std::string& s) {
  if (s == "homogeneous") return EstimateMode::homogeneous;
  if (s == "heterogeneous") return EstimateMode::heterogeneous;
  if (s == "single_source") return EstimateMode::single_source;
  if (s == "transfer") return EstimateMode::transfer;
  throw config_error("unknown estimate mode '" + s + "'");
}

std::string to_string(EstimateMode m) {
  switch (m) {
    case EstimateMode::homogeneous: return "homogeneous";
    case EstimateMode::heterogeneous: return "heterogeneous";
    case EstimateMode::single_source: return "single_source";
    default: return "transfer";
  }
}

void EstimatorSpec::validate() const {
  weight.validate();
  nuisance_learner.validate();
  final_learner.validate();
  if (n_folds < 2) throw config_error("cross-fitting needs at least 2 folds");
  if (!(nuisance.prob_clip > 0.0) || nuisance.prob_clip >= 0.5)
    throw config_error("probability clip must be in (0, 0.5)");
  if (!(nuisance.variance_floor > 0.0)) throw config_error("variance floor must be positive");
  if (known_propensity_value &&
      (!(*known_propensity_value > 0.0) || !(*known_propensity_value < 1.0)))
    throw config_error("known treatment probability must be in (0, 1)");
}

nlohmann::json weight_spec_to_json(const WeightSpec& w) {
  return {{"kind", to_string(w.kind)},
          {"target_source", w.target_source},
          {"cap_quantile", w.cap_quantile}};
}

WeightSpec weight_spec_from_json(const nlohmann::json& j) {
  return with_config_errors("weight spec", [&] {
    WeightSpec w;
    if (!j.is_object()) throw config_error("weight spec must be a JSON object");
    for (const auto& [key, val] : j.items()) {
      if (key == "kind") {
        w.kind = weight_kind_from_string(val.get<std::string>());
      } else if (key == "target_source") {
        w.target_source = val.get<int>();
      } else if (key == "cap_quantile") {
        w.cap_quantile = val.get<double>();
      } else {
        throw config_error("unknown weight spec key '" + key + "'");
      }
    }
    w.validate();
    return w;
  });
}

EstimatorSpec estimator_spec_from_json(const nlohmann::json& j) {
  return with_config_errors("estimator spec", [&] {
    EstimatorSpec s;
    if (!j.is_object()) throw config_error("estimator spec must be a JSON object");
    for (const auto& [key, val] : j.items()) {
      if (key == "method") {
        s.method = method_from_string(val.get<std::string>());
      } else if (key == "effect") {
        s.effect = effect_mode_from_string(val.get<std::string>());
      } else if (key == "include_source_indicator") {
        s.include_source_indicator = val.get<bool>();
      } else if (key == "weight") {
        s.weight = weight_spec_from_json(val);
      } else if (key == "nuisance_learner") {
        s.nuisance_learner = learner_spec_from_json(val);
      } else if (key == "final_learner") {
        s.final_learner = learner_spec_from_json(val);
      } else if (key == "n_folds") {
        s.n_folds = val.get<int>();
      } else if (key == "prob_clip") {
        s.nuisance.prob_clip = val.get<double>();
      } else if (key == "variance_floor") {
        s.nuisance.variance_floor = val.get<double>();
      } else if (key == "known_propensity") {
        const double p = val.get<double>();
        s.known_propensity_value = p;
        s.known_propensity = [p](int a, const Eigen::VectorXd&, int) {
          return a > 0 ? p : 1.0 - p;
        };
      } else if (key == "seed") {
        s.seed = val.get<std::uint64_t>();
      } else {
        throw config_error("unknown estimator spec key '" + key + "'");
      }
    }
    s.validate();
    return s;
  });
}

nlohmann::json estimator_spec_to_json(const EstimatorSpec& spec) {
  nlohmann::json j{{"method", to_string(spec.method)},
                   {"effect", to_string(spec.effect)},
                   {"include_source_indicator", spec.include_source_indicator},
                   {"weight", weight_spec_to_json(spec.weight)},
                   {"nuisance_learner", learner_spec_to_json(spec.nuisance_learner)},
                   {"final_learner", learner_spec_to_json(spec.final_learner)},
                   {"n_folds", spec.n_folds},
                   {"prob_clip", spec.nuisance.prob_clip},
                   {"variance_floor", spec.nuisance.variance_floor},
                   {"seed", spec.seed}};
  if (spec.known_propensity_value) j["known_propensity"] = *spec.known_propensity_value;
  return j;
}

std::vector<PseudoSample> build_pseudo_samples(const MultiSourceData& data,
                                               const NuisanceSet& nuis,
                                               const BatchWeights& weights,
                                               const EstimatorSpec& spec) {
  (void)spec;  // the denominator already lives in the nuisance set
  std::vector<PseudoSample> out;
  out.reserve(weights.components.size());
  for (size_t i = 0; i < weights.components.size(); ++i) {
    const int si = weights.source_index[i];
    const int r = weights.row[i];
    const SourceData& s = data.sources[si];
    const SourceNuisance& ns = nuis.per_source[si];
    if (ns.m_oof.size() != s.rows() || ns.p_pos_full_oof.size() != s.rows())
      throw config_error("nuisance values missing for source " + std::to_string(s.id));
    const int a = s.a[r];
    const double p = a > 0 ? ns.p_pos_full_oof[r] : 1.0 - ns.p_pos_full_oof[r];
    if (!(p > 0.0))
      throw fit_error("degenerate treatment probability in source " + std::to_string(s.id));
    PseudoSample ps;
    ps.x = s.x.row(r);
    ps.source_id = s.id;
    ps.y_tilde = a * (s.y[r] - ns.m_oof[r]);
    ps.w_tilde = weights.weights[static_cast<Eigen::Index>(i)] / p;
    if (!std::isfinite(ps.y_tilde) || !std::isfinite(ps.w_tilde) || ps.w_tilde < 0.0)
      throw fit_error("non-finite pseudo-outcome at source " + std::to_string(s.id) +
                      " row " + std::to_string(r));
    out.push_back(std::move(ps));
  }
  return out;
}

namespace {

std::vector<int> outcome_source_ids(const MultiSourceData& data) {
  std::vector<int> ids;
  for (const auto& s : data.sources)
    if (s.has_outcomes) ids.push_back(s.id);
  return ids;
}

int onehot_index(const std::vector<int>& ids, int source_id) {
  const auto it = std::find(ids.begin(), ids.end(), source_id);
  return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
}

// x alone, or x with a trailing source one-hot block
Eigen::VectorXd encode(const Eigen::VectorXd& x, const std::vector<int>& ids, int source_id) {
  if (ids.empty()) return x;
  const int pos = onehot_index(ids, source_id);
  if (pos < 0)
    throw config_error("source " + std::to_string(source_id) +
                       " was not part of the fitted encoding");
  Eigen::VectorXd f = Eigen::VectorXd::Zero(x.size() + static_cast<Eigen::Index>(ids.size()));
  f.head(x.size()) = x;
  f[x.size() + pos] = 1.0;
  return f;
}

LearnerSpec reseed(const LearnerSpec& spec, std::uint64_t base, std::uint64_t tag) {
  LearnerSpec s = spec;
  s.gbt.seed = mix_seed(base, tag);
  return s;
}

WeightSpec effective_weight(const EstimatorSpec& spec, const MultiSourceData& data) {
  WeightSpec w = spec.weight;
  w.target_source = data.target_source;  // estimates always aim at the data's target
  if (spec.method == Method::mdl || spec.method == Method::dl) w.kind = WeightKind::constant;
  return w;
}

EstimateMode direct_mode(const MultiSourceData& data, const EstimatorSpec& spec) {
  if (data.transfer_mode()) {
    if (spec.effect == EffectMode::heterogeneous)
      throw config_error(
          "source-specific effects cannot be fit for a covariates-only target");
    return EstimateMode::transfer;
  }
  if (is_single_source(spec.method)) return EstimateMode::single_source;
  return spec.effect == EffectMode::heterogeneous ? EstimateMode::heterogeneous
                                                  : EstimateMode::homogeneous;
}

CateEstimate fit_direct(const MultiSourceData& data, const EstimatorSpec& spec,
                        const NuisanceSet& nuis) {
  const EstimateMode mode = direct_mode(data, spec);
  const BatchWeights bw = batch_weights(data, nuis, effective_weight(spec, data));
  const std::vector<PseudoSample> ps = build_pseudo_samples(data, nuis, bw, spec);

  CateEstimate est;
  est.method = spec.method;
  est.mode = mode;
  est.target_source = data.target_source;
  est.d_x = data.d_x;
  if (mode == EstimateMode::heterogeneous) est.source_ids = outcome_source_ids(data);

  const int n = static_cast<int>(ps.size());
  const int d = data.d_x + static_cast<int>(est.source_ids.size());
  Eigen::MatrixXd phi(n, d);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    phi.row(i) = encode(ps[i].x, est.source_ids, ps[i].source_id);
    y[i] = ps[i].y_tilde;
    w[i] = ps[i].w_tilde;
  }
  est.model = fit_regression(reseed(spec.final_learner, spec.seed, 0xF1), phi, y, w);
  return est;
}

CateEstimate fit_meta(const MultiSourceData& data, const EstimatorSpec& spec) {
  CateEstimate est;
  est.method = spec.method;
  est.target_source = data.target_source;
  est.d_x = data.d_x;
  if (spec.include_source_indicator) est.source_ids = outcome_source_ids(data);
  est.mode = spec.include_source_indicator ? EstimateMode::heterogeneous
                                           : EstimateMode::homogeneous;

  const int n = data.outcome_rows();
  if (n == 0) throw config_error("meta-learners need outcome rows");
  const int d = data.d_x + static_cast<int>(est.source_ids.size());
  Eigen::MatrixXd phi(n, d), x_only(n, data.d_x);
  Eigen::VectorXd y(n);
  std::vector<int> arm(n);
  int i = 0;
  for (const auto& s : data.sources) {
    if (!s.has_outcomes) continue;
    for (int r = 0; r < s.rows(); ++r, ++i) {
      phi.row(i) = encode(s.x.row(r), est.source_ids, s.id);
      x_only.row(i) = s.x.row(r);
      y[i] = s.y[r];
      arm[i] = s.a[r];
    }
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const LearnerSpec mean_spec = spec.nuisance_learner;    // outcome models
  const LearnerSpec effect_spec = spec.final_learner;     // effect-stage models

  auto arm_rows = [&](int sign) {
    std::vector<int> idx;
    for (int r = 0; r < n; ++r)
      if (arm[r] == sign) idx.push_back(r);
    if (idx.empty())
      throw fit_error(std::string("no rows with treatment ") + (sign > 0 ? "+1" : "-1"));
    return idx;
  };
  auto take = [&](const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
    return out;
  };
  auto take_v = [&](const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (size_t r = 0; r < idx.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[idx[r]];
    return out;
  };

  if (spec.method == Method::s_learner) {
    Eigen::MatrixXd phi_a(n, d + 1);
    phi_a.leftCols(d) = phi;
    for (int r = 0; r < n; ++r) phi_a(r, d) = arm[r];
    est.model = fit_regression(reseed(mean_spec, spec.seed, 0xE4), phi_a, y, ones);
    return est;
  }

  const std::vector<int> pos = arm_rows(1), neg = arm_rows(-1);
  est.mu_pos = fit_regression(reseed(mean_spec, spec.seed, 0xE1), take(phi, pos),
                              take_v(y, pos), Eigen::VectorXd::Ones(pos.size()));
  est.mu_neg = fit_regression(reseed(mean_spec, spec.seed, 0xE2), take(phi, neg),
                              take_v(y, neg), Eigen::VectorXd::Ones(neg.size()));
  if (spec.method == Method::t_learner) return est;

  // imputed per-row contrasts on the tau scale, then one effect model per arm
  Eigen::VectorXd d_treated(static_cast<Eigen::Index>(pos.size()));
  for (size_t r = 0; r < pos.size(); ++r)
    d_treated[static_cast<Eigen::Index>(r)] =
        y[pos[r]] - est.mu_neg.predict(Eigen::VectorXd(phi.row(pos[r])));
  Eigen::VectorXd d_control(static_cast<Eigen::Index>(neg.size()));
  for (size_t r = 0; r < neg.size(); ++r)
    d_control[static_cast<Eigen::Index>(r)] =
        est.mu_pos.predict(Eigen::VectorXd(phi.row(neg[r]))) - y[neg[r]];
  est.d_pos = fit_regression(reseed(effect_spec, spec.seed, 0xE5), take(phi, pos), d_treated,
                             Eigen::VectorXd::Ones(pos.size()));
  est.d_neg = fit_regression(reseed(effect_spec, spec.seed, 0xE6), take(phi, neg), d_control,
                             Eigen::VectorXd::Ones(neg.size()));
  std::vector<int> label(n);
  for (int r = 0; r < n; ++r) label[r] = arm[r] > 0 ? 1 : 0;
  est.g = fit_probability(reseed(mean_spec, spec.seed, 0xE3), x_only, label, ones,
                          spec.nuisance.prob_clip);
  return est;
}

}  // namespace

CateEstimate fit(const MultiSourceData& data, const EstimatorSpec& spec) {
  spec.validate();
  data.validate();
  if (!is_direct(spec.method)) return fit_meta(data, spec);

  MultiSourceData restricted;
  const MultiSourceData* d = &data;
  if (is_single_source(spec.method)) {
    if (!data.source(data.target_source).has_outcomes)
      throw config_error("single-source methods need outcome data on the target source");
    restricted = restrict_to_source(data, data.target_source);
    d = &restricted;
  }
  const FoldAssignment folds = split_folds(*d, spec.n_folds, mix_seed(spec.seed, 0x11));
  NuisancePlan plan;
  plan.weight_ingredients = effective_weight(spec, *d).kind != WeightKind::constant;
  if (spec.known_propensity) plan.known_propensity = spec.known_propensity;
  const NuisanceSet nuis =
      estimate_nuisances(*d, reseed(spec.nuisance_learner, spec.seed, 0xA1), folds,
                         spec.nuisance, plan);
  return fit_direct(*d, spec, nuis);
}

CateEstimate fit_with_nuisances(const MultiSourceData& data, const EstimatorSpec& spec,
                                const NuisanceSet& nuis) {
  spec.validate();
  data.validate();
  if (!is_direct(spec.method))
    throw config_error("supplied nuisances only apply to the direct pseudo-outcome methods");
  if (static_cast<int>(nuis.per_source.size()) != data.n_sources())
    throw config_error("nuisance set is not aligned with the data sources");
  if (is_single_source(spec.method) && data.n_sources() > 1)
    throw config_error("restrict the data to the target source before fitting " +
                       to_string(spec.method));
  return fit_direct(data, spec, nuis);
}

double CateEstimate::predict_delta(const Eigen::VectorXd& x) const {
  return predict_delta(x, target_source);
}

double CateEstimate::predict_delta(const Eigen::VectorXd& x, int source_id) const {
  if (x.size() != d_x)
    throw config_error("expected " + std::to_string(d_x) + " covariates, got " +
                       std::to_string(x.size()));
  const Eigen::VectorXd f = encode(x, source_ids, needs_source() ? source_id : target_source);
  switch (method) {
    case Method::wmdl:
    case Method::mdl:
    case Method::wdl:
    case Method::dl:
      return model.predict(f);
    case Method::t_learner:
      return 0.5 * (mu_pos.predict(f) - mu_neg.predict(f));
    case Method::s_learner: {
      Eigen::VectorXd fa(f.size() + 1);
      fa.head(f.size()) = f;
      fa[f.size()] = 1.0;
      const double up = model.predict(fa);
      fa[f.size()] = -1.0;
      return 0.5 * (up - model.predict(fa));
    }
    default: {
      const double gx = g.predict(x);  // over shared covariates only
      return 0.5 * (gx * d_neg.predict(f) + (1.0 - gx) * d_pos.predict(f));
    }
  }
}

Eigen::VectorXd CateEstimate::predict_delta(const Eigen::MatrixXd& x) const {
  return predict_delta(x, target_source);
}

Eigen::VectorXd CateEstimate::predict_delta(const Eigen::MatrixXd& x, int source_id) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    out[r] = predict_delta(Eigen::VectorXd(x.row(r)), source_id);
  return out;
}

nlohmann::json CateEstimate::to_json() const {
  nlohmann::json j{{"format", 1},
                   {"method", to_string(method)},
                   {"mode", to_string(mode)},
                   {"target_source", target_source},
                   {"d_x", d_x},
                   {"source_ids", source_ids}};
  switch (method) {
    case Method::wmdl:
    case Method::mdl:
    case Method::wdl:
    case Method::dl:
    case Method::s_learner:
      j["model"] = model.to_json();
      break;
    case Method::t_learner:
      j["mu_pos"] = mu_pos.to_json();
      j["mu_neg"] = mu_neg.to_json();
      break;
    default:
      j["d_pos"] = d_pos.to_json();
      j["d_neg"] = d_neg.to_json();
      j["g"] = g.to_json();
      break;
  }
  return j;
}

CateEstimate CateEstimate::from_json(const nlohmann::json& j) {
  return with_config_errors("effect model file", [&] {
    if (!j.is_object() || j.at("format").get<int>() != 1)
      throw config_error("unsupported effect model format");
    CateEstimate e;
    e.method = method_from_string(j.at("method").get<std::string>());
    e.mode = estimate_mode_from_string(j.at("mode").get<std::string>());
    e.target_source = j.at("target_source").get<int>();
    e.d_x = j.at("d_x").get<int>();
    e.source_ids = j.at("source_ids").get<std::vector<int>>();
    switch (e.method) {
      case Method::wmdl:
      case Method::mdl:
      case Method::wdl:
      case Method::dl:
      case Method::s_learner:
        e.model = RegressionModel::from_json(j.at("model"));
        break;
      case Method::t_learner:
        e.mu_pos = RegressionModel::from_json(j.at("mu_pos"));
        e.mu_neg = RegressionModel::from_json(j.at("mu_neg"));
        break;
      default:
        e.d_pos = RegressionModel::from_json(j.at("d_pos"));
        e.d_neg = RegressionModel::from_json(j.at("d_neg"));
        e.g = ProbabilityModel::from_json(j.at("g"));
        break;
    }
    return e;
  });
}

}  // namespace wmdl
