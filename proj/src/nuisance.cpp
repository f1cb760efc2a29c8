#include "nuisance.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "errors.hpp"
#include "util.hpp"

namespace wmdl {

Eigen::MatrixXd xz_matrix(const SourceData& s) {
  Eigen::MatrixXd f(s.rows(), s.x.cols() + s.z.cols());
  f.leftCols(s.x.cols()) = s.x;
  if (s.z.cols() > 0) f.rightCols(s.z.cols()) = s.z;
  return f;
}

Eigen::VectorXd xz_vector(const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  Eigen::VectorXd f(x.size() + z.size());
  f.head(x.size()) = x;
  if (z.size() > 0) f.tail(z.size()) = z;
  return f;
}

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

LearnerSpec reseed(const LearnerSpec& spec, std::uint64_t tag) {
  LearnerSpec s = spec;
  s.gbt.seed = mix_seed(spec.gbt.seed, tag);
  return s;
}

std::vector<int> rows_where(const SourceData& s, const std::vector<int>& fold, int skip_fold,
                            int arm) {
  std::vector<int> rows;
  for (int r = 0; r < s.rows(); ++r) {
    if (fold[r] != skip_fold && s.a[r] == arm) rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

double fold_average(const std::vector<RegressionModel>& models, const Eigen::VectorXd& f) {
  double acc = 0.0;
  for (const auto& m : models) acc += m.predict(f);
  return acc / static_cast<double>(models.size());
}

}  // namespace

MeanFn MainEffectFit::mean_fn() const {
  const std::vector<RegressionModel>& pos = mu_pos_models;
  const std::vector<RegressionModel>& neg = mu_neg_models;
  return [pos, neg](const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
    const Eigen::VectorXd f = xz_vector(x, z);
    return 0.5 * (fold_average(pos, f) + fold_average(neg, f));
  };
}

ArmMeanFn MainEffectFit::arm_mean_fn() const {
  const std::vector<RegressionModel>& pos = mu_pos_models;
  const std::vector<RegressionModel>& neg = mu_neg_models;
  return [pos, neg](int a, const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
    return fold_average(a > 0 ? pos : neg, xz_vector(x, z));
  };
}

MainEffectFit estimate_main_effect(const SourceData& s, const LearnerSpec& spec,
                                   const std::vector<int>& fold, int n_folds) {
  const std::string tag = "source " + std::to_string(s.id);
  if (!s.has_outcomes) throw fit_error(tag + ": outcome model needs outcomes");
  const Eigen::MatrixXd f = xz_matrix(s);

  MainEffectFit out;
  out.mu_pos_oof.resize(s.rows());
  out.mu_neg_oof.resize(s.rows());
  for (int g = 0; g < n_folds; ++g) {
    for (int a : {1, -1}) {
      const std::vector<int> train = rows_where(s, fold, g, a);
      if (train.empty())
        throw fit_error(tag + " fold " + std::to_string(g) + ": no arm " +
                        std::to_string(a) + " rows to train on");
      Eigen::VectorXd ys(static_cast<Eigen::Index>(train.size()));
      for (size_t i = 0; i < train.size(); ++i) ys[static_cast<Eigen::Index>(i)] = s.y[train[i]];
      const LearnerSpec fs = reseed(spec, 0x100 + 2 * g + (a > 0 ? 1 : 0));
      RegressionModel model = fit_regression(
          fs, take_rows(f, train), ys, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(train.size())));
      for (int r = 0; r < s.rows(); ++r) {
        if (fold[r] != g) continue;
        const double p = model.predict(Eigen::VectorXd(f.row(r).transpose()));
        (a > 0 ? out.mu_pos_oof : out.mu_neg_oof)[r] = p;
      }
      (a > 0 ? out.mu_pos_models : out.mu_neg_models).push_back(std::move(model));
    }
  }
  out.m_oof = 0.5 * (out.mu_pos_oof + out.mu_neg_oof);
  return out;
}

PropensityFit estimate_treat_propensity(const SourceData& s, const LearnerSpec& spec,
                                        const std::vector<int>& fold, int n_folds, bool use_z,
                                        double clip) {
  if (!s.has_outcomes)
    throw fit_error("source " + std::to_string(s.id) + ": propensity needs treatment labels");
  const Eigen::MatrixXd f = use_z && s.d_z() > 0 ? xz_matrix(s) : s.x;
  std::vector<int> label(s.rows());
  for (int r = 0; r < s.rows(); ++r) label[r] = s.a[r] == 1 ? 1 : 0;
  CrossFitProbability cf;
  try {
    cf = cross_fit_probability(spec, f, label, Eigen::VectorXd::Ones(s.rows()), fold, n_folds,
                               clip);
  } catch (const fit_error& e) {
    throw fit_error("source " + std::to_string(s.id) + " propensity: " + e.what());
  }
  PropensityFit out;
  out.models = std::move(cf.models);
  out.pos_oof = std::move(cf.oof);
  out.uses_z = use_z && s.d_z() > 0;
  return out;
}

VarianceFit estimate_conditional_variance(
    const SourceData& s, const LearnerSpec& spec, const std::vector<int>& fold, int n_folds,
    const std::function<double(int, int, const Eigen::VectorXd&, const Eigen::VectorXd&)>&
        arm_mean,
    double floor) {
  const std::string tag = "source " + std::to_string(s.id);
  if (!s.has_outcomes) throw fit_error(tag + ": variance model needs outcomes");
  VarianceFit out;
  out.pos_oof.resize(s.rows());
  out.neg_oof.resize(s.rows());
  for (int g = 0; g < n_folds; ++g) {
    for (int a : {1, -1}) {
      const std::vector<int> train = rows_where(s, fold, g, a);
      if (train.empty())
        throw fit_error(tag + " fold " + std::to_string(g) + ": no arm " +
                        std::to_string(a) + " rows for the variance model");
      Eigen::MatrixXd xs = take_rows(s.x, train);
      Eigen::VectorXd target(static_cast<Eigen::Index>(train.size()));
      for (size_t i = 0; i < train.size(); ++i) {
        const int r = train[i];
        const double mu = arm_mean(g, a, s.x.row(r).transpose(), s.z.row(r).transpose());
        const double e = s.y[r] - mu;
        target[static_cast<Eigen::Index>(i)] = e * e;
      }
      const LearnerSpec fs = reseed(spec, 0x200 + 2 * g + (a > 0 ? 1 : 0));
      RegressionModel model = fit_regression(
          fs, xs, target, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(train.size())));
      for (int r = 0; r < s.rows(); ++r) {
        if (fold[r] != g) continue;
        const double v = model.predict(Eigen::VectorXd(s.x.row(r).transpose()));
        (a > 0 ? out.pos_oof : out.neg_oof)[r] = std::max(v, floor);
      }
      (a > 0 ? out.pos_models : out.neg_models).push_back(std::move(model));
    }
  }
  return out;
}

Eigen::VectorXd floor_and_normalize(Eigen::VectorXd p, double eps) {
  const int k = static_cast<int>(p.size());
  if (eps * k >= 1.0) throw config_error("probability floor too large for the class count");
  p = p.cwiseMax(0.0);
  const double total = p.sum();
  if (total > 0.0) {
    p /= total;
  } else {
    p.setConstant(1.0 / k);
  }
  for (int pass = 0; pass < k; ++pass) {
    double low_mass = 0.0, rest = 0.0;
    int n_low = 0;
    for (int i = 0; i < k; ++i) {
      if (p[i] <= eps) {
        ++n_low;
        low_mass += eps;
      } else {
        rest += p[i];
      }
    }
    if (n_low == 0) break;
    const double scale = (1.0 - low_mass) / rest;
    bool redo = false;
    for (int i = 0; i < k; ++i) {
      if (p[i] <= eps) {
        p[i] = eps;
      } else {
        p[i] *= scale;
        if (p[i] < eps) redo = true;
      }
    }
    if (!redo) break;
  }
  return p;
}

SelectionFit estimate_selection_propensity(const MultiSourceData& data, const LearnerSpec& spec,
                                           const FoldAssignment& folds, double clip) {
  const int k = data.n_sources();
  if (k < 2) throw config_error("selection propensity needs at least two sources");
  if (clip * k >= 1.0) throw config_error("probability floor too large for the source count");

  const int n = data.total_rows();
  Eigen::MatrixXd x(n, data.d_x);
  std::vector<int> fold(n), src_of(n);
  int at = 0;
  for (int i = 0; i < k; ++i) {
    const SourceData& s = data.sources[i];
    for (int r = 0; r < s.rows(); ++r, ++at) {
      x.row(at) = s.x.row(r);
      fold[at] = folds.fold_of[i][r];
      src_of[at] = i;
    }
  }

  SelectionFit out;
  Eigen::MatrixXd raw(n, k);
  for (int c = 0; c < k; ++c) {
    out.source_ids.push_back(data.sources[c].id);
    std::vector<int> label(n);
    for (int r = 0; r < n; ++r) label[r] = src_of[r] == c ? 1 : 0;
    LearnerSpec cs = reseed(spec, 0x300 + c);
    CrossFitProbability cf;
    try {
      cf = cross_fit_probability(cs, x, label, Eigen::VectorXd::Ones(n), fold, folds.n_folds,
                                 clip);
    } catch (const fit_error& e) {
      throw fit_error("selection model for source " + std::to_string(data.sources[c].id) +
                      ": " + e.what());
    }
    raw.col(c) = cf.oof;
    out.models.push_back(std::move(cf.models));
  }
  out.oof.resize(k);
  at = 0;
  for (int i = 0; i < k; ++i) {
    const int rows = data.sources[i].rows();
    out.oof[i].resize(rows, k);
    for (int r = 0; r < rows; ++r, ++at)
      out.oof[i].row(r) = floor_and_normalize(raw.row(at).transpose(), clip).transpose();
  }
  return out;
}

Eigen::VectorXd partial_balance_scores(
    const SourceData& s, const ArmProbFn& p_tilde, const MeanFn& effect,
    const std::vector<std::function<double(const Eigen::VectorXd&)>>& g_list) {
  if (!s.has_outcomes)
    throw fit_error("balance diagnostic needs an outcome source");
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g_list.size()));
  for (int r = 0; r < s.rows(); ++r) {
    const Eigen::VectorXd x = s.x.row(r);
    const Eigen::VectorXd z = s.z.row(r);
    const double p = p_tilde(s.a[r], x, z);
    if (!(p > 0.0) || !(p < 1.0))
      throw fit_error("treatment probability outside (0,1) at source " + std::to_string(s.id) +
                      " row " + std::to_string(r));
    const double core = (1.0 / p - 1.0) * effect(x, z);
    for (size_t gi = 0; gi < g_list.size(); ++gi)
      scores[static_cast<Eigen::Index>(gi)] += g_list[gi](x) * core;
  }
  return scores / static_cast<double>(s.rows());
}

int NuisanceSet::index_of(int source_id) const {
  for (size_t i = 0; i < source_ids.size(); ++i) {
    if (source_ids[i] == source_id) return static_cast<int>(i);
  }
  return -1;
}

NuisanceSet estimate_nuisances(const MultiSourceData& data, const LearnerSpec& spec,
                               const FoldAssignment& folds, const NuisanceOptions& options,
                               const NuisancePlan& plan) {
  data.validate();
  NuisanceSet set;
  set.options = options;
  const double total = data.total_rows();
  for (const auto& s : data.sources) {
    set.source_ids.push_back(s.id);
    set.source_share.push_back(s.rows() / total);
  }

  if (plan.weight_ingredients && data.n_sources() >= 2) {
    SelectionFit sel =
        estimate_selection_propensity(data, spec, folds, options.prob_clip);
    set.selection_oof = std::move(sel.oof);
    const double clip = options.prob_clip;
    auto models = std::make_shared<std::vector<std::vector<ProbabilityModel>>>(
        std::move(sel.models));
    set.selection = [models, clip](const Eigen::VectorXd& x) {
      Eigen::VectorXd raw(static_cast<Eigen::Index>(models->size()));
      for (size_t c = 0; c < models->size(); ++c) {
        double acc = 0.0;
        for (const auto& m : (*models)[c]) acc += m.predict(x);
        raw[static_cast<Eigen::Index>(c)] = acc / static_cast<double>((*models)[c].size());
      }
      return floor_and_normalize(std::move(raw), clip);
    };
    set.has_selection = true;
  }

  for (int i = 0; i < data.n_sources(); ++i) {
    const SourceData& s = data.sources[i];
    SourceNuisance ns;
    ns.source_id = s.id;
    if (!s.has_outcomes) {
      set.per_source.push_back(std::move(ns));
      continue;
    }
    const std::vector<int>& fold = folds.fold_of[i];
    const LearnerSpec src_spec = reseed(spec, 0x1000 + static_cast<std::uint64_t>(s.id));

    MainEffectFit me = estimate_main_effect(s, src_spec, fold, folds.n_folds);
    ns.m_hat = me.mean_fn();
    ns.arm_mean = me.arm_mean_fn();
    ns.m_oof = me.m_oof;
    ns.mu_pos_oof = me.mu_pos_oof;
    ns.mu_neg_oof = me.mu_neg_oof;

    if (plan.known_propensity) {
      const KnownPropensityFn known = *plan.known_propensity;
      const int sid = s.id;
      ns.p_pos_full_oof.resize(s.rows());
      for (int r = 0; r < s.rows(); ++r) {
        const double p = known(1, s.x.row(r).transpose(), sid);
        if (!(p > 0.0) || !(p < 1.0))
          throw config_error("known treatment probability outside (0,1) at source " +
                             std::to_string(sid));
        ns.p_pos_full_oof[r] = p;
      }
      ns.p_full = [known, sid](int a, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
        const double p = known(1, x, sid);
        return a > 0 ? p : 1.0 - p;
      };
      ns.p_marg = [known, sid](int a, const Eigen::VectorXd& x) {
        const double p = known(1, x, sid);
        return a > 0 ? p : 1.0 - p;
      };
      ns.p_pos_marg_oof = ns.p_pos_full_oof;
    } else {
      PropensityFit pf = estimate_treat_propensity(s, reseed(src_spec, 0x21), fold,
                                                   folds.n_folds, true, options.prob_clip);
      ns.p_pos_full_oof = pf.pos_oof;
      const bool with_z = pf.uses_z;
      auto full_models = std::make_shared<std::vector<ProbabilityModel>>(std::move(pf.models));
      ns.p_full = [full_models, with_z](int a, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& z) {
        const Eigen::VectorXd f = with_z ? xz_vector(x, z) : x;
        double acc = 0.0;
        for (const auto& m : *full_models) acc += m.predict(f);
        const double p = acc / static_cast<double>(full_models->size());
        return a > 0 ? p : 1.0 - p;
      };
      if (plan.weight_ingredients) {
        if (s.d_z() > 0) {
          PropensityFit pm = estimate_treat_propensity(s, reseed(src_spec, 0x22), fold,
                                                       folds.n_folds, false, options.prob_clip);
          ns.p_pos_marg_oof = pm.pos_oof;
          auto marg_models = std::make_shared<std::vector<ProbabilityModel>>(
              std::move(pm.models));
          ns.p_marg = [marg_models](int a, const Eigen::VectorXd& x) {
            double acc = 0.0;
            for (const auto& m : *marg_models) acc += m.predict(x);
            const double p = acc / static_cast<double>(marg_models->size());
            return a > 0 ? p : 1.0 - p;
          };
        } else {
          ns.p_pos_marg_oof = ns.p_pos_full_oof;
          const ArmProbFn full = ns.p_full;
          ns.p_marg = [full](int a, const Eigen::VectorXd& x) {
            return full(a, x, Eigen::VectorXd());
          };
        }
      }
    }

    if (plan.weight_ingredients) {
      const auto& pos_models = me.mu_pos_models;
      const auto& neg_models = me.mu_neg_models;
      auto arm_mean_by_fold = [&pos_models, &neg_models](int g, int a, const Eigen::VectorXd& x,
                                                         const Eigen::VectorXd& z) {
        return (a > 0 ? pos_models : neg_models)[g].predict(xz_vector(x, z));
      };
      VarianceFit vf =
          estimate_conditional_variance(s, reseed(src_spec, 0x23), fold, folds.n_folds,
                                        arm_mean_by_fold, options.variance_floor);
      ns.v_pos_oof = vf.pos_oof;
      ns.v_neg_oof = vf.neg_oof;
      const double floor = options.variance_floor;
      auto pos = std::make_shared<std::vector<RegressionModel>>(std::move(vf.pos_models));
      auto neg = std::make_shared<std::vector<RegressionModel>>(std::move(vf.neg_models));
      ns.v_hat = [pos, neg, floor](int a, const Eigen::VectorXd& x) {
        return std::max(fold_average(a > 0 ? *pos : *neg, x), floor);
      };
    }
    set.per_source.push_back(std::move(ns));
  }
  return set;
}

NuisanceSet make_oracle_nuisances(const MultiSourceData& data, const OracleComponents& parts,
                                  const NuisanceOptions& options) {
  data.validate();
  NuisanceSet set;
  set.options = options;
  const double total = data.total_rows();
  for (const auto& s : data.sources) {
    set.source_ids.push_back(s.id);
    set.source_share.push_back(s.rows() / total);
  }
  if (parts.density) {
    const auto density = parts.density;
    set.density = [density](int source_id, const Eigen::VectorXd& x) {
      return density(x, source_id);
    };
    set.has_density = true;
  }

  for (const SourceData& s : data.sources) {
    SourceNuisance ns;
    ns.source_id = s.id;
    if (!s.has_outcomes) {
      set.per_source.push_back(std::move(ns));
      continue;
    }
    if (!parts.m || !parts.p_full)
      throw config_error("oracle nuisances need at least the outcome mean and the propensity");
    const int sid = s.id;
    const auto m = parts.m;
    ns.m_hat = [m, sid](const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
      return m(x, z, sid);
    };
    const auto pf = parts.p_full;
    ns.p_full = [pf, sid](int a, const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
      return pf(a, x, z, sid);
    };
    if (parts.p_marg) {
      const auto pm = parts.p_marg;
      ns.p_marg = [pm, sid](int a, const Eigen::VectorXd& x) { return pm(a, x, sid); };
    }
    if (parts.v) {
      const auto v = parts.v;
      const double floor = options.variance_floor;
      ns.v_hat = [v, floor, sid](int a, const Eigen::VectorXd& x) {
        return std::max(v(a, x, sid), floor);
      };
    }
    if (parts.arm_mean) {
      const auto am = parts.arm_mean;
      ns.arm_mean = [am, sid](int a, const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
        return am(a, x, z, sid);
      };
    }

    const int n = s.rows();
    ns.m_oof.resize(n);
    ns.p_pos_full_oof.resize(n);
    if (ns.p_marg) ns.p_pos_marg_oof.resize(n);
    if (ns.v_hat) {
      ns.v_pos_oof.resize(n);
      ns.v_neg_oof.resize(n);
    }
    if (ns.arm_mean) {
      ns.mu_pos_oof.resize(n);
      ns.mu_neg_oof.resize(n);
    }
    for (int r = 0; r < n; ++r) {
      const Eigen::VectorXd x = s.x.row(r);
      const Eigen::VectorXd z = s.z.row(r);
      ns.m_oof[r] = ns.m_hat(x, z);
      const double p = ns.p_full(1, x, z);
      if (!(p > 0.0) || !(p < 1.0))
        throw config_error("oracle treatment probability outside (0,1) at source " +
                           std::to_string(sid));
      ns.p_pos_full_oof[r] = p;
      if (ns.p_marg) ns.p_pos_marg_oof[r] = ns.p_marg(1, x);
      if (ns.v_hat) {
        ns.v_pos_oof[r] = ns.v_hat(1, x);
        ns.v_neg_oof[r] = ns.v_hat(-1, x);
      }
      if (ns.arm_mean) {
        ns.mu_pos_oof[r] = ns.arm_mean(1, x, z);
        ns.mu_neg_oof[r] = ns.arm_mean(-1, x, z);
      }
    }
    set.per_source.push_back(std::move(ns));
  }
  return set;
}

}  // namespace wmdl
