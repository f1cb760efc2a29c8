#include "learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "errors.hpp"
#include "json_util.hpp"
#include "util.hpp"

namespace wmdl {

LearnerKind learner_kind_from_string(const std::string& s) {
  if (s == "linear") return LearnerKind::linear;
  if (s == "poly2") return LearnerKind::poly2;
  if (s == "gbt") return LearnerKind::gbt;
  throw config_error("unknown learner kind '" + s + "' (want linear|poly2|gbt)");
}

std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::linear: return "linear";
    case LearnerKind::poly2: return "poly2";
    default: return "gbt";
  }
}

void GbtParams::validate() const {
  if (!(learning_rate > 0.0) || learning_rate > 1.0)
    throw config_error("gbt learning_rate must be in (0, 1]");
  if (max_depth < 1) throw config_error("gbt max_depth must be >= 1");
  if (n_rounds < 1) throw config_error("gbt n_rounds must be >= 1");
  if (min_leaf < 1) throw config_error("gbt min_leaf must be >= 1");
  if (!(subsample > 0.0) || subsample > 1.0)
    throw config_error("gbt subsample must be in (0, 1]");
}

void LearnerSpec::validate() const {
  if (ridge < 0.0) throw config_error("ridge penalty must be >= 0");
  gbt.validate();
}

LearnerSpec learner_spec_from_json(const nlohmann::json& j)  {
  return with_config_errors("learner spec", [&] {
    LearnerSpec s;
    if (!j.is_object()) throw config_error("learner spec must be a JSON object");
    for (const auto& [key, val] : j.items()) {
      if (key == "kind") {
        s.kind = learner_kind_from_string(val.get<std::string>());
      } else if (key == "ridge") {
        s.ridge = val.get<double>();
      } else if (key == "gbt") {
        for (const auto& [gk, gv] : val.items()) {
          if (gk == "learning_rate") {
            s.gbt.learning_rate = gv.get<double>();
          } else if (gk == "max_depth") {
            s.gbt.max_depth = gv.get<int>();
          } else if (gk == "n_rounds") {
            s.gbt.n_rounds = gv.get<int>();
          } else if (gk == "min_leaf") {
            s.gbt.min_leaf = gv.get<int>();
          } else if (gk == "subsample") {
            s.gbt.subsample = gv.get<double>();
          } else if (gk == "seed") {
            s.gbt.seed = gv.get<std::uint64_t>();
          } else {
            throw config_error("unknown gbt key '" + gk + "'");
          }
        }
      } else {
        throw config_error("unknown learner key '" + key + "'");
      }
    }
    s.validate();
    return s;
  });
}

nlohmann::json learner_spec_to_json(const LearnerSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"ridge", s.ridge},
          {"gbt",
           {{"learning_rate", s.gbt.learning_rate},
            {"max_depth", s.gbt.max_depth},
            {"n_rounds", s.gbt.n_rounds},
            {"min_leaf", s.gbt.min_leaf},
            {"subsample", s.gbt.subsample},
            {"seed", s.gbt.seed}}}};
}

int expanded_dim(LearnerKind kind, int d_in) {
  switch (kind) {
    case LearnerKind::linear: return 1 + d_in;
    case LearnerKind::poly2: return 1 + d_in + d_in * (d_in + 1) / 2;
    default: return d_in;
  }
}

Eigen::VectorXd expand_features(LearnerKind kind, const Eigen::VectorXd& x) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd phi(expanded_dim(kind, d));
  if (kind == LearnerKind::gbt) {
    phi = x;
    return phi;
  }
  phi[0] = 1.0;
  phi.segment(1, d) = x;
  if (kind == LearnerKind::poly2) {
    int k = 1 + d;
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) phi[k++] = x[i] * x[j];
    }
  }
  return phi;
}

Eigen::MatrixXd expand_features(LearnerKind kind, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd phi(x.rows(), expanded_dim(kind, static_cast<int>(x.cols())));
  for (int r = 0; r < x.rows(); ++r) phi.row(r) = expand_features(kind, Eigen::VectorXd(x.row(r).transpose()));
  return phi;
}

double Tree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int node = 0;
  while (feature[node] >= 0) node = x[feature[node]] < threshold[node] ? left[node] : right[node];
  return value[node];
}

double Tree::predict_row(const Eigen::MatrixXd& x, int row) const {
  int node = 0;
  while (feature[node] >= 0)
    node = x(row, feature[node]) < threshold[node] ? left[node] : right[node];
  return value[node];
}

double GbtModel::predict_raw(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double f = base;
  for (const Tree& t : trees) f += t.predict(x);
  return f;
}

namespace {

void check_training_inputs(const Eigen::MatrixXd& x, int n_targets, const Eigen::VectorXd& w) {
  if (x.rows() == 0) throw fit_error("no training rows");
  if (n_targets != x.rows() || w.size() != x.rows())
    throw fit_error("training targets/weights do not match the row count");
  if ((w.array() < 0.0).any()) throw fit_error("negative sample weight");
  if (!(w.sum() > 0.0)) throw fit_error("all sample weights are zero");
}

Eigen::VectorXd solve_wls(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double ridge) {
  if (ridge > 0.0) {
    Eigen::MatrixXd a = phi.transpose() * w.asDiagonal() * phi;
    a.diagonal().array() += ridge;
    const Eigen::VectorXd b = phi.transpose() * (w.array() * y.array()).matrix();
    return a.ldlt().solve(b);
  }
  // Unpenalized: minimal-norm solution of the sqrt(w)-scaled system so
  // rank-deficient designs stay well-defined.
  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd phis = sw.asDiagonal() * phi;
  const Eigen::VectorXd ys = (sw.array() * y.array()).matrix();
  return phis.completeOrthogonalDecomposition().solve(ys);
}

Eigen::VectorXd fit_logistic_newton(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y01,
                                    const Eigen::VectorXd& w, double ridge) {
  const int p = static_cast<int>(phi.cols());
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = phi * theta;
    Eigen::VectorXd prob(eta.size());
    for (int i = 0; i < eta.size(); ++i) prob[i] = expit(eta[i]);
    const Eigen::VectorXd s = w.array() * prob.array() * (1.0 - prob.array());
    Eigen::MatrixXd h = phi.transpose() * s.asDiagonal() * phi;
    h.diagonal().array() += 2.0 * ridge + 1e-12;
    const Eigen::VectorXd grad =
        phi.transpose() * (w.array() * (y01.array() - prob.array())).matrix() -
        2.0 * ridge * theta;
    const Eigen::VectorXd step = h.ldlt().solve(grad);
    theta += step;
    if (!theta.allFinite()) throw fit_error("logistic fit diverged");
    if (step.cwiseAbs().maxCoeff() < 1e-8) break;
  }
  return theta;
}

// ---- gradient boosting ----

struct NodeLists {
  std::vector<std::vector<int>> rows;  // per feature, node rows sorted by it
  int count() const { return rows.empty() ? 0 : static_cast<int>(rows[0].size()); }
};

class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& x, const std::vector<double>& g,
             const std::vector<double>& h, const GbtParams& params)
      : x_(x), g_(g), h_(h), params_(params), side_(x.rows(), 0) {}

  Tree grow(NodeLists root) {
    tree_ = Tree{};
    build(std::move(root), 0);
    return std::move(tree_);
  }

 private:
  static double score(double g, double h) { return h > 0.0 ? g * g / h : 0.0; }

  int new_node() {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(0.0);
    return static_cast<int>(tree_.feature.size()) - 1;
  }

  int build(NodeLists node, int depth) {
    const int id = new_node();
    double gt = 0.0, ht = 0.0;
    for (int r : node.rows[0]) {
      gt += g_[r];
      ht += h_[r];
    }
    const int n = node.count();
    tree_.value[id] = ht > 0.0 ? params_.learning_rate * gt / ht : 0.0;
    if (depth >= params_.max_depth || n < 2 * params_.min_leaf) return id;

    // best split over (feature, midpoint threshold); first strict improvement wins ties
    double best_gain = 1e-12;
    int best_f = -1, best_cnt = 0;
    double best_thr = 0.0;
    const double parent = score(gt, ht);
    const int d = static_cast<int>(node.rows.size());
    for (int f = 0; f < d; ++f) {
      double gl = 0.0, hl = 0.0;
      const auto& rows = node.rows[f];
      for (int i = 0; i + 1 < n; ++i) {
        gl += g_[rows[i]];
        hl += h_[rows[i]];
        const double lo = x_(rows[i], f), hi = x_(rows[i + 1], f);
        if (!(lo < hi)) continue;
        const int cnt = i + 1;
        if (cnt < params_.min_leaf || n - cnt < params_.min_leaf) continue;
        const double gain = score(gl, hl) + score(gt - gl, ht - hl) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = f;
          best_thr = 0.5 * (lo + hi);
          best_cnt = cnt;
        }
      }
    }
    if (best_f < 0) return id;

    for (int r : node.rows[best_f]) side_[r] = x_(r, best_f) < best_thr ? 1 : 0;
    NodeLists lhs, rhs;
    lhs.rows.resize(d);
    rhs.rows.resize(d);
    for (int f = 0; f < d; ++f) {
      lhs.rows[f].reserve(best_cnt);
      rhs.rows[f].reserve(n - best_cnt);
      for (int r : node.rows[f]) (side_[r] ? lhs.rows[f] : rhs.rows[f]).push_back(r);
      node.rows[f].clear();
      node.rows[f].shrink_to_fit();
    }
    tree_.feature[id] = best_f;
    tree_.threshold[id] = best_thr;
    tree_.value[id] = 0.0;
    const int l = build(std::move(lhs), depth + 1);
    const int r = build(std::move(rhs), depth + 1);
    tree_.left[id] = l;
    tree_.right[id] = r;
    return id;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const GbtParams& params_;
  std::vector<char> side_;
  Tree tree_;
};

GbtModel fit_gbt_core(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w, const GbtParams& params, bool logistic,
                      double clip, std::vector<double>* curve) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());

  std::vector<int> active;
  active.reserve(n);
  double wsum = 0.0, ymean = 0.0;
  for (int r = 0; r < n; ++r) {
    if (w[r] > 0.0) {
      active.push_back(r);
      wsum += w[r];
      ymean += w[r] * y[r];
    }
  }
  ymean /= wsum;

  GbtModel model;
  if (logistic) {
    const double p0 = clamp01(ymean, clip);
    model.base = std::log(p0 / (1.0 - p0));
  } else {
    model.base = ymean;
  }

  // presort active rows once per feature (ties broken by row index)
  std::vector<std::vector<int>> sorted(d, active);
  for (int f = 0; f < d; ++f) {
    std::sort(sorted[f].begin(), sorted[f].end(), [&](int a, int b) {
      return x(a, f) != x(b, f) ? x(a, f) < x(b, f) : a < b;
    });
  }

  std::vector<double> g(n, 0.0), h(n, 0.0), fhat(n, model.base);
  std::vector<char> in_round(n, 1);
  std::mt19937_64 rng(mix_seed(params.seed, 0x9b7));
  const bool subsampling = params.subsample < 1.0;
  std::vector<int> pool = active;

  for (int round = 0; round < params.n_rounds; ++round) {
    if (subsampling) {
      std::shuffle(pool.begin(), pool.end(), rng);
      const int m = std::max<int>(1, static_cast<int>(std::lround(params.subsample *
                                                                  active.size())));
      std::fill(in_round.begin(), in_round.end(), 0);
      for (int i = 0; i < m; ++i) in_round[pool[i]] = 1;
    }
    for (int r : active) {
      if (logistic) {
        const double p = expit(fhat[r]);
        g[r] = w[r] * (y[r] - p);
        h[r] = w[r] * p * (1.0 - p);
      } else {
        g[r] = w[r] * (y[r] - fhat[r]);
        h[r] = w[r];
      }
    }
    NodeLists root;
    root.rows.resize(d);
    for (int f = 0; f < d; ++f) {
      if (subsampling) {
        for (int r : sorted[f]) {
          if (in_round[r]) root.rows[f].push_back(r);
        }
      } else {
        root.rows[f] = sorted[f];
      }
    }
    TreeGrower grower(x, g, h, params);
    Tree tree = grower.grow(std::move(root));
    for (int r : active) fhat[r] += tree.predict_row(x, r);
    model.trees.push_back(std::move(tree));

    if (curve) {
      double loss = 0.0;
      for (int r : active) {
        if (logistic) {
          const double p = clamp01(expit(fhat[r]), 1e-12);
          loss += w[r] * -(y[r] * std::log(p) + (1.0 - y[r]) * std::log(1.0 - p));
        } else {
          const double e = y[r] - fhat[r];
          loss += w[r] * e * e;
        }
      }
      curve->push_back(loss / wsum);
    }
  }
  return model;
}

void check_json_model(const nlohmann::json& j, const std::string& want) {
  if (!j.is_object() || j.value("model", "") != want)
    throw config_error("not a serialized " + want + " model");
}

nlohmann::json gbt_to_json(const GbtModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : m.trees) {
    trees.push_back({{"feature", t.feature},
                     {"threshold", t.threshold},
                     {"left", t.left},
                     {"right", t.right},
                     {"value", t.value}});
  }
  return {{"base", m.base}, {"trees", std::move(trees)}};
}

GbtModel gbt_from_json(const nlohmann::json& j) {
  GbtModel m;
  m.base = j.at("base").get<double>();
  for (const auto& tj : j.at("trees")) {
    Tree t;
    t.feature = tj.at("feature").get<std::vector<int>>();
    t.threshold = tj.at("threshold").get<std::vector<double>>();
    t.left = tj.at("left").get<std::vector<int>>();
    t.right = tj.at("right").get<std::vector<int>>();
    t.value = tj.at("value").get<std::vector<double>>();
    const size_t k = t.feature.size();
    if (t.threshold.size() != k || t.left.size() != k || t.right.size() != k ||
        t.value.size() != k)
      throw config_error("corrupt serialized tree");
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace

RegressionModel fit_regression(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  spec.validate();
  check_training_inputs(x, static_cast<int>(y.size()), w);
  RegressionModel m;
  m.kind_ = spec.kind;
  m.d_in_ = static_cast<int>(x.cols());
  if (spec.kind == LearnerKind::gbt) {
    m.gbt_ = fit_gbt_core(x, y, w, spec.gbt, false, 0.0, &m.train_curve_);
  } else {
    m.theta_ = solve_wls(expand_features(spec.kind, x), y, w, spec.ridge);
    if (!m.theta_.allFinite()) throw fit_error("regression solve produced non-finite values");
  }
  return m;
}

ProbabilityModel fit_probability(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                                 const std::vector<int>& label, const Eigen::VectorXd& w,
                                 double clip) {
  spec.validate();
  if (!(clip > 0.0) || clip >= 0.5) throw config_error("probability clip must be in (0, 0.5)");
  check_training_inputs(x, static_cast<int>(label.size()), w);
  int n_pos = 0, n_neg = 0;
  Eigen::VectorXd y01(label.size());
  for (size_t i = 0; i < label.size(); ++i) {
    if (label[i] != 0 && label[i] != 1) throw fit_error("labels must be 0/1");
    y01[static_cast<int>(i)] = label[i];
    if (w[static_cast<int>(i)] > 0.0) (label[i] == 1 ? n_pos : n_neg)++;
  }
  if (n_pos == 0 || n_neg == 0) throw fit_error("training data is single-class");

  ProbabilityModel m;
  m.kind_ = spec.kind;
  m.d_in_ = static_cast<int>(x.cols());
  m.clip_ = clip;
  if (spec.kind == LearnerKind::gbt) {
    m.gbt_ = fit_gbt_core(x, y01, w, spec.gbt, true, clip, nullptr);
  } else {
    m.theta_ = fit_logistic_newton(expand_features(spec.kind, x), y01, w, spec.ridge);
  }
  return m;
}

double RegressionModel::predict(const Eigen::VectorXd& x) const {
  if (static_cast<int>(x.size()) != d_in_)
    throw config_error("regression model expects " + std::to_string(d_in_) +
                       " features, got " + std::to_string(x.size()));
  if (kind_ == LearnerKind::gbt) return gbt_.predict_raw(x.transpose());
  return expand_features(kind_, x).dot(theta_);
}

Eigen::VectorXd RegressionModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (int r = 0; r < x.rows(); ++r) out[r] = predict(Eigen::VectorXd(x.row(r).transpose()));
  return out;
}

nlohmann::json RegressionModel::to_json() const {
  nlohmann::json j{{"model", "regression"}, {"kind", to_string(kind_)}, {"d_in", d_in_}};
  if (kind_ == LearnerKind::gbt) {
    j["gbt"] = gbt_to_json(gbt_);
  } else {
    j["theta"] = std::vector<double>(theta_.begin(), theta_.end());
  }
  return j;
}

RegressionModel RegressionModel::from_json(const nlohmann::json& j)  {
  return with_config_errors("regression model", [&] {
    check_json_model(j, "regression");
    RegressionModel m;
    m.kind_ = learner_kind_from_string(j.at("kind").get<std::string>());
    m.d_in_ = j.at("d_in").get<int>();
    if (m.kind_ == LearnerKind::gbt) {
      m.gbt_ = gbt_from_json(j.at("gbt"));
    } else {
      const auto v = j.at("theta").get<std::vector<double>>();
      m.theta_ = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<int>(v.size()));
      if (m.theta_.size() != expanded_dim(m.kind_, m.d_in_))
        throw config_error("serialized coefficients do not match the declared dimension");
    }
    return m;
  });
}

double ProbabilityModel::predict(const Eigen::VectorXd& x) const {
  if (static_cast<int>(x.size()) != d_in_)
    throw config_error("probability model expects " + std::to_string(d_in_) +
                       " features, got " + std::to_string(x.size()));
  const double raw = kind_ == LearnerKind::gbt ? gbt_.predict_raw(x.transpose())
                                               : expand_features(kind_, x).dot(theta_);
  return clamp01(expit(raw), clip_);
}

Eigen::VectorXd ProbabilityModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (int r = 0; r < x.rows(); ++r) out[r] = predict(Eigen::VectorXd(x.row(r).transpose()));
  return out;
}

nlohmann::json ProbabilityModel::to_json() const {
  nlohmann::json j{{"model", "probability"},
                   {"kind", to_string(kind_)},
                   {"d_in", d_in_},
                   {"clip", clip_}};
  if (kind_ == LearnerKind::gbt) {
    j["gbt"] = gbt_to_json(gbt_);
  } else {
    j["theta"] = std::vector<double>(theta_.begin(), theta_.end());
  }
  return j;
}

ProbabilityModel ProbabilityModel::from_json(const nlohmann::json& j)  {
  return with_config_errors("probability model", [&] {
    check_json_model(j, "probability");
    ProbabilityModel m;
    m.kind_ = learner_kind_from_string(j.at("kind").get<std::string>());
    m.d_in_ = j.at("d_in").get<int>();
    m.clip_ = j.at("clip").get<double>();
    if (m.kind_ == LearnerKind::gbt) {
      m.gbt_ = gbt_from_json(j.at("gbt"));
    } else {
      const auto v = j.at("theta").get<std::vector<double>>();
      m.theta_ = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<int>(v.size()));
      if (m.theta_.size() != expanded_dim(m.kind_, m.d_in_))
        throw config_error("serialized coefficients do not match the declared dimension");
    }
    return m;
  });
}

namespace {

struct FoldIndex {
  std::vector<std::vector<int>> train, test;
};

FoldIndex index_folds(const std::vector<int>& fold, int n, int n_folds) {
  if (static_cast<int>(fold.size()) != n)
    throw fit_error("fold assignment does not match the row count");
  if (n_folds < 2) throw config_error("cross-fitting needs at least 2 folds");
  FoldIndex idx;
  idx.train.resize(n_folds);
  idx.test.resize(n_folds);
  for (int r = 0; r < n; ++r) {
    const int f = fold[r];
    if (f < 0 || f >= n_folds) throw fit_error("fold id out of range");
    for (int g = 0; g < n_folds; ++g) (g == f ? idx.test : idx.train)[g].push_back(r);
  }
  for (int g = 0; g < n_folds; ++g) {
    if (idx.train[g].empty())
      throw fit_error("fold " + std::to_string(g) + " leaves no training rows");
  }
  return idx;
}

template <typename T>
T take(const T& v, const std::vector<int>& rows);

template <>
Eigen::MatrixXd take(const Eigen::MatrixXd& v, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<int>(rows.size()), v.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<int>(i)) = v.row(rows[i]);
  return out;
}

template <>
Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) out[static_cast<int>(i)] = v[rows[i]];
  return out;
}

LearnerSpec fold_spec(const LearnerSpec& spec, int g) {
  LearnerSpec s = spec;
  s.gbt.seed = mix_seed(spec.gbt.seed, static_cast<std::uint64_t>(g) + 1);
  return s;
}

}  // namespace

double CrossFitRegression::predict_mean(const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (const auto& m : models) acc += m.predict(x);
  return acc / static_cast<double>(models.size());
}

double CrossFitProbability::predict_mean(const Eigen::VectorXd& x) const {
  double acc = 0.0;
  for (const auto& m : models) acc += m.predict(x);
  return acc / static_cast<double>(models.size());
}

CrossFitRegression cross_fit_regression(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                                        const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                        const std::vector<int>& fold, int n_folds) {
  const int n = static_cast<int>(x.rows());
  const FoldIndex idx = index_folds(fold, n, n_folds);
  CrossFitRegression out;
  out.oof.resize(n);
  for (int g = 0; g < n_folds; ++g) {
    RegressionModel m = fit_regression(fold_spec(spec, g), take(x, idx.train[g]),
                                       take(y, idx.train[g]), take(w, idx.train[g]));
    for (int r : idx.test[g]) out.oof[r] = m.predict(Eigen::VectorXd(x.row(r).transpose()));
    out.models.push_back(std::move(m));
  }
  return out;
}

CrossFitProbability cross_fit_probability(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                                          const std::vector<int>& label,
                                          const Eigen::VectorXd& w, const std::vector<int>& fold,
                                          int n_folds, double clip) {
  const int n = static_cast<int>(x.rows());
  const FoldIndex idx = index_folds(fold, n, n_folds);
  CrossFitProbability out;
  out.oof.resize(n);
  for (int g = 0; g < n_folds; ++g) {
    std::vector<int> lab;
    lab.reserve(idx.train[g].size());
    for (int r : idx.train[g]) lab.push_back(label[r]);
    ProbabilityModel m;
    try {
      m = fit_probability(fold_spec(spec, g), take(x, idx.train[g]), lab,
                          take(w, idx.train[g]), clip);
    } catch (const fit_error& e) {
      throw fit_error("fold " + std::to_string(g) + ": " + e.what());
    }
    for (int r : idx.test[g]) out.oof[r] = m.predict(Eigen::VectorXd(x.row(r).transpose()));
    out.models.push_back(std::move(m));
  }
  return out;
}

}  // namespace wmdl
