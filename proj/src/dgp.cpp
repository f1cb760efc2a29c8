#include "dgp.hpp"

#include <cmath>
#include <map>
#include <random>

#include "errors.hpp"
#include "json_util.hpp"
#include "util.hpp"

namespace wmdl {

Scenario scenario_from_string(const std::string& s) {
  if (s == "shared-only" || s == "I") return Scenario::shared_only;
  if (s == "source-specific" || s == "II") return Scenario::source_specific;
  throw config_error("unknown scenario '" + s + "' (want shared-only|source-specific)");
}

std::string to_string(Scenario s) {
  return s == Scenario::shared_only ? "shared-only" : "source-specific";
}

namespace {

constexpr int kDimX = 4;

using MainEffectFn = double (*)(const Eigen::VectorXd&, const Eigen::VectorXd&);

double main_effect_poly1(const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  double m = 1.0 + x[0] + x[1] * x[1] - x[2] * x[3];
  if (z.size() > 0) m += 0.5 * z[0];
  return m;
}

const std::map<std::string, MainEffectFn>& main_effect_registry() {
  static const std::map<std::string, MainEffectFn> reg = {{"poly-1", &main_effect_poly1}};
  return reg;
}

MainEffectFn main_effect_fn(const std::string& id) {
  const auto& reg = main_effect_registry();
  auto it = reg.find(id);
  if (it == reg.end()) {
    std::string known;
    for (const auto& [k, v] : reg) known += (known.empty() ? "" : ", ") + k;
    throw config_error("unknown main effect '" + id + "' (known: " + known + ")");
  }
  return it->second;
}

double norm_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }
double norm_pdf(double t) {
  return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
}

}  // namespace

void DgpConfig::validate() const {
  if (n_sources < 1) throw config_error("n_sources must be >= 1");
  if (n_total < 2 * n_sources)
    throw config_error("n_total must be at least 2 rows per source");
  if (sigma_mu < 0.0 || sigma_main < 0.0 || sigma_eps < 0.0)
    throw config_error("sigma_mu/sigma_main/sigma_eps must be >= 0");
  main_effect_fn(main_effect_id);
}

DgpConfig dgp_config_from_json(const nlohmann::json& j) {
  return with_config_errors("dgp config", [&] {
  DgpConfig c;
  if (!j.is_object()) throw config_error("dgp config must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "n_sources") {
      c.n_sources = val.get<int>();
    } else if (key == "n_total") {
      c.n_total = val.get<int>();
    } else if (key == "scenario") {
      c.scenario = scenario_from_string(val.get<std::string>());
    } else if (key == "effect") {
      c.effect = effect_mode_from_string(val.get<std::string>());
    } else if (key == "sigma_mu") {
      c.sigma_mu = val.get<double>();
    } else if (key == "sigma_main") {
      c.sigma_main = val.get<double>();
    } else if (key == "sigma_eps") {
      c.sigma_eps = val.get<double>();
    } else if (key == "main_effect") {
      c.main_effect_id = val.get<std::string>();
    } else if (key == "seed") {
      c.seed = val.get<std::uint64_t>();
    } else {
      throw config_error("unknown dgp config key '" + key + "'");
    }
  }
  c.validate();
  return c;
  });
}

nlohmann::json dgp_config_to_json(const DgpConfig& c) {
  return {{"n_sources", c.n_sources}, {"n_total", c.n_total},
          {"scenario", to_string(c.scenario)}, {"effect", to_string(c.effect)},
          {"sigma_mu", c.sigma_mu}, {"sigma_main", c.sigma_main},
          {"sigma_eps", c.sigma_eps},
          {"main_effect", c.main_effect_id}, {"seed", c.seed}};
}

double true_delta_hom(const Eigen::VectorXd& x) {
  double d = x[3];
  if (x[0] < 0.5) d += x[0] + x[1] + x[2];
  return d;
}

double true_delta_het(const Eigen::VectorXd& x, int source_id) {
  const bool odd = source_id % 2 != 0;
  double d = 0.0;
  if (odd && x[0] < 0.5) d += x[0];
  if (source_id <= 7 && x[1] < 0.5) d += x[1];
  if (x[2] < 0.5) d += x[2];
  if (odd) d += x[3];
  if (!odd && x[0] < 0.0) d += 2.0;
  return d;
}

double DgpTruth::delta(const Eigen::VectorXd& x, int source_id) const {
  if (config.effect == EffectMode::homogeneous) return true_delta_hom(x);
  return true_delta_het(x, source_id);
}

double DgpTruth::main_effect(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                             int source_id) const {
  const Eigen::VectorXd& c = m_shift.at(source_id - 1);
  return main_effect_fn(config.main_effect_id)(x, z) + c[0] + c[1] * x[0] +
         c[2] * x[1] * x[1] + c[3] * x[0] * x[2];
}

double DgpTruth::propensity_pos(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                                int source_id) const {
  const Eigen::VectorXd& b = beta.at(source_id - 1);
  double t = b.head(kDimX).dot(x.head(kDimX));
  if (config.scenario == Scenario::source_specific) {
    if (z.size() < 1) throw config_error("propensity needs the source-specific covariate");
    t += b[kDimX] * z[0];
  }
  return expit(t);
}

double DgpTruth::outcome_mean(const Eigen::VectorXd& x, const Eigen::VectorXd& z, int a,
                              int source_id) const {
  return main_effect(x, z, source_id) + a * delta(x, source_id);
}

double DgpTruth::x_density(const Eigen::VectorXd& x, int source_id) const {
  for (int j = 0; j < kDimX; ++j) {
    if (std::abs(x[j]) > 1.0) return 0.0;
  }
  if (source_id == 1) return std::pow(0.5, kDimX);
  const Eigen::VectorXd& m = mu.at(source_id - 1);
  double f = 1.0;
  for (int j = 0; j < kDimX; ++j) {
    const double lo = norm_cdf(-1.0 - m[j]), hi = norm_cdf(1.0 - m[j]);
    f *= norm_pdf(x[j] - m[j]) / (hi - lo);
  }
  return f;
}

nlohmann::json DgpTruth::to_json() const {
  nlohmann::json jmu = nlohmann::json::array();
  for (const auto& m : mu) jmu.push_back(std::vector<double>(m.begin(), m.end()));
  nlohmann::json jbeta = nlohmann::json::array();
  for (const auto& b : beta) jbeta.push_back(std::vector<double>(b.begin(), b.end()));
  nlohmann::json jshift = nlohmann::json::array();
  for (const auto& c : m_shift) jshift.push_back(std::vector<double>(c.begin(), c.end()));
  return {{"config", dgp_config_to_json(config)},
          {"beta", jbeta},
          {"mu", jmu},
          {"m_shift", jshift}};
}

namespace {

Eigen::VectorXd draw_row(std::mt19937_64& rng, const Eigen::VectorXd& mu, bool uniform) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> box(-1.0, 1.0);
  Eigen::VectorXd x(kDimX);
  for (int j = 0; j < kDimX; ++j) {
    if (uniform) {
      x[j] = box(rng);
    } else {
      double v;
      do {
        v = mu[j] + n01(rng);
      } while (std::abs(v) > 1.0);
      x[j] = v;
    }
  }
  return x;
}

}  // namespace

SimulatedData simulate(const DgpConfig& config) {
  config.validate();
  const int K = config.n_sources;
  const bool with_z = config.scenario == Scenario::source_specific;
  const int d_beta = kDimX + (with_z ? 1 : 0);

  // Population parameters come from their own stream so that every sample
  // size shares one world for a given seed.
  DgpTruth truth;
  truth.config = config;
  {
    std::mt19937_64 rng(mix_seed(config.seed, 0x0A));
    std::normal_distribution<double> n01(0.0, 1.0);
    truth.mu.assign(K, Eigen::VectorXd::Zero(kDimX));
    for (int s = 2; s <= K; ++s) {
      for (int j = 0; j < kDimX; ++j) truth.mu[s - 1][j] = config.sigma_mu * n01(rng);
    }
    truth.m_shift.assign(K, Eigen::VectorXd::Zero(4));
    for (int s = 1; s <= K; ++s) {
      for (int j = 0; j < 4; ++j) truth.m_shift[s - 1][j] = config.sigma_main * n01(rng);
    }
  }

  MultiSourceData data;
  data.d_x = kDimX;
  data.target_source = 1;
  const int base = config.n_total / K, rem = config.n_total % K;
  for (int s = 1; s <= K; ++s) {
    SourceData src;
    src.id = s;
    const int n = base + (s - 1 < rem ? 1 : 0);
    src.x.resize(n, kDimX);
    src.z.resize(n, with_z ? 1 : 0);
    src.y.resize(n);
    src.a.resize(n);
    // Covariates stream per source, x and z interleaved per row, so a
    // smaller draw is an exact row-prefix of a larger one.
    std::mt19937_64 rng(mix_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int r = 0; r < n; ++r) {
      src.x.row(r) = draw_row(rng, truth.mu[s - 1], s == 1);
      if (with_z) {
        double v;
        do {
          v = n01(rng);
        } while (std::abs(v) > 1.0);
        src.z(r, 0) = v;
      }
    }
    data.sources.push_back(std::move(src));
  }

  // Randomize treatment under a per-source logistic propensity; a draw that
  // leaves the source single-armed is discarded and its coefficients redrawn.
  truth.beta.assign(K, Eigen::VectorXd::Zero(d_beta));
  for (auto& src : data.sources) {
    std::mt19937_64 rng(mix_seed(config.seed, 0x2000 + static_cast<std::uint64_t>(src.id)));
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::VectorXd& b = truth.beta[src.id - 1];
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      for (int j = 0; j < d_beta; ++j) b[j] = n01(rng);
      int n_pos = 0, n_neg = 0;
      for (int r = 0; r < src.rows(); ++r) {
        double t = b.head(kDimX).dot(src.x.row(r).head(kDimX));
        if (with_z) t += b[kDimX] * src.z(r, 0);
        const int a = u01(rng) < expit(t) ? 1 : -1;
        src.a[r] = a;
        (a == 1 ? n_pos : n_neg)++;
      }
      ok = n_pos > 0 && n_neg > 0;
    }
    if (!ok)
      throw fit_error("could not randomize treatment with both arms in source " +
                      std::to_string(src.id));
  }

  for (auto& src : data.sources) {
    std::mt19937_64 rng(mix_seed(config.seed, 0x3000 + static_cast<std::uint64_t>(src.id)));
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int r = 0; r < src.rows(); ++r) {
      const Eigen::VectorXd x = src.x.row(r);
      const Eigen::VectorXd z = src.z.row(r);
      src.y[r] = truth.main_effect(x, z, src.id) + src.a[r] * truth.delta(x, src.id) +
                 config.sigma_eps * n01(rng);
    }
  }
  data.validate();
  return {std::move(data), std::move(truth)};
}

Eigen::MatrixXd sample_covariates(const DgpTruth& truth, int source_id, int n,
                                  std::uint64_t seed) {
  if (source_id < 1 || source_id > truth.config.n_sources)
    throw config_error("source " + std::to_string(source_id) + " outside the simulated range");
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(source_id)));
  Eigen::MatrixXd x(n, kDimX);
  for (int r = 0; r < n; ++r)
    x.row(r) = draw_row(rng, truth.mu[source_id - 1], source_id == 1);
  return x;
}

}  // namespace wmdl
