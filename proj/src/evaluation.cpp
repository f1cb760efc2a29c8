#include "evaluation.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

#include "errors.hpp"
#include "json_util.hpp"
#include "nuisance.hpp"
#include "util.hpp"

namespace wmdl {

namespace {

// Seed salts: each consumer gets its own stream off the per-replication seed.
constexpr std::uint64_t kTrainSalt = 0xD1;
constexpr std::uint64_t kTestSalt = 0xD2;
constexpr std::uint64_t kFitSalt = 0xD3;

std::string default_name(const EstimatorSpec& spec) {
  std::string name = to_string(spec.method);
  if (spec.include_source_indicator) name += "-s";
  return name;
}

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw fit_error("could not open '" + path + "' for writing");
  out << body;
  out.flush();
  if (!out) throw fit_error("could not write '" + path + "'");
}

// Runs body(0..n_jobs-1) across up to `threads` workers. Job outputs must go
// to per-index slots so results do not depend on scheduling order.
void run_grid(int n_jobs, int threads, const std::function<void(int)>& body) {
  const int t = std::max(1, std::min(threads, n_jobs));
  if (t <= 1) {
    for (int i = 0; i < n_jobs; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_jobs) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int k = 0; k < t; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void aggregate(EstimatorResult& row) {
  int done = 0;
  double sum = 0.0;
  row.n_missing = 0;
  for (const auto& cell : row.mses) {
    if (cell) {
      ++done;
      sum += *cell;
    } else {
      ++row.n_missing;
    }
  }
  row.mean_mse = done > 0 ? sum / done : std::numeric_limits<double>::quiet_NaN();
  if (done >= 2) {
    double ss = 0.0;
    for (const auto& cell : row.mses) {
      if (cell) ss += (*cell - row.mean_mse) * (*cell - row.mean_mse);
    }
    row.sd_mse = std::sqrt(ss / (done - 1));
  } else {
    row.sd_mse = 0.0;
  }
}

void fail_if_too_sparse(const EstimatorResult& row, int replications) {
  if (5 * row.n_missing > replications) {
    throw fit_error("estimator '" + row.name + "' failed " + std::to_string(row.n_missing) +
                    " of " + std::to_string(replications) + " replications");
  }
}

// First rows of every source under the same per-source allocation rule the
// simulator uses; rows are iid within a source, so a prefix is a draw of the
// smaller design from the same generating process.
MultiSourceData head_rows(const MultiSourceData& data, int n_total) {
  const int K = data.n_sources();
  MultiSourceData out;
  out.d_x = data.d_x;
  out.target_source = data.target_source;
  const int base = n_total / K, rem = n_total % K;
  for (int s = 0; s < K; ++s) {
    const SourceData& src = data.sources[s];
    const int keep = base + (s < rem ? 1 : 0);
    if (keep > src.rows())
      throw config_error("cannot take " + std::to_string(keep) + " rows from a source with " +
                         std::to_string(src.rows()));
    SourceData cut;
    cut.id = src.id;
    cut.has_outcomes = src.has_outcomes;
    cut.x = src.x.topRows(keep);
    cut.z = src.z.topRows(keep);
    cut.y.assign(src.y.begin(), src.y.begin() + keep);
    cut.a.assign(src.a.begin(), src.a.begin() + keep);
    out.sources.push_back(std::move(cut));
  }
  return out;
}

}  // namespace

double mse(const DeltaFn& predict, const Eigen::MatrixXd& test_x, const DeltaFn& truth) {
  const int n = static_cast<int>(test_x.rows());
  if (n == 0) throw config_error("mse needs at least one test point");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = test_x.row(i);
    const double d = predict(x) - truth(x);
    acc += d * d;
  }
  return acc / n;
}

double mse(const CateEstimate& estimate, const Eigen::MatrixXd& test_x, const DeltaFn& truth) {
  if (test_x.cols() != estimate.d_x) {
    throw config_error("test covariates have " + std::to_string(test_x.cols()) +
                       " columns but the estimate expects " + std::to_string(estimate.d_x));
  }
  return mse([&estimate](const Eigen::VectorXd& x) { return estimate.predict_delta(x); }, test_x,
             truth);
}

void ExperimentConfig::validate() const {
  dgp.validate();
  if (estimators.empty()) throw config_error("experiment needs at least one estimator");
  if (replications < 1) throw config_error("replications must be at least 1");
  if (n_test < 1) throw config_error("n_test must be at least 1");
  if (threads < 1) throw config_error("threads must be at least 1");
  for (std::size_t i = 0; i < estimators.size(); ++i) {
    const NamedEstimator& e = estimators[i];
    if (e.name.empty()) throw config_error("estimator names must be non-empty");
    if (e.name.find(',') != std::string::npos || e.name.find('\n') != std::string::npos)
      throw config_error("estimator name '" + e.name + "' must not contain commas or newlines");
    for (std::size_t k = 0; k < i; ++k) {
      if (estimators[k].name == e.name)
        throw config_error("duplicate estimator name '" + e.name + "'");
    }
    e.spec.validate();
  }
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  return with_config_errors("experiment config", [&] {
    ExperimentConfig c;
    if (!j.is_object()) throw config_error("experiment config must be a JSON object");
    for (const auto& [key, val] : j.items()) {
      if (key == "dgp") {
        c.dgp = dgp_config_from_json(val);
      } else if (key == "estimators") {
        if (!val.is_array()) throw config_error("estimators must be an array");
        for (const auto& entry : val) {
          if (!entry.is_object()) throw config_error("each estimator entry must be a JSON object");
          nlohmann::json spec_json = entry;
          std::string name;
          if (auto it = spec_json.find("name"); it != spec_json.end()) {
            name = it->get<std::string>();
            spec_json.erase(it);
          }
          NamedEstimator e;
          e.spec = estimator_spec_from_json(spec_json);
          e.name = name.empty() ? default_name(e.spec) : name;
          c.estimators.push_back(std::move(e));
        }
      } else if (key == "replications") {
        c.replications = val.get<int>();
      } else if (key == "n_test") {
        c.n_test = val.get<int>();
      } else if (key == "master_seed") {
        c.master_seed = val.get<std::uint64_t>();
      } else if (key == "threads") {
        c.threads = val.get<int>();
      } else if (key == "check") {
        if (!val.is_array()) throw config_error("check must be an array of [low, high] name pairs");
        for (const auto& pair : val) {
          if (!pair.is_array() || pair.size() != 2)
            throw config_error("each check entry must be a [low, high] name pair");
          c.expect_less.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
        }
      } else {
        throw config_error("unknown experiment config key '" + key + "'");
      }
    }
    c.validate();
    return c;
  });
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& config) {
  nlohmann::json estimators = nlohmann::json::array();
  for (const auto& e : config.estimators) {
    nlohmann::json spec = estimator_spec_to_json(e.spec);
    spec["name"] = e.name;
    estimators.push_back(std::move(spec));
  }
  nlohmann::json j{{"dgp", dgp_config_to_json(config.dgp)},
                   {"estimators", std::move(estimators)},
                   {"replications", config.replications},
                   {"n_test", config.n_test},
                   {"master_seed", config.master_seed},
                   {"threads", config.threads}};
  if (!config.expect_less.empty()) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& [lo, hi] : config.expect_less) {
      checks.push_back(nlohmann::json::array({lo, hi}));
    }
    j["check"] = std::move(checks);
  }
  return j;
}

const EstimatorResult& ExperimentReport::row(const std::string& name) const {
  for (const auto& e : estimators) {
    if (e.name == name) return e;
  }
  throw config_error("no estimator named '" + name + "' in the report");
}

ExperimentReport run_replications(const ExperimentConfig& config) {
  config.validate();
  const int R = config.replications;
  const int n_est = static_cast<int>(config.estimators.size());
  std::vector<std::vector<std::optional<double>>> cells(
      n_est, std::vector<std::optional<double>>(R));
  std::vector<std::vector<double>> seconds(n_est, std::vector<double>(R, 0.0));
  std::mutex log_mu;

  run_grid(R, config.threads, [&](int r) {
    const std::uint64_t rep_seed = mix_seed(config.master_seed, static_cast<std::uint64_t>(r));
    DgpConfig dgp = config.dgp;
    dgp.seed = mix_seed(rep_seed, kTrainSalt);
    const SimulatedData sim = simulate(dgp);
    const int target = sim.data.target_source;
    const Eigen::MatrixXd test_x =
        sample_covariates(sim.truth, target, config.n_test, mix_seed(rep_seed, kTestSalt));
    const DeltaFn truth = [&sim, target](const Eigen::VectorXd& x) {
      return sim.truth.delta(x, target);
    };
    for (int e = 0; e < n_est; ++e) {
      EstimatorSpec spec = config.estimators[e].spec;
      spec.seed = mix_seed(rep_seed, kFitSalt);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const CateEstimate est = fit(sim.data, spec);
        const double err = mse(est, test_x, truth);
        if (!std::isfinite(err)) throw fit_error("mse is not finite");
        cells[e][r] = err;
      } catch (const std::exception& ex) {
        std::lock_guard<std::mutex> lock(log_mu);
        std::cerr << "replication " << (r + 1) << ": estimator '" << config.estimators[e].name
                  << "' failed: " << ex.what() << "\n";
      }
      seconds[e][r] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });

  ExperimentReport report;
  report.replications = R;
  report.master_seed = config.master_seed;
  for (int e = 0; e < n_est; ++e) {
    EstimatorResult row;
    row.name = config.estimators[e].name;
    row.mses = std::move(cells[e]);
    for (double s : seconds[e]) row.wall_seconds += s;
    aggregate(row);
    fail_if_too_sparse(row, R);
    report.estimators.push_back(std::move(row));
  }
  return report;
}

ExperimentReport robustness_suite(const ExperimentConfig& base, const std::vector<int>& sizes) {
  base.validate();
  if (sizes.empty()) throw config_error("robustness suite needs at least one sample size");
  if (base.dgp.scenario != Scenario::shared_only) {
    throw config_error(
        "robustness suite needs the shared-covariates design (no source-specific covariates)");
  }
  const NamedEstimator& head = base.estimators.front();
  if (!is_direct(head.spec.method))
    throw config_error("robustness suite needs a direct pseudo-outcome method");

  struct Arm {
    const char* tag;
    bool corrupt_m;
    bool corrupt_p;
  };
  const std::array<Arm, 4> arms = {{{"both_correct", false, false},
                                    {"outcome_corrupted", true, false},
                                    {"propensity_corrupted", false, true},
                                    {"both_corrupted", true, true}}};
  const int R = base.replications;
  const int n_sizes = static_cast<int>(sizes.size());
  const int n_rows = n_sizes * static_cast<int>(arms.size());
  std::vector<std::vector<std::optional<double>>> cells(
      n_rows, std::vector<std::optional<double>>(R));
  std::vector<std::vector<double>> seconds(n_rows, std::vector<double>(R, 0.0));
  std::mutex log_mu;

  const int n_max = *std::max_element(sizes.begin(), sizes.end());

  // Replication r simulates once at the largest size; smaller sizes reuse its
  // leading rows. The generating coefficients therefore stay fixed while only
  // the sample grows, so size and arm comparisons are paired rather than
  // confounded by redrawn worlds.
  run_grid(R, base.threads, [&](int r) {
    const std::uint64_t rep_seed = mix_seed(base.master_seed, static_cast<std::uint64_t>(r));
    DgpConfig dgp = base.dgp;
    dgp.n_total = n_max;
    dgp.seed = mix_seed(rep_seed, kTrainSalt);
    const SimulatedData sim = simulate(dgp);
    const DgpTruth& truth = sim.truth;
    const int target = sim.data.target_source;
    const Eigen::MatrixXd test_x =
        sample_covariates(truth, target, base.n_test, mix_seed(rep_seed, kTestSalt));
    const DeltaFn oracle = [&truth, target](const Eigen::VectorXd& x) {
      return truth.delta(x, target);
    };
    const double noise_var = truth.config.sigma_eps * truth.config.sigma_eps;
    // Weight ingredients stay at their true values in every arm, so the
    // corruption only reaches the pseudo-outcome inputs.
    std::array<OracleComponents, 4> arm_parts;
    for (std::size_t k = 0; k < arms.size(); ++k) {
      OracleComponents& parts = arm_parts[k];
      if (arms[k].corrupt_m) {
        parts.m = [](const Eigen::VectorXd&, const Eigen::VectorXd&, int) { return 0.0; };
      } else {
        parts.m = [&truth](const Eigen::VectorXd& x, const Eigen::VectorXd& z, int s) {
          return truth.main_effect(x, z, s);
        };
      }
      if (arms[k].corrupt_p) {
        parts.p_full = [](int, const Eigen::VectorXd&, const Eigen::VectorXd&, int) {
          return 0.5;
        };
      } else {
        parts.p_full = [&truth](int a, const Eigen::VectorXd& x, const Eigen::VectorXd& z, int s) {
          const double p = truth.propensity_pos(x, z, s);
          return a > 0 ? p : 1.0 - p;
        };
      }
      parts.p_marg = [&truth](int a, const Eigen::VectorXd& x, int s) {
        const double p = truth.propensity_pos(x, Eigen::VectorXd(), s);
        return a > 0 ? p : 1.0 - p;
      };
      parts.v = [noise_var](int, const Eigen::VectorXd&, int) { return noise_var; };
      parts.density = [&truth](const Eigen::VectorXd& x, int s) { return truth.x_density(x, s); };
    }

    for (int c = 0; c < n_sizes; ++c) {
      const MultiSourceData train =
          sizes[c] == n_max ? sim.data : head_rows(sim.data, sizes[c]);
      for (std::size_t k = 0; k < arms.size(); ++k) {
        const int row = c * static_cast<int>(arms.size()) + static_cast<int>(k);
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const NuisanceSet nuis = make_oracle_nuisances(train, arm_parts[k], head.spec.nuisance);
          EstimatorSpec spec = head.spec;
          spec.seed = mix_seed(rep_seed, kFitSalt);
          const CateEstimate est = fit_with_nuisances(train, spec, nuis);
          const double err = mse(est, test_x, oracle);
          if (!std::isfinite(err)) throw fit_error("mse is not finite");
          cells[row][r] = err;
        } catch (const std::exception& ex) {
          std::lock_guard<std::mutex> lock(log_mu);
          std::cerr << "replication " << (r + 1) << ": arm '" << arms[k].tag
                    << "' at n=" << sizes[c] << " failed: " << ex.what() << "\n";
        }
        seconds[row][r] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    }
  });

  ExperimentReport report;
  report.replications = R;
  report.master_seed = base.master_seed;
  for (int c = 0; c < n_sizes; ++c) {
    for (std::size_t k = 0; k < arms.size(); ++k) {
      const int idx = c * static_cast<int>(arms.size()) + static_cast<int>(k);
      EstimatorResult row;
      row.name = std::string(arms[k].tag) + "@n=" + std::to_string(sizes[c]);
      row.mses = std::move(cells[idx]);
      for (double s : seconds[idx]) row.wall_seconds += s;
      aggregate(row);
      fail_if_too_sparse(row, R);
      report.estimators.push_back(std::move(row));
    }
  }
  return report;
}

std::vector<std::string> emit_report(const ExperimentReport& report, const std::string& format,
                                     const std::string& path) {
  if (format == "json") {
    write_text_file(path, report_to_json(report).dump(2) + "\n");
    return {path};
  }
  if (format != "csv")
    throw config_error("unknown report format '" + format + "' (want csv or json)");
  std::string stem = path;
  const std::string suffix = ".csv";
  if (stem.size() > suffix.size() &&
      stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
    stem.erase(stem.size() - suffix.size());
  }
  const std::string summary_path = stem + "_summary.csv";
  const std::string long_path = stem + "_long.csv";

  std::string summary = "estimator,mean_mse,sd_mse,replications,missing\n";
  for (const auto& row : report.estimators) {
    summary += row.name + ',' + fmt_full(row.mean_mse) + ',' + fmt_full(row.sd_mse) + ',' +
               std::to_string(report.replications) + ',' + std::to_string(row.n_missing) + '\n';
  }
  std::string long_rows = "estimator,replication,mse\n";
  for (const auto& row : report.estimators) {
    for (std::size_t r = 0; r < row.mses.size(); ++r) {
      long_rows += row.name + ',' + std::to_string(r + 1) + ',' +
                   (row.mses[r] ? fmt_full(*row.mses[r]) : std::string("NA")) + '\n';
    }
  }
  write_text_file(summary_path, summary);
  write_text_file(long_path, long_rows);
  return {summary_path, long_path};
}

nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.estimators) {
    nlohmann::json mses = nlohmann::json::array();
    for (const auto& cell : row.mses) {
      if (cell) {
        mses.push_back(*cell);
      } else {
        mses.push_back(nullptr);
      }
    }
    rows.push_back({{"name", row.name},
                    {"mean_mse", row.mean_mse},
                    {"sd_mse", row.sd_mse},
                    {"missing", row.n_missing},
                    {"mse", std::move(mses)}});
  }
  return {{"format", 1},
          {"replications", report.replications},
          {"master_seed", report.master_seed},
          {"estimators", std::move(rows)}};
}

ExperimentReport report_from_json(const nlohmann::json& j) {
  return with_config_errors("experiment report", [&] {
    if (!j.is_object()) throw config_error("experiment report must be a JSON object");
    ExperimentReport report;
    bool saw_format = false;
    for (const auto& [key, val] : j.items()) {
      if (key == "format") {
        if (!val.is_number_integer() || val.get<int>() != 1)
          throw config_error("unsupported experiment report format");
        saw_format = true;
      } else if (key == "replications") {
        report.replications = val.get<int>();
      } else if (key == "master_seed") {
        report.master_seed = val.get<std::uint64_t>();
      } else if (key == "estimators") {
        if (!val.is_array()) throw config_error("estimators must be an array");
        for (const auto& entry : val) {
          if (!entry.is_object()) throw config_error("each report row must be a JSON object");
          EstimatorResult row;
          for (const auto& [k2, v2] : entry.items()) {
            if (k2 == "name") {
              row.name = v2.get<std::string>();
            } else if (k2 == "mean_mse") {
              row.mean_mse = v2.get<double>();
            } else if (k2 == "sd_mse") {
              row.sd_mse = v2.get<double>();
            } else if (k2 == "missing") {
              // redundant with the null cells; recomputed below
            } else if (k2 == "mse") {
              if (!v2.is_array()) throw config_error("mse must be an array");
              for (const auto& cell : v2) {
                if (cell.is_null()) {
                  row.mses.emplace_back(std::nullopt);
                } else {
                  row.mses.emplace_back(cell.get<double>());
                }
              }
            } else {
              throw config_error("unknown report row key '" + k2 + "'");
            }
          }
          row.n_missing = 0;
          for (const auto& cell : row.mses) {
            if (!cell) ++row.n_missing;
          }
          report.estimators.push_back(std::move(row));
        }
      } else {
        throw config_error("unknown experiment report key '" + key + "'");
      }
    }
    if (!saw_format) throw config_error("experiment report is missing its format tag");
    return report;
  });
}

std::vector<std::string> ordering_failures(
    const ExperimentReport& report,
    const std::vector<std::pair<std::string, std::string>>& expect_less) {
  std::vector<std::string> failures;
  for (const auto& [lo, hi] : expect_less) {
    const EstimatorResult& a = report.row(lo);
    const EstimatorResult& b = report.row(hi);
    if (a.n_missing == static_cast<int>(a.mses.size()) ||
        b.n_missing == static_cast<int>(b.mses.size())) {
      failures.push_back("'" + lo + "' vs '" + hi + "': one side has no completed replications");
      continue;
    }
    if (!(a.mean_mse < b.mean_mse)) {
      failures.push_back("mean MSE of '" + lo + "' (" + fmt_short(a.mean_mse) +
                         ") is not below '" + hi + "' (" + fmt_short(b.mean_mse) + ")");
    }
  }
  return failures;
}

}  // namespace wmdl
