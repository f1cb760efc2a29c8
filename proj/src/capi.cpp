#include "wmdl/wmdl.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "dgp.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "evaluation.hpp"
#include "json_util.hpp"

struct wmdl_dataset {
  wmdl::MultiSourceData data;
  std::optional<wmdl::DgpTruth> truth;
};

struct wmdl_model {
  wmdl::CateEstimate estimate;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
int guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return WMDL_OK;
  } catch (const wmdl::config_error& e) {
    g_last_error = e.what();
    return WMDL_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return WMDL_ERR_RUNTIME;
  }
}

int null_arg(const char* what) {
  g_last_error = std::string(what) + " must not be null";
  return WMDL_ERR_CONFIG;
}

char* to_cstr(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw wmdl::fit_error("could not read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw wmdl::fit_error("could not open '" + path + "' for writing");
  out << body;
  out.flush();
  if (!out) throw wmdl::fit_error("could not write '" + path + "'");
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double predict_one(const wmdl::CateEstimate& est, const double* x, int d, int source_id) {
  if (d != est.d_x) {
    throw wmdl::config_error("prediction point has " + std::to_string(d) +
                             " covariates but the model expects " + std::to_string(est.d_x));
  }
  Eigen::VectorXd v(d);
  for (int j = 0; j < d; ++j) v[j] = x[j];
  return source_id <= 0 ? est.predict_delta(v) : est.predict_delta(v, source_id);
}

}  // namespace

extern "C" {

const char* wmdl_version(void) { return "0.1.0"; }

const char* wmdl_last_error(void) { return g_last_error.c_str(); }

void wmdl_string_free(char* s) { std::free(s); }

int wmdl_simulate(const char* dgp_config_json, wmdl_dataset** out) {
  if (dgp_config_json == nullptr) return null_arg("dgp_config_json");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    const wmdl::DgpConfig config =
        wmdl::dgp_config_from_json(wmdl::parse_json(dgp_config_json, "dgp config"));
    wmdl::SimulatedData sim = wmdl::simulate(config);
    *out = new wmdl_dataset{std::move(sim.data), std::move(sim.truth)};
  });
}

int wmdl_dataset_load_csv(const char* path, int target_source, wmdl_dataset** out) {
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    wmdl::CsvSchema schema;
    schema.target_source = target_source <= 0 ? 1 : target_source;
    *out = new wmdl_dataset{wmdl::load_csv(path, schema), std::nullopt};
  });
}

int wmdl_dataset_save_csv(const wmdl_dataset* data, const char* path) {
  if (data == nullptr) return null_arg("data");
  if (path == nullptr) return null_arg("path");
  return guarded([&] { wmdl::save_csv(data->data, path); });
}

int wmdl_dataset_truth_json(const wmdl_dataset* data, char** out_json) {
  if (data == nullptr) return null_arg("data");
  if (out_json == nullptr) return null_arg("out_json");
  return guarded([&] {
    if (!data->truth) throw wmdl::fit_error("dataset carries no generating truth");
    *out_json = to_cstr(data->truth->to_json().dump(2));
  });
}

int wmdl_dataset_rows(const wmdl_dataset* data) {
  return data == nullptr ? -1 : data->data.total_rows();
}

int wmdl_dataset_sources(const wmdl_dataset* data) {
  return data == nullptr ? -1 : data->data.n_sources();
}

int wmdl_dataset_source_rows(const wmdl_dataset* data, int source_id) {
  if (data == nullptr) return -1;
  for (const auto& s : data->data.sources) {
    if (s.id == source_id) return static_cast<int>(s.rows());
  }
  return -1;
}

void wmdl_dataset_free(wmdl_dataset* data) { delete data; }

int wmdl_fit(const wmdl_dataset* data, const char* estimator_spec_json, wmdl_model** out) {
  if (data == nullptr) return null_arg("data");
  if (estimator_spec_json == nullptr) return null_arg("estimator_spec_json");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    const wmdl::EstimatorSpec spec =
        wmdl::estimator_spec_from_json(wmdl::parse_json(estimator_spec_json, "estimator spec"));
    *out = new wmdl_model{wmdl::fit(data->data, spec)};
  });
}

int wmdl_model_predict_delta(const wmdl_model* model, const double* x, int d, int source_id,
                             double* out) {
  if (model == nullptr) return null_arg("model");
  if (x == nullptr) return null_arg("x");
  if (out == nullptr) return null_arg("out");
  return guarded([&] { *out = predict_one(model->estimate, x, d, source_id); });
}

int wmdl_model_predict_tau(const wmdl_model* model, const double* x, int d, int source_id,
                           double* out) {
  if (model == nullptr) return null_arg("model");
  if (x == nullptr) return null_arg("x");
  if (out == nullptr) return null_arg("out");
  return guarded([&] { *out = 2.0 * predict_one(model->estimate, x, d, source_id); });
}

int wmdl_model_predict_csv(const wmdl_model* model, const char* in_csv, const char* out_csv) {
  if (model == nullptr) return null_arg("model");
  if (in_csv == nullptr) return null_arg("in_csv");
  if (out_csv == nullptr) return null_arg("out_csv");
  return guarded([&] {
    const wmdl::CateEstimate& est = model->estimate;
    std::istringstream in(read_file(in_csv));
    std::string line;
    if (!std::getline(in, line)) throw wmdl::config_error("prediction csv is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_commas(line);
    std::vector<int> x_cols(est.d_x, -1);
    int source_col = -1;
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
      if (header[c] == "source") source_col = c;
      for (int j = 0; j < est.d_x; ++j) {
        if (header[c] == "x" + std::to_string(j + 1)) x_cols[j] = c;
      }
    }
    for (int j = 0; j < est.d_x; ++j) {
      if (x_cols[j] < 0)
        throw wmdl::config_error("prediction csv is missing column 'x" + std::to_string(j + 1) +
                                 "'");
    }
    std::string out_text = line + ",delta,tau\n";
    Eigen::VectorXd x(est.d_x);
    int row = 1;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      ++row;
      const std::vector<std::string> cells = split_commas(line);
      if (cells.size() < header.size())
        throw wmdl::config_error("prediction csv row " + std::to_string(row) + " is short");
      try {
        for (int j = 0; j < est.d_x; ++j) x[j] = std::stod(cells[x_cols[j]]);
        const double delta = source_col >= 0
                                 ? est.predict_delta(x, std::stoi(cells[source_col]))
                                 : est.predict_delta(x);
        out_text += line + ',' + fmt_full(delta) + ',' + fmt_full(2.0 * delta) + '\n';
      } catch (const std::invalid_argument&) {
        throw wmdl::config_error("prediction csv row " + std::to_string(row) +
                                 " has a non-numeric cell");
      }
    }
    write_file(out_csv, out_text);
  });
}

int wmdl_model_save(const wmdl_model* model, const char* path) {
  if (model == nullptr) return null_arg("model");
  if (path == nullptr) return null_arg("path");
  return guarded([&] { write_file(path, model->estimate.to_json().dump(2) + "\n"); });
}

int wmdl_model_load(const char* path, wmdl_model** out) {
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    const nlohmann::json j = wmdl::parse_json(read_file(path), "effect model file");
    *out = new wmdl_model{wmdl::CateEstimate::from_json(j)};
  });
}

int wmdl_model_diagnostics_json(const wmdl_model* model, char** out_json) {
  if (model == nullptr) return null_arg("model");
  if (out_json == nullptr) return null_arg("out_json");
  return guarded([&] {
    const wmdl::CateEstimate& est = model->estimate;
    const nlohmann::json j{{"method", wmdl::to_string(est.method)},
                           {"mode", wmdl::to_string(est.mode)},
                           {"target_source", est.target_source},
                           {"d_x", est.d_x},
                           {"source_ids", est.source_ids}};
    *out_json = to_cstr(j.dump(2));
  });
}

void wmdl_model_free(wmdl_model* model) { delete model; }

int wmdl_benchmark(const char* experiment_config_json, char** out_report_json) {
  if (experiment_config_json == nullptr) return null_arg("experiment_config_json");
  if (out_report_json == nullptr) return null_arg("out_report_json");
  return guarded([&] {
    const wmdl::ExperimentConfig config = wmdl::experiment_config_from_json(
        wmdl::parse_json(experiment_config_json, "experiment config"));
    const wmdl::ExperimentReport report = wmdl::run_replications(config);
    *out_report_json = to_cstr(wmdl::report_to_json(report).dump(2));
  });
}

int wmdl_robustness(const char* experiment_config_json, char** out_report_json) {
  if (experiment_config_json == nullptr) return null_arg("experiment_config_json");
  if (out_report_json == nullptr) return null_arg("out_report_json");
  return guarded([&] {
    nlohmann::json j = wmdl::parse_json(experiment_config_json, "experiment config");
    std::vector<int> sizes{2000, 8000};
    if (j.is_object()) {
      if (const auto it = j.find("sizes"); it != j.end()) {
        sizes = wmdl::with_config_errors("sizes",
                                         [&] { return it->get<std::vector<int>>(); });
        j.erase(it);
      }
    }
    const wmdl::ExperimentConfig config = wmdl::experiment_config_from_json(j);
    const wmdl::ExperimentReport report = wmdl::robustness_suite(config, sizes);
    *out_report_json = to_cstr(wmdl::report_to_json(report).dump(2));
  });
}

int wmdl_experiment_config_echo(const char* experiment_config_json, char** out_json) {
  if (experiment_config_json == nullptr) return null_arg("experiment_config_json");
  if (out_json == nullptr) return null_arg("out_json");
  return guarded([&] {
    const wmdl::ExperimentConfig config = wmdl::experiment_config_from_json(
        wmdl::parse_json(experiment_config_json, "experiment config"));
    *out_json = to_cstr(wmdl::experiment_config_to_json(config).dump(2));
  });
}

int wmdl_estimator_spec_echo(const char* estimator_spec_json, char** out_json) {
  if (estimator_spec_json == nullptr) return null_arg("estimator_spec_json");
  if (out_json == nullptr) return null_arg("out_json");
  return guarded([&] {
    const wmdl::EstimatorSpec spec =
        wmdl::estimator_spec_from_json(wmdl::parse_json(estimator_spec_json, "estimator spec"));
    *out_json = to_cstr(wmdl::estimator_spec_to_json(spec).dump(2));
  });
}

int wmdl_report_write(const char* report_json, const char* format, const char* path) {
  if (report_json == nullptr) return null_arg("report_json");
  if (format == nullptr) return null_arg("format");
  if (path == nullptr) return null_arg("path");
  return guarded([&] {
    const wmdl::ExperimentReport report =
        wmdl::report_from_json(wmdl::parse_json(report_json, "experiment report"));
    wmdl::emit_report(report, format, path);
  });
}

int wmdl_report_check(const char* report_json, const char* checks_json, char** out_failures) {
  if (report_json == nullptr) return null_arg("report_json");
  if (checks_json == nullptr) return null_arg("checks_json");
  if (out_failures == nullptr) return null_arg("out_failures");
  return guarded([&] {
    const wmdl::ExperimentReport report =
        wmdl::report_from_json(wmdl::parse_json(report_json, "experiment report"));
    const nlohmann::json j = wmdl::parse_json(checks_json, "ordering checks");
    std::vector<std::pair<std::string, std::string>> pairs;
    wmdl::with_config_errors("ordering checks", [&] {
      if (!j.is_array()) throw wmdl::config_error("checks must be an array of [low, high] pairs");
      for (const auto& entry : j) {
        if (!entry.is_array() || entry.size() != 2)
          throw wmdl::config_error("each check entry must be a [low, high] name pair");
        pairs.emplace_back(entry[0].get<std::string>(), entry[1].get<std::string>());
      }
      return 0;
    });
    const std::vector<std::string> failures = wmdl::ordering_failures(report, pairs);
    std::string joined;
    for (const auto& f : failures) {
      if (!joined.empty()) joined += '\n';
      joined += f;
    }
    *out_failures = to_cstr(joined);
  });
}

}  // extern "C"
