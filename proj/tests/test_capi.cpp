#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "wmdl/wmdl.h"

namespace {

constexpr const char* kDgp = R"({"n_sources": 3, "n_total": 400, "seed": 5})";
constexpr const char* kLeanMdl =
    R"({"method": "mdl", "nuisance_learner": {"kind": "poly2"},
        "final_learner": {"kind": "linear"}, "n_folds": 2})";

// takes ownership of the C string
std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  wmdl_string_free(s);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("version and error strings are always available") {
  CHECK(std::string(wmdl_version()) == "0.1.0");
  CHECK(wmdl_last_error() != nullptr);
}

TEST_CASE("null arguments are configuration errors, not crashes") {
  CHECK(wmdl_simulate(nullptr, nullptr) == WMDL_ERR_CONFIG);
  CHECK(std::string(wmdl_last_error()).find("null") != std::string::npos);
  CHECK(wmdl_dataset_rows(nullptr) == -1);
  CHECK(wmdl_dataset_sources(nullptr) == -1);
  CHECK(wmdl_fit(nullptr, kLeanMdl, nullptr) == WMDL_ERR_CONFIG);
  wmdl_dataset_free(nullptr);
  wmdl_model_free(nullptr);
  wmdl_string_free(nullptr);
}

TEST_CASE("simulated datasets round-trip through csv and expose their truth") {
  wmdl_dataset* sim = nullptr;
  REQUIRE(wmdl_simulate(kDgp, &sim) == WMDL_OK);
  CHECK(wmdl_dataset_rows(sim) == 400);
  CHECK(wmdl_dataset_sources(sim) == 3);

  char* truth = nullptr;
  REQUIRE(wmdl_dataset_truth_json(sim, &truth) == WMDL_OK);
  const nlohmann::json tj = nlohmann::json::parse(take(truth));
  CHECK(tj.contains("beta"));
  CHECK(tj["config"].contains("seed"));

  REQUIRE(wmdl_dataset_save_csv(sim, "capi_data.csv") == WMDL_OK);
  wmdl_dataset* loaded = nullptr;
  REQUIRE(wmdl_dataset_load_csv("capi_data.csv", 0, &loaded) == WMDL_OK);
  CHECK(wmdl_dataset_rows(loaded) == 400);
  CHECK(wmdl_dataset_sources(loaded) == 3);
  int per_source = 0;
  for (int s = 1; s <= 3; ++s) per_source += wmdl_dataset_source_rows(loaded, s);
  CHECK(per_source == 400);
  CHECK(wmdl_dataset_source_rows(loaded, 99) == -1);
  CHECK(wmdl_dataset_source_rows(nullptr, 1) == -1);

  char* no_truth = nullptr;
  CHECK(wmdl_dataset_truth_json(loaded, &no_truth) == WMDL_ERR_RUNTIME);
  CHECK(std::string(wmdl_last_error()).find("truth") != std::string::npos);

  CHECK(wmdl_dataset_load_csv("no_such_file.csv", 0, &loaded) == WMDL_ERR_CONFIG);

  wmdl_dataset_free(loaded);
  wmdl_dataset_free(sim);
  std::remove("capi_data.csv");
}

TEST_CASE("malformed configs come back as config status with a message") {
  wmdl_dataset* out = nullptr;
  CHECK(wmdl_simulate("{not json", &out) == WMDL_ERR_CONFIG);
  CHECK(!std::string(wmdl_last_error()).empty());
  CHECK(wmdl_simulate(R"({"n_sources": -2})", &out) == WMDL_ERR_CONFIG);

  char* echoed = nullptr;
  CHECK(wmdl_estimator_spec_echo(R"({"method": "causal_forest"})", &echoed) == WMDL_ERR_CONFIG);
  REQUIRE(wmdl_estimator_spec_echo(R"({"method": "wmdl"})", &echoed) == WMDL_OK);
  const nlohmann::json spec = nlohmann::json::parse(take(echoed));
  CHECK(spec["n_folds"] == 3);  // defaults are echoed
  CHECK(spec["weight"]["kind"] == "information");
}

TEST_CASE("fitting, predicting, and persistence work through the C surface") {
  wmdl_dataset* sim = nullptr;
  REQUIRE(wmdl_simulate(kDgp, &sim) == WMDL_OK);
  wmdl_model* model = nullptr;
  REQUIRE(wmdl_fit(sim, kLeanMdl, &model) == WMDL_OK);

  const double x[4] = {0.1, -0.2, 0.3, 0.4};
  double delta = 0.0, tau = 0.0;
  REQUIRE(wmdl_model_predict_delta(model, x, 4, 0, &delta) == WMDL_OK);
  REQUIRE(wmdl_model_predict_tau(model, x, 4, 0, &tau) == WMDL_OK);
  CHECK(tau == 2.0 * delta);
  CHECK(wmdl_model_predict_delta(model, x, 3, 0, &delta) == WMDL_ERR_CONFIG);

  char* diag = nullptr;
  REQUIRE(wmdl_model_diagnostics_json(model, &diag) == WMDL_OK);
  const nlohmann::json dj = nlohmann::json::parse(take(diag));
  CHECK(dj["method"] == "mdl");
  CHECK(dj["d_x"] == 4);

  REQUIRE(wmdl_model_save(model, "capi_model.json") == WMDL_OK);
  wmdl_model* reloaded = nullptr;
  REQUIRE(wmdl_model_load("capi_model.json", &reloaded) == WMDL_OK);
  double again = 0.0;
  REQUIRE(wmdl_model_predict_delta(reloaded, x, 4, 0, &again) == WMDL_OK);
  CHECK(again == delta);

  CHECK(wmdl_model_load("capi_data_missing.json", &reloaded) == WMDL_ERR_RUNTIME);

  wmdl_model_free(reloaded);
  wmdl_model_free(model);
  wmdl_dataset_free(sim);
  std::remove("capi_model.json");
}

TEST_CASE("csv prediction echoes the grid and appends delta and tau") {
  wmdl_dataset* sim = nullptr;
  REQUIRE(wmdl_simulate(kDgp, &sim) == WMDL_OK);
  wmdl_model* model = nullptr;
  REQUIRE(wmdl_fit(sim, kLeanMdl, &model) == WMDL_OK);

  {
    std::ofstream grid("capi_grid.csv");
    grid << "x1,x2,x3,x4\n0,0,0,0\n0.5,-0.5,0.25,1\n";
  }
  REQUIRE(wmdl_model_predict_csv(model, "capi_grid.csv", "capi_preds.csv") == WMDL_OK);
  const std::string out = slurp("capi_preds.csv");
  CHECK(out.find("x1,x2,x3,x4,delta,tau") == 0);
  CHECK(std::count(out.begin(), out.end(), '\n') == 3);

  {
    std::ofstream grid("capi_grid.csv");
    grid << "x1,x2,x3\n0,0,0\n";
  }
  CHECK(wmdl_model_predict_csv(model, "capi_grid.csv", "capi_preds.csv") == WMDL_ERR_CONFIG);
  CHECK(std::string(wmdl_last_error()).find("x4") != std::string::npos);

  {
    std::ofstream grid("capi_grid.csv");
    grid << "x1,x2,x3,x4\n0,zero,0,0\n";
  }
  CHECK(wmdl_model_predict_csv(model, "capi_grid.csv", "capi_preds.csv") == WMDL_ERR_CONFIG);

  wmdl_model_free(model);
  wmdl_dataset_free(sim);
  std::remove("capi_grid.csv");
  std::remove("capi_preds.csv");
}

TEST_CASE("benchmark, robustness, and report plumbing run end to end") {
  const std::string config = R"({
    "dgp": {"n_sources": 3, "n_total": 300},
    "estimators": [{"method": "mdl", "nuisance_learner": {"kind": "poly2"},
                    "final_learner": {"kind": "linear"}, "n_folds": 2}],
    "replications": 2, "n_test": 100, "master_seed": 4
  })";

  char* echoed = nullptr;
  REQUIRE(wmdl_experiment_config_echo(config.c_str(), &echoed) == WMDL_OK);
  const nlohmann::json cj = nlohmann::json::parse(take(echoed));
  CHECK(cj["estimators"][0]["name"] == "mdl");
  CHECK(cj["threads"] == 1);

  char* report = nullptr;
  REQUIRE(wmdl_benchmark(config.c_str(), &report) == WMDL_OK);
  const std::string report_text = take(report);
  const nlohmann::json rj = nlohmann::json::parse(report_text);
  CHECK(rj["replications"] == 2);
  CHECK(rj["estimators"][0]["mse"].size() == 2);

  REQUIRE(wmdl_report_write(report_text.c_str(), "csv", "capi_report.csv") == WMDL_OK);
  CHECK(slurp("capi_report_summary.csv").find("estimator,mean_mse") == 0);
  CHECK(wmdl_report_write(report_text.c_str(), "xml", "capi_report.xml") == WMDL_ERR_CONFIG);

  const std::string fake_report = R"({
    "format": 1, "replications": 1, "master_seed": 0,
    "estimators": [
      {"name": "a", "mean_mse": 0.1, "sd_mse": 0.0, "missing": 0, "mse": [0.1]},
      {"name": "b", "mean_mse": 0.2, "sd_mse": 0.0, "missing": 0, "mse": [0.2]}
    ]
  })";
  char* failures = nullptr;
  REQUIRE(wmdl_report_check(fake_report.c_str(), R"([["a","b"]])", &failures) == WMDL_OK);
  CHECK(take(failures).empty());
  REQUIRE(wmdl_report_check(fake_report.c_str(), R"([["b","a"]])", &failures) == WMDL_OK);
  CHECK(take(failures).find("not below") != std::string::npos);
  CHECK(wmdl_report_check(fake_report.c_str(), R"([["a","zzz"]])", &failures) == WMDL_ERR_CONFIG);

  const std::string rob_config = R"({
    "dgp": {"n_sources": 3, "n_total": 300},
    "estimators": [{"method": "wmdl", "final_learner": {"kind": "linear"}}],
    "replications": 2, "n_test": 100, "master_seed": 4,
    "sizes": [300, 900]
  })";
  char* rob = nullptr;
  REQUIRE(wmdl_robustness(rob_config.c_str(), &rob) == WMDL_OK);
  const nlohmann::json rb = nlohmann::json::parse(take(rob));
  REQUIRE(rb["estimators"].size() == 8);
  CHECK(std::string(rb["estimators"][0]["name"]).find("n=300") != std::string::npos);

  std::remove("capi_report_summary.csv");
  std::remove("capi_report_long.csv");
}
