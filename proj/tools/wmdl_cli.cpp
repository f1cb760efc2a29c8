// Command-line front end. Talks to the library exclusively through the C API,
// so it doubles as a smoke test of the shared-library surface.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "wmdl/wmdl.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheck = 3;

struct cli_error : std::runtime_error {
  int code;
  cli_error(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

int fail(int status) {
  std::fprintf(stderr, "wmdl: %s\n", wmdl_last_error());
  return status == WMDL_ERR_CONFIG ? kExitConfig : kExitRuntime;
}

// Adopts a string handed out by the C API.
std::string take(char* s) {
  std::string out = s == nullptr ? std::string() : std::string(s);
  wmdl_string_free(s);
  return out;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cli_error(kExitConfig, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw cli_error(kExitConfig, path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw cli_error(kExitRuntime, "cannot write '" + path + "'");
}

// Drops a final extension so report files can share the stem.
std::string strip_ext(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return path;
  const auto slash = path.find_last_of("/\\");
  if (slash != std::string::npos && dot < slash) return path;
  return path.substr(0, dot);
}

struct RunOverrides {
  std::optional<long long> seed;
  std::optional<int> replications;
  std::optional<int> threads;
};

unsigned default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

nlohmann::json apply_overrides(nlohmann::json run, const RunOverrides& o) {
  if (o.seed) run["master_seed"] = *o.seed;
  if (o.replications) run["replications"] = *o.replications;
  if (o.threads) {
    run["threads"] = *o.threads;
  } else if (!run.contains("threads")) {
    run["threads"] = default_threads();
  }
  return run;
}

void print_summary(const std::string& label, const nlohmann::json& report) {
  if (!label.empty()) std::printf("== %s ==\n", label.c_str());
  std::printf("%-28s %12s %12s %8s\n", "estimator", "mean_mse", "sd_mse", "missing");
  for (const auto& e : report.at("estimators")) {
    const std::string name = e.at("name");
    const auto num = [&](const char* key) {
      return e.at(key).is_number() ? e.at(key).get<double>()
                                   : std::numeric_limits<double>::quiet_NaN();
    };
    std::printf("%-28s %12.6g %12.6g %8d\n", name.c_str(), num("mean_mse"), num("sd_mse"),
                e.at("missing").get<int>());
  }
}

int cmd_simulate(const std::string& config_path, const std::string& out_path,
                 std::optional<long long> seed) {
  nlohmann::json config = load_json_file(config_path);
  if (!config.is_object()) throw cli_error(kExitConfig, config_path + ": expected an object");
  if (seed) config["seed"] = *seed;

  wmdl_dataset* data = nullptr;
  int rc = wmdl_simulate(config.dump().c_str(), &data);
  if (rc != WMDL_OK) return fail(rc);

  rc = wmdl_dataset_save_csv(data, out_path.c_str());
  if (rc == WMDL_OK) {
    char* truth = nullptr;
    rc = wmdl_dataset_truth_json(data, &truth);
    if (rc == WMDL_OK) {
      const std::string truth_path = strip_ext(out_path) + "_truth.json";
      write_text_file(truth_path, take(truth) + "\n");
      std::fprintf(stderr, "simulate: %d rows over %d sources -> %s (truth: %s)\n",
                   wmdl_dataset_rows(data), wmdl_dataset_sources(data), out_path.c_str(),
                   truth_path.c_str());
    }
  }
  wmdl_dataset_free(data);
  return rc == WMDL_OK ? 0 : fail(rc);
}

int cmd_fit(const std::string& config_path, const std::string& out_path,
            std::optional<long long> seed, const std::string& diagnostics_path) {
  const nlohmann::json config = load_json_file(config_path);
  if (!config.is_object()) throw cli_error(kExitConfig, config_path + ": expected an object");
  for (const auto& [key, value] : config.items()) {
    if (key != "data" && key != "estimator" && key != "target_source")
      throw cli_error(kExitConfig, config_path + ": unknown key '" + key + "'");
  }
  if (!config.contains("data") || !config["data"].is_string())
    throw cli_error(kExitConfig, config_path + ": needs a \"data\" entry naming the training csv");
  if (!config.contains("estimator") || !config["estimator"].is_object())
    throw cli_error(kExitConfig, config_path + ": needs an \"estimator\" object");
  int target_source = 0;
  if (config.contains("target_source")) {
    if (!config["target_source"].is_number_integer())
      throw cli_error(kExitConfig, config_path + ": \"target_source\" must be an integer");
    target_source = config["target_source"].get<int>();
  }
  nlohmann::json spec = config["estimator"];
  if (seed) spec["seed"] = *seed;

  char* echoed = nullptr;
  int rc = wmdl_estimator_spec_echo(spec.dump().c_str(), &echoed);
  if (rc != WMDL_OK) return fail(rc);
  const nlohmann::json full_spec = nlohmann::json::parse(take(echoed));
  const std::string method = full_spec.at("method");

  wmdl_dataset* data = nullptr;
  rc = wmdl_dataset_load_csv(config["data"].get<std::string>().c_str(), target_source, &data);
  if (rc != WMDL_OK) return fail(rc);

  const int target = target_source <= 0 ? 1 : target_source;
  if (method == "dl" || method == "wdl") {
    std::fprintf(stderr, "fit: %s uses the target source only: %d of %d rows\n", method.c_str(),
                 wmdl_dataset_source_rows(data, target), wmdl_dataset_rows(data));
  } else {
    std::fprintf(stderr, "fit: %s pools %d rows across %d sources\n", method.c_str(),
                 wmdl_dataset_rows(data), wmdl_dataset_sources(data));
  }

  wmdl_model* model = nullptr;
  rc = wmdl_fit(data, spec.dump().c_str(), &model);
  wmdl_dataset_free(data);
  if (rc != WMDL_OK) return fail(rc);

  rc = wmdl_model_save(model, out_path.c_str());
  if (rc == WMDL_OK && !diagnostics_path.empty()) {
    char* diag = nullptr;
    rc = wmdl_model_diagnostics_json(model, &diag);
    if (rc == WMDL_OK) write_text_file(diagnostics_path, take(diag) + "\n");
  }
  wmdl_model_free(model);
  if (rc != WMDL_OK) return fail(rc);
  std::fprintf(stderr, "fit: model -> %s\n", out_path.c_str());
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
  wmdl_model* model = nullptr;
  int rc = wmdl_model_load(model_path.c_str(), &model);
  if (rc != WMDL_OK) return fail(rc);
  rc = wmdl_model_predict_csv(model, data_path.c_str(), out_path.c_str());
  wmdl_model_free(model);
  if (rc != WMDL_OK) return fail(rc);
  std::fprintf(stderr, "predict: %s -> %s\n", data_path.c_str(), out_path.c_str());
  return 0;
}

// One benchmark cell: echo the normalized config, run, write report files,
// print the summary table. Returns the report JSON.
std::string run_one_benchmark(const std::string& label, const nlohmann::json& prepared,
                              const std::string& stem) {
  char* echoed = nullptr;
  int rc = wmdl_experiment_config_echo(prepared.dump().c_str(), &echoed);
  if (rc != WMDL_OK) throw cli_error(fail(rc), "");
  write_text_file(stem + "_config.json", take(echoed) + "\n");

  std::fprintf(stderr, "benchmark%s%s: %d replications...\n", label.empty() ? "" : " ",
               label.c_str(), prepared.value("replications", 20));
  const auto start = std::chrono::steady_clock::now();
  char* report_c = nullptr;
  rc = wmdl_benchmark(prepared.dump().c_str(), &report_c);
  if (rc != WMDL_OK) throw cli_error(fail(rc), "");
  const std::string report_json = take(report_c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  rc = wmdl_report_write(report_json.c_str(), "csv", stem.c_str());
  if (rc != WMDL_OK) throw cli_error(fail(rc), "");
  write_text_file(stem + "_report.json", report_json + "\n");
  print_summary(label, nlohmann::json::parse(report_json));
  std::fprintf(stderr, "benchmark%s%s: done in %.1fs -> %s_{summary,long}.csv\n",
               label.empty() ? "" : " ", label.c_str(), secs, stem.c_str());
  return report_json;
}

int cmd_benchmark(const std::string& config_path, const std::string& out_path,
                  const RunOverrides& overrides, bool check) {
  const nlohmann::json config = load_json_file(config_path);
  if (!config.is_object()) throw cli_error(kExitConfig, config_path + ": expected an object");

  std::vector<std::pair<std::string, nlohmann::json>> runs;  // label, config
  if (config.contains("runs")) {
    for (const auto& [key, value] : config.items()) {
      if (key != "runs")
        throw cli_error(kExitConfig, config_path + ": unknown key '" + key + "' beside \"runs\"");
    }
    if (!config["runs"].is_array() || config["runs"].empty())
      throw cli_error(kExitConfig, config_path + ": \"runs\" must be a non-empty array");
    for (const auto& entry : config["runs"]) {
      if (!entry.is_object())
        throw cli_error(kExitConfig, config_path + ": each run must be an object");
      nlohmann::json run = entry;
      std::string label;
      if (run.contains("label")) {
        if (!run["label"].is_string())
          throw cli_error(kExitConfig, config_path + ": run \"label\" must be a string");
        label = run["label"].get<std::string>();
        run.erase("label");
      }
      if (label.empty() && config["runs"].size() > 1)
        throw cli_error(kExitConfig, config_path + ": every run in a multi-run file needs a \"label\"");
      for (const auto& [seen, ignored] : runs) {
        if (seen == label)
          throw cli_error(kExitConfig, config_path + ": duplicate run label '" + label + "'");
      }
      runs.emplace_back(label, std::move(run));
    }
  } else {
    runs.emplace_back("", config);
  }

  const std::string base = strip_ext(out_path);
  int exit_code = 0;
  for (const auto& [label, run] : runs) {
    const std::string stem = label.empty() ? base : base + "_" + label;
    const nlohmann::json prepared = apply_overrides(run, overrides);
    const std::string report_json = run_one_benchmark(label, prepared, stem);

    if (check && run.contains("check")) {
      char* failures_c = nullptr;
      const int rc =
          wmdl_report_check(report_json.c_str(), run["check"].dump().c_str(), &failures_c);
      if (rc != WMDL_OK) throw cli_error(fail(rc), "");
      const std::string failures = take(failures_c);
      if (failures.empty()) {
        std::fprintf(stderr, "check%s%s: all orderings hold\n", label.empty() ? "" : " ",
                     label.c_str());
      } else {
        std::fprintf(stderr, "check%s%s FAILED:\n%s\n", label.empty() ? "" : " ", label.c_str(),
                     failures.c_str());
        exit_code = kExitCheck;
      }
    }
  }
  return exit_code;
}

int cmd_robustness(const std::string& config_path, const std::string& out_path,
                   const RunOverrides& overrides) {
  nlohmann::json config = load_json_file(config_path);
  if (!config.is_object()) throw cli_error(kExitConfig, config_path + ": expected an object");
  nlohmann::json sizes = nlohmann::json::array({2000, 8000});
  if (config.contains("sizes")) {
    sizes = config["sizes"];
    config.erase("sizes");
  }
  nlohmann::json prepared = apply_overrides(config, overrides);

  char* echoed = nullptr;
  int rc = wmdl_experiment_config_echo(prepared.dump().c_str(), &echoed);
  if (rc != WMDL_OK) return fail(rc);
  nlohmann::json echo = nlohmann::json::parse(take(echoed));
  echo["sizes"] = sizes;
  const std::string stem = strip_ext(out_path);
  write_text_file(stem + "_config.json", echo.dump(2) + "\n");

  prepared["sizes"] = sizes;
  std::fprintf(stderr, "robustness: %d replications x %zu sizes...\n",
               prepared.value("replications", 20), sizes.size());
  const auto start = std::chrono::steady_clock::now();
  char* report_c = nullptr;
  rc = wmdl_robustness(prepared.dump().c_str(), &report_c);
  if (rc != WMDL_OK) return fail(rc);
  const std::string report_json = take(report_c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  rc = wmdl_report_write(report_json.c_str(), "csv", stem.c_str());
  if (rc != WMDL_OK) return fail(rc);
  write_text_file(stem + "_report.json", report_json + "\n");
  print_summary("", nlohmann::json::parse(report_json));
  std::fprintf(stderr, "robustness: done in %.1fs -> %s_{summary,long}.csv\n", secs, stem.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weighted multi-source treatment-effect estimation"};
  app.require_subcommand(1);

  std::string config_path, out_path, model_path, data_path, diagnostics_path;
  long long seed = 0;
  int replications = 0, threads = 0;
  bool check = false;

  auto* sim = app.add_subcommand("simulate", "draw a synthetic multi-source dataset");
  sim->add_option("--config", config_path, "generator config (json)")
      ->required()
      ->check(CLI::ExistingFile);
  sim->add_option("--out", out_path, "output csv; a *_truth.json sidecar is written beside it")
      ->required();
  sim->add_option("--seed", seed, "override the config's seed");

  auto* fit = app.add_subcommand("fit", "fit an estimator to a csv dataset");
  fit->add_option("--config", config_path,
                  "fit config (json): {\"data\": csv, \"estimator\": {...}[, \"target_source\"]}")
      ->required()
      ->check(CLI::ExistingFile);
  fit->add_option("--out", out_path, "output model file (json)")->required();
  fit->add_option("--seed", seed, "override the estimator seed");
  fit->add_option("--diagnostics", diagnostics_path, "also write a fit-summary json here");

  auto* pred = app.add_subcommand("predict", "score a covariate grid with a fitted model");
  pred->add_option("--model", model_path, "model file from fit")
      ->required()
      ->check(CLI::ExistingFile);
  pred->add_option("--data", data_path, "csv with columns x1..xd (source column honored)")
      ->required()
      ->check(CLI::ExistingFile);
  pred->add_option("--out", out_path, "output csv with delta and tau columns")->required();

  auto* bench = app.add_subcommand("benchmark", "replicated mse study from an experiment config");
  bench->add_option("--config", config_path,
                    "experiment config (json), or {\"runs\": [...]} with per-run labels")
      ->required()
      ->check(CLI::ExistingFile);
  bench->add_option("--out", out_path, "output stem for *_summary.csv / *_long.csv / sidecars")
      ->required();
  bench->add_option("--seed", seed, "override master_seed");
  bench->add_option("--replications", replications, "override the replication count")
      ->check(CLI::PositiveNumber);
  bench->add_option("--threads", threads, "worker threads (default: available parallelism)")
      ->check(CLI::PositiveNumber);
  bench->add_flag("--check", check, "evaluate the config's ordering checks; exit 3 on failure");

  auto* rob = app.add_subcommand("robustness", "nuisance-corruption grid for a direct estimator");
  rob->add_option("--config", config_path,
                  "experiment config (json) with an optional \"sizes\" array")
      ->required()
      ->check(CLI::ExistingFile);
  rob->add_option("--out", out_path, "output stem for report files")->required();
  rob->add_option("--seed", seed, "override master_seed");
  rob->add_option("--replications", replications, "override the replication count")
      ->check(CLI::PositiveNumber);
  rob->add_option("--threads", threads, "worker threads (default: available parallelism)")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  const auto overrides = [&](CLI::App* sub) {
    RunOverrides o;
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--replications")) o.replications = replications;
    if (sub->count("--threads")) o.threads = threads;
    return o;
  };

  try {
    if (sim->parsed()) {
      return cmd_simulate(config_path, out_path,
                          sim->count("--seed") ? std::optional<long long>(seed) : std::nullopt);
    }
    if (fit->parsed()) {
      return cmd_fit(config_path, out_path,
                     fit->count("--seed") ? std::optional<long long>(seed) : std::nullopt,
                     diagnostics_path);
    }
    if (pred->parsed()) return cmd_predict(model_path, data_path, out_path);
    if (bench->parsed()) return cmd_benchmark(config_path, out_path, overrides(bench), check);
    if (rob->parsed()) return cmd_robustness(config_path, out_path, overrides(rob));
  } catch (const cli_error& e) {
    if (e.what()[0] != '\0') std::fprintf(stderr, "wmdl: %s\n", e.what());
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "wmdl: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;  // unreachable: require_subcommand(1)
}
