#ifndef WMDL_H
#define WMDL_H

/* C interface to the weighted multi-source effect estimation library.
 *
 * Every function that can fail returns a status code and leaves a message
 * for wmdl_last_error(). Strings handed back through char** outputs are
 * heap-allocated; release them with wmdl_string_free(). Handles are released
 * with their matching *_free() call.
 */

#ifdef __cplusplus
extern "C" {
#endif

#define WMDL_OK 0
#define WMDL_ERR_RUNTIME 1 /* failure while fitting or doing I/O on valid inputs */
#define WMDL_ERR_CONFIG 2  /* bad configuration, schema, or argument */

typedef struct wmdl_dataset wmdl_dataset;
typedef struct wmdl_model wmdl_model;

const char* wmdl_version(void);

/* Message from the calling thread's most recent failed call ("" if none). */
const char* wmdl_last_error(void);

void wmdl_string_free(char* s);

/* --- datasets ------------------------------------------------------- */

/* Draws a synthetic multi-source dataset from a generator config (JSON). */
int wmdl_simulate(const char* dgp_config_json, wmdl_dataset** out);

/* Loads the library's CSV schema: columns source,y,a,x1..xd[,z1..]; treatment
 * accepts {0,1} or {-1,+1}; y/a cells may be empty only for a covariates-only
 * target source. target_source <= 0 means source 1. */
int wmdl_dataset_load_csv(const char* path, int target_source, wmdl_dataset** out);
int wmdl_dataset_save_csv(const wmdl_dataset* data, const char* path);

/* Generating ground truth (JSON); only available on simulated datasets. */
int wmdl_dataset_truth_json(const wmdl_dataset* data, char** out_json);

/* Total row count / source count; negative on a null handle. */
int wmdl_dataset_rows(const wmdl_dataset* data);
int wmdl_dataset_sources(const wmdl_dataset* data);

/* Rows in one source; negative on a null handle or unknown source id. */
int wmdl_dataset_source_rows(const wmdl_dataset* data, int source_id);

void wmdl_dataset_free(wmdl_dataset* data);

/* --- fitting and prediction ----------------------------------------- */

int wmdl_fit(const wmdl_dataset* data, const char* estimator_spec_json, wmdl_model** out);

/* delta is half the treatment contrast; tau = 2*delta is the full contrast.
 * x points at d covariate values. source_id <= 0 predicts for the target
 * population; source-specific fits accept any source they were trained on. */
int wmdl_model_predict_delta(const wmdl_model* model, const double* x, int d, int source_id,
                             double* out);
int wmdl_model_predict_tau(const wmdl_model* model, const double* x, int d, int source_id,
                           double* out);

/* Scores a covariate grid: in_csv needs columns x1..xd (a source column is
 * honored when present); out_csv echoes them plus delta and tau columns. */
int wmdl_model_predict_csv(const wmdl_model* model, const char* in_csv, const char* out_csv);

int wmdl_model_save(const wmdl_model* model, const char* path);
int wmdl_model_load(const char* path, wmdl_model** out);

/* Summary of the fitted object (method, mode, dimensions, sources). */
int wmdl_model_diagnostics_json(const wmdl_model* model, char** out_json);

void wmdl_model_free(wmdl_model* model);

/* --- experiments ----------------------------------------------------- */

/* Runs the replication benchmark described by an experiment config (JSON);
 * hands back the report as JSON. */
int wmdl_benchmark(const char* experiment_config_json, char** out_report_json);

/* Nuisance-corruption stress grid for the config's first estimator. The
 * config may carry a top-level "sizes" array of sample sizes. */
int wmdl_robustness(const char* experiment_config_json, char** out_report_json);

/* Normalizes a config: parses, applies defaults, returns the full JSON. */
int wmdl_experiment_config_echo(const char* experiment_config_json, char** out_json);
int wmdl_estimator_spec_echo(const char* estimator_spec_json, char** out_json);

/* Writes a report (JSON text) as "json" (one file) or "csv" (summary + long). */
int wmdl_report_write(const char* report_json, const char* format, const char* path);

/* Evaluates ordering checks (JSON array of [low, high] name pairs) against a
 * report. *out_failures receives a newline-separated list, "" when all pass;
 * the status code only reflects parse/schema problems. */
int wmdl_report_check(const char* report_json, const char* checks_json, char** out_failures);

#ifdef __cplusplus
}
#endif

#endif /* WMDL_H */
