/* ego: co-optimization of a semantic causal graph and a two-stage
 * reasoning pipeline via textual gradients.
 *
 * C interface over the core library. All functions return an ego_status;
 * on failure ego_last_error() describes what went wrong (thread-local).
 * Strings returned through char** out-parameters are heap-allocated UTF-8
 * owned by the caller; release them with ego_string_free(). Structured
 * inputs and outputs are JSON documents; the schemas are documented in
 * the project README.
 */
#ifndef EGO_H
#define EGO_H

#include <stdint.h>

#if defined(_WIN32)
#define EGO_API __declspec(dllexport)
#else
#define EGO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ego_status {
    EGO_OK = 0,
    EGO_ERR_SYNTAX = 1,
    EGO_ERR_UNKNOWN_NODE = 2,
    EGO_ERR_CYCLE = 3,
    EGO_ERR_INDEX = 4,
    EGO_ERR_MIXED_TARGET = 5,
    EGO_ERR_REJECTED_EDIT = 6,
    EGO_ERR_BACKEND = 7,
    EGO_ERR_SCRIPT_MISS = 8,
    EGO_ERR_ENVELOPE = 9,
    EGO_ERR_CONFIG = 10,
    EGO_ERR_MISSING_FIELD = 11,
    EGO_ERR_LENGTH_MISMATCH = 12,
    EGO_ERR_INSUFFICIENT_DATA = 13,
    EGO_ERR_PRECONDITION = 14,
    EGO_ERR_IO = 15,
    EGO_ERR_INVALID_ARGUMENT = 16,
    EGO_ERR_INTERNAL = 17
} ego_status;

/* Opaque handle for a loaded task (config + data table). */
typedef struct ego_task ego_task;

EGO_API const char* ego_version(void);

/* Message for the most recent failure on this thread; never NULL. */
EGO_API const char* ego_last_error(void);

EGO_API void ego_string_free(char* s);

/* --- tasks ------------------------------------------------------------- */

EGO_API ego_status ego_task_load(const char* config_path, ego_task** out);
EGO_API void ego_task_free(ego_task* task);

/* Labels, candidate nodes, row/label counts as JSON. */
EGO_API ego_status ego_task_info(const ego_task* task, char** json_out);

/* Writes a commented starter task (task.json + data.csv) into dir. */
EGO_API ego_status ego_init_task(const char* dir, char** config_path_out);

/* --- runs --------------------------------------------------------------- */

/* Runs the optimization loop. options_json selects backend, splits, steps,
 * mode, seed, repeats, SCG setting and the run directory; the returned
 * JSON summarizes the best checkpoint and run artifacts. */
EGO_API ego_status ego_optimize(const ego_task* task, const char* options_json,
                                char** summary_json_out);

/* Evaluates the initial triple (or a checkpoint's triple) on one split. */
EGO_API ego_status ego_evaluate(const ego_task* task, const char* options_json,
                                char** metrics_json_out);

/* Re-executes a recorded run from its cassette with zero network and
 * reports whether the final checkpoint hash matches the original. */
EGO_API ego_status ego_replay(const char* run_dir, const char* options_json,
                              char** summary_json_out);

/* Per-step cost table for a finished run directory. */
EGO_API ego_status ego_cost_report(const char* run_dir, char** report_json_out);

/* Reads a checkpoint file and returns its JSON text. */
EGO_API ego_status ego_checkpoint_read(const char* path, char** json_out);

/* --- semantic causal graphs --------------------------------------------- */

/* candidates_json: JSON array of node label strings. Returns the
 * canonical rendering of the parsed graph. */
EGO_API ego_status ego_scg_parse(const char* text, const char* candidates_json,
                                 char** canonical_out);

/* setting: "full" | "empty" | "reversed" | "frac=<0..1>". */
EGO_API ego_status ego_scg_transform(const char* text, const char* candidates_json,
                                     const char* setting, uint64_t seed, char** out_text);

/* Plain-text diff with +/-/~ markers plus an induced-edge summary. */
EGO_API ego_status ego_scg_diff(const char* old_text, const char* new_text,
                                const char* candidates_json, char** report_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* EGO_H */
