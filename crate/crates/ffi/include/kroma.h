#ifndef KROMA_H
#define KROMA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum KromaStatus {
  KROMA_STATUS_OK = 0,
  KROMA_STATUS_NULL_POINTER = 1,
  KROMA_STATUS_INVALID_UTF8 = 2,
  KROMA_STATUS_INVALID_INPUT = 3,
  KROMA_STATUS_CYCLE = 4,
  KROMA_STATUS_UNKNOWN_ITEM = 5,
  KROMA_STATUS_NOT_PENDING = 6,
  KROMA_STATUS_CONFIG = 7,
  KROMA_STATUS_PIPELINE_FAILED = 8,
  KROMA_STATUS_PANIC = 9,
} KromaStatus;

/**
 * Opaque refinement state. Decisions recorded in the state are replayed
 * when an operation needs the oracle; unseen pairs count as dissimilar.
 */
typedef struct KromaState KromaState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *kroma_last_error(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void kroma_string_free(char *s);

/**
 * Loads a state from a graph document (the `graph.json` artifact).
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum KromaStatus kroma_state_from_json(const char *json, struct KromaState **out);

/**
 * # Safety
 * `s` must come from `kroma_state_from_json` or be null; it is invalid
 * afterwards.
 */
void kroma_state_free(struct KromaState *s);

/**
 * Serializes the state as a graph document.
 *
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum KromaStatus kroma_state_to_json(const struct KromaState *s, char **out);

/**
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum KromaStatus kroma_state_version(const struct KromaState *s, uint64_t *out);

/**
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum KromaStatus kroma_state_class_count(const struct KromaState *s, size_t *out);

/**
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum KromaStatus kroma_state_pending_count(const struct KromaState *s, size_t *out);

/**
 * Whether two concepts (`src:`/`tgt:` prefixed IRIs) share a class.
 *
 * # Safety
 * `s` must be a live handle; `a`, `b` nul-terminated; `out` writable.
 */
enum KromaStatus kroma_state_same_class(const struct KromaState *s,
                                        const char *a,
                                        const char *b,
                                        bool *out);

/**
 * Applies a reviewer decision to a pending queue item.
 *
 * # Safety
 * `s` must be a live handle; `merged` may be null.
 */
enum KromaStatus kroma_state_resolve(struct KromaState *s,
                                     uint64_t item,
                                     bool approve,
                                     bool *merged);

/**
 * Applies a JSON `{concepts, edges}` batch; the report is written to
 * `report_json` when it is not null.
 *
 * # Safety
 * `s` must be a live handle; `batch_json` nul-terminated.
 */
enum KromaStatus kroma_state_apply_delta(struct KromaState *s,
                                         const char *batch_json,
                                         char **report_json);

/**
 * Runs the pipeline from a TOML configuration and returns the metrics
 * as JSON.
 *
 * # Safety
 * `config_toml` nul-terminated; `metrics_json` writable.
 */
enum KromaStatus kroma_run_pipeline(const char *config_toml, char **metrics_json);

/**
 * Precision, recall and F1 of two TSV alignments.
 *
 * # Safety
 * Both strings nul-terminated; the three outputs writable.
 */
enum KromaStatus kroma_evaluate(const char *predicted_tsv,
                                const char *gold_tsv,
                                double *precision,
                                double *recall,
                                double *f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KROMA_H */
