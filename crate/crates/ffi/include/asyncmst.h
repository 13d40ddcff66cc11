#ifndef ASYNCMST_H
#define ASYNCMST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum AsyncmstStatus {
  ASYNCMST_STATUS_OK = 0,
  ASYNCMST_STATUS_NULL_ARGUMENT = 1,
  ASYNCMST_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration text, protocol, family or policy name.
   */
  ASYNCMST_STATUS_CONFIG = 3,
  /**
   * Edge list rejected (self-loop, duplicate, endpoint out of range).
   */
  ASYNCMST_STATUS_INVALID_GRAPH = 4,
  ASYNCMST_STATUS_IO = 5,
  /**
   * A simulator error escaped the report (not expected in normal use).
   */
  ASYNCMST_STATUS_SIMULATION = 6,
  /**
   * An internal panic was caught at the boundary.
   */
  ASYNCMST_STATUS_PANIC = 7,
} AsyncmstStatus;

/**
 * The reports of a configuration sweep, in run order.
 */
typedef struct AsyncmstBatch AsyncmstBatch;

/**
 * An undirected weighted graph with node identities.
 */
typedef struct AsyncmstGraph AsyncmstGraph;

/**
 * The outcome of one run.
 */
typedef struct AsyncmstReport AsyncmstReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *asyncmst_last_error(void);

/**
 * Bits one message may carry at size `n` with constant `c`.
 */
size_t asyncmst_congest_budget(size_t n, uint32_t c);

/**
 * Builds a graph from `m` edges `(us[i], vs[i])` with weights
 * `weights[i]`. Endpoints are node indices in `0..n`. `ids` may be NULL,
 * in which case node `i` gets identity `i + 1`.
 *
 * # Safety
 * Non-NULL arrays must hold at least `n` (ids) or `m` (edge arrays) elements.
 */
enum AsyncmstStatus asyncmst_graph_new(size_t n,
                                       uint32_t c,
                                       const uint64_t *ids,
                                       size_t m,
                                       const size_t *us,
                                       const size_t *vs,
                                       const uint64_t *weights,
                                       struct AsyncmstGraph **out);

/**
 * Generates a graph from a family spec such as `complete`,
 * `gnp-connected:0.3` or `disconnected:0.5:10,20`.
 *
 * # Safety
 * `family` must be a NUL-terminated string; `out` must be writable.
 */
enum AsyncmstStatus asyncmst_graph_generate(const char *family,
                                            size_t n,
                                            uint32_t c,
                                            uint64_t seed,
                                            struct AsyncmstGraph **out);

/**
 * Node count, or 0 for NULL.
 *
 * # Safety
 * `g` must be NULL or a live graph handle.
 */
size_t asyncmst_graph_node_count(const struct AsyncmstGraph *g);

/**
 * Edge count, or 0 for NULL.
 *
 * # Safety
 * `g` must be NULL or a live graph handle.
 */
size_t asyncmst_graph_edge_count(const struct AsyncmstGraph *g);

/**
 * # Safety
 * `g` must be NULL or a handle not yet freed.
 */
void asyncmst_graph_free(struct AsyncmstGraph *g);

/**
 * Runs `protocol` (`findst`, `findmst`, `msf` or `pipeline`) on `g`.
 * `policy` may be NULL for the default delay policy. Protocol failures
 * such as stalls are reported inside the report, not as a status.
 *
 * # Safety
 * `g` must be a live graph; strings NUL-terminated; `out` writable.
 */
enum AsyncmstStatus asyncmst_run(const struct AsyncmstGraph *g,
                                 const char *protocol,
                                 const char *policy,
                                 uint64_t seed,
                                 struct AsyncmstReport **out);

/**
 * Generates a graph from `family` (seeded by `seed`) and runs `protocol`
 * on it, exactly as one run of a sweep would.
 *
 * # Safety
 * Strings must be NUL-terminated (`policy` may be NULL); `out` writable.
 */
enum AsyncmstStatus asyncmst_run_family(const char *protocol,
                                        const char *family,
                                        size_t n,
                                        uint64_t seed,
                                        const char *policy,
                                        struct AsyncmstReport **out);

/**
 * Runs every `(n, policy, seed)` combination of a configuration file's
 * text on `threads` threads (0 picks the CPU count).
 *
 * # Safety
 * `config` must be NUL-terminated; `out` writable.
 */
enum AsyncmstStatus asyncmst_sweep(const char *config, size_t threads, struct AsyncmstBatch **out);

/**
 * # Safety
 * `b` must be NULL or a live batch.
 */
size_t asyncmst_batch_len(const struct AsyncmstBatch *b);

/**
 * Borrowed report `i` of the batch, or NULL when out of range. It lives
 * as long as the batch and must not be freed separately.
 *
 * # Safety
 * `b` must be NULL or a live batch.
 */
const struct AsyncmstReport *asyncmst_batch_report(const struct AsyncmstBatch *b, size_t i);

/**
 * The batch as CSV text (same columns as `runs.csv`), or NULL on error.
 *
 * # Safety
 * `b` must be NULL or a live batch.
 */
char *asyncmst_batch_csv(const struct AsyncmstBatch *b);

/**
 * # Safety
 * `b` must be NULL or a handle not yet freed.
 */
void asyncmst_batch_free(struct AsyncmstBatch *b);

/**
 * Total messages sent.
 *
 * # Safety
 * `r` must be NULL (yields 0) or a live report.
 */
uint64_t asyncmst_report_total_messages(const struct AsyncmstReport *r);

/**
 * # Safety
 * `r` must be NULL (yields 0) or a live report.
 */
uint32_t asyncmst_report_phases(const struct AsyncmstReport *r);

/**
 * Whether the output agrees with the sequential oracle.
 *
 * # Safety
 * `r` must be NULL (yields false) or a live report.
 */
bool asyncmst_report_oracle_match(const struct AsyncmstReport *r);

/**
 * Per-run status: 0 ok, 3 oracle mismatch, 4 invariant violation,
 * 5 livelock or stall; -1 for NULL.
 *
 * # Safety
 * `r` must be NULL or a live report.
 */
int32_t asyncmst_report_status(const struct AsyncmstReport *r);

/**
 * Number of output edges.
 *
 * # Safety
 * `r` must be NULL (yields 0) or a live report.
 */
size_t asyncmst_report_edge_count(const struct AsyncmstReport *r);

/**
 * Copies up to `cap` output edges as index pairs (smaller index first)
 * into `us`/`vs` and returns the total edge count.
 *
 * # Safety
 * `r` must be NULL or a live report; when `cap > 0`, `us` and `vs` must
 * have room for `cap` elements.
 */
size_t asyncmst_report_edges(const struct AsyncmstReport *r, size_t *us, size_t *vs, size_t cap);

/**
 * The full report as JSON; free with [`asyncmst_string_free`]. NULL for
 * a NULL report.
 *
 * # Safety
 * `r` must be NULL or a live report.
 */
char *asyncmst_report_json(const struct AsyncmstReport *r);

/**
 * # Safety
 * `r` must be NULL or an owned report not yet freed (not one borrowed
 * from a batch).
 */
void asyncmst_report_free(struct AsyncmstReport *r);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void asyncmst_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASYNCMST_H */
