#ifndef P2PSCOPE_H
#define P2PSCOPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. Zero is success.
 */
typedef enum p2ps_status {
  P2PS_STATUS_OK = 0,
  P2PS_STATUS_NULL_ARGUMENT = 1,
  P2PS_STATUS_INVALID_UTF8 = 2,
  P2PS_STATUS_IO = 3,
  P2PS_STATUS_PARSE = 4,
  P2PS_STATUS_ANALYSIS = 5,
  P2PS_STATUS_PANIC = 6,
} p2ps_status;

/**
 * A directed overlay graph.
 */
typedef struct p2ps_graph p2ps_graph;

/**
 * A parsed snapshot.
 */
typedef struct p2ps_snapshot p2ps_snapshot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *p2ps_last_error(void);

/**
 * Library version as a static string.
 */
const char *p2ps_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void p2ps_string_free(char *s);

/**
 * Reads a snapshot file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum p2ps_status p2ps_snapshot_read(const char *path, struct p2ps_snapshot **out);

/**
 * Parses a snapshot from an in-memory buffer.
 *
 * # Safety
 * `data` points to `len` readable bytes; `out` is writable.
 */
enum p2ps_status p2ps_snapshot_parse(const uint8_t *data, size_t len, struct p2ps_snapshot **out);

/**
 * Number of records (crawled nodes) in the snapshot.
 *
 * # Safety
 * `snap` is a live handle or null (returns 0).
 */
size_t p2ps_snapshot_record_count(const struct p2ps_snapshot *snap);

/**
 * # Safety
 * `snap` comes from this library and is not used afterwards.
 */
void p2ps_snapshot_free(struct p2ps_snapshot *snap);

/**
 * Builds the overlay graph of a snapshot.
 *
 * # Safety
 * `snap` is a live handle; `out` is writable.
 */
enum p2ps_status p2ps_graph_from_snapshot(const struct p2ps_snapshot *snap,
                                          struct p2ps_graph **out);

/**
 * Builds a graph on nodes `0..n` from `m` directed edges `src[i] -> dst[i]`.
 *
 * # Safety
 * `src` and `dst` each point to `m` readable values; `out` is writable.
 */
enum p2ps_status p2ps_graph_from_edges(uint32_t n,
                                       const uint32_t *src,
                                       const uint32_t *dst,
                                       size_t m,
                                       struct p2ps_graph **out);

/**
 * # Safety
 * `g` is a live handle or null (returns 0).
 */
size_t p2ps_graph_node_count(const struct p2ps_graph *g);

/**
 * # Safety
 * `g` is a live handle or null (returns 0).
 */
size_t p2ps_graph_edge_count(const struct p2ps_graph *g);

/**
 * # Safety
 * `g` comes from this library and is not used afterwards.
 */
void p2ps_graph_free(struct p2ps_graph *g);

/**
 * Full metric report as JSON. `omega_samples` of 0 skips the small-world
 * coefficient.
 *
 * # Safety
 * `g` is a live handle; `out_json` is writable.
 */
enum p2ps_status p2ps_graph_analyze(const struct p2ps_graph *g,
                                    uint64_t seed,
                                    size_t omega_samples,
                                    char **out_json);

/**
 * Spectral bisection of the undirected projection.
 *
 * # Safety
 * `g` is a live handle; the three outputs are writable.
 */
enum p2ps_status p2ps_graph_fiedler_cut(const struct p2ps_graph *g,
                                        double *lambda2,
                                        size_t *edges_removed,
                                        double *cut_ratio);

/**
 * Static removal attack; the trace is returned as JSON. `strategy` is
 * `out_degree`, `betweenness`, `random` or `random:<seed>`.
 *
 * # Safety
 * `g` is a live handle, `strategy` a NUL-terminated string and `out_json`
 * writable.
 */
enum p2ps_status p2ps_graph_attack(const struct p2ps_graph *g,
                                   const char *strategy,
                                   double max_frac,
                                   uint64_t seed,
                                   char **out_json);

/**
 * Best-fitting heavy-tailed family for `len` samples, as JSON.
 *
 * # Safety
 * `xs` points to `len` readable doubles; `out_json` is writable.
 */
enum p2ps_status p2ps_fit_best(const double *xs,
                               size_t len,
                               bool discrete,
                               double p_threshold,
                               char **out_json);

/**
 * Crawls a simulated overlay in memory and returns per-tick recall as JSON.
 *
 * # Safety
 * `topology` is a NUL-terminated spec string; `out_json` is writable.
 */
enum p2ps_status p2ps_simnet_recall(const char *topology,
                                    uint64_t rounds,
                                    size_t getaddr_per_conn,
                                    char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* P2PSCOPE_H */
