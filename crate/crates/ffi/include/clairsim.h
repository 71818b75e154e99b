#ifndef CLAIRSIM_H
#define CLAIRSIM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. Values 2-4 match the command-line exit codes.
 */
typedef enum ClairsimStatus {
  CLAIRSIM_STATUS_OK = 0,
  CLAIRSIM_STATUS_IO = 1,
  CLAIRSIM_STATUS_CONFIG = 2,
  CLAIRSIM_STATUS_INFEASIBLE = 3,
  CLAIRSIM_STATUS_INVARIANT = 4,
  CLAIRSIM_STATUS_NULL_POINTER = 5,
  CLAIRSIM_STATUS_PANIC = 6,
} ClairsimStatus;

/**
 * Per-worker access streams.
 */
typedef struct ClairsimAccessStreams ClairsimAccessStreams;

/**
 * A run configuration.
 */
typedef struct ClairsimRunConfig ClairsimRunConfig;

/**
 * The outcome of one simulation.
 */
typedef struct ClairsimSimResult ClairsimSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *clairsim_last_error_message(void);

/**
 * # Safety
 * `s` must come from a clairsim function returning `char *`, or be NULL.
 */
void clairsim_string_free(char *s);

/**
 * Parse a JSON run configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ClairsimStatus clairsim_run_config_from_json(const char *json, struct ClairsimRunConfig **out);

/**
 * Configuration for a named preset and policy (e.g. "nopfs", "staging-buffer:ram").
 *
 * # Safety
 * `preset` and `policy` must be NUL-terminated strings; `out` must be writable.
 */
enum ClairsimStatus clairsim_run_config_from_preset(const char *preset,
                                                    const char *policy,
                                                    uint64_t seed,
                                                    struct ClairsimRunConfig **out);

/**
 * Shrink dataset and capacities by `scale` (multiplies any existing factor).
 *
 * # Safety
 * `config` must be a live handle.
 */
enum ClairsimStatus clairsim_run_config_set_scale(struct ClairsimRunConfig *config, double scale);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum ClairsimStatus clairsim_run_config_set_epochs(struct ClairsimRunConfig *config, size_t epochs);

/**
 * Normalized configuration as JSON; free with `clairsim_string_free`.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum ClairsimStatus clairsim_run_config_to_json(const struct ClairsimRunConfig *config, char **out);

/**
 * # Safety
 * `config` must come from this library and not be used afterwards, or be NULL.
 */
void clairsim_run_config_free(struct ClairsimRunConfig *config);

/**
 * Validate, build streams and the policy, and simulate.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum ClairsimStatus clairsim_simulate(const struct ClairsimRunConfig *config,
                                      struct ClairsimSimResult **out);

/**
 * # Safety
 * `result` must be a live handle or NULL (returns NaN).
 */
double clairsim_result_total_time_s(const struct ClairsimSimResult *result);

/**
 * Stall time summed over workers.
 *
 * # Safety
 * `result` must be a live handle or NULL (returns NaN).
 */
double clairsim_result_stall_time_s(const struct ClairsimSimResult *result);

/**
 * # Safety
 * `result` must be a live handle or NULL (returns NaN).
 */
double clairsim_result_pfs_total_mb(const struct ClairsimSimResult *result);

/**
 * # Safety
 * `result` must be a live handle or NULL (returns NaN).
 */
double clairsim_result_coverage(const struct ClairsimSimResult *result);

/**
 * # Safety
 * `result` must be a live handle or NULL (returns false).
 */
bool clairsim_result_order_modified(const struct ClairsimSimResult *result);

/**
 * Full summary as JSON; free with `clairsim_string_free`.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum ClairsimStatus clairsim_result_to_json(const struct ClairsimSimResult *result, char **out);

/**
 * # Safety
 * `result` must come from this library and not be used afterwards, or be NULL.
 */
void clairsim_result_free(struct ClairsimSimResult *result);

/**
 * Generate the access streams of every worker.
 *
 * # Safety
 * `out` must be writable.
 */
enum ClairsimStatus clairsim_access_streams_new(uint64_t seed,
                                                size_t samples,
                                                size_t workers,
                                                size_t global_batch,
                                                size_t epochs,
                                                bool drop_last,
                                                struct ClairsimAccessStreams **out);

/**
 * Number of entries in `worker`'s stream.
 *
 * # Safety
 * `streams` must be a live handle; `len` must be writable.
 */
enum ClairsimStatus clairsim_access_streams_len(const struct ClairsimAccessStreams *streams,
                                                size_t worker,
                                                size_t *len);

/**
 * Copy up to `capacity` sample indices of `worker`'s stream into `buffer`
 * and report how many were written.
 *
 * # Safety
 * `streams` must be a live handle; `buffer` must hold `capacity` values;
 * `written` must be writable.
 */
enum ClairsimStatus clairsim_access_streams_copy(const struct ClairsimAccessStreams *streams,
                                                 size_t worker,
                                                 uint32_t *buffer,
                                                 size_t capacity,
                                                 size_t *written);

/**
 * # Safety
 * `streams` must come from this library and not be used afterwards, or be NULL.
 */
void clairsim_access_streams_free(struct ClairsimAccessStreams *streams);

/**
 * Probability that one worker reads a given sample at least `(1+delta)E/N` times.
 *
 * # Safety
 * `out` must be writable.
 */
enum ClairsimStatus clairsim_prob_exceeds(size_t workers, size_t epochs, double delta, double *out);

/**
 * Expected number of samples one worker reads at least `(1+delta)E/N` times.
 *
 * # Safety
 * `out` must be writable.
 */
enum ClairsimStatus clairsim_expected_hot_samples(size_t workers,
                                                  size_t epochs,
                                                  size_t samples,
                                                  double delta,
                                                  double *out);

/**
 * Piecewise-linear throughput curve lookup, clamped outside the knots.
 *
 * # Safety
 * `xs` and `ys` must each hold `len` values; `out` must be writable.
 */
enum ClairsimStatus clairsim_interp(const double *xs,
                                    const double *ys,
                                    size_t len,
                                    double x,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLAIRSIM_H */
