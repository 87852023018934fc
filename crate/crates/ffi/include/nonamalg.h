#ifndef NONAMALG_H
#define NONAMALG_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every exported call. The values match the command line's exit
 * codes where both have one.
 */
typedef enum NonamalgStatus {
  NONAMALG_STATUS_OK = 0,
  NONAMALG_STATUS_NULL_ARGUMENT = 1,
  NONAMALG_STATUS_USAGE = 2,
  NONAMALG_STATUS_MALFORMED = 3,
  NONAMALG_STATUS_VERIFY_FAILED = 4,
  NONAMALG_STATUS_ABORTED = 5,
  NONAMALG_STATUS_PANICKED = 6,
} NonamalgStatus;

/**
 * A finished engine run.
 */
typedef struct NonamalgTrace NonamalgTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Runs `engine` (`pair`, `obstacle`, `wide`, `oscillation`, `anchored` or
 * `anchored-filters`) on its shipped configuration. `z` takes the same
 * forms as on the command line; null means `seed:0`.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum NonamalgStatus nonamalg_construct(const char *engine,
                                       size_t steps,
                                       const char *z,
                                       uint64_t seed,
                                       struct NonamalgTrace **out);

/**
 * Reads a trace from its JSON text.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum NonamalgStatus nonamalg_trace_parse(const char *json, struct NonamalgTrace **out);

/**
 * Canonical JSON text of a trace, to be released with
 * [`nonamalg_string_free`].
 *
 * # Safety
 * `trace` must come from this library; `out` must be writable.
 */
enum NonamalgStatus nonamalg_trace_to_json(const struct NonamalgTrace *trace, char **out);

/**
 * Runs every verification suite. Returns `VerifyFailed` when any suite
 * reports a problem; the problems are then in [`nonamalg_last_error`].
 *
 * # Safety
 * `trace` must come from this library.
 */
enum NonamalgStatus nonamalg_trace_verify(const struct NonamalgTrace *trace);

/**
 * Decodes the bits carried by the trace as a string of `0`/`1`, released
 * with [`nonamalg_string_free`]. `obstacle` is a coordinate list such as
 * `"0,1"`; engines without obstacles accept null, the others default to
 * their first obstacle. Returns `VerifyFailed` (with the bits still
 * written) when they disagree with the stream.
 *
 * # Safety
 * `trace` must come from this library; `obstacle` must be null or
 * NUL-terminated; `out_bits` must be writable.
 */
enum NonamalgStatus nonamalg_trace_decode(const struct NonamalgTrace *trace,
                                          const char *obstacle,
                                          char **out_bits);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *nonamalg_last_error(void);

/**
 * # Safety
 * `trace` must be null or come from this library, and is invalid afterwards.
 */
void nonamalg_trace_free(struct NonamalgTrace *trace);

/**
 * # Safety
 * `s` must be null or a string handed out by this library.
 */
void nonamalg_string_free(char *s);

/**
 * Trace format version this library reads and writes.
 */
uint32_t nonamalg_format_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NONAMALG_H */
