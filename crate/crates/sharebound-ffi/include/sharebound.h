/* C interface of the sharebound library. */

#ifndef SHAREBOUND_H
#define SHAREBOUND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every entry point.
 */
typedef enum SbStatus {
  /**
   * The call succeeded.
   */
  SbStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  SbStatus_NullPointer = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SbStatus_Utf8 = 2,
  /**
   * The document could not be parsed or references an unknown name.
   */
  SbStatus_Parse = 3,
  /**
   * A numeric argument was outside its domain.
   */
  SbStatus_Domain = 4,
  /**
   * An array argument had the wrong length.
   */
  SbStatus_Shape = 5,
  /**
   * The welfare does not support the requested construction.
   */
  SbStatus_Unsupported = 6,
  /**
   * The requested computation exceeds the evaluation budget.
   */
  SbStatus_Budget = 7,
  /**
   * An internal invariant failed.
   */
  SbStatus_Internal = 8,
} SbStatus;

/**
 * Opaque handle to a parsed problem document.
 */
typedef struct SbProblem SbProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse a TOML problem document.
 *
 * On success writes a freshly allocated handle to `out`; release it
 * with `sb_problem_free`.
 *
 * # Safety
 *
 * `text` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer; both stay unread after the call returns.
 */
enum SbStatus sb_problem_parse(const char *text, struct SbProblem **out);

/**
 * Release a handle returned by `sb_problem_parse`. A null handle is
 * ignored.
 *
 * # Safety
 *
 * `p` must be null or a pointer obtained from `sb_problem_parse` that
 * has not been freed before; it must not be used afterwards.
 */
void sb_problem_free(struct SbProblem *p);

/**
 * Number of agents in the problem.
 *
 * # Safety
 *
 * `p` must be a live handle and `out` writable for one value.
 */
enum SbStatus sb_problem_n(const struct SbProblem *p, uintptr_t *out);

/**
 * Common type interval of the problem.
 *
 * # Safety
 *
 * `p` must be a live handle; `lo` and `hi` must be writable.
 */
enum SbStatus sb_problem_interval(const struct SbProblem *p, double *lo, double *hi);

/**
 * Evaluate the welfare at a profile of `len` types.
 *
 * # Safety
 *
 * `p` must be a live handle, `x` must point to `len` readable values,
 * and `out` must be writable.
 */
enum SbStatus sb_eval(const struct SbProblem *p, const double *x, uintptr_t len, double *out);

/**
 * Per-agent unanimity value at type `t`.
 *
 * # Safety
 *
 * `p` must be a live handle and `out` writable.
 */
enum SbStatus sb_unanimity(const struct SbProblem *p, double t, double *out);

/**
 * Number of guarantee curves the document defines.
 *
 * # Safety
 *
 * `p` must be a live handle and `out` writable.
 */
enum SbStatus sb_guarantee_count(const struct SbProblem *p, uintptr_t *out);

/**
 * Label of guarantee `index` as a freshly allocated string; release
 * it with `sb_string_free`.
 *
 * # Safety
 *
 * `p` must be a live handle and `out` writable for one pointer.
 */
enum SbStatus sb_guarantee_label(const struct SbProblem *p, uintptr_t index, char **out);

/**
 * Evaluate guarantee `index` at type `t`.
 *
 * # Safety
 *
 * `p` must be a live handle and `out` writable.
 */
enum SbStatus sb_guarantee_eval(const struct SbProblem *p, uintptr_t index, double t, double *out);

/**
 * Run the named sharing rule on a profile of `len` types, writing
 * `len` shares to `out`.
 *
 * # Safety
 *
 * `p` must be a live handle, `name` a NUL-terminated string, `x`
 * readable for `len` values, and `out` writable for `len` values.
 */
enum SbStatus sb_rule_shares(const struct SbProblem *p,
                             const char *name,
                             const double *x,
                             uintptr_t len,
                             double *out);

/**
 * Grid feasibility check for guarantee `index`: `pass` reports the
 * verdict and `worst_gap` the smallest profile slack found.
 *
 * # Safety
 *
 * `p` must be a live handle; `pass` and `worst_gap` must be writable.
 */
enum SbStatus sb_verify_feasibility(const struct SbProblem *p,
                                    uintptr_t index,
                                    bool *pass,
                                    double *worst_gap);

/**
 * Grid tightness check for guarantee `index`: `pass` reports whether
 * every type has a near-contact profile and `worst_gap` the largest
 * per-type contact slack.
 *
 * # Safety
 *
 * `p` must be a live handle; `pass` and `worst_gap` must be writable.
 */
enum SbStatus sb_verify_tightness(const struct SbProblem *p,
                                  uintptr_t index,
                                  bool *pass,
                                  double *worst_gap);

/**
 * Message of the most recent error on this thread as a freshly
 * allocated string, or null if none; release with `sb_string_free`.
 */
char *sb_last_error_message(void);

/**
 * Release a string returned by this library. A null pointer is
 * ignored.
 *
 * # Safety
 *
 * `s` must be null or a pointer obtained from this library that has
 * not been freed before.
 */
void sb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHAREBOUND_H */
