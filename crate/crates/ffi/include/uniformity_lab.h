#ifndef UNIFORMITY_LAB_H
#define UNIFORMITY_LAB_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum UlStatus {
  UL_STATUS_OK = 0,
  UL_STATUS_NULL_POINTER = 1,
  UL_STATUS_INVALID_PARAMETER = 2,
  UL_STATUS_TOO_LARGE = 3,
  UL_STATUS_DEGENERATE_STATISTIC = 4,
  UL_STATUS_OUT_OF_DOMAIN = 5,
  UL_STATUS_OUT_OF_VALIDITY = 6,
  UL_STATUS_DIVERGENT_MGF = 7,
  UL_STATUS_QUADRATURE_FAILURE = 8,
  UL_STATUS_UNSUPPORTED = 9,
  UL_STATUS_PANIC = 10,
} UlStatus;

typedef enum UlKind {
  UL_KIND_COLLISIONS = 0,
  UL_KIND_SQUARED = 1,
  UL_KIND_TV = 2,
  UL_KIND_EMPTY_BINS = 3,
  UL_KIND_SINGLETONS = 4,
  UL_KIND_HUBER = 5,
} UlKind;

typedef enum UlDecision {
  UL_DECISION_UNIFORM = 0,
  UL_DECISION_NON_UNIFORM = 1,
} UlDecision;

typedef enum UlSide {
  UL_SIDE_UNIFORM = 0,
  UL_SIDE_ALTERNATIVE = 1,
} UlSide;

typedef enum UlSampleSizeKind {
  UL_SAMPLE_SIZE_KIND_HUBER = 0,
  UL_SAMPLE_SIZE_KIND_SQUARED = 1,
  UL_SAMPLE_SIZE_KIND_TV = 2,
  UL_SAMPLE_SIZE_KIND_SUPERLINEAR = 3,
} UlSampleSizeKind;

typedef enum UlTarget {
  UL_TARGET_QBAR = 0,
  UL_TARGET_QPRIME = 1,
} UlTarget;

/**
 * Opaque probability vector handle.
 */
typedef struct UlDist UlDist;

/**
 * Opaque tester handle.
 */
typedef struct UlTester UlTester;

typedef struct UlErrorEstimate {
  uint64_t failures;
  uint64_t trials;
  double delta_hat;
  double ci_low;
  double ci_high;
  uint64_t seed;
} UlErrorEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 */
const char *ul_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *ul_version(void);

/**
 * New tester. `beta` is read only for `UL_KIND_HUBER`. A NaN `threshold`
 * selects the default threshold for the kind.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum UlStatus ul_tester_new(enum UlKind kind,
                            double beta,
                            size_t n,
                            size_t m,
                            double epsilon,
                            double threshold,
                            struct UlTester **out);

/**
 * Tester that accepts iff the empirical distribution is within ε/2 of uniform in TV.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum UlStatus ul_tester_new_superlinear_tv(size_t n,
                                           size_t m,
                                           double epsilon,
                                           struct UlTester **out);

/**
 * # Safety
 * `t` must come from `ul_tester_new*` and not be used afterwards. Null is ignored.
 */
void ul_tester_free(struct UlTester *t);

/**
 * # Safety
 * `t` must be a live tester; `out` valid for one write.
 */
enum UlStatus ul_tester_threshold(const struct UlTester *t, double *out);

/**
 * Distribution from `len` probabilities summing to one.
 *
 * # Safety
 * `probs` must point to `len` doubles; `out` valid for one write.
 */
enum UlStatus ul_dist_new(const double *probs, size_t len, struct UlDist **out);

/**
 * # Safety
 * `out` must be valid for one write.
 */
enum UlStatus ul_dist_uniform(size_t m, struct UlDist **out);

/**
 * Heavy set of `round(γm)` bins at `1/m + ε/l`, the rest at `1/m − ε/(m − l)`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum UlStatus ul_dist_flat(size_t m, double epsilon, double gamma, struct UlDist **out);

/**
 * # Safety
 * `d` must come from `ul_dist_*` and not be used afterwards. Null is ignored.
 */
void ul_dist_free(struct UlDist *d);

/**
 * Decision on a histogram of `len` bin counts.
 *
 * # Safety
 * `counts` must point to `len` values; `out` valid for one write.
 */
enum UlStatus ul_decide(const struct UlTester *t,
                        const size_t *counts,
                        size_t len,
                        enum UlDecision *out);

/**
 * One multinomial histogram; fills `counts_out` (length `len`, must equal m).
 *
 * # Safety
 * `d` must be live; `counts_out` must point to `len` writable values.
 */
enum UlStatus ul_sample_histogram(const struct UlDist *d,
                                  size_t n,
                                  uint64_t seed,
                                  size_t *counts_out,
                                  size_t len);

/**
 * Monte Carlo failure probability of `t` on samples from `d`.
 *
 * # Safety
 * Handles must be live; `out` valid for one write.
 */
enum UlStatus ul_estimate_error(const struct UlTester *t,
                                const struct UlDist *d,
                                enum UlSide side,
                                uint64_t trials,
                                uint64_t master_seed,
                                size_t workers,
                                struct UlErrorEstimate *out);

/**
 * Exact rejection probability under `p` and acceptance probability under `q`.
 *
 * # Safety
 * Handles must be live; out-pointers valid for one write each.
 */
enum UlStatus ul_exact_error_rates(const struct UlTester *t,
                                   const struct UlDist *p,
                                   const struct UlDist *q,
                                   double *delta_minus,
                                   double *delta_plus);

/**
 * # Safety
 * `out` must be valid for one write.
 */
enum UlStatus ul_sample_size(size_t m,
                             double epsilon,
                             double delta_minus,
                             double delta_plus,
                             enum UlSampleSizeKind kind,
                             uint64_t *out);

/**
 * # Safety
 * `out` must be valid for one write.
 */
enum UlStatus ul_default_beta(size_t n, size_t m, double epsilon, double k, double *out);

/**
 * Minimum normalized variance over per-bin statistics.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum UlStatus ul_min_nvar(size_t n, size_t m, double epsilon, enum UlTarget target, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNIFORMITY_LAB_H */
