#ifndef SMALLGAIN_H
#define SMALLGAIN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum SgStatus {
  SG_STATUS_OK = 0,
  /**
   * The computation ran but no certificate exists.
   */
  SG_STATUS_INFEASIBLE = 1,
  SG_STATUS_NULL_POINTER = 2,
  SG_STATUS_INVALID_ARGUMENT = 3,
  SG_STATUS_DIMENSION = 4,
  SG_STATUS_NUMERICAL = 5,
  SG_STATUS_IO = 6,
  SG_STATUS_PARSE = 7,
  SG_STATUS_PANIC = 8,
} SgStatus;

/**
 * Weight search strategies.
 */
typedef enum SgWeightStrategy {
  SG_WEIGHT_STRATEGY_TWO_PLAYER_ANALYTIC = 0,
  SG_WEIGHT_STRATEGY_LOG_GRID = 1,
  SG_WEIGHT_STRATEGY_COORDINATE_SEARCH = 2,
} SgWeightStrategy;

/**
 * Opaque block bounds `(μ, L)`.
 */
typedef struct SgBounds SgBounds;

/**
 * Opaque certificate.
 */
typedef struct SgCertificate SgCertificate;

/**
 * Opaque quadratic game `F(x) = H x`.
 */
typedef struct SgGame SgGame;

/**
 * Scalar fields of a certificate.
 */
typedef struct SgCertificateSummary {
  double alpha;
  double beta;
  double eta_max;
  double h_max;
  size_t n_players;
} SgCertificateSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sg_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sg_string_free(char *s);

/**
 * Builds block bounds from `mu[n]` and the row-major coupling matrix
 * `coupling[n*n]` (diagonal ignored).
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum SgStatus sg_bounds_new(size_t n,
                            const double *mu,
                            const double *coupling,
                            struct SgBounds **out);

/**
 * # Safety
 * `b` must come from this library and not have been freed.
 */
void sg_bounds_free(struct SgBounds *b);

/**
 * Bisected margin `α*(w)`; `feasible` is 1 when `C(w, 0) ≻ 0`.
 *
 * # Safety
 * `w` must hold `n` entries, where `n` is the number of players.
 */
enum SgStatus sg_sgn_margin(const struct SgBounds *b,
                            const double *w,
                            size_t n,
                            double *alpha,
                            int32_t *feasible);

/**
 * `λ_min(H(w))`, possibly negative.
 *
 * # Safety
 * `w` must hold `n` entries.
 */
enum SgStatus sg_normalized_margin(const struct SgBounds *b,
                                   const double *w,
                                   size_t n,
                                   double *out);

/**
 * Two-player ratio band at margin `alpha`. An unbounded side is
 * reported as `0` (lower) or `+inf` (upper).
 *
 * # Safety
 * Output pointers must be valid.
 */
enum SgStatus sg_two_player_band(const struct SgBounds *b,
                                 double alpha,
                                 double *r_lo,
                                 double *r_hi);

/**
 * Best weights (normalized to `w[0] = 1`) written into `weights[n]`.
 *
 * # Safety
 * `weights` must have room for `n` entries.
 */
enum SgStatus sg_optimize_weights(const struct SgBounds *b,
                                  enum SgWeightStrategy strategy,
                                  double *weights,
                                  size_t n,
                                  double *alpha);

/**
 * Quadratic game from the row-major `h[d*d]` and player sizes
 * `dims[n_players]` summing to `d`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum SgStatus sg_game_quadratic_new(const double *h,
                                    size_t d,
                                    const size_t *dims,
                                    size_t n_players,
                                    struct SgGame **out);

/**
 * Canonical two-block LQ game at coupling `lambda`.
 *
 * # Safety
 * `out` must be valid.
 */
enum SgStatus sg_game_canonical_lq(double lambda,
                                   double a,
                                   double b,
                                   double mu0,
                                   size_t block_dim,
                                   uint64_t seed,
                                   struct SgGame **out);

/**
 * # Safety
 * `g` must come from this library and not have been freed.
 */
void sg_game_free(struct SgGame *g);

/**
 * Total dimension of the game.
 *
 * # Safety
 * `g` must be a live handle.
 */
enum SgStatus sg_game_dim(const struct SgGame *g, size_t *out);

/**
 * `F(x)` into `f[d]`.
 *
 * # Safety
 * `x` and `f` must hold `d` entries.
 */
enum SgStatus sg_game_eval_f(const struct SgGame *g, const double *x, size_t d, double *f);

/**
 * Exact block bounds of a quadratic game in Euclidean player blocks.
 *
 * # Safety
 * `g` must be a live handle and `out` valid.
 */
enum SgStatus sg_exact_block_bounds(const struct SgGame *g, struct SgBounds **out);

/**
 * Certifies the game on the cube `‖x‖_∞ ≤ half_width` with optimized
 * weights. Returns `SG_STATUS_INFEASIBLE` and leaves `*out` NULL when no
 * certificate exists.
 *
 * # Safety
 * `g` must be a live handle and `out` valid.
 */
enum SgStatus sg_certify_cube(const struct SgGame *g,
                              double half_width,
                              size_t budget,
                              uint64_t seed,
                              struct SgCertificate **out);

/**
 * # Safety
 * `c` must come from this library and not have been freed.
 */
void sg_certificate_free(struct SgCertificate *c);

/**
 * # Safety
 * `c` must be a live handle and `out` valid.
 */
enum SgStatus sg_certificate_summary(const struct SgCertificate *c,
                                     struct SgCertificateSummary *out);

/**
 * Metric weights into `weights[n]`.
 *
 * # Safety
 * `weights` must have room for `n` entries.
 */
enum SgStatus sg_certificate_weights(const struct SgCertificate *c, double *weights, size_t n);

/**
 * JSON encoding; release with [`sg_string_free`].
 *
 * # Safety
 * `c` must be a live handle and `out` valid.
 */
enum SgStatus sg_certificate_to_json(const struct SgCertificate *c, char **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid.
 */
enum SgStatus sg_certificate_from_json(const char *json, struct SgCertificate **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMALLGAIN_H */
