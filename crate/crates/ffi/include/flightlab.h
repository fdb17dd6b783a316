#ifndef FLIGHTLAB_H
#define FLIGHTLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every flightlab call.
 */
typedef enum {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_DOMAIN_ERROR = 3,
  FL_STATUS_LENGTH_MISMATCH = 4,
  FL_STATUS_DIMENSION_MISMATCH = 5,
  FL_STATUS_SINGULAR = 6,
  FL_STATUS_INTERNAL_ERROR = 7,
} FlStatus;

/**
 * Clock kinds for the C surface.
 */
typedef enum {
  /**
   * f(t) = t^param, param > 1/2
   */
  FL_CLOCK_POWER = 0,
  /**
   * f(t) = exp(param t), param > 0
   */
  FL_CLOCK_EXPONENTIAL = 1,
  /**
   * f(t) = exp(t²), param ignored
   */
  FL_CLOCK_SUPER_EXPONENTIAL = 2,
} FlClock;

/**
 * Opaque piecewise-linear path on [0, 1].
 */
typedef struct FlPath FlPath;

/**
 * Opaque replayable random stream.
 */
typedef struct FlRng FlRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated).
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes.
 */
FlStatus fl_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/**
 * Create the (seed, stream_index) random stream. Never fails; free with
 * [`fl_rng_free`].
 */
FlRng *fl_rng_new(uint64_t seed, uint64_t stream_index);

/**
 * # Safety
 * `rng` must be a pointer returned by [`fl_rng_new`] (or null, a no-op),
 * not freed twice.
 */
void fl_rng_free(FlRng *rng);

/**
 * Draw the next `n` standard Poisson arrivals from the stream; writes the
 * cumulative arrival times and optionally the exponential spacings.
 *
 * # Safety
 * `rng` must be a live handle; `out_arrivals` (and `out_increments` when
 * non-null) must point to `n` writable doubles.
 */
FlStatus fl_sample_arrivals(FlRng *rng, size_t n, double *out_arrivals, double *out_increments);

/**
 * `E Γ_k^beta = Γ(k+beta)/Γ(k)`.
 *
 * # Safety
 * `out` must be a valid pointer to one double.
 */
FlStatus fl_exact_gamma_moment(uint64_t k, double beta, double *out);

/**
 * `Var <Y(t), x>` of the power-clock limit, with `cov_quad = xᵀKx`.
 *
 * # Safety
 * `out` must be a valid pointer to one double.
 */
FlStatus fl_power_marginal_variance(double t, double alpha, double cov_quad, double *out);

/**
 * # Safety
 * `path` must be a pointer returned by a flightlab path constructor (or
 * null, a no-op), not freed twice.
 */
void fl_path_free(FlPath *path);

/**
 * Number of knots. Returns 0 for a null handle.
 *
 * # Safety
 * `path` must be a live handle or null.
 */
size_t fl_path_knots(const FlPath *path);

/**
 * Spatial dimension. Returns 0 for a null handle.
 *
 * # Safety
 * `path` must be a live handle or null.
 */
size_t fl_path_dim(const FlPath *path);

/**
 * Copy knot times into `buf`.
 *
 * # Safety
 * `path` must be a live handle; `buf` must hold at least `len` doubles and
 * `len` must cover `fl_path_knots`.
 */
FlStatus fl_path_times(const FlPath *path, double *buf, size_t len);

/**
 * Copy knot values (row-major, `knots × dim`) into `buf`.
 *
 * # Safety
 * `path` must be a live handle; `buf` must hold at least `len` doubles and
 * `len` must cover `knots × dim`.
 */
FlStatus fl_path_values(const FlPath *path, double *buf, size_t len);

/**
 * Evaluate the path at `t` in [0, 1] by linear interpolation.
 *
 * # Safety
 * `path` must be a live handle; `out` must hold `fl_path_dim` doubles.
 */
FlStatus fl_path_eval(const FlPath *path, double t, double *out);

/**
 * Supremum distance between two paths of equal dimension.
 *
 * # Safety
 * Both handles must be live; `out` must point to one double.
 */
FlStatus fl_path_sup_distance(const FlPath *a, const FlPath *b, double *out);

/**
 * Sample the rescaled broken-line flight from the stream's current
 * position: `n` clocked arrivals, uniform sphere directions in `dim`
 * dimensions, spatial normalization `gamma_exact` (0) or `n_power` (1).
 *
 * # Safety
 * `rng` must be a live handle; `out_path` must point to one pointer slot.
 */
FlStatus fl_sample_rescaled_flight(FlRng *rng,
                                   FlClock clock,
                                   double clock_param,
                                   size_t n,
                                   size_t dim,
                                   int32_t normalization,
                                   FlPath **out_path);

/**
 * Exact sample of the power-clock Gaussian limit on a time grid (uniform
 * sphere covariance I/dim).
 *
 * # Safety
 * `rng` must be live; `grid` must hold `grid_len` doubles ending at 1.0;
 * `out_path` must point to one pointer slot.
 */
FlStatus fl_sample_power_limit(FlRng *rng,
                               double alpha,
                               size_t dim,
                               const double *grid,
                               size_t grid_len,
                               FlPath **out_path);

/**
 * Degenerate super-exponential limit: a straight unit ray with a uniform
 * random direction.
 *
 * # Safety
 * `rng` must be live; `out_path` must point to one pointer slot.
 */
FlStatus fl_sample_degenerate_limit(FlRng *rng, size_t dim, FlPath **out_path);

/**
 * One coupled draw of the exponential-clock pre-limit and limit paths;
 * writes the pathwise bound `2 exp(-beta Γ_(n-1))` and the realized
 * sup-distance.
 *
 * # Safety
 * `out_bound` and `out_sup` must each point to one double.
 */
FlStatus fl_exp_limit_coupled_draw(uint64_t seed,
                                   uint64_t stream_index,
                                   double beta,
                                   size_t dim,
                                   double truncation_tol,
                                   size_t n,
                                   double *out_bound,
                                   double *out_sup);

/**
 * Maximal deviation of normalized arrivals from the uniform grid,
 * `max_k |Γ_k/Γ_n − k/n|`, from a fresh sample.
 *
 * # Safety
 * `out` must point to one double.
 */
FlStatus fl_mn_statistic(uint64_t seed, uint64_t stream_index, size_t n, double *out);

/**
 * One-sample KS test of `values` against N(mean, sd²); writes the exact
 * sup-distance statistic and the asymptotic p-value.
 *
 * # Safety
 * `values` must hold `len` doubles; `out_d` and `out_p` must each point to
 * one double.
 */
FlStatus fl_ks_test_normal(const double *values,
                           size_t len,
                           double mean,
                           double sd,
                           double *out_d,
                           double *out_p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLIGHTLAB_H */
