//! C ABI for the flightlab library.
//!
//! Conventions: every fallible function returns an [`FlStatus`] code
//! (0 = success) and writes results through out-pointers; structured state
//! lives behind opaque handles (`FlRng`, `FlPath`) with explicit `_free`
//! functions; the last error message is kept per thread and readable via
//! [`fl_last_error_message`]. The header `include/flightlab.h` is generated
//! by cbindgen at build time.

use flightlab::direction_law::DirectionLaw;
use flightlab::flight_path::{rescaled_flight, sup_distance, Normalization, PolylinePath};
use flightlab::limit_laws::{
    power_marginal_variance, sample_degenerate_limit, sample_exp_limit_coupled, sample_power_limit,
    ExpLimitSpec, PowerLimitSpec,
};
use flightlab::linalg::Matrix;
use flightlab::poisson_clock::{apply_clock, exact_gamma_moment, ArrivalSequence, ClockFunction};
use flightlab::rng::RngStream;
use flightlab::special::normal_cdf;
use flightlab::stats::{ks_test, mn_statistic};
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::ffi::{c_char, CString};

/// Status codes returned by every flightlab call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DomainError = 3,
    LengthMismatch = 4,
    DimensionMismatch = 5,
    Singular = 6,
    InternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &flightlab::Error) -> FlStatus {
    use flightlab::Error as E;
    set_error(&err.to_string());
    match err {
        E::InvalidParameter(_) | E::Config(_) | E::EmptySequence(_) | E::NonMonotone(_) => {
            FlStatus::InvalidArgument
        }
        E::Domain(_) => FlStatus::DomainError,
        E::LengthMismatch(_) => FlStatus::LengthMismatch,
        E::DimensionMismatch { .. } => FlStatus::DimensionMismatch,
        E::Singular(_) => FlStatus::Singular,
        _ => FlStatus::InternalError,
    }
}

/// Copy the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated).
///
/// # Safety
/// `buf` must point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fl_last_error_message(buf: *mut c_char, len: usize) -> FlStatus {
    if buf.is_null() || len == 0 {
        return FlStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        let n = bytes.len().min(len - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
        *buf.add(n) = 0;
    });
    FlStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// random streams

/// Opaque replayable random stream.
pub struct FlRng {
    rng: ChaCha8Rng,
}

/// Create the (seed, stream_index) random stream. Never fails; free with
/// [`fl_rng_free`].
#[no_mangle]
pub extern "C" fn fl_rng_new(seed: u64, stream_index: u64) -> *mut FlRng {
    Box::into_raw(Box::new(FlRng {
        rng: RngStream::new(seed, stream_index).rng(),
    }))
}

/// # Safety
/// `rng` must be a pointer returned by [`fl_rng_new`] (or null, a no-op),
/// not freed twice.
#[no_mangle]
pub unsafe extern "C" fn fl_rng_free(rng: *mut FlRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

// ---------------------------------------------------------------------------
// arrivals and clocks

/// Clock kinds for the C surface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlClock {
    /// f(t) = t^param, param > 1/2
    Power = 0,
    /// f(t) = exp(param t), param > 0
    Exponential = 1,
    /// f(t) = exp(t²), param ignored
    SuperExponential = 2,
}

fn clock_of(kind: FlClock, param: f64) -> Result<ClockFunction, flightlab::Error> {
    match kind {
        FlClock::Power => ClockFunction::power(param),
        FlClock::Exponential => ClockFunction::exponential(param),
        FlClock::SuperExponential => Ok(ClockFunction::super_exponential()),
    }
}

/// Draw the next `n` standard Poisson arrivals from the stream; writes the
/// cumulative arrival times and optionally the exponential spacings.
///
/// # Safety
/// `rng` must be a live handle; `out_arrivals` (and `out_increments` when
/// non-null) must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_sample_arrivals(
    rng: *mut FlRng,
    n: usize,
    out_arrivals: *mut f64,
    out_increments: *mut f64,
) -> FlStatus {
    if rng.is_null() || out_arrivals.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    if n == 0 {
        set_error("n must be at least 1");
        return FlStatus::InvalidArgument;
    }
    let rng = &mut *rng;
    let mut acc = 0.0;
    for i in 0..n {
        let g = flightlab::rng::standard_exponential(&mut rng.rng);
        acc += g;
        *out_arrivals.add(i) = acc;
        if !out_increments.is_null() {
            *out_increments.add(i) = g;
        }
    }
    FlStatus::Ok
}

/// `E Γ_k^beta = Γ(k+beta)/Γ(k)`.
///
/// # Safety
/// `out` must be a valid pointer to one double.
#[no_mangle]
pub unsafe extern "C" fn fl_exact_gamma_moment(k: u64, beta: f64, out: *mut f64) -> FlStatus {
    if out.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    match exact_gamma_moment(k, beta) {
        Ok(v) => {
            *out = v;
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// `Var <Y(t), x>` of the power-clock limit, with `cov_quad = xᵀKx`.
///
/// # Safety
/// `out` must be a valid pointer to one double.
#[no_mangle]
pub unsafe extern "C" fn fl_power_marginal_variance(
    t: f64,
    alpha: f64,
    cov_quad: f64,
    out: *mut f64,
) -> FlStatus {
    if out.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    if !cov_quad.is_finite() || cov_quad < 0.0 {
        set_error("covariance quadratic form must be non-negative");
        return FlStatus::InvalidArgument;
    }
    let k = Matrix::diagonal(&[cov_quad]);
    match power_marginal_variance(t, &[1.0], alpha, &k) {
        Ok(v) => {
            *out = v;
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

// ---------------------------------------------------------------------------
// paths

/// Opaque piecewise-linear path on [0, 1].
pub struct FlPath {
    inner: PolylinePath,
}

fn path_handle(p: PolylinePath) -> *mut FlPath {
    Box::into_raw(Box::new(FlPath { inner: p }))
}

/// # Safety
/// `path` must be a pointer returned by a flightlab path constructor (or
/// null, a no-op), not freed twice.
#[no_mangle]
pub unsafe extern "C" fn fl_path_free(path: *mut FlPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Number of knots. Returns 0 for a null handle.
///
/// # Safety
/// `path` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_path_knots(path: *const FlPath) -> usize {
    if path.is_null() {
        0
    } else {
        (*path).inner.knots()
    }
}

/// Spatial dimension. Returns 0 for a null handle.
///
/// # Safety
/// `path` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fl_path_dim(path: *const FlPath) -> usize {
    if path.is_null() {
        0
    } else {
        (*path).inner.dim()
    }
}

/// Copy knot times into `buf`.
///
/// # Safety
/// `path` must be a live handle; `buf` must hold at least `len` doubles and
/// `len` must cover `fl_path_knots`.
#[no_mangle]
pub unsafe extern "C" fn fl_path_times(path: *const FlPath, buf: *mut f64, len: usize) -> FlStatus {
    if path.is_null() || buf.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    let times = (*path).inner.knot_times();
    if len < times.len() {
        set_error("buffer too small for knot times");
        return FlStatus::LengthMismatch;
    }
    std::ptr::copy_nonoverlapping(times.as_ptr(), buf, times.len());
    FlStatus::Ok
}

/// Copy knot values (row-major, `knots × dim`) into `buf`.
///
/// # Safety
/// `path` must be a live handle; `buf` must hold at least `len` doubles and
/// `len` must cover `knots × dim`.
#[no_mangle]
pub unsafe extern "C" fn fl_path_values(
    path: *const FlPath,
    buf: *mut f64,
    len: usize,
) -> FlStatus {
    if path.is_null() || buf.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    let p = &(*path).inner;
    let need = p.knots() * p.dim();
    if len < need {
        set_error("buffer too small for knot values");
        return FlStatus::LengthMismatch;
    }
    for k in 0..p.knots() {
        let row = p.knot_value(k);
        std::ptr::copy_nonoverlapping(row.as_ptr(), buf.add(k * p.dim()), p.dim());
    }
    FlStatus::Ok
}

/// Evaluate the path at `t` in [0, 1] by linear interpolation.
///
/// # Safety
/// `path` must be a live handle; `out` must hold `fl_path_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_path_eval(path: *const FlPath, t: f64, out: *mut f64) -> FlStatus {
    if path.is_null() || out.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    match (*path).inner.evaluate_at(t) {
        Ok(v) => {
            std::ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Supremum distance between two paths of equal dimension.
///
/// # Safety
/// Both handles must be live; `out` must point to one double.
#[no_mangle]
pub unsafe extern "C" fn fl_path_sup_distance(
    a: *const FlPath,
    b: *const FlPath,
    out: *mut f64,
) -> FlStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    match sup_distance(&(*a).inner, &(*b).inner) {
        Ok(v) => {
            *out = v;
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Sample the rescaled broken-line flight from the stream's current
/// position: `n` clocked arrivals, uniform sphere directions in `dim`
/// dimensions, spatial normalization `gamma_exact` (0) or `n_power` (1).
///
/// # Safety
/// `rng` must be a live handle; `out_path` must point to one pointer slot.
#[no_mangle]
pub unsafe extern "C" fn fl_sample_rescaled_flight(
    rng: *mut FlRng,
    clock: FlClock,
    clock_param: f64,
    n: usize,
    dim: usize,
    normalization: i32,
    out_path: *mut *mut FlPath,
) -> FlStatus {
    if rng.is_null() || out_path.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    let rng = &mut *rng;
    let norm = match normalization {
        0 => Normalization::GammaExact,
        1 => Normalization::NPower,
        _ => {
            set_error("normalization must be 0 (gamma-exact) or 1 (n-power)");
            return FlStatus::InvalidArgument;
        }
    };
    if n == 0 {
        set_error("n must be at least 1");
        return FlStatus::InvalidArgument;
    }
    let result = (|| -> Result<PolylinePath, flightlab::Error> {
        let clock = clock_of(clock, clock_param)?;
        let law = DirectionLaw::uniform(dim)?;
        let mut acc = 0.0;
        let mut arrivals = Vec::with_capacity(n);
        for _ in 0..n {
            acc += flightlab::rng::standard_exponential(&mut rng.rng);
            arrivals.push(acc);
        }
        let arr = ArrivalSequence::from_arrivals(arrivals)?;
        let clocked = apply_clock(&clock, &arr)?;
        let dirs: Vec<Vec<f64>> = (0..n)
            .map(|_| flightlab::direction_law::sample_direction(&law, &mut rng.rng))
            .collect();
        rescaled_flight(&clocked, &dirs, norm)
    })();
    match result {
        Ok(p) => {
            *out_path = path_handle(p);
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Exact sample of the power-clock Gaussian limit on a time grid (uniform
/// sphere covariance I/dim).
///
/// # Safety
/// `rng` must be live; `grid` must hold `grid_len` doubles ending at 1.0;
/// `out_path` must point to one pointer slot.
#[no_mangle]
pub unsafe extern "C" fn fl_sample_power_limit(
    rng: *mut FlRng,
    alpha: f64,
    dim: usize,
    grid: *const f64,
    grid_len: usize,
    out_path: *mut *mut FlPath,
) -> FlStatus {
    if rng.is_null() || grid.is_null() || out_path.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    if dim == 0 {
        set_error("dimension must be at least 1");
        return FlStatus::InvalidArgument;
    }
    let grid = std::slice::from_raw_parts(grid, grid_len);
    let rng = &mut *rng;
    let result = (|| -> Result<PolylinePath, flightlab::Error> {
        let spec = PowerLimitSpec::new(alpha, Matrix::scaled_identity(dim, 1.0 / dim as f64))?;
        sample_power_limit(&spec, grid, &mut rng.rng)
    })();
    match result {
        Ok(p) => {
            *out_path = path_handle(p);
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Degenerate super-exponential limit: a straight unit ray with a uniform
/// random direction.
///
/// # Safety
/// `rng` must be live; `out_path` must point to one pointer slot.
#[no_mangle]
pub unsafe extern "C" fn fl_sample_degenerate_limit(
    rng: *mut FlRng,
    dim: usize,
    out_path: *mut *mut FlPath,
) -> FlStatus {
    if rng.is_null() || out_path.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    let rng = &mut *rng;
    let result =
        DirectionLaw::uniform(dim).and_then(|law| sample_degenerate_limit(&law, &mut rng.rng));
    match result {
        Ok(p) => {
            *out_path = path_handle(p);
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// One coupled draw of the exponential-clock pre-limit and limit paths;
/// writes the pathwise bound `2 exp(-beta Γ_(n-1))` and the realized
/// sup-distance.
///
/// # Safety
/// `out_bound` and `out_sup` must each point to one double.
#[no_mangle]
pub unsafe extern "C" fn fl_exp_limit_coupled_draw(
    seed: u64,
    stream_index: u64,
    beta: f64,
    dim: usize,
    truncation_tol: f64,
    n: usize,
    out_bound: *mut f64,
    out_sup: *mut f64,
) -> FlStatus {
    if out_bound.is_null() || out_sup.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    let result = (|| -> Result<(f64, f64), flightlab::Error> {
        let spec = ExpLimitSpec::new(beta, DirectionLaw::uniform(dim)?, truncation_tol)?;
        let c = sample_exp_limit_coupled(&spec, n, RngStream::new(seed, stream_index))?;
        let sup = sup_distance(&c.pre_limit, &c.limit)?;
        Ok((c.bound, sup))
    })();
    match result {
        Ok((bound, sup)) => {
            *out_bound = bound;
            *out_sup = sup;
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

// ---------------------------------------------------------------------------
// statistics

/// Maximal deviation of normalized arrivals from the uniform grid,
/// `max_k |Γ_k/Γ_n − k/n|`, from a fresh sample.
///
/// # Safety
/// `out` must point to one double.
#[no_mangle]
pub unsafe extern "C" fn fl_mn_statistic(
    seed: u64,
    stream_index: u64,
    n: usize,
    out: *mut f64,
) -> FlStatus {
    if out.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    match mn_statistic(n, RngStream::new(seed, stream_index)) {
        Ok(v) => {
            *out = v;
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// One-sample KS test of `values` against N(mean, sd²); writes the exact
/// sup-distance statistic and the asymptotic p-value.
///
/// # Safety
/// `values` must hold `len` doubles; `out_d` and `out_p` must each point to
/// one double.
#[no_mangle]
pub unsafe extern "C" fn fl_ks_test_normal(
    values: *const f64,
    len: usize,
    mean: f64,
    sd: f64,
    out_d: *mut f64,
    out_p: *mut f64,
) -> FlStatus {
    if values.is_null() || out_d.is_null() || out_p.is_null() {
        set_error("null pointer");
        return FlStatus::NullPointer;
    }
    if !sd.is_finite() || sd <= 0.0 {
        set_error("standard deviation must be positive");
        return FlStatus::InvalidArgument;
    }
    let sample = std::slice::from_raw_parts(values, len);
    match ks_test(sample, |x| normal_cdf((x - mean) / sd)) {
        Ok(res) => {
            *out_d = res.statistic;
            *out_p = res.p_value;
            FlStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}
