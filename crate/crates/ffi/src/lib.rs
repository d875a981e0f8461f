//! C ABI over `smallgain`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` style
//! constructors and released with the matching `*_free`. Every call
//! returns an [`SgStatus`]; on failure the message is available from
//! [`sg_last_error`] on the same thread. Matrices are dense row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use smallgain::games::{self, GameModel, LqSpec, QuadraticGame};
use smallgain::metric::BlockStructure;
use smallgain::region::{self, CertifyOptions, CertifyOutcome, RegionSpec};
use smallgain::sgn::{self, BlockBounds, Certificate, WeightStrategy};
use smallgain::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    /// The computation ran but no certificate exists.
    Infeasible = 1,
    NullPointer = 2,
    InvalidArgument = 3,
    Dimension = 4,
    Numerical = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

/// Weight search strategies.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgWeightStrategy {
    TwoPlayerAnalytic = 0,
    LogGrid = 1,
    CoordinateSearch = 2,
}

/// Opaque block bounds `(μ, L)`.
pub struct SgBounds(BlockBounds);

/// Opaque quadratic game `F(x) = H x`.
pub struct SgGame(QuadraticGame);

/// Opaque certificate.
pub struct SgCertificate(Certificate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SgStatus {
    match e {
        Error::BlockDimension { .. } | Error::Dimension { .. } => SgStatus::Dimension,
        Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Boundary(_) => SgStatus::InvalidArgument,
        Error::NotSymmetric { .. } | Error::NotPositiveDefinite { .. } | Error::NoConvergence { .. } | Error::Singular(_) => {
            SgStatus::Numerical
        }
        Error::AtSample { source, .. } => status_of(source),
        Error::Io(_) => SgStatus::Io,
        Error::Json(_) | Error::Csv(_) => SgStatus::Parse,
    }
}

fn guard(f: impl FnOnce() -> Result<SgStatus, (SgStatus, String)>) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside smallgain".into());
            SgStatus::Panic
        }
    }
}

fn lift<T>(r: smallgain::Result<T>) -> Result<T, (SgStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (SgStatus, String) {
    (SgStatus::NullPointer, "null pointer argument".into())
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Result<&'a [T], (SgStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, (SgStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), (SgStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds block bounds from `mu[n]` and the row-major coupling matrix
/// `coupling[n*n]` (diagonal ignored).
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sg_bounds_new(n: usize, mu: *const f64, coupling: *const f64, out: *mut *mut SgBounds) -> SgStatus {
    guard(|| {
        let mu = slice(mu, n)?;
        let l = slice(coupling, n * n)?;
        let b = lift(BlockBounds::new(mu.to_vec(), DMatrix::from_row_slice(n, n, l)))?;
        put(out, Box::into_raw(Box::new(SgBounds(b))))?;
        Ok(SgStatus::Ok)
    })
}

/// # Safety
/// `b` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sg_bounds_free(b: *mut SgBounds) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Bisected margin `α*(w)`; `feasible` is 1 when `C(w, 0) ≻ 0`.
///
/// # Safety
/// `w` must hold `n` entries, where `n` is the number of players.
#[no_mangle]
pub unsafe extern "C" fn sg_sgn_margin(
    b: *const SgBounds,
    w: *const f64,
    n: usize,
    alpha: *mut f64,
    feasible: *mut i32,
) -> SgStatus {
    guard(|| {
        let b = handle(b)?;
        let m = lift(sgn::sgn_margin(&b.0, slice(w, n)?))?;
        put(alpha, m.alpha)?;
        put(feasible, m.feasible as i32)?;
        Ok(if m.feasible { SgStatus::Ok } else { SgStatus::Infeasible })
    })
}

/// `λ_min(H(w))`, possibly negative.
///
/// # Safety
/// `w` must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn sg_normalized_margin(b: *const SgBounds, w: *const f64, n: usize, out: *mut f64) -> SgStatus {
    guard(|| {
        let b = handle(b)?;
        put(out, lift(sgn::normalized_margin(&b.0, slice(w, n)?))?)?;
        Ok(SgStatus::Ok)
    })
}

/// Two-player ratio band at margin `alpha`. An unbounded side is
/// reported as `0` (lower) or `+inf` (upper).
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_two_player_band(b: *const SgBounds, alpha: f64, r_lo: *mut f64, r_hi: *mut f64) -> SgStatus {
    guard(|| {
        let b = handle(b)?;
        let band = lift(sgn::two_player_band(&b.0, alpha))?;
        put(r_lo, band.r_lo.unwrap_or(0.0))?;
        put(r_hi, band.r_hi.unwrap_or(f64::INFINITY))?;
        Ok(if band.feasible { SgStatus::Ok } else { SgStatus::Infeasible })
    })
}

/// Best weights (normalized to `w[0] = 1`) written into `weights[n]`.
///
/// # Safety
/// `weights` must have room for `n` entries.
#[no_mangle]
pub unsafe extern "C" fn sg_optimize_weights(
    b: *const SgBounds,
    strategy: SgWeightStrategy,
    weights: *mut f64,
    n: usize,
    alpha: *mut f64,
) -> SgStatus {
    guard(|| {
        let b = handle(b)?;
        if n != b.0.n_players() || weights.is_null() {
            return Err((SgStatus::Dimension, format!("weights buffer must hold {} entries", b.0.n_players())));
        }
        let s = match strategy {
            SgWeightStrategy::TwoPlayerAnalytic => WeightStrategy::TwoPlayerAnalytic,
            SgWeightStrategy::LogGrid => WeightStrategy::LogGrid,
            SgWeightStrategy::CoordinateSearch => WeightStrategy::CoordinateSearch,
        };
        let ws = lift(sgn::optimize_weights(&b.0, s))?;
        std::slice::from_raw_parts_mut(weights, n).copy_from_slice(&ws.weights);
        put(alpha, ws.alpha_star)?;
        Ok(if ws.feasible { SgStatus::Ok } else { SgStatus::Infeasible })
    })
}

/// Quadratic game from the row-major `h[d*d]` and player sizes
/// `dims[n_players]` summing to `d`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sg_game_quadratic_new(
    h: *const f64,
    d: usize,
    dims: *const usize,
    n_players: usize,
    out: *mut *mut SgGame,
) -> SgStatus {
    guard(|| {
        let h = DMatrix::from_row_slice(d, d, slice(h, d * d)?);
        let g = lift(QuadraticGame::new(h, slice(dims, n_players)?))?;
        put(out, Box::into_raw(Box::new(SgGame(g))))?;
        Ok(SgStatus::Ok)
    })
}

/// Canonical two-block LQ game at coupling `lambda`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_game_canonical_lq(
    lambda: f64,
    a: f64,
    b: f64,
    mu0: f64,
    block_dim: usize,
    seed: u64,
    out: *mut *mut SgGame,
) -> SgStatus {
    guard(|| {
        let spec = LqSpec {
            lambda,
            a,
            b,
            mu0,
            block_dim,
            seed,
        };
        let g = lift(games::canonical_lq(&spec))?;
        put(out, Box::into_raw(Box::new(SgGame(g))))?;
        Ok(SgStatus::Ok)
    })
}

/// # Safety
/// `g` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sg_game_free(g: *mut SgGame) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Total dimension of the game.
///
/// # Safety
/// `g` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_game_dim(g: *const SgGame, out: *mut usize) -> SgStatus {
    guard(|| {
        put(out, handle(g)?.0.total_dim())?;
        Ok(SgStatus::Ok)
    })
}

/// `F(x)` into `f[d]`.
///
/// # Safety
/// `x` and `f` must hold `d` entries.
#[no_mangle]
pub unsafe extern "C" fn sg_game_eval_f(g: *const SgGame, x: *const f64, d: usize, f: *mut f64) -> SgStatus {
    guard(|| {
        let g = handle(g)?;
        let v = lift(g.0.eval_f(&DVector::from_column_slice(slice(x, d)?)))?;
        if f.is_null() {
            return Err(null());
        }
        std::slice::from_raw_parts_mut(f, d).copy_from_slice(v.as_slice());
        Ok(SgStatus::Ok)
    })
}

/// Exact block bounds of a quadratic game in Euclidean player blocks.
///
/// # Safety
/// `g` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sg_exact_block_bounds(g: *const SgGame, out: *mut *mut SgBounds) -> SgStatus {
    guard(|| {
        let g = handle(g)?;
        let p = lift(BlockStructure::identity(g.0.dims()))?;
        let b = lift(games::exact_block_bounds(&g.0, &p))?;
        put(out, Box::into_raw(Box::new(SgBounds(b))))?;
        Ok(SgStatus::Ok)
    })
}

/// Certifies the game on the cube `‖x‖_∞ ≤ half_width` with optimized
/// weights. Returns `SG_STATUS_INFEASIBLE` and leaves `*out` NULL when no
/// certificate exists.
///
/// # Safety
/// `g` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sg_certify_cube(
    g: *const SgGame,
    half_width: f64,
    budget: usize,
    seed: u64,
    out: *mut *mut SgCertificate,
) -> SgStatus {
    guard(|| {
        let g = handle(g)?;
        put(out, ptr::null_mut())?;
        let region = RegionSpec::cube(vec![0.0; g.0.total_dim()], half_width);
        let p = lift(BlockStructure::identity(g.0.dims()))?;
        let opts = CertifyOptions {
            budget,
            seed,
            ..CertifyOptions::default()
        };
        match lift(region::certify(&g.0, &region, &p, &opts))? {
            CertifyOutcome::Certified(c) => {
                put(out, Box::into_raw(Box::new(SgCertificate(*c))))?;
                Ok(SgStatus::Ok)
            }
            CertifyOutcome::Failed(f) => {
                set_error(f.reason);
                Ok(SgStatus::Infeasible)
            }
        }
    })
}

/// # Safety
/// `c` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sg_certificate_free(c: *mut SgCertificate) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Scalar fields of a certificate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SgCertificateSummary {
    pub alpha: f64,
    pub beta: f64,
    pub eta_max: f64,
    pub h_max: f64,
    pub n_players: usize,
}

/// # Safety
/// `c` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sg_certificate_summary(c: *const SgCertificate, out: *mut SgCertificateSummary) -> SgStatus {
    guard(|| {
        let c = &handle(c)?.0;
        put(
            out,
            SgCertificateSummary {
                alpha: c.alpha,
                beta: c.beta,
                eta_max: c.eta_max,
                h_max: c.h_max,
                n_players: c.metric.weights().len(),
            },
        )?;
        Ok(SgStatus::Ok)
    })
}

/// Metric weights into `weights[n]`.
///
/// # Safety
/// `weights` must have room for `n` entries.
#[no_mangle]
pub unsafe extern "C" fn sg_certificate_weights(c: *const SgCertificate, weights: *mut f64, n: usize) -> SgStatus {
    guard(|| {
        let w = handle(c)?.0.metric.weights();
        if n != w.len() || weights.is_null() {
            return Err((SgStatus::Dimension, format!("weights buffer must hold {} entries", w.len())));
        }
        std::slice::from_raw_parts_mut(weights, n).copy_from_slice(w);
        Ok(SgStatus::Ok)
    })
}

/// JSON encoding; release with [`sg_string_free`].
///
/// # Safety
/// `c` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sg_certificate_to_json(c: *const SgCertificate, out: *mut *mut c_char) -> SgStatus {
    guard(|| {
        let s = lift(handle(c)?.0.to_json())?;
        let cs = CString::new(s).map_err(|e| (SgStatus::Parse, e.to_string()))?;
        put(out, cs.into_raw())?;
        Ok(SgStatus::Ok)
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sg_certificate_from_json(json: *const c_char, out: *mut *mut SgCertificate) -> SgStatus {
    guard(|| {
        if json.is_null() {
            return Err(null());
        }
        let s = CStr::from_ptr(json).to_str().map_err(|e| (SgStatus::Parse, e.to_string()))?;
        let c = lift(Certificate::from_json(s))?;
        put(out, Box::into_raw(Box::new(SgCertificate(c))))?;
        Ok(SgStatus::Ok)
    })
}
