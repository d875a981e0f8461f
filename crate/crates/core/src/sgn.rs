//! Small-gain machinery on block summaries `(μ, L)`.
//!
//! Given per-player curvature `μ_i` and cross couplings `L_ij` measured in a
//! block geometry, the weighted small-gain matrix
//!
//! ```text
//! C_ii(w, α) = 2 w_i (μ_i − α)
//! C_ij(w, α) = −(w_i L_ij + w_j L_ji)        (i ≠ j)
//! ```
//!
//! being positive definite certifies `α`-strong monotonicity of the
//! pseudo-gradient in `M(w) = diag(w_i P_i)`. The normalized gain matrix
//! `H(w)` is congruent to `C(w, α)/2 + α I` via `diag(√w)`, so
//! `α*(w) = max(0, λ_min(H(w)))`; the bisection in [`sgn_margin`] and the
//! direct eigensolve of [`normalized_gain_matrix`] are kept as two
//! independent routes to the same number.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{self, check_weights, matrix_from_rows, matrix_to_rows, WeightedMetric};
use crate::region::RegionSpec;

/// Absolute tolerance of the margin bisection.
pub const MARGIN_BISECTION_TOL: f64 = 1e-9;

/// Default RK4 step constant `h ≤ C4/β`.
pub const DEFAULT_RK4_STEP_CONSTANT: f64 = 2.5;
/// Default RK4 rate constant in `exp(−c4 α h)`.
pub const DEFAULT_RK4_RATE_CONSTANT: f64 = 0.5;

pub const CERTIFICATE_SCHEMA_VERSION: u32 = 1;

/// Block curvature `μ` and zero-diagonal coupling matrix `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockBoundsRepr", into = "BlockBoundsRepr")]
pub struct BlockBounds {
    mu: Vec<f64>,
    coupling: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct BlockBoundsRepr {
    mu: Vec<f64>,
    #[serde(rename = "L")]
    coupling: Vec<Vec<f64>>,
}

impl TryFrom<BlockBoundsRepr> for BlockBounds {
    type Error = Error;
    fn try_from(r: BlockBoundsRepr) -> Result<Self> {
        BlockBounds::new(r.mu, matrix_from_rows(&r.coupling)?)
    }
}

impl From<BlockBounds> for BlockBoundsRepr {
    fn from(b: BlockBounds) -> Self {
        BlockBoundsRepr {
            coupling: matrix_to_rows(&b.coupling),
            mu: b.mu,
        }
    }
}

impl BlockBounds {
    pub fn new(mu: Vec<f64>, coupling: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::invalid("block bounds need at least one player"));
        }
        if coupling.nrows() != n || coupling.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: coupling.nrows().max(coupling.ncols()),
            });
        }
        for (i, m) in mu.iter().enumerate() {
            if !(*m > 0.0) || !m.is_finite() {
                return Err(Error::invalid(format!("curvature mu_{i} = {m} must be positive")));
            }
        }
        for i in 0..n {
            if coupling[(i, i)] != 0.0 {
                return Err(Error::invalid(format!("coupling L_{i}{i} must be zero")));
            }
            for j in 0..n {
                let l = coupling[(i, j)];
                if !(l >= 0.0) || !l.is_finite() {
                    return Err(Error::invalid(format!("coupling L_{i}{j} = {l} must be nonnegative")));
                }
            }
        }
        Ok(Self { mu, coupling })
    }

    pub fn two_player(mu1: f64, mu2: f64, l12: f64, l21: f64) -> Result<Self> {
        Self::new(
            vec![mu1, mu2],
            DMatrix::from_row_slice(2, 2, &[0.0, l12, l21, 0.0]),
        )
    }

    pub fn decoupled(mu: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        Self::new(mu, DMatrix::zeros(n, n))
    }

    pub fn n_players(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.coupling[(i, j)]
    }

    pub fn mu_min(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_decoupled(&self) -> bool {
        self.coupling.iter().all(|&l| l == 0.0)
    }
}

/// The small-gain matrix `C(w, α)`.
pub fn build_c(bounds: &BlockBounds, w: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
    let n = bounds.n_players();
    check_weights(w, n)?;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * w[i] * (bounds.mu[i] - alpha)
        } else {
            -(w[i] * bounds.l(i, j) + w[j] * bounds.l(j, i))
        }
    }))
}

/// Outcome of the margin bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgnMargin {
    /// Largest verified α with `C(w, α) ≻ 0`; zero when infeasible.
    pub alpha: f64,
    /// Whether `C(w, 0)` is positive definite.
    pub feasible: bool,
}

fn is_pd(c: &DMatrix<f64>, scale: f64) -> bool {
    metric::sym_min_eig(c) > 1e-12 * scale
}

/// `α*(w) = sup{α ≥ 0 : C(w, α) ≻ 0}` by bisection on `[0, min μ]`.
pub fn sgn_margin(bounds: &BlockBounds, w: &[f64]) -> Result<SgnMargin> {
    let c0 = build_c(bounds, w, 0.0)?;
    let scale: f64 = c0.diagonal().iter().map(|v| v.abs()).sum();
    if !is_pd(&c0, scale) {
        return Ok(SgnMargin {
            alpha: 0.0,
            feasible: false,
        });
    }
    let mut lo = 0.0;
    let mut hi = bounds.mu_min();
    while hi - lo > MARGIN_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if is_pd(&build_c(bounds, w, mid)?, scale) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SgnMargin {
        alpha: lo,
        feasible: true,
    })
}

/// Gershgorin lower bound on `α*(w)` read off `C(w, 0)`; may be negative.
pub fn gershgorin_margin(bounds: &BlockBounds, w: &[f64]) -> Result<f64> {
    let n = bounds.n_players();
    check_weights(w, n)?;
    Ok((0..n)
        .map(|i| {
            let off: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| w[i] * bounds.l(i, j) + w[j] * bounds.l(j, i))
                .sum();
            bounds.mu[i] - off / (2.0 * w[i])
        })
        .fold(f64::INFINITY, f64::min))
}

/// Normalized gain matrix `H(w)`: `H_ii = μ_i`, `H_ij = −½(k_ij + k_ji)`,
/// `k_ij = L_ij √(w_i / w_j)`.
pub fn normalized_gain_matrix(bounds: &BlockBounds, w: &[f64]) -> Result<DMatrix<f64>> {
    let n = bounds.n_players();
    check_weights(w, n)?;
    let k = |i: usize, j: usize| bounds.l(i, j) * (w[i] / w[j]).sqrt();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            bounds.mu[i]
        } else {
            -0.5 * (k(i, j) + k(j, i))
        }
    }))
}

/// `λ_min(H(w))`, the largest `α` with `H(w) ⪰ α I` (may be negative).
pub fn normalized_margin(bounds: &BlockBounds, w: &[f64]) -> Result<f64> {
    Ok(metric::sym_min_eig(&normalized_gain_matrix(bounds, w)?))
}

/// Row-wise diagonal dominance of `H(w) − α I`.
pub fn normalized_gershgorin_check(bounds: &BlockBounds, w: &[f64], alpha: f64) -> Result<bool> {
    let n = bounds.n_players();
    check_weights(w, n)?;
    let ok = (0..n).all(|i| {
        let rhs: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| bounds.l(i, j) * (w[i] / w[j]).sqrt() + bounds.l(j, i) * (w[j] / w[i]).sqrt())
            .sum::<f64>()
            * 0.5;
        bounds.mu[i] - alpha > rhs
    });
    debug_assert!(!ok || normalized_margin(bounds, w).map_or(true, |m| m >= alpha - 1e-12));
    Ok(ok)
}

/// `K_ij = L_ij / μ_i` and its spectral radius.
pub fn gain_matrix_spectral_radius(bounds: &BlockBounds) -> (DMatrix<f64>, f64) {
    let n = bounds.n_players();
    let k = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { bounds.l(i, j) / bounds.mu[i] });
    let rho = metric::spectral_radius(&k);
    (k, rho)
}

/// Safe interval of timescale ratios `r = w₂/w₁` at margin `α`.
///
/// A missing `r_lo` means the band extends down to zero and a missing
/// `r_hi` means it is unbounded above; both are meaningful only when
/// `feasible` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimescaleBand {
    pub alpha: f64,
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
    pub feasible: bool,
}

impl TimescaleBand {
    /// Open-interval membership.
    pub fn contains(&self, r: f64) -> bool {
        self.feasible && self.r_lo.map_or(r > 0.0, |lo| r > lo) && self.r_hi.is_none_or(|hi| r < hi)
    }
}

/// Closed-form two-player band: `4(μ₁−α)(μ₂−α) r − (L₁₂ + r L₂₁)² > 0`.
pub fn two_player_band(bounds: &BlockBounds, alpha: f64) -> Result<TimescaleBand> {
    if bounds.n_players() != 2 {
        return Err(Error::invalid(format!(
            "timescale band needs exactly two players, got {}",
            bounds.n_players()
        )));
    }
    if !(alpha < bounds.mu_min()) {
        return Err(Error::invalid(format!(
            "margin {alpha} must be below min curvature {}",
            bounds.mu_min()
        )));
    }
    let (l12, l21) = (bounds.l(0, 1), bounds.l(1, 0));
    let p = (bounds.mu[0] - alpha) * (bounds.mu[1] - alpha);
    let q = l12 * l21;
    let infeasible = TimescaleBand {
        alpha,
        r_lo: None,
        r_hi: None,
        feasible: false,
    };

    if l21 == 0.0 {
        // Linear in r: 4 p r > L12².
        let r_lo = if l12 == 0.0 { None } else { Some(l12 * l12 / (4.0 * p)) };
        return Ok(TimescaleBand {
            alpha,
            r_lo,
            r_hi: None,
            feasible: true,
        });
    }
    if !(p > q) {
        return Ok(infeasible);
    }
    let r_hi = (2.0 * p - q + 2.0 * (p * (p - q)).sqrt()) / (l21 * l21);
    // r₋ r₊ = (L12/L21)²; using the product avoids cancellation in r₋.
    let r_lo = if l12 == 0.0 {
        None
    } else {
        Some((l12 / l21).powi(2) / r_hi)
    };
    Ok(TimescaleBand {
        alpha,
        r_lo,
        r_hi: Some(r_hi),
        feasible: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightStrategy {
    /// Golden-section search on `log r` inside the α = 0 band (two players).
    #[default]
    TwoPlayerAnalytic,
    /// Tensor grid on log-weights followed by a coordinate polish.
    LogGrid,
    /// Coordinate ascent on log-weights with three restarts.
    CoordinateSearch,
}

/// Result of a weight search; `weights[0] == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSearch {
    pub weights: Vec<f64>,
    pub alpha_star: f64,
    pub feasible: bool,
    pub strategy: WeightStrategy,
}

const LOG_WEIGHT_SPAN: f64 = 12.0;
const LINE_SEARCH_POINTS: usize = 64;
const WEIGHT_SEARCH_SEED: u64 = 0x5747_4e21;

/// Best diagonal margin `sup_w α*(w)` over positive weights.
pub fn optimize_weights(bounds: &BlockBounds, strategy: WeightStrategy) -> Result<WeightSearch> {
    optimize_weights_seeded(bounds, strategy, WEIGHT_SEARCH_SEED)
}

pub fn optimize_weights_seeded(
    bounds: &BlockBounds,
    strategy: WeightStrategy,
    seed: u64,
) -> Result<WeightSearch> {
    let n = bounds.n_players();
    if bounds.is_decoupled() || n == 1 {
        let weights = vec![1.0; n];
        let m = sgn_margin(bounds, &weights)?;
        return Ok(WeightSearch {
            weights,
            alpha_star: m.alpha,
            feasible: m.feasible,
            strategy,
        });
    }
    let log_w = match strategy {
        WeightStrategy::TwoPlayerAnalytic => two_player_search(bounds)?,
        WeightStrategy::LogGrid => log_grid_search(bounds)?,
        WeightStrategy::CoordinateSearch => coordinate_search(bounds, seed)?,
    };
    let weights = weights_from_logs(&log_w);
    let m = sgn_margin(bounds, &weights)?;
    Ok(WeightSearch {
        weights,
        alpha_star: m.alpha,
        feasible: m.feasible,
        strategy,
    })
}

/// Log-weights with `log w_1 = 0` implied.
fn weights_from_logs(rest: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(rest.iter().map(|v| v.exp())).collect()
}

fn objective(bounds: &BlockBounds, rest: &[f64]) -> f64 {
    let w = weights_from_logs(rest);
    normalized_margin(bounds, &w).unwrap_or(f64::NEG_INFINITY)
}

fn two_player_search(bounds: &BlockBounds) -> Result<Vec<f64>> {
    if bounds.n_players() != 2 {
        return Err(Error::invalid("two-player-analytic strategy needs exactly two players"));
    }
    let band = two_player_band(bounds, 0.0)?;
    let (a, b) = if band.feasible {
        (
            band.r_lo.map_or(-LOG_WEIGHT_SPAN * 3.0, f64::ln),
            band.r_hi.map_or(LOG_WEIGHT_SPAN * 3.0, f64::ln),
        )
    } else {
        (-LOG_WEIGHT_SPAN, LOG_WEIGHT_SPAN)
    };
    let best = golden_section_max(|x| objective(bounds, &[x]), a, b, 1e-12);
    Ok(vec![best])
}

/// Maximises a unimodal function on `[a, b]`.
pub(crate) fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iters = 0;
    while (b - a).abs() > tol * (1.0 + a.abs().max(b.abs())) && iters < 400 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    0.5 * (a + b)
}

fn log_grid_search(bounds: &BlockBounds) -> Result<Vec<f64>> {
    let free = bounds.n_players() - 1;
    let per_axis = ((20_000f64).powf(1.0 / free as f64).floor() as usize).clamp(3, 201);
    let axis: Vec<f64> = (0..per_axis)
        .map(|k| -LOG_WEIGHT_SPAN + 2.0 * LOG_WEIGHT_SPAN * k as f64 / (per_axis - 1) as f64)
        .collect();
    let mut idx = vec![0usize; free];
    let mut best = (f64::NEG_INFINITY, vec![0.0; free]);
    loop {
        let point: Vec<f64> = idx.iter().map(|&k| axis[k]).collect();
        let v = objective(bounds, &point);
        if v > best.0 {
            best = (v, point);
        }
        let mut carry = 0;
        while carry < free {
            idx[carry] += 1;
            if idx[carry] < per_axis {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == free {
            break;
        }
    }
    let step = 2.0 * LOG_WEIGHT_SPAN / (per_axis - 1) as f64;
    Ok(coordinate_polish(bounds, best.1, step))
}

fn coordinate_polish(bounds: &BlockBounds, mut x: Vec<f64>, mut span: f64) -> Vec<f64> {
    let mut fx = objective(bounds, &x);
    let mut sweeps = 0;
    while span > 1e-10 && sweeps < 200 {
        for k in 0..x.len() {
            let centre = x[k];
            for p in 0..LINE_SEARCH_POINTS {
                let t = centre - span + 2.0 * span * p as f64 / (LINE_SEARCH_POINTS - 1) as f64;
                let mut trial = x.clone();
                trial[k] = t;
                let ft = objective(bounds, &trial);
                if ft > fx {
                    fx = ft;
                    x = trial;
                }
            }
        }
        span *= 0.25;
        sweeps += 1;
    }
    x
}

fn coordinate_search(bounds: &BlockBounds, seed: u64) -> Result<Vec<f64>> {
    let n = bounds.n_players();
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; n - 1]];
    if let Some(p) = perron_seed(bounds) {
        starts.push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    starts.push((0..n - 1).map(|_| rng.gen_range(-3.0..3.0)).collect());

    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in starts {
        let x = coordinate_polish(bounds, s, 4.0);
        let v = objective(bounds, &x);
        // First maximiser wins ties.
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, x));
        }
    }
    Ok(best.map(|b| b.1).unwrap_or_else(|| vec![0.0; n - 1]))
}

/// Weights `w_i ∝ 1/v_i²` from the right Perron vector of `K`.
fn perron_seed(bounds: &BlockBounds) -> Option<Vec<f64>> {
    let (k, rho) = gain_matrix_spectral_radius(bounds);
    if !(rho > 0.0) {
        return None;
    }
    // Power iteration on K + I (nonnegative, primitive after the shift).
    let n = k.nrows();
    let shifted = &k + DMatrix::identity(n, n);
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for _ in 0..2000 {
        let nv = &shifted * &v;
        let norm = nv.norm();
        if norm == 0.0 {
            return None;
        }
        v = nv / norm;
    }
    if v.iter().any(|&x| !(x > 1e-12)) {
        return None;
    }
    let logs: Vec<f64> = v.iter().map(|x| -2.0 * x.ln()).collect();
    Some(
        logs[1..]
            .iter()
            .map(|l| (l - logs[0]).clamp(-LOG_WEIGHT_SPAN, LOG_WEIGHT_SPAN))
            .collect(),
    )
}

/// Estimation settings recorded alongside a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub sample_count: usize,
    pub budget: usize,
    pub seed: u64,
    pub weight_choice: String,
    pub probe: String,
    pub bounds: Option<BlockBounds>,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Contraction certificate: metric, margin, Lipschitz bound and safe steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema_version: u32,
    pub metric: WeightedMetric,
    pub alpha: f64,
    pub alpha_sgn: f64,
    pub alpha_dsc: Option<f64>,
    pub beta: f64,
    pub eta_max: f64,
    pub h_max: f64,
    #[serde(rename = "C4")]
    pub rk4_step_constant: f64,
    #[serde(rename = "c4")]
    pub rk4_rate_constant: f64,
    pub region: RegionSpec,
    pub provenance: Provenance,
}

/// Euler contraction factor `√(1 − 2αη + β²η²)`.
pub fn euler_factor(alpha: f64, beta: f64, eta: f64) -> f64 {
    (1.0 - 2.0 * alpha * eta + beta * beta * eta * eta).max(0.0).sqrt()
}

impl Certificate {
    /// RK4 factor `exp(−c4 α h)`.
    pub fn rk4_factor(&self, h: f64) -> f64 {
        (-self.rk4_rate_constant * self.alpha * h).exp()
    }

    pub fn euler_factor(&self, eta: f64) -> f64 {
        euler_factor(self.alpha, self.beta, eta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Certificate = serde_json::from_str(s)?;
        if c.schema_version != CERTIFICATE_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported certificate schema version {}",
                c.schema_version
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Combines margins and a Lipschitz bound into a certificate.
///
/// `α = max(α_sgn, α_dsc)`, `η_max = 2α/β²`, `h_max = C4/β`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_certificate(
    metric: WeightedMetric,
    alpha_sgn: f64,
    alpha_dsc: Option<f64>,
    beta: f64,
    region: RegionSpec,
    rk4_step_constant: f64,
    rk4_rate_constant: f64,
    provenance: Provenance,
) -> Result<Certificate> {
    let alpha = alpha_dsc.map_or(alpha_sgn, |d| alpha_sgn.max(d));
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("no positive margin to certify (alpha = {alpha})")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("Lipschitz bound beta = {beta} must be positive")));
    }
    if beta < alpha {
        return Err(Error::invalid(format!(
            "Lipschitz bound beta = {beta} is below the margin alpha = {alpha}; a strongly monotone field needs beta >= alpha"
        )));
    }
    if !(rk4_step_constant > 0.0) || !(rk4_rate_constant > 0.0 && rk4_rate_constant <= 1.0) {
        return Err(Error::invalid("RK4 constants must satisfy C4 > 0 and c4 in (0, 1]"));
    }
    Ok(Certificate {
        schema_version: CERTIFICATE_SCHEMA_VERSION,
        metric,
        alpha,
        alpha_sgn,
        alpha_dsc,
        beta,
        eta_max: 2.0 * alpha / (beta * beta),
        h_max: rk4_step_constant / beta,
        rk4_step_constant,
        rk4_rate_constant,
        region,
        provenance,
    })
}
