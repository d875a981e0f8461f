//! Sampling-based certification on a compact region.
//!
//! The pipeline samples the region, estimates block bounds in the base
//! `P`-geometry, searches weights, re-probes the Jacobian in `M(w)` for the
//! Lipschitz bound and the diagonal-stability margin, and assembles a
//! [`Certificate`]. Estimates are used as sampled, without inflation.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::GameModel;
use crate::metric::{self, BlockStructure, SpectralProbeConfig, WeightedMetric};
use crate::sgn::{
    self, BlockBounds, Certificate, Provenance, WeightStrategy, DEFAULT_RK4_RATE_CONSTANT, DEFAULT_RK4_STEP_CONSTANT,
};

pub const DEFAULT_BUDGET: usize = 2000;

/// Relative asymmetry up to which sampled own-Hessians are symmetrized.
pub const HESSIAN_SYMMETRY_TOL: f64 = 1e-6;

/// Compact convex region to certify on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionSpec {
    Box {
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
    /// `{x : Σ_k ((x_k − c_k)/s_k)² ≤ r²}`; scales default to one.
    MetricBall {
        center: Vec<f64>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<Vec<f64>>,
    },
}

impl RegionSpec {
    pub fn cube(center: Vec<f64>, half_width: f64) -> Self {
        let n = center.len();
        RegionSpec::Box {
            center,
            half_widths: vec![half_width; n],
        }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        RegionSpec::MetricBall {
            center,
            radius,
            scales: None,
        }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            RegionSpec::Box { center, .. } | RegionSpec::MetricBall { center, .. } => center,
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::invalid("region must have positive dimension"));
        }
        match self {
            RegionSpec::Box { center, half_widths } => {
                if half_widths.len() != center.len() {
                    return Err(Error::Dimension {
                        expected: center.len(),
                        found: half_widths.len(),
                    });
                }
                if half_widths.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
                    return Err(Error::invalid("box half-widths must be positive"));
                }
            }
            RegionSpec::MetricBall { center, radius, scales } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::invalid("ball radius must be positive"));
                }
                if let Some(s) = scales {
                    if s.len() != center.len() {
                        return Err(Error::Dimension {
                            expected: center.len(),
                            found: s.len(),
                        });
                    }
                    if s.iter().any(|v| !(*v > 0.0)) {
                        return Err(Error::invalid("ball scales must be positive"));
                    }
                }
            }
        }
        if self.center().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("region center must be finite"));
        }
        Ok(())
    }

    pub fn contains(&self, x: &DVector<f64>, slack: f64) -> bool {
        match self {
            RegionSpec::Box { center, half_widths } => x
                .iter()
                .zip(center)
                .zip(half_widths)
                .all(|((xi, c), h)| (xi - c).abs() <= h + slack),
            RegionSpec::MetricBall { center, radius, scales } => {
                let r2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(k, xi)| {
                        let s = scales.as_ref().map_or(1.0, |s| s[k]);
                        ((xi - center[k]) / s).powi(2)
                    })
                    .sum();
                r2.sqrt() <= radius + slack
            }
        }
    }

    /// Maps a point of `[−1, 1]^d` into the region.
    fn map_unit(&self, t: &[f64]) -> DVector<f64> {
        match self {
            RegionSpec::Box { center, half_widths } => {
                DVector::from_iterator(t.len(), t.iter().enumerate().map(|(k, v)| center[k] + half_widths[k] * v))
            }
            RegionSpec::MetricBall { center, radius, scales } => {
                // Radial cube-to-ball map: the ∞-norm level sets go to spheres.
                let inf = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let two = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                let f = if two > 0.0 { inf / two } else { 0.0 };
                DVector::from_iterator(
                    t.len(),
                    t.iter().enumerate().map(|(k, v)| {
                        let s = scales.as_ref().map_or(1.0, |s| s[k]);
                        center[k] + radius * s * f * v
                    }),
                )
            }
        }
    }
}

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107,
    109, 113, 127, 131,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Sample points; the center always comes first.
///
/// Up to four dimensions a tensor grid with `⌈budget^{1/d}⌉` points per axis
/// is used; above that a Halton sequence with a seeded Cranley–Patterson
/// shift.
pub fn sample_region(region: &RegionSpec, budget: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    region.validate()?;
    if budget == 0 {
        return Err(Error::invalid("sampling budget must be at least 1"));
    }
    let d = region.dim();
    let center = DVector::from_column_slice(region.center());
    let mut out = vec![center.clone()];
    if budget == 1 {
        return Ok(out);
    }
    if d <= 4 {
        let mut k = 1usize;
        while k.pow(d as u32) < budget {
            k += 1;
        }
        let axis: Vec<f64> = (0..k)
            .map(|j| if k == 1 { 0.0 } else { -1.0 + 2.0 * j as f64 / (k - 1) as f64 })
            .collect();
        let mut idx = vec![0usize; d];
        loop {
            let t: Vec<f64> = idx.iter().map(|&j| axis[j]).collect();
            let x = region.map_unit(&t);
            if x != center {
                out.push(x);
            }
            let mut c = 0;
            while c < d {
                idx[c] += 1;
                if idx[c] < k {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == d {
                break;
            }
        }
    } else {
        if d > PRIMES.len() {
            return Err(Error::Unsupported(format!("Halton sampling supports up to {} dimensions", PRIMES.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        for i in 1..budget as u64 {
            let t: Vec<f64> = (0..d)
                .map(|k| {
                    let u = (radical_inverse(i, PRIMES[k]) + shift[k]).fract();
                    2.0 * u - 1.0
                })
                .collect();
            out.push(region.map_unit(&t));
        }
    }
    Ok(out)
}

/// Per-sample probe values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleProbe {
    /// `λ_min` of each own block in its `P_i` geometry.
    pub mu: Vec<f64>,
    /// `P_j → P_i` norms of the cross blocks.
    pub coupling: DMatrix<f64>,
}

fn own_hessian(game: &dyn GameModel, i: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let h = game.hess_block(i, i, x)?;
    let asym = metric::relative_asymmetry(&h);
    if asym > HESSIAN_SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            what: format!("own Hessian of player {i}"),
            asymmetry: asym,
        });
    }
    Ok(metric::sym_part(&h))
}

pub fn probe_sample(
    game: &dyn GameModel,
    p: &BlockStructure,
    x: &DVector<f64>,
    cfg: &SpectralProbeConfig,
) -> Result<SampleProbe> {
    let n = p.n_players();
    let mut mu = Vec::with_capacity(n);
    for i in 0..n {
        mu.push(metric::min_sym_eig_with_roots(&own_hessian(game, i, x)?, p.roots(i))?);
    }
    let mut coupling = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                coupling[(i, j)] = metric::mixed_op_norm_with(&game.hess_block(i, j, x)?, p.block(j), p.block(i), cfg)?;
            }
        }
    }
    Ok(SampleProbe { mu, coupling })
}

fn check_inputs(game: &dyn GameModel, p: &BlockStructure, samples: &[DVector<f64>]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("at least one sample is required"));
    }
    if game.structure().dims() != p.dims() {
        return Err(Error::invalid("metric block dimensions do not match the game"));
    }
    for (k, s) in samples.iter().enumerate() {
        p.check_vector(s).map_err(|e| e.at_sample(k))?;
    }
    Ok(())
}

fn probe_all(
    game: &dyn GameModel,
    p: &BlockStructure,
    samples: &[DVector<f64>],
    cfg: &SpectralProbeConfig,
) -> Result<Vec<SampleProbe>> {
    check_inputs(game, p, samples)?;
    samples
        .par_iter()
        .enumerate()
        .map(|(k, x)| probe_sample(game, p, x, cfg).map_err(|e| e.at_sample(k)))
        .collect()
}

/// Raw sampled extremes; `mu_lo` may be nonpositive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawBounds {
    pub mu_lo: Vec<f64>,
    pub coupling_hi: Vec<Vec<f64>>,
    pub mu_argmin: Vec<usize>,
    pub coupling_argmax: Vec<Vec<usize>>,
}

impl RawBounds {
    fn reduce(probes: &[SampleProbe]) -> Self {
        let n = probes[0].mu.len();
        let mut mu_lo = vec![f64::INFINITY; n];
        let mut mu_argmin = vec![0; n];
        let mut coupling_hi = vec![vec![0.0; n]; n];
        let mut coupling_argmax = vec![vec![0; n]; n];
        for (k, pr) in probes.iter().enumerate() {
            for i in 0..n {
                if pr.mu[i] < mu_lo[i] {
                    mu_lo[i] = pr.mu[i];
                    mu_argmin[i] = k;
                }
                for j in 0..n {
                    if pr.coupling[(i, j)] > coupling_hi[i][j] {
                        coupling_hi[i][j] = pr.coupling[(i, j)];
                        coupling_argmax[i][j] = k;
                    }
                }
            }
        }
        Self {
            mu_lo,
            coupling_hi,
            mu_argmin,
            coupling_argmax,
        }
    }

    pub fn to_bounds(&self) -> Result<BlockBounds> {
        BlockBounds::new(self.mu_lo.clone(), metric::matrix_from_rows(&self.coupling_hi)?)
    }
}

/// `μ_i^lo = min_s λ_min` and `L_ij^hi = max_s ‖∇²_{x_i x_j} f_i(s)‖_{P_j→P_i}`.
pub fn estimate_block_bounds(game: &dyn GameModel, p: &BlockStructure, samples: &[DVector<f64>]) -> Result<BlockBounds> {
    estimate_raw_bounds(game, p, samples, &SpectralProbeConfig::default())?.to_bounds()
}

pub fn estimate_raw_bounds(
    game: &dyn GameModel,
    p: &BlockStructure,
    samples: &[DVector<f64>],
    cfg: &SpectralProbeConfig,
) -> Result<RawBounds> {
    Ok(RawBounds::reduce(&probe_all(game, p, samples, cfg)?))
}

/// Jacobian norm and log-norm at each sample, in `M(w)`.
fn metric_probes(game: &dyn GameModel, m: &WeightedMetric, samples: &[DVector<f64>]) -> Result<Vec<(f64, f64)>> {
    check_inputs(game, m.structure(), samples)?;
    let roots = m.roots();
    samples
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let run = || -> Result<(f64, f64)> {
                let jg = game.eval_jg(x)?;
                let op = metric::spectral_norm(&roots.similarity(&jg));
                let ln = metric::log_norm_with_roots(&jg, &roots)?;
                Ok((op, ln))
            };
            run().map_err(|e| e.at_sample(k))
        })
        .collect()
}

/// `β_hi = max_s ‖J_G(s)‖_{M→M}`.
pub fn estimate_lipschitz(game: &dyn GameModel, m: &WeightedMetric, samples: &[DVector<f64>]) -> Result<f64> {
    Ok(metric_probes(game, m, samples)?
        .iter()
        .fold(0.0, |acc, (op, _)| acc.max(*op)))
}

/// `α_dsc = min_s −μ_M(J_G(s))`.
pub fn estimate_dsc_margin(game: &dyn GameModel, m: &WeightedMetric, samples: &[DVector<f64>]) -> Result<f64> {
    Ok(metric_probes(game, m, samples)?
        .iter()
        .fold(f64::INFINITY, |acc, (_, ln)| acc.min(-*ln)))
}

/// Everything the pipeline estimated, with argmin/argmax sample indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedBounds {
    pub raw: RawBounds,
    pub beta_hi: f64,
    pub alpha_dsc: f64,
    pub sample_count: usize,
    pub beta_argmax: usize,
    pub dsc_argmin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum WeightChoice {
    Optimize { strategy: WeightStrategy },
    Fixed { weights: Vec<f64> },
}

impl Default for WeightChoice {
    fn default() -> Self {
        WeightChoice::Optimize {
            strategy: WeightStrategy::default(),
        }
    }
}

impl WeightChoice {
    fn describe(&self) -> String {
        match self {
            WeightChoice::Optimize { strategy } => format!("optimize:{}", serde_json::to_value(strategy).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
            WeightChoice::Fixed { weights } => format!("fixed:{weights:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyOptions {
    pub budget: usize,
    pub seed: u64,
    pub weights: WeightChoice,
    pub probe: SpectralProbeConfig,
    #[serde(rename = "C4")]
    pub rk4_step_constant: f64,
    #[serde(rename = "c4")]
    pub rk4_rate_constant: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            seed: 0,
            weights: WeightChoice::default(),
            probe: SpectralProbeConfig::default(),
            rk4_step_constant: DEFAULT_RK4_STEP_CONSTANT,
            rk4_rate_constant: DEFAULT_RK4_RATE_CONSTANT,
        }
    }
}

/// Why the pipeline could not certify, with the data it gathered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub reason: String,
    pub raw: RawBounds,
    pub weights: Option<Vec<f64>>,
    pub alpha_sgn: Option<f64>,
    pub alpha_dsc: Option<f64>,
    pub beta: Option<f64>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CertifyOutcome {
    Certified(Box<Certificate>),
    Failed(FailureRecord),
}

impl CertifyOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            CertifyOutcome::Certified(c) => Some(c),
            CertifyOutcome::Failed(_) => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, CertifyOutcome::Certified(_))
    }
}

/// One row of the estimation report.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub probe: SampleProbe,
    pub log_norm: Option<f64>,
    pub op_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CertifyRun {
    pub outcome: CertifyOutcome,
    pub estimated: Option<EstimatedBounds>,
    pub report: Vec<SampleReport>,
}

pub fn certify(
    game: &dyn GameModel,
    region: &RegionSpec,
    p: &BlockStructure,
    opts: &CertifyOptions,
) -> Result<CertifyOutcome> {
    Ok(certify_detailed(game, region, p, opts)?.outcome)
}

pub fn certify_detailed(
    game: &dyn GameModel,
    region: &RegionSpec,
    p: &BlockStructure,
    opts: &CertifyOptions,
) -> Result<CertifyRun> {
    if region.dim() != game.total_dim() {
        return Err(Error::Dimension {
            expected: game.total_dim(),
            found: region.dim(),
        });
    }
    let samples = sample_region(region, opts.budget, opts.seed)?;
    let probes = probe_all(game, p, &samples, &opts.probe)?;
    let raw = RawBounds::reduce(&probes);
    let n = p.n_players();
    let mut report: Vec<SampleReport> = probes
        .into_iter()
        .map(|probe| SampleReport {
            probe,
            log_norm: None,
            op_norm: None,
        })
        .collect();

    let fail = |reason: String, raw: &RawBounds, w: Option<Vec<f64>>, a_sgn, a_dsc, beta| {
        CertifyOutcome::Failed(FailureRecord {
            reason,
            raw: raw.clone(),
            weights: w,
            alpha_sgn: a_sgn,
            alpha_dsc: a_dsc,
            beta,
            sample_count: samples.len(),
        })
    };

    // Nonpositive curvature rules out SGN; the DSC route in a given metric
    // can still certify.
    let bounds = raw.to_bounds().ok();
    let (weights, alpha_sgn) = match (&opts.weights, &bounds) {
        (WeightChoice::Fixed { weights }, b) => {
            metric::check_weights(weights, n)?;
            let a = match b {
                Some(b) => {
                    let m = sgn::sgn_margin(b, weights)?;
                    if m.feasible {
                        m.alpha
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            };
            (weights.clone(), a)
        }
        (WeightChoice::Optimize { strategy }, Some(b)) => {
            let strategy = if n != 2 && *strategy == WeightStrategy::TwoPlayerAnalytic {
                WeightStrategy::CoordinateSearch
            } else {
                *strategy
            };
            let res = sgn::optimize_weights_seeded(b, strategy, opts.seed)?;
            if !res.feasible {
                let (_, rho) = sgn::gain_matrix_spectral_radius(b);
                return Ok(CertifyRun {
                    outcome: fail(
                        format!("small-gain condition infeasible for every weight choice (rho(K) = {rho:.6})"),
                        &raw,
                        None,
                        Some(0.0),
                        None,
                        None,
                    ),
                    estimated: None,
                    report,
                });
            }
            (res.weights, res.alpha_star)
        }
        (WeightChoice::Optimize { .. }, None) => {
            return Ok(CertifyRun {
                outcome: fail(
                    "nonpositive sampled curvature; no weight search possible".into(),
                    &raw,
                    None,
                    None,
                    None,
                    None,
                ),
                estimated: None,
                report,
            });
        }
    };

    let m = WeightedMetric::new(p.clone(), weights.clone())?;
    let mp = metric_probes(game, &m, &samples)?;
    let (mut beta, mut beta_argmax) = (0.0, 0);
    let (mut alpha_dsc, mut dsc_argmin) = (f64::INFINITY, 0);
    for (k, (op, ln)) in mp.iter().enumerate() {
        if *op > beta {
            beta = *op;
            beta_argmax = k;
        }
        if -ln < alpha_dsc {
            alpha_dsc = -ln;
            dsc_argmin = k;
        }
        report[k].op_norm = Some(*op);
        report[k].log_norm = Some(*ln);
    }
    let estimated = EstimatedBounds {
        raw: raw.clone(),
        beta_hi: beta,
        alpha_dsc,
        sample_count: samples.len(),
        beta_argmax,
        dsc_argmin,
    };

    let alpha = alpha_sgn.max(alpha_dsc);
    if !(alpha > 0.0) {
        return Ok(CertifyRun {
            outcome: fail(
                format!(
                    "no positive margin in the chosen metric (alpha_sgn = {alpha_sgn:.6}, alpha_dsc = {alpha_dsc:.6})"
                ),
                &raw,
                Some(weights),
                Some(alpha_sgn),
                Some(alpha_dsc),
                Some(beta),
            ),
            estimated: Some(estimated),
            report,
        });
    }

    let provenance = Provenance {
        sample_count: samples.len(),
        budget: opts.budget,
        seed: opts.seed,
        weight_choice: opts.weights.describe(),
        probe: format!("{:?}", opts.probe.method).to_lowercase(),
        bounds,
        notes: vec![format!(
            "beta attained at sample {beta_argmax}; alpha_dsc attained at sample {dsc_argmin}"
        )],
    };
    let cert = sgn::assemble_certificate(
        m,
        alpha_sgn,
        Some(alpha_dsc),
        beta,
        region.clone(),
        opts.rk4_step_constant,
        opts.rk4_rate_constant,
        provenance,
    )?;
    Ok(CertifyRun {
        outcome: CertifyOutcome::Certified(Box::new(cert)),
        estimated: Some(estimated),
        report,
    })
}

/// Writes one row per sample: per-block `λ_min`, per-pair coupling norm,
/// log-norm and operator norm in `M(w)`.
pub fn write_estimation_report(path: &Path, report: &[SampleReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let n = report.first().map_or(0, |r| r.probe.mu.len());
    let mut header = vec!["sample".to_string()];
    header.extend((1..=n).map(|i| format!("mu_{i}")));
    for i in 1..=n {
        for j in 1..=n {
            if i != j {
                header.push(format!("L_{i}_{j}"));
            }
        }
    }
    header.push("log_norm".into());
    header.push("op_norm".into());
    wtr.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
    for (k, r) in report.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(r.probe.mu.iter().map(|v| format!("{v:?}")));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    row.push(format!("{:?}", r.probe.coupling[(i, j)]));
                }
            }
        }
        row.push(fmt(r.log_norm));
        row.push(fmt(r.op_norm));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{canonical_lq, two_player_scalar_example, LqSpec, QuadraticGame};
    use approx::assert_relative_eq;

    #[test]
    fn budget_one_is_center() {
        let r = RegionSpec::cube(vec![0.5, -1.0, 2.0], 0.1);
        let s = sample_region(&r, 1, 0).unwrap();
        assert_eq!(s, vec![DVector::from_vec(vec![0.5, -1.0, 2.0])]);
    }

    #[test]
    fn grid_in_two_dimensions() {
        let r = RegionSpec::cube(vec![0.0, 0.0], 1.0);
        let s = sample_region(&r, 9, 0).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s[0], DVector::zeros(2));
        for corner in [[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]] {
            assert!(s.contains(&DVector::from_row_slice(&corner)));
        }
    }

    #[test]
    fn halton_stays_in_cube() {
        let r = RegionSpec::cube(vec![0.0; 8], 0.1);
        let s = sample_region(&r, 2000, 3).unwrap();
        assert_eq!(s.len(), 2000);
        assert!(s.iter().all(|x| r.contains(x, 1e-15)));
        assert_eq!(s, sample_region(&r, 2000, 3).unwrap());
    }

    #[test]
    fn ball_samples_stay_inside() {
        let r = RegionSpec::MetricBall {
            center: vec![1.0, 0.0, 0.0, 0.0, 2.0],
            radius: 0.5,
            scales: Some(vec![1.0, 2.0, 1.0, 0.5, 1.0]),
        };
        assert!(sample_region(&r, 300, 1).unwrap().iter().all(|x| r.contains(x, 1e-12)));
        let r2 = RegionSpec::ball(vec![0.0, 0.0], 1.0);
        assert!(sample_region(&r2, 50, 1).unwrap().iter().all(|x| r2.contains(x, 1e-12)));
    }

    fn lq_small(lambda: f64) -> QuadraticGame {
        canonical_lq(&LqSpec {
            lambda,
            block_dim: 4,
            ..LqSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn quadratic_estimates_are_exact() {
        let g = lq_small(1.0);
        let p = BlockStructure::identity(&[4, 4]).unwrap();
        let r = RegionSpec::cube(vec![0.0; 8], 1.0);
        let samples = sample_region(&r, 20, 0).unwrap();
        let b = estimate_block_bounds(&g, &p, &samples).unwrap();
        assert_relative_eq!(b.mu()[1], 1.0, epsilon = 1e-10);
        assert_relative_eq!(b.l(0, 1), 10.0, epsilon = 1e-10);
        let m = WeightedMetric::new(p, vec![1.0, 200.0]).unwrap();
        assert_relative_eq!(estimate_lipschitz(&g, &m, &samples).unwrap(), 1.0 + 0.5f64.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(estimate_dsc_margin(&g, &m, &samples).unwrap(), 1.0 - 0.5f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn certify_lq_and_failure_record() {
        let g = lq_small(1.0);
        let p = BlockStructure::identity(&[4, 4]).unwrap();
        let r = RegionSpec::cube(vec![0.0; 8], 1.0);
        let out = certify(&g, &r, &p, &CertifyOptions { budget: 1, ..Default::default() }).unwrap();
        let c = out.certificate().unwrap();
        assert!((c.alpha - 0.2929).abs() < 1e-3 && (c.beta - 1.7071).abs() < 1e-3);

        let g = lq_small(2.4);
        let opts = CertifyOptions {
            budget: 1,
            weights: WeightChoice::Fixed { weights: vec![1.0, 1.0] },
            ..Default::default()
        };
        match certify(&g, &r, &p, &opts).unwrap() {
            CertifyOutcome::Failed(f) => {
                assert!(f.alpha_dsc.unwrap() < 0.0);
                assert!(!f.reason.is_empty());
            }
            CertifyOutcome::Certified(_) => panic!("over-coupled Euclidean case must not certify"),
        }
    }

    #[test]
    fn certify_decoupled() {
        let g = QuadraticGame::new(DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 0.4])), &[1, 1]).unwrap();
        let p = BlockStructure::identity(&[1, 1]).unwrap();
        let out = certify(&g, &RegionSpec::cube(vec![0.0, 0.0], 1.0), &p, &CertifyOptions::default()).unwrap();
        assert_relative_eq!(out.certificate().unwrap().alpha, 0.4, epsilon = 1e-9);
    }

    #[test]
    fn scalar_euclidean_fails_sgn_certifies() {
        let g = two_player_scalar_example();
        let p = BlockStructure::identity(&[1, 1]).unwrap();
        let r = RegionSpec::cube(vec![0.0, 0.0], 1.0);
        let out = certify(&g, &r, &p, &CertifyOptions { budget: 4, ..Default::default() }).unwrap();
        assert!((out.certificate().unwrap().alpha_sgn - (1.0 - 0.5f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn report_csv_has_one_row_per_sample() {
        let g = lq_small(1.0);
        let p = BlockStructure::identity(&[4, 4]).unwrap();
        let run = certify_detailed(&g, &RegionSpec::cube(vec![0.0; 8], 1.0), &p, &CertifyOptions { budget: 5, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("est.csv");
        write_estimation_report(&path, &run.report).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("sample,mu_1,mu_2,L_1_2,L_2_1,log_norm,op_norm\n"));
        assert_eq!(text.lines().count(), 1 + run.report.len());
    }
}
