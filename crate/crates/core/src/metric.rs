//! Weighted block geometry.
//!
//! A joint strategy vector `x = (x_1, ..., x_N)` lives in `R^d` with
//! `d = Σ d_i`. Each player carries an SPD block `P_i`; player weights `w`
//! rescale the blocks into the block-diagonal metric `M(w) = diag(w_i P_i)`.
//! Everything downstream (margins, Lipschitz bounds, contraction factors) is
//! measured in one of these geometries, so this module also hosts the mixed
//! operator norms, logarithmic norms and extreme-eigenvalue probes.
//!
//! Dimensions are small (at most a few hundred), so dense symmetric
//! eigendecompositions are the default route. Power iteration and Lanczos are
//! available through [`SpectralProbeConfig`] and are checked against the dense
//! route in the test suite.

use nalgebra::{Complex, DMatrix, DVector, DVectorView, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative symmetry tolerance applied to every metric block.
pub const SYMMETRY_TOL: f64 = 1e-12;

const PROBE_SEED: u64 = 0x5eed_b10c;

/// Largest absolute entry of `a - aᵀ` relative to the largest entry of `a`.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Rejects non-square, asymmetric or indefinite matrices.
pub fn check_spd(p: &DMatrix<f64>, what: &str) -> Result<()> {
    if !p.is_square() {
        return Err(Error::Dimension {
            expected: p.nrows(),
            found: p.ncols(),
        });
    }
    let asym = relative_asymmetry(p);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            what: what.to_string(),
            asymmetry: asym,
        });
    }
    let min_eig = sym_eigenvalues(p).min();
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what: what.to_string(),
            min_eig,
        });
    }
    Ok(())
}

fn sym_eigenvalues(s: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(s.clone()).eigenvalues
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn sym_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix (dense).
pub fn sym_min_eig(s: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(s).min()
}

/// Largest eigenvalue of a symmetric matrix (dense).
pub fn sym_max_eig(s: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(s).max()
}

/// Eigenvalues of a general real square matrix.
///
/// nalgebra's unbounded Schur iteration can stall on matrices with large
/// repeated eigenvalue clusters, so the nonsymmetric solve goes through faer.
pub fn general_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let m = faer::Mat::<f64>::from_fn(n, a.ncols(), |i, j| a[(i, j)]);
    m.eigenvalues::<faer::complex_native::c64>()
        .into_iter()
        .map(|z| Complex::new(z.re, z.im))
        .collect()
}

/// Spectral radius of a general square matrix via its complex eigenvalues.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    general_eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest singular value (dense).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().max()
}

/// `P^{1/2}` and `P^{-1/2}` of an SPD matrix through its eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpdRoots {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

impl SpdRoots {
    pub fn new(p: &DMatrix<f64>, what: &str) -> Result<Self> {
        check_spd(p, what)?;
        Ok(Self::new_unchecked(p))
    }

    fn new_unchecked(p: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(p.clone());
        let q = &eig.eigenvectors;
        let s = eig.eigenvalues.map(f64::sqrt);
        let inv = s.map(|v| 1.0 / v);
        let sqrt = q * DMatrix::from_diagonal(&s) * q.transpose();
        let inv_sqrt = q * DMatrix::from_diagonal(&inv) * q.transpose();
        Self {
            sqrt: sym_part(&sqrt),
            inv_sqrt: sym_part(&inv_sqrt),
        }
    }

    /// `P^{1/2} A P^{-1/2}`: `A` expressed in the coordinates where `P` is Euclidean.
    pub fn similarity(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.sqrt * a * &self.inv_sqrt
    }
}

/// Per-player dimensions and SPD blocks `P_i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BlockStructureRepr", into = "BlockStructureRepr")]
pub struct BlockStructure {
    dims: Vec<usize>,
    blocks: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
    roots: Vec<SpdRoots>,
}

#[derive(Serialize, Deserialize)]
struct BlockStructureRepr {
    dims: Vec<usize>,
    blocks: Vec<Vec<Vec<f64>>>,
    total_dim: usize,
}

impl TryFrom<BlockStructureRepr> for BlockStructure {
    type Error = Error;

    fn try_from(repr: BlockStructureRepr) -> Result<Self> {
        let blocks = repr
            .blocks
            .iter()
            .map(|rows| matrix_from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        let s = BlockStructure::new(blocks)?;
        if s.dims != repr.dims || s.total_dim() != repr.total_dim {
            return Err(Error::invalid("block structure dims disagree with blocks"));
        }
        Ok(s)
    }
}

impl From<BlockStructure> for BlockStructureRepr {
    fn from(s: BlockStructure) -> Self {
        BlockStructureRepr {
            total_dim: s.total_dim(),
            blocks: s.blocks.iter().map(matrix_to_rows).collect(),
            dims: s.dims,
        }
    }
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl BlockStructure {
    /// Builds a structure from SPD blocks; fails on the first block that is
    /// asymmetric beyond [`SYMMETRY_TOL`] or not positive definite.
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("block structure needs at least one player"));
        }
        let mut roots = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            if b.nrows() == 0 {
                return Err(Error::invalid(format!("block {i} has zero dimension")));
            }
            roots.push(SpdRoots::new(b, &format!("P_{i}"))?);
        }
        let dims: Vec<usize> = blocks.iter().map(|b| b.nrows()).collect();
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for d in &dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(Self {
            dims,
            blocks,
            offsets,
            roots,
        })
    }

    /// Euclidean blocks `P_i = I_{d_i}`.
    pub fn identity(dims: &[usize]) -> Result<Self> {
        Self::new(dims.iter().map(|&d| DMatrix::identity(d, d)).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn roots(&self, i: usize) -> &SpdRoots {
        &self.roots[i]
    }

    pub fn n_players(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// True when every `P_i` is diagonal.
    pub fn is_diagonal(&self) -> bool {
        self.blocks.iter().all(|b| {
            (0..b.nrows()).all(|i| (0..b.ncols()).all(|j| i == j || b[(i, j)] == 0.0))
        })
    }

    pub fn check_vector(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.total_dim() {
            // Name the first block the vector fails to cover.
            let block = self
                .offsets
                .iter()
                .skip(1)
                .position(|&end| end > v.len())
                .unwrap_or(self.n_players() - 1);
            return Err(Error::BlockDimension {
                block,
                expected: self.total_dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    pub fn block_of<'a>(&self, v: &'a DVector<f64>, i: usize) -> DVectorView<'a, f64> {
        v.rows(self.offsets[i], self.dims[i])
    }

    /// Block `(i, j)` of a `d × d` matrix.
    pub fn sub_block(&self, a: &DMatrix<f64>, i: usize, j: usize) -> DMatrix<f64> {
        a.view((self.offsets[i], self.offsets[j]), (self.dims[i], self.dims[j]))
            .into_owned()
    }

    /// Block-diagonal `P = diag(P_i)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.total_dim();
        let mut m = DMatrix::zeros(d, d);
        for (i, b) in self.blocks.iter().enumerate() {
            let o = self.offsets[i];
            m.view_mut((o, o), (b.nrows(), b.ncols())).copy_from(b);
        }
        m
    }
}

impl PartialEq for BlockStructure {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

/// The block metric `M(w) = diag(w_i P_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetric {
    structure: BlockStructure,
    weights: Vec<f64>,
}

impl WeightedMetric {
    pub fn new(structure: BlockStructure, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, structure.n_players())?;
        Ok(Self { structure, weights })
    }

    pub fn uniform(structure: BlockStructure) -> Self {
        let n = structure.n_players();
        Self {
            structure,
            weights: vec![1.0; n],
        }
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_dim(&self) -> usize {
        self.structure.total_dim()
    }

    /// Dense `M(w)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let s = &self.structure;
        let d = s.total_dim();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..s.n_players() {
            let o = s.offset(i);
            let b = s.block(i) * self.weights[i];
            m.view_mut((o, o), (b.nrows(), b.ncols())).copy_from(&b);
        }
        m
    }

    /// `M(w)^{1/2}` and `M(w)^{-1/2}`, assembled blockwise.
    pub fn roots(&self) -> SpdRoots {
        let s = &self.structure;
        let d = s.total_dim();
        let mut sqrt = DMatrix::zeros(d, d);
        let mut inv_sqrt = DMatrix::zeros(d, d);
        for i in 0..s.n_players() {
            let o = s.offset(i);
            let r = s.roots(i);
            let sw = self.weights[i].sqrt();
            let n = s.dims()[i];
            sqrt.view_mut((o, o), (n, n)).copy_from(&(&r.sqrt * sw));
            inv_sqrt.view_mut((o, o), (n, n)).copy_from(&(&r.inv_sqrt / sw));
        }
        SpdRoots { sqrt, inv_sqrt }
    }

    /// `⟨u, v⟩_{M(w)} = Σ_i w_i u_iᵀ P_i v_i`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        self.structure.check_vector(u)?;
        self.structure.check_vector(v)?;
        let s = &self.structure;
        Ok((0..s.n_players())
            .map(|i| {
                let ui = s.block_of(u, i);
                let vi = s.block_of(v, i);
                self.weights[i] * ui.dot(&(s.block(i) * vi))
            })
            .sum())
    }

    pub fn norm(&self, v: &DVector<f64>) -> Result<f64> {
        block_norm(v, self)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.structure.clone(), weights)
    }
}

pub(crate) fn check_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: w.len(),
        });
    }
    if let Some((i, wi)) = w.iter().enumerate().find(|(_, wi)| !(**wi > 0.0) || !wi.is_finite()) {
        return Err(Error::invalid(format!("weight w_{i} = {wi} must be positive and finite")));
    }
    Ok(())
}

/// `‖v‖_{M(w)} = sqrt(Σ_i w_i v_iᵀ P_i v_i)`.
pub fn block_norm(v: &DVector<f64>, m: &WeightedMetric) -> Result<f64> {
    let q = m.inner(v, v)?;
    Ok(q.max(0.0).sqrt())
}

/// Which end of the spectrum to probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extreme {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMethod {
    Dense,
    PowerIteration,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralProbeConfig {
    pub method: ProbeMethod,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SpectralProbeConfig {
    fn default() -> Self {
        Self {
            method: ProbeMethod::Dense,
            max_iters: 20_000,
            tol: 1e-10,
        }
    }
}

impl SpectralProbeConfig {
    pub fn dense() -> Self {
        Self::default()
    }

    pub fn lanczos(tol: f64) -> Self {
        Self {
            method: ProbeMethod::Lanczos,
            tol,
            ..Self::default()
        }
    }

    pub fn power(tol: f64, max_iters: usize) -> Self {
        Self {
            method: ProbeMethod::PowerIteration,
            max_iters,
            tol,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("probe tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("probe max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// `‖A‖_{P_j → P_i} = ‖P_i^{1/2} A P_j^{-1/2}‖₂` with dense singular values.
pub fn mixed_op_norm(a: &DMatrix<f64>, pj: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<f64> {
    mixed_op_norm_with(a, pj, pi, &SpectralProbeConfig::dense())
}

pub fn mixed_op_norm_with(
    a: &DMatrix<f64>,
    pj: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    cfg: &SpectralProbeConfig,
) -> Result<f64> {
    if a.nrows() != pi.nrows() {
        return Err(Error::Dimension {
            expected: pi.nrows(),
            found: a.nrows(),
        });
    }
    if a.ncols() != pj.nrows() {
        return Err(Error::Dimension {
            expected: pj.nrows(),
            found: a.ncols(),
        });
    }
    let ri = SpdRoots::new(pi, "P_i")?;
    let rj = SpdRoots::new(pj, "P_j")?;
    let b = &ri.sqrt * a * &rj.inv_sqrt;
    norm_of(&b, cfg)
}

/// Operator norm of `b` routed through the configured probe.
pub(crate) fn norm_of(b: &DMatrix<f64>, cfg: &SpectralProbeConfig) -> Result<f64> {
    match cfg.method {
        ProbeMethod::Dense => Ok(spectral_norm(b)),
        _ => {
            let gram = b.transpose() * b;
            let s = extreme_eig(&sym_part(&gram), Extreme::Max, cfg)?;
            Ok(s.max(0.0).sqrt())
        }
    }
}

/// Logarithmic norm `μ_M(A) = λ_max(M^{-1/2} · ½(MA + AᵀM) · M^{-1/2})`.
pub fn log_norm(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    let roots = SpdRoots::new(m, "M")?;
    log_norm_with_roots(a, &roots)
}

/// Same as [`log_norm`] with the roots of `M` supplied by the caller.
pub fn log_norm_with_roots(a: &DMatrix<f64>, roots: &SpdRoots) -> Result<f64> {
    check_square_conforming(a, roots.sqrt.nrows())?;
    let b = roots.similarity(a);
    Ok(sym_max_eig(&sym_part(&b)))
}

/// `λ_min(M^{-1/2} J_M M^{-1/2})` with `J_M = ½(MA + AᵀM)`; equals `-log_norm(-A, M)`.
pub fn min_sym_eig_in_metric(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    Ok(-log_norm(&(-a), m)?)
}

pub fn min_sym_eig_with_roots(a: &DMatrix<f64>, roots: &SpdRoots) -> Result<f64> {
    Ok(-log_norm_with_roots(&(-a), roots)?)
}

fn check_square_conforming(a: &DMatrix<f64>, n: usize) -> Result<()> {
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            found: if a.nrows() != n { a.nrows() } else { a.ncols() },
        });
    }
    Ok(())
}

/// Extreme eigenvalue of a symmetric matrix.
///
/// The iterative probes stop once the eigen-residual `‖Sv − θv‖` drops below
/// `tol · ‖S‖`; for symmetric `S` that bounds the distance from `θ` to the
/// spectrum.
pub fn extreme_eig(s: &DMatrix<f64>, which: Extreme, cfg: &SpectralProbeConfig) -> Result<f64> {
    cfg.validate()?;
    if !s.is_square() {
        return Err(Error::Dimension {
            expected: s.nrows(),
            found: s.ncols(),
        });
    }
    let asym = relative_asymmetry(s);
    if asym > 1e-10 {
        return Err(Error::NotSymmetric {
            what: "S".into(),
            asymmetry: asym,
        });
    }
    let n = s.nrows();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    match cfg.method {
        ProbeMethod::Dense => {
            let e = sym_eigenvalues(s);
            Ok(match which {
                Extreme::Min => e.min(),
                Extreme::Max => e.max(),
            })
        }
        ProbeMethod::PowerIteration => power_iteration(s, which, cfg),
        ProbeMethod::Lanczos => lanczos(s, which, cfg),
    }
}

fn start_vector(n: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0) + 0.05);
    let nv = v.norm();
    v / nv
}

fn power_iteration(s: &DMatrix<f64>, which: Extreme, cfg: &SpectralProbeConfig) -> Result<f64> {
    let n = s.nrows();
    // Shift so the wanted end of the spectrum dominates in magnitude.
    let radius = (0..n)
        .map(|i| s.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = radius.max(f64::MIN_POSITIVE);
    let shifted = match which {
        Extreme::Max => s + DMatrix::identity(n, n) * radius,
        Extreme::Min => DMatrix::identity(n, n) * radius - s,
    };
    let mut v = start_vector(n);
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let sv = s * &v;
        let theta = v.dot(&sv);
        residual = (&sv - &v * theta).norm();
        if residual <= cfg.tol * scale {
            return Ok(theta);
        }
        let w = &shifted * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return Ok(theta);
        }
        v = w / nw;
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iters,
        residual,
    })
}

fn lanczos(s: &DMatrix<f64>, which: Extreme, cfg: &SpectralProbeConfig) -> Result<f64> {
    let n = s.nrows();
    let scale = s.amax().max(f64::MIN_POSITIVE) * (n as f64).sqrt();
    let max_k = n.min(cfg.max_iters.max(1));
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_k);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_k);
    let mut betas: Vec<f64> = Vec::with_capacity(max_k);
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED ^ 0xa5a5);
    let mut q = start_vector(n);
    let mut residual = f64::INFINITY;
    let mut theta = 0.0;

    for k in 0..max_k {
        basis.push(q.clone());
        let mut r = s * &q;
        let alpha = q.dot(&r);
        alphas.push(alpha);
        // Full reorthogonalisation, applied twice.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let beta = r.norm();

        let t = tridiagonal(&alphas, &betas);
        let eig = SymmetricEigen::new(t);
        let idx = match which {
            Extreme::Min => argmin(&eig.eigenvalues),
            Extreme::Max => argmax(&eig.eigenvalues),
        };
        theta = eig.eigenvalues[idx];
        let last = eig.eigenvectors[(k, idx)];
        residual = (beta * last).abs();
        if residual <= cfg.tol * scale || k + 1 == n {
            return Ok(theta);
        }

        if beta <= 1e-14 * scale {
            // Invariant subspace: continue with a fresh direction orthogonal to the basis.
            let mut fresh = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&fresh);
                    fresh.axpy(-c, b, 1.0);
                }
            }
            let nf = fresh.norm();
            if nf <= 1e-12 {
                return Ok(theta);
            }
            betas.push(0.0);
            q = fresh / nf;
        } else {
            betas.push(beta);
            q = r / beta;
        }
    }
    if residual <= cfg.tol * scale {
        Ok(theta)
    } else {
        Err(Error::NoConvergence {
            iterations: max_k,
            residual,
        })
    }
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

fn argmin(v: &DVector<f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc })
        .0
}

fn argmax(v: &DVector<f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
        .0
}
