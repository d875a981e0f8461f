//! Analytic game models: the two-player scalar example, the canonical
//! two-block LQ family, coupling-noise perturbations and a random LQ
//! ensemble.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{self, BlockStructure};
use crate::sgn::BlockBounds;

/// Evaluation surface of a differentiable game.
///
/// `F` stacks the players' own gradients, `G = −F` is the vector field
/// the dynamics follow.
pub trait GameModel: Send + Sync {
    /// Player partition; the blocks are identities unless stated otherwise.
    fn structure(&self) -> &BlockStructure;

    fn eval_f(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Jacobian of `G = −F`.
    fn eval_jg(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// `∇²_{x_i x_j} f_i`, read off `−J_G` by default.
    fn hess_block(&self, i: usize, j: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let jf = -self.eval_jg(x)?;
        Ok(self.structure().sub_block(&jf, i, j))
    }

    fn equilibrium_hint(&self) -> Option<DVector<f64>> {
        None
    }

    fn eval_g(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-self.eval_f(x)?)
    }

    fn as_quadratic(&self) -> Option<&QuadraticGame> {
        None
    }

    fn total_dim(&self) -> usize {
        self.structure().total_dim()
    }
}

/// `F(x) = H x`; the Nash equilibrium sits at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    h: DMatrix<f64>,
    structure: BlockStructure,
}

impl QuadraticGame {
    pub fn new(h: DMatrix<f64>, dims: &[usize]) -> Result<Self> {
        let structure = BlockStructure::identity(dims)?;
        let d = structure.total_dim();
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                found: h.nrows().max(h.ncols()),
            });
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("game matrix has non-finite entries"));
        }
        Ok(Self { h, structure })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn dims(&self) -> &[usize] {
        self.structure.dims()
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.structure.sub_block(&self.h, i, j)
    }

    /// `λ_min` of the Euclidean symmetric part of `H`.
    pub fn euclidean_margin(&self) -> f64 {
        metric::sym_min_eig(&metric::sym_part(&self.h))
    }
}

impl GameModel for QuadraticGame {
    fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    fn eval_f(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.structure.check_vector(x)?;
        Ok(&self.h * x)
    }

    fn eval_jg(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-&self.h)
    }

    fn hess_block(&self, i: usize, j: usize, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.block(i, j))
    }

    fn equilibrium_hint(&self) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.structure.total_dim()))
    }

    fn as_quadratic(&self) -> Option<&QuadraticGame> {
        Some(self)
    }
}

/// `H = [[μ₁, a], [b, μ₂]]` with `μ = 1`, `a = 10`, `b = 0.05`.
pub fn two_player_scalar_example() -> QuadraticGame {
    QuadraticGame::new(DMatrix::from_row_slice(2, 2, &[1.0, 10.0, 0.05, 1.0]), &[1, 1])
        .expect("static example is well formed")
}

/// Parameters of the two-block LQ family
/// `H(λ) = [[μ₀ I, λ a R], [λ b Rᵀ, μ₀ I]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LqSpec {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub mu0: f64,
    pub block_dim: usize,
    pub seed: u64,
}

impl Default for LqSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            a: 10.0,
            b: 0.05,
            mu0: 1.0,
            block_dim: 32,
            seed: 0,
        }
    }
}

impl LqSpec {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.mu0 > 0.0) {
            return Err(Error::invalid("LQ parameters a, b, mu0 must be positive"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("coupling lambda = {} must be nonnegative", self.lambda)));
        }
        if self.block_dim == 0 {
            return Err(Error::invalid("block_dim must be positive"));
        }
        Ok(())
    }

    /// Balanced weights `(1, a/b)`.
    pub fn balanced_weights(&self) -> Vec<f64> {
        vec![1.0, self.a / self.b]
    }

    /// Margin in the balanced metric, `μ₀ − λ√(ab)`.
    pub fn balanced_alpha(&self) -> f64 {
        self.mu0 - self.lambda * (self.a * self.b).sqrt()
    }

    /// Lipschitz bound in the balanced metric, `μ₀ + λ√(ab)`.
    pub fn balanced_beta(&self) -> f64 {
        self.mu0 + self.lambda * (self.a * self.b).sqrt()
    }
}

/// Orthogonal factor of a QR decomposition of a Gaussian matrix, with the
/// sign convention `diag(R) > 0` on the triangular factor.
pub fn seeded_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// The LQ family at a fixed orthogonal base `R`.
#[derive(Debug, Clone)]
pub struct LqFamily {
    spec: LqSpec,
    r: DMatrix<f64>,
}

impl LqFamily {
    pub fn new(spec: LqSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let r = seeded_orthogonal(spec.block_dim, &mut rng);
        debug_assert!((metric::spectral_norm(&r) - 1.0).abs() < 1e-12);
        Ok(Self { spec, r })
    }

    pub fn spec(&self) -> &LqSpec {
        &self.spec
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn game(&self, lambda: f64) -> Result<QuadraticGame> {
        let s = self.spec.with_lambda(lambda);
        s.validate()?;
        let n = s.block_dim;
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).fill_diagonal(s.mu0);
        h.view_mut((n, n), (n, n)).fill_diagonal(s.mu0);
        h.view_mut((0, n), (n, n)).copy_from(&(&self.r * (lambda * s.a)));
        h.view_mut((n, 0), (n, n)).copy_from(&(self.r.transpose() * (lambda * s.b)));
        QuadraticGame::new(h, &[n, n])
    }
}

pub fn canonical_lq(spec: &LqSpec) -> Result<QuadraticGame> {
    LqFamily::new(*spec)?.game(spec.lambda)
}

/// Curvatures and couplings of a quadratic game, read off its blocks.
///
/// `μ_i` is the smallest eigenvalue of the `P_i`-symmetrized own block and
/// `L_ij` the `P_j → P_i` operator norm of the cross block.
pub fn exact_block_bounds(game: &dyn GameModel, p: &BlockStructure) -> Result<BlockBounds> {
    let q = game
        .as_quadratic()
        .ok_or_else(|| Error::Unsupported("exact block bounds need a quadratic game; sample the region instead".into()))?;
    if q.dims() != p.dims() {
        return Err(Error::invalid("metric block dimensions do not match the game"));
    }
    let n = p.n_players();
    let mut mu = Vec::with_capacity(n);
    for i in 0..n {
        mu.push(metric::min_sym_eig_with_roots(&q.block(i, i), p.roots(i))?);
    }
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                l[(i, j)] = metric::mixed_op_norm(&q.block(i, j), p.block(j), p.block(i))?;
            }
        }
    }
    if let Some((i, m)) = mu.iter().enumerate().find(|(_, m)| !(**m > 0.0)) {
        return Err(Error::invalid(format!(
            "own block {i} has nonpositive curvature {m}; the small-gain summary needs mu_i > 0"
        )));
    }
    BlockBounds::new(mu, l)
}

/// Adds spectrally normalized Gaussian noise to each cross block:
/// `A'_ij = A_ij + ε‖A_ij‖₂ N_ij/‖N_ij‖₂`.
pub fn perturb_couplings(game: &QuadraticGame, eps: f64, seed: u64) -> Result<QuadraticGame> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("noise level {eps} must lie in [0, 1]")));
    }
    let dims = game.dims().to_vec();
    if dims.len() != 2 {
        return Err(Error::invalid("coupling noise is defined for two-player games"));
    }
    if eps == 0.0 {
        return Ok(game.clone());
    }
    let st = game.structure();
    let mut h = game.h().clone();
    for (k, (i, j)) in [(0usize, 1usize), (1, 0)].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(2).wrapping_add(k as u64));
        let a = st.sub_block(&h, i, j);
        let scale = metric::spectral_norm(&a);
        let noise = DMatrix::from_fn(dims[i], dims[j], |_, _| StandardNormal.sample(&mut rng));
        let nn = metric::spectral_norm(&noise);
        let pert = a + noise * (eps * scale / nn);
        h.view_mut((st.offset(i), st.offset(j)), (dims[i], dims[j])).copy_from(&pert);
    }
    QuadraticGame::new(h, &dims)
}

/// Ensemble settings; couplings follow the LQ family with random bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSpec {
    pub count: usize,
    pub seed: u64,
    pub a: f64,
    pub b: f64,
    pub block_dim: usize,
    pub curvature_lo: f64,
    pub curvature_hi: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            count: 50,
            seed: 0,
            a: 10.0,
            b: 0.05,
            block_dim: 32,
            curvature_lo: 0.5,
            curvature_hi: 1.5,
        }
    }
}

/// One random instance: SPD curvatures `Q_i` and orthogonal bases `R₁, R₂`.
#[derive(Debug, Clone)]
pub struct EnsembleInstance {
    pub index: usize,
    q: [DMatrix<f64>; 2],
    r: [DMatrix<f64>; 2],
    a: f64,
    b: f64,
}

impl EnsembleInstance {
    /// `H(λ) = [[Q₁, λ a R₁], [λ b R₂ᵀ, Q₂]]`.
    pub fn game(&self, lambda: f64) -> Result<QuadraticGame> {
        let n = self.q[0].nrows();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.q[0]);
        h.view_mut((n, n), (n, n)).copy_from(&self.q[1]);
        h.view_mut((0, n), (n, n)).copy_from(&(&self.r[0] * (lambda * self.a)));
        h.view_mut((n, 0), (n, n)).copy_from(&(self.r[1].transpose() * (lambda * self.b)));
        QuadraticGame::new(h, &[n, n])
    }

    pub fn balanced_weights(&self) -> Vec<f64> {
        vec![1.0, self.a / self.b]
    }
}

/// Generates the ensemble sequentially from one seeded stream.
pub fn random_lq_ensemble(spec: &EnsembleSpec) -> Result<Vec<EnsembleInstance>> {
    if spec.count == 0 {
        return Err(Error::invalid("ensemble count must be at least 1"));
    }
    if !(0.0 < spec.curvature_lo && spec.curvature_lo <= spec.curvature_hi) {
        return Err(Error::invalid("ensemble curvature range must be positive and ordered"));
    }
    if !(spec.a > 0.0 && spec.b > 0.0) || spec.block_dim == 0 {
        return Err(Error::invalid("ensemble needs a, b > 0 and block_dim > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.block_dim;
    let eig = Uniform::new_inclusive(spec.curvature_lo, spec.curvature_hi);
    let spd = |rng: &mut ChaCha8Rng| {
        let u = seeded_orthogonal(n, rng);
        let d = DVector::from_fn(n, |_, _| eig.sample(rng));
        metric::sym_part(&(&u * DMatrix::from_diagonal(&d) * u.transpose()))
    };
    let mut out = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let q1 = spd(&mut rng);
        let q2 = spd(&mut rng);
        let r1 = seeded_orthogonal(n, &mut rng);
        let r2 = seeded_orthogonal(n, &mut rng);
        out.push(EnsembleInstance {
            index,
            q: [q1, q2],
            r: [r1, r2],
            a: spec.a,
            b: spec.b,
        });
    }
    Ok(out)
}

/// JSON game description. Matrices are only accepted for the explicit
/// `quadratic` kind; the generated families are described by seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GameConfig {
    Scalar2p,
    CanonicalLq(LqSpec),
    Ensemble {
        #[serde(flatten)]
        spec: EnsembleSpec,
        instance: usize,
        lambda: f64,
    },
    Quadratic {
        h: Vec<Vec<f64>>,
        dims: Vec<usize>,
    },
}

impl GameConfig {
    pub fn build(&self) -> Result<QuadraticGame> {
        match self {
            GameConfig::Scalar2p => Ok(two_player_scalar_example()),
            GameConfig::CanonicalLq(spec) => canonical_lq(spec),
            GameConfig::Ensemble { spec, instance, lambda } => {
                let members = random_lq_ensemble(&EnsembleSpec {
                    count: instance + 1,
                    ..*spec
                })?;
                members[*instance].game(*lambda)
            }
            GameConfig::Quadratic { h, dims } => QuadraticGame::new(metric::matrix_from_rows(h)?, dims),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_lq(lambda: f64) -> QuadraticGame {
        canonical_lq(&LqSpec {
            lambda,
            block_dim: 6,
            ..LqSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn scalar_example_fails_euclidean_monotonicity() {
        let g = two_player_scalar_example();
        assert!((((10.0f64 + 0.05) / 2.0).powi(2) - 25.25).abs() < 1e-3);
        assert!(g.euclidean_margin() < 0.0);
        assert_eq!(g.eval_f(&DVector::zeros(2)).unwrap(), DVector::zeros(2));
        let b = exact_block_bounds(&g, &BlockStructure::identity(&[1, 1]).unwrap()).unwrap();
        assert_eq!(b.mu(), &[1.0, 1.0]);
        assert_relative_eq!(b.l(0, 1), 10.0, epsilon = 1e-12);
        assert_relative_eq!(b.l(1, 0), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn base_is_orthogonal() {
        let fam = LqFamily::new(LqSpec::default()).unwrap();
        let r = fam.base();
        let err = (r.transpose() * r - DMatrix::identity(32, 32)).amax();
        assert!(err < 1e-12);
        assert!((metric::spectral_norm(r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lq_at_zero_is_identity() {
        let g = small_lq(0.0);
        assert_eq!(g.h(), &DMatrix::identity(12, 12));
        assert_relative_eq!(g.euclidean_margin(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lq_euclidean_margin_at_one() {
        let g = canonical_lq(&LqSpec::default()).unwrap();
        assert_relative_eq!(g.euclidean_margin(), 1.0 - 10.05 / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn lq_bounds_scale_with_lambda() {
        let p = BlockStructure::identity(&[6, 6]).unwrap();
        for (lambda, l12, l21) in [(1.0, 10.0, 0.05), (2.0, 20.0, 0.1), (0.0, 0.0, 0.0)] {
            let b = exact_block_bounds(&small_lq(lambda), &p).unwrap();
            assert_relative_eq!(b.mu()[0], 1.0, epsilon = 1e-12);
            assert_relative_eq!(b.l(0, 1), l12, epsilon = 1e-10);
            assert_relative_eq!(b.l(1, 0), l21, epsilon = 1e-10);
        }
    }

    #[test]
    fn quadratic_jacobian_and_blocks() {
        let g = small_lq(1.3);
        let x = DVector::from_fn(12, |i, _| i as f64 - 3.0);
        assert_eq!(g.eval_jg(&x).unwrap(), -g.h());
        assert_eq!(g.hess_block(0, 1, &x).unwrap(), g.block(0, 1));
        assert_eq!(g.eval_g(&x).unwrap(), -(g.h() * &x));
    }

    #[test]
    fn deterministic_generation() {
        assert_eq!(small_lq(1.0), small_lq(1.0));
        let s = EnsembleSpec {
            count: 2,
            block_dim: 4,
            ..EnsembleSpec::default()
        };
        let a = random_lq_ensemble(&s).unwrap();
        let b = random_lq_ensemble(&s).unwrap();
        assert_eq!(a[1].game(0.7).unwrap(), b[1].game(0.7).unwrap());
    }

    #[test]
    fn noise_levels() {
        let g = small_lq(1.0);
        assert_eq!(perturb_couplings(&g, 0.0, 7).unwrap(), g);
        let p = perturb_couplings(&g, 1.0, 7).unwrap();
        for (i, j) in [(0, 1), (1, 0)] {
            let diff = p.block(i, j) - g.block(i, j);
            assert_relative_eq!(metric::spectral_norm(&diff), metric::spectral_norm(&g.block(i, j)), epsilon = 1e-10);
        }
        assert_eq!(p.block(0, 0), g.block(0, 0));
        assert!(perturb_couplings(&g, 1.5, 0).is_err());
    }

    #[test]
    fn ensemble_decoupled_is_monotone() {
        let s = EnsembleSpec {
            count: 5,
            block_dim: 5,
            ..EnsembleSpec::default()
        };
        for inst in random_lq_ensemble(&s).unwrap() {
            let m = inst.game(0.0).unwrap().euclidean_margin();
            assert!((0.5 - 1e-12..=1.5 + 1e-12).contains(&m));
        }
    }

    #[test]
    fn config_round_trip() {
        let cfg: GameConfig = serde_json::from_str(r#"{"type":"canonical_lq","lambda":2.4,"block_dim":4}"#).unwrap();
        let g = cfg.build().unwrap();
        assert_eq!(g.dims(), &[4, 4]);
        let cfg: GameConfig = serde_json::from_str(r#"{"type":"quadratic","h":[[1,0],[0,2]],"dims":[1,1]}"#).unwrap();
        assert_relative_eq!(cfg.build().unwrap().euclidean_margin(), 1.0);
        let s = serde_json::to_string(&GameConfig::Scalar2p).unwrap();
        assert_eq!(s, r#"{"type":"scalar2p"}"#);
    }
}
