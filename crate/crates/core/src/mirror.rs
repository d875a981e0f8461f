//! Entropic mirror geometry on products of simplices.
//!
//! Every player owns one or more probability simplices (one per state in
//! the tabular case). The mirror map is the negative entropy, dual
//! coordinates are logits, the Bregman divergence is KL and `∇²ψ` on the
//! tangent space pairs with the softmax Fisher matrix `diag(π) − ππᵀ`.
//! Logits are kept in the mean-zero gauge per simplex.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{self, SpdRoots};
use crate::sgn::{self, BlockBounds};

/// Probabilities below this are treated as boundary points.
pub const INTERIOR_TOL: f64 = 1e-12;
/// Floor applied inside softmax only.
pub const SOFTMAX_FLOOR: f64 = 1e-300;
/// Ridge on the gauge-reduced Fisher inverse.
pub const FISHER_RIDGE: f64 = 1e-10;

/// Step for finite-difference primal Hessians.
const HESSIAN_FD_STEP: f64 = 1e-5;

/// Negative-entropy mirror map over per-player lists of simplices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorMap {
    simplices: Vec<Vec<usize>>,
}

impl MirrorMap {
    pub fn new(simplices: Vec<Vec<usize>>) -> Result<Self> {
        if simplices.is_empty() || simplices.iter().any(|p| p.is_empty()) {
            return Err(Error::invalid("every player needs at least one simplex"));
        }
        if simplices.iter().flatten().any(|&m| m < 2) {
            return Err(Error::invalid("simplices need at least two vertices"));
        }
        Ok(Self { simplices })
    }

    /// `n_players` players, each with `n_states` simplices of `n_actions` vertices.
    pub fn tabular(n_players: usize, n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(vec![vec![n_actions; n_states]; n_players])
    }

    pub fn n_players(&self) -> usize {
        self.simplices.len()
    }

    pub fn player_dim(&self, i: usize) -> usize {
        self.simplices[i].iter().sum()
    }

    /// Tangent (gauge-reduced) dimension of player `i`.
    pub fn reduced_dim(&self, i: usize) -> usize {
        self.simplices[i].iter().map(|m| m - 1).sum()
    }

    pub fn player_dims(&self) -> Vec<usize> {
        (0..self.n_players()).map(|i| self.player_dim(i)).collect()
    }

    pub fn reduced_dims(&self) -> Vec<usize> {
        (0..self.n_players()).map(|i| self.reduced_dim(i)).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.player_dims().iter().sum()
    }

    pub fn total_reduced_dim(&self) -> usize {
        self.reduced_dims().iter().sum()
    }

    pub fn player_offset(&self, i: usize) -> usize {
        (0..i).map(|k| self.player_dim(k)).sum()
    }

    /// `(offset, size)` of every simplex in joint order.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut o = 0;
        for p in &self.simplices {
            for &m in p {
                out.push((o, m));
                o += m;
            }
        }
        out
    }

    fn player_segments(&self, i: usize) -> Vec<(usize, usize)> {
        let mut o = self.player_offset(i);
        self.simplices[i]
            .iter()
            .map(|&m| {
                let s = (o, m);
                o += m;
                s
            })
            .collect()
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.total_dim() {
            return Err(Error::Dimension {
                expected: self.total_dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Primal point of a joint logit vector.
    pub fn softmax(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(z)?;
        let mut x = DVector::zeros(z.len());
        for (o, m) in self.segments() {
            let p = softmax(&z.as_slice()[o..o + m]);
            x.as_mut_slice()[o..o + m].copy_from_slice(&p);
        }
        Ok(x)
    }

    /// Centered logits of an interior primal point.
    pub fn logits(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x)?;
        let mut z = DVector::zeros(x.len());
        for (o, m) in self.segments() {
            let l = centered_logits(&x.as_slice()[o..o + m])?;
            z.as_mut_slice()[o..o + m].copy_from_slice(&l);
        }
        Ok(z)
    }

    /// Removes the per-simplex mean.
    pub fn center(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(z)?;
        let mut out = z.clone();
        for (o, m) in self.segments() {
            let c = center(&z.as_slice()[o..o + m]);
            out.as_mut_slice()[o..o + m].copy_from_slice(&c);
        }
        Ok(out)
    }

    pub fn check_interior(&self, x: &DVector<f64>) -> Result<()> {
        self.check_len(x)?;
        for (o, m) in self.segments() {
            check_simplex(&x.as_slice()[o..o + m])?;
        }
        Ok(())
    }

    /// Orthonormal basis of player `i`'s tangent space (mean zero per simplex).
    pub fn gauge_basis(&self, i: usize) -> DMatrix<f64> {
        let d = self.player_dim(i);
        let mut u = DMatrix::zeros(d, self.reduced_dim(i));
        let mut col = 0;
        let mut row = 0;
        for &m in &self.simplices[i] {
            let h = helmert(m);
            u.view_mut((row, col), (m, m - 1)).copy_from(&h);
            row += m;
            col += m - 1;
        }
        u
    }

    /// Block-diagonal joint tangent basis.
    pub fn joint_gauge_basis(&self) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(self.total_dim(), self.total_reduced_dim());
        let (mut r, mut c) = (0, 0);
        for i in 0..self.n_players() {
            let b = self.gauge_basis(i);
            u.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(&b);
            r += b.nrows();
            c += b.ncols();
        }
        u
    }

    /// Block-diagonal Fisher matrix of player `i` at primal point `x`.
    pub fn fisher_player(&self, i: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let d = self.player_dim(i);
        let base = self.player_offset(i);
        let mut f = DMatrix::zeros(d, d);
        for (o, m) in self.player_segments(i) {
            let b = fisher_block(&x.as_slice()[o..o + m])?;
            f.view_mut((o - base, o - base), (m, m)).copy_from(&b);
        }
        Ok(f)
    }

    /// `Uᵀ ∇²ψ_i U` on the tangent space, with `∇²ψ = diag(1/x)`.
    pub fn reduced_psi_hessian(&self, i: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let off = self.player_offset(i);
        let d = self.player_dim(i);
        let xi = x.rows(off, d);
        for (o, m) in self.player_segments(i) {
            check_simplex(&x.as_slice()[o..o + m])?;
        }
        let u = self.gauge_basis(i);
        let dinv = DMatrix::from_diagonal(&xi.map(|v| 1.0 / v));
        Ok(metric::sym_part(&(u.transpose() * dinv * &u)))
    }

    /// `Uᵀ F U` on the tangent space.
    pub fn reduced_fisher(&self, i: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let u = self.gauge_basis(i);
        Ok(metric::sym_part(&(u.transpose() * self.fisher_player(i, x)? * &u)))
    }

    /// Natural-gradient direction `U (UᵀFU + ridge I)⁻¹ Uᵀ g` for player `i`.
    pub fn natural_direction(&self, i: usize, x: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.gauge_basis(i);
        let k = u.ncols();
        let fr = self.reduced_fisher(i, x)? + DMatrix::identity(k, k) * FISHER_RIDGE;
        let rhs = u.transpose() * g;
        let sol = fr
            .cholesky()
            .ok_or_else(|| Error::Singular("reduced Fisher matrix".into()))?
            .solve(&rhs);
        Ok(u * sol)
    }
}

fn helmert(m: usize) -> DMatrix<f64> {
    // Columns k: (1,…,1,−k,0,…)/√(k(k+1)), orthonormal and mean zero.
    let mut h = DMatrix::zeros(m, m - 1);
    for k in 1..m {
        let s = ((k * (k + 1)) as f64).sqrt();
        for r in 0..k {
            h[(r, k - 1)] = 1.0 / s;
        }
        h[(k, k - 1)] = -(k as f64) / s;
    }
    h
}

fn check_simplex(x: &[f64]) -> Result<()> {
    if let Some(v) = x.iter().find(|&&v| !(v >= INTERIOR_TOL)) {
        return Err(Error::Boundary(format!("probability {v:e} is below {INTERIOR_TOL:e}")));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("simplex point sums to {s}")));
    }
    Ok(())
}

/// Max-shifted softmax; probabilities are floored at `SOFTMAX_FLOOR`.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| (v / s).max(SOFTMAX_FLOOR)).collect()
}

pub fn center(z: &[f64]) -> Vec<f64> {
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    z.iter().map(|v| v - mean).collect()
}

/// `log x − mean(log x)`.
pub fn centered_logits(x: &[f64]) -> Result<Vec<f64>> {
    check_simplex(x)?;
    Ok(center(&x.iter().map(|v| v.ln()).collect::<Vec<_>>()))
}

/// `KL(x* ‖ x) = Σ x*_k log(x*_k / x_k)`.
pub fn bregman_div(x_star: &[f64], x: &[f64]) -> Result<f64> {
    if x_star.len() != x.len() {
        return Err(Error::Dimension {
            expected: x_star.len(),
            found: x.len(),
        });
    }
    check_simplex(x_star)?;
    check_simplex(x)?;
    // Σ q φ((p − q)/q) with φ(u) = (1+u)ln(1+u) − u; every term is
    // nonnegative, so V keeps its relative accuracy near x*.
    let kl: f64 = x_star.iter().zip(x).map(|(p, q)| q * phi((p - q) / q)).sum();
    Ok(kl.max(0.0))
}

fn phi(u: f64) -> f64 {
    if u.abs() < 1e-2 {
        let mut acc = 0.0;
        let mut pow = u;
        for k in 2..=12 {
            pow *= -u;
            acc -= pow / (k * (k - 1)) as f64;
        }
        acc
    } else if u == -1.0 {
        1.0
    } else {
        (1.0 + u) * u.ln_1p() - u
    }
}

/// `diag(π) − ππᵀ`.
pub fn fisher_block(pi: &[f64]) -> Result<DMatrix<f64>> {
    check_simplex(pi)?;
    let m = pi.len();
    Ok(DMatrix::from_fn(m, m, |i, j| if i == j { pi[i] - pi[i] * pi[i] } else { -pi[i] * pi[j] }))
}

/// A game on a product of simplices, seen through its primal gradients.
pub trait MirrorGame: Send + Sync {
    fn mirror_map(&self) -> &MirrorMap;

    /// Stacked `∇_{x_i} f_i` at a joint primal point. Must accept small
    /// tangent perturbations of interior points.
    fn primal_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Tangent-space Jacobian `[U_iᵀ ∇²_{x_i x_j} f_i U_j]` by central differences.
pub fn reduced_primal_jacobian(game: &dyn MirrorGame, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let psi = game.mirror_map();
    psi.check_interior(x)?;
    let u = psi.joint_gauge_basis();
    let k = u.ncols();
    let mut jac = DMatrix::zeros(k, k);
    let min_x = x.min();
    let h = HESSIAN_FD_STEP * min_x.min(1.0);
    for c in 0..k {
        let dir = u.column(c);
        let gp = game.primal_gradient(&(x + dir * h))?;
        let gm = game.primal_gradient(&(x - dir * h))?;
        jac.set_column(c, &(u.transpose() * (gp - gm) / (2.0 * h)));
    }
    Ok(jac)
}

fn reduced_offsets(psi: &MirrorMap) -> Vec<usize> {
    let mut o = vec![0];
    for d in psi.reduced_dims() {
        o.push(o.last().unwrap() + d);
    }
    o
}

/// `Ψ^{-1/2} J Ψ^{-1/2}` with `Ψ = diag(U_iᵀ∇²ψ_i U_i)`.
pub fn normalized_primal_jacobian(game: &dyn MirrorGame, x: &DVector<f64>) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let psi = game.mirror_map();
    let jac = reduced_primal_jacobian(game, x)?;
    let offs = reduced_offsets(psi);
    let k = jac.nrows();
    let mut inv_sqrt = DMatrix::zeros(k, k);
    for i in 0..psi.n_players() {
        let roots = SpdRoots::new(&psi.reduced_psi_hessian(i, x)?, "mirror metric")?;
        let d = offs[i + 1] - offs[i];
        inv_sqrt.view_mut((offs[i], offs[i]), (d, d)).copy_from(&roots.inv_sqrt);
    }
    Ok((&inv_sqrt * jac * &inv_sqrt, offs))
}

/// Mirror block bounds and the point they were measured around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorBounds {
    pub bounds: BlockBounds,
    pub reference_point: Vec<f64>,
    pub sample_count: usize,
}

/// `μ_i = min_s λ_min(Ψ_i^{-1/2} ∇²_{x_i x_i} f_i Ψ_i^{-1/2})` and
/// `L_ij = max_s ‖Ψ_i^{-1/2} ∇²_{x_i x_j} f_i Ψ_j^{-1/2}‖₂` on the tangent
/// spaces.
pub fn mirror_block_bounds(game: &dyn MirrorGame, x_star: &DVector<f64>, samples: &[DVector<f64>]) -> Result<MirrorBounds> {
    use rayon::prelude::*;
    let psi = game.mirror_map();
    psi.check_interior(x_star)?;
    if samples.is_empty() {
        return Err(Error::invalid("at least one sample is required"));
    }
    let n = psi.n_players();
    let per: Vec<Result<(Vec<f64>, DMatrix<f64>)>> = samples
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let run = || -> Result<(Vec<f64>, DMatrix<f64>)> {
                let (nm, offs) = normalized_primal_jacobian(game, x)?;
                let blk = |i: usize, j: usize| {
                    nm.view((offs[i], offs[j]), (offs[i + 1] - offs[i], offs[j + 1] - offs[j])).into_owned()
                };
                let mut mu = Vec::with_capacity(n);
                let mut l = DMatrix::zeros(n, n);
                for i in 0..n {
                    let h = blk(i, i);
                    let asym = metric::relative_asymmetry(&h);
                    if asym > crate::region::HESSIAN_SYMMETRY_TOL {
                        return Err(Error::NotSymmetric {
                            what: format!("own Hessian of player {i}"),
                            asymmetry: asym,
                        });
                    }
                    mu.push(metric::sym_min_eig(&metric::sym_part(&h)));
                    for j in 0..n {
                        if i != j {
                            l[(i, j)] = metric::spectral_norm(&blk(i, j));
                        }
                    }
                }
                Ok((mu, l))
            };
            run().map_err(|e| e.at_sample(k))
        })
        .collect();
    let mut mu = vec![f64::INFINITY; n];
    let mut l = DMatrix::zeros(n, n);
    for r in per {
        let (m, c) = r?;
        for i in 0..n {
            mu[i] = mu[i].min(m[i]);
        }
        l = l.zip_map(&c, f64::max);
    }
    Ok(MirrorBounds {
        bounds: BlockBounds::new(mu, l)?,
        reference_point: x_star.iter().copied().collect(),
        sample_count: samples.len(),
    })
}

/// Lipschitz bound of the mirror field: `max_s ‖W^{1/2} N(s) W^{-1/2}‖₂`
/// with `N` the normalized primal Jacobian.
pub fn mirror_lipschitz(game: &dyn MirrorGame, w: &[f64], samples: &[DVector<f64>]) -> Result<f64> {
    use rayon::prelude::*;
    let psi = game.mirror_map();
    metric::check_weights(w, psi.n_players())?;
    let vals: Vec<Result<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let (nm, offs) = normalized_primal_jacobian(game, x).map_err(|e| e.at_sample(k))?;
            let scaled = DMatrix::from_fn(nm.nrows(), nm.ncols(), |r, c| {
                let pi = offs.iter().rposition(|&o| o <= r).unwrap();
                let pj = offs.iter().rposition(|&o| o <= c).unwrap();
                nm[(r, c)] * (w[pi] / w[pj]).sqrt()
            });
            Ok(metric::spectral_norm(&scaled))
        })
        .collect();
    vals.into_iter().try_fold(0.0, |acc, v| Ok(f64::max(acc, v?)))
}

/// `λ_min(H(w))` of the mirror gain matrix; negative means no certificate.
pub fn mirror_sgn_margin(bounds: &MirrorBounds, w: &[f64]) -> Result<f64> {
    sgn::normalized_margin(&bounds.bounds, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MirrorMethod {
    Euler,
    Rk4,
}

/// Dual vector field `ż = −P ∇_x f(softmax z)`, with `P` the per-simplex
/// centering.
pub fn dual_field(game: &dyn MirrorGame, z: &DVector<f64>) -> Result<DVector<f64>> {
    let psi = game.mirror_map();
    let x = psi.softmax(z)?;
    Ok(-psi.center(&game.primal_gradient(&x)?)?)
}

/// One dual step; logits are re-centered afterwards and no primal
/// projection is needed.
pub fn mirror_step(game: &dyn MirrorGame, z: &DVector<f64>, step: f64, method: MirrorMethod) -> Result<DVector<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("step size {step} must be positive")));
    }
    let psi = game.mirror_map();
    let next = match method {
        MirrorMethod::Euler => z + dual_field(game, z)? * step,
        MirrorMethod::Rk4 => {
            let k1 = dual_field(game, z)?;
            let k2 = dual_field(game, &(z + &k1 * (step / 2.0)))?;
            let k3 = dual_field(game, &(z + &k2 * (step / 2.0)))?;
            let k4 = dual_field(game, &(z + &k3 * step))?;
            z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0)
        }
    };
    psi.center(&next)
}

/// `V(x) = Σ_i w_i Σ_simplices KL(x*_i ‖ x_i)`.
pub fn lyapunov_v(psi: &MirrorMap, x: &DVector<f64>, x_star: &DVector<f64>, w: &[f64]) -> Result<f64> {
    psi.check_len(x)?;
    psi.check_len(x_star)?;
    metric::check_weights(w, psi.n_players())?;
    let mut v = 0.0;
    for (i, wi) in w.iter().enumerate() {
        for (o, m) in psi.player_segments(i) {
            v += wi * bregman_div(&x_star.as_slice()[o..o + m], &x.as_slice()[o..o + m])?;
        }
    }
    Ok(v)
}

/// Lyapunov values along a run with the certified per-step bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTrace {
    pub v: Vec<f64>,
    /// `V_0 q^k` with the certified factor `q`.
    pub bound: Vec<f64>,
}

impl LyapunovTrace {
    pub fn new(v: Vec<f64>, q: f64) -> Self {
        let v0 = v.first().copied().unwrap_or(0.0);
        let bound = (0..v.len()).map(|k| v0 * q.powi(k as i32)).collect();
        Self { v, bound }
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.v.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kl_examples() {
        assert_eq!(bregman_div(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let v = bregman_div(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert_relative_eq!(v, 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (5.0f64).ln(), epsilon = 1e-15);
        assert!((v - 0.5108).abs() < 1e-4);
        assert!(matches!(bregman_div(&[1.0, 0.0], &[0.5, 0.5]), Err(Error::Boundary(_))));
    }

    #[test]
    fn kl_keeps_relative_accuracy_near_reference() {
        for d in [1e-3, 1e-6, 1e-9] {
            let v = bregman_div(&[0.5 + d, 0.5 - d], &[0.5, 0.5]).unwrap();
            let exact = 2.0 * d * d + 4.0 / 3.0 * d.powi(4);
            assert_relative_eq!(v, exact, max_relative = 1e-6);
        }
        for u in [-0.5, -0.011, -0.009, 0.009, 0.011, 3.0] {
            assert_relative_eq!(phi(u), (1.0 + u) * (1.0f64 + u).ln() - u, max_relative = 1e-10);
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
        let p = softmax(&[500.0, -500.0]);
        assert!(p.iter().all(|v| v.is_finite() && *v >= SOFTMAX_FLOOR));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let z = [0.3, -1.2, 2.0];
        let back = centered_logits(&softmax(&z)).unwrap();
        let c = center(&z);
        for (a, b) in back.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fisher_examples() {
        let f = fisher_block(&[0.5, 0.5]).unwrap();
        assert_eq!(f, DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]));
        let f = fisher_block(&[0.2, 0.3, 0.5]).unwrap();
        for r in 0..3 {
            assert!(f.row(r).sum().abs() < 1e-16);
        }
        assert!(fisher_block(&[1e-13, 1.0 - 1e-13]).is_err());
    }

    #[test]
    fn gauge_basis_is_orthonormal_and_centered() {
        let psi = MirrorMap::new(vec![vec![2, 3], vec![4]]).unwrap();
        for i in 0..2 {
            let u = psi.gauge_basis(i);
            let k = u.ncols();
            assert!((u.transpose() * &u - DMatrix::identity(k, k)).amax() < 1e-14);
        }
        let u = psi.gauge_basis(0);
        assert!(u.view((0, 0), (2, 1)).sum().abs() < 1e-15);
        assert!(u.view((2, 1), (3, 2)).row_sum().amax() < 1e-15);
    }

    #[test]
    fn reduced_fisher_inverts_reduced_psi_hessian() {
        let psi = MirrorMap::tabular(1, 2, 3).unwrap();
        let x = DVector::from_vec(vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3]);
        let prod = psi.reduced_fisher(0, &x).unwrap() * psi.reduced_psi_hessian(0, &x).unwrap();
        assert!((prod - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn congruence_matches_generalized_eigenvalues() {
        let psi = MirrorMap::tabular(1, 2, 3).unwrap();
        let x = DVector::from_vec(vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3]);
        let h = psi.reduced_psi_hessian(0, &x).unwrap();
        let a = DMatrix::from_fn(4, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0 + if i == j { 2.0 } else { 0.0 });
        let a = metric::sym_part(&a);
        let roots = SpdRoots::new(&h, "test").unwrap();
        let congruent = metric::sym_min_eig(&metric::sym_part(&(&roots.inv_sqrt * &a * &roots.inv_sqrt)));
        let generalized = metric::general_eigenvalues(&(h.clone().try_inverse().unwrap() * &a))
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(congruent, generalized, epsilon = 1e-10);
    }

    struct Entropic {
        psi: MirrorMap,
        tau: f64,
    }

    impl MirrorGame for Entropic {
        fn mirror_map(&self) -> &MirrorMap {
            &self.psi
        }
        fn primal_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(x.map(|v| self.tau * (v.ln() + 1.0)))
        }
    }

    #[test]
    fn entropy_game_has_exact_bounds() {
        let g = Entropic {
            psi: MirrorMap::tabular(2, 1, 3).unwrap(),
            tau: 0.7,
        };
        let xs = DVector::from_vec(vec![1.0 / 3.0; 6]);
        let samples = vec![xs.clone(), DVector::from_vec(vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3])];
        let b = mirror_block_bounds(&g, &xs, &samples).unwrap();
        for i in 0..2 {
            assert!((b.bounds.mu()[i] - 0.7).abs() < 1e-6, "{:?}", b.bounds.mu());
        }
        assert!(b.bounds.coupling().amax() < 1e-8);
        assert!((mirror_sgn_margin(&b, &[1.0, 3.0]).unwrap() - b.bounds.mu_min()).abs() < 1e-12);
    }

    #[test]
    fn entropic_euler_contracts_kl() {
        let tau = 0.8;
        let g = Entropic {
            psi: MirrorMap::tabular(1, 1, 2).unwrap(),
            tau,
        };
        let xs = DVector::from_vec(vec![0.5, 0.5]);
        let eta = 1e-3;
        let mut z = g.psi.logits(&DVector::from_vec(vec![0.8, 0.2])).unwrap();
        let mut v = lyapunov_v(&g.psi, &g.psi.softmax(&z).unwrap(), &xs, &[1.0]).unwrap();
        for _ in 0..50 {
            z = mirror_step(&g, &z, eta, MirrorMethod::Euler).unwrap();
            let nv = lyapunov_v(&g.psi, &g.psi.softmax(&z).unwrap(), &xs, &[1.0]).unwrap();
            assert!(nv / v <= 1.0 - eta * tau + 10.0 * eta * eta);
            v = nv;
        }
    }

    #[test]
    fn zero_field_leaves_dual_point() {
        struct Zero(MirrorMap);
        impl MirrorGame for Zero {
            fn mirror_map(&self) -> &MirrorMap {
                &self.0
            }
            fn primal_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(DVector::from_element(x.len(), 3.0))
            }
        }
        let g = Zero(MirrorMap::tabular(2, 2, 2).unwrap());
        let z = g.0.center(&DVector::from_fn(8, |i, _| i as f64 * 0.1)).unwrap();
        for m in [MirrorMethod::Euler, MirrorMethod::Rk4] {
            assert!((mirror_step(&g, &z, 0.5, m).unwrap() - &z).amax() < 1e-15);
        }
    }

    #[test]
    fn lyapunov_is_additive_and_gauge_invariant() {
        let psi = MirrorMap::tabular(2, 2, 2).unwrap();
        let xs = psi.softmax(&DVector::zeros(8)).unwrap();
        let z = DVector::from_vec(vec![0.1, -0.1, 0.4, -0.4, 0.2, -0.2, -0.3, 0.3]);
        let x = psi.softmax(&z).unwrap();
        let w = [1.0, 2.5];
        let v = lyapunov_v(&psi, &x, &xs, &w).unwrap();
        let mut parts = 0.0;
        for (k, (o, m)) in psi.segments().into_iter().enumerate() {
            parts += w[k / 2] * bregman_div(&xs.as_slice()[o..o + m], &x.as_slice()[o..o + m]).unwrap();
        }
        assert_relative_eq!(v, parts, epsilon = 1e-15);
        let shifted = psi.softmax(&(z.clone() + DVector::from_vec(vec![5.0, 5.0, -2.0, -2.0, 0.0, 0.0, 1.0, 1.0]))).unwrap();
        assert_relative_eq!(lyapunov_v(&psi, &shifted, &xs, &w).unwrap(), v, epsilon = 1e-12);
        assert_eq!(lyapunov_v(&psi, &xs, &xs, &w).unwrap(), 0.0);
    }
}
