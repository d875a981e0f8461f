//! Property checks shared by the property suite and the acceptance run.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallgain::games::{self, GameModel, LqFamily, LqSpec, QuadraticGame};
use smallgain::integrators::{self, ConstraintSet, Method};
use smallgain::metric::{self, BlockStructure, Extreme, SpectralProbeConfig, WeightedMetric};
use smallgain::mirror::{self, MirrorMap};
use smallgain::region::{self, RegionSpec};
use smallgain::sgn::{self, BlockBounds};
use smallgain::Result;

pub type Check = std::result::Result<(), String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * 0.5
}

pub fn random_diag_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(0.2..5.0)))
}

pub fn random_metric(seed: u64, dims: &[usize], w: &[f64], diagonal: bool) -> WeightedMetric {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = dims
        .iter()
        .map(|&d| if diagonal { random_diag_spd(d, &mut rng) } else { random_spd(d, &mut rng) })
        .collect();
    WeightedMetric::new(BlockStructure::new(blocks).unwrap(), w.to_vec()).unwrap()
}

pub fn metric_norm_axioms(seed: u64, w: [f64; 2], u: Vec<f64>, v: Vec<f64>, c: f64) -> Check {
    let m = random_metric(seed, &[2, 3], &w, false);
    let (u, v) = (DVector::from_vec(u), DVector::from_vec(v));
    let nu = m.norm(&u).unwrap();
    let nv = m.norm(&v).unwrap();
    ensure(nu >= 0.0, || "negative norm".into())?;
    let scaled = m.norm(&(&u * c)).unwrap();
    ensure((scaled - c.abs() * nu).abs() <= 1e-10 * (1.0 + nu * c.abs()), || format!("homogeneity {scaled} vs {}", c.abs() * nu))?;
    let sum = m.norm(&(&u + &v)).unwrap();
    ensure(sum <= nu + nv + 1e-10 * (1.0 + nu + nv), || format!("triangle {sum} > {nu} + {nv}"))?;
    ensure(u.iter().any(|x| *x != 0.0) == (nu > 0.0), || "definiteness".into())
}

pub fn projection_nonexpansive(seed: u64, w: [f64; 2], x: Vec<f64>, y: Vec<f64>, use_box: bool) -> Check {
    let m = random_metric(seed, &[2, 2], &w, use_box);
    let set = if use_box {
        ConstraintSet::ProductBox {
            lower: vec![-1.0, -0.5, -2.0, 0.0],
            upper: vec![1.0, 0.5, 0.0, 3.0],
        }
    } else {
        ConstraintSet::MetricBall {
            center: vec![0.3, -0.2, 0.1, 0.0],
            radius: 1.5,
        }
    };
    let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
    let px = integrators::project_metric(&x, &set, &m).unwrap();
    let py = integrators::project_metric(&y, &set, &m).unwrap();
    let lhs = m.norm(&(px - py)).unwrap();
    let rhs = m.norm(&(x - y)).unwrap();
    ensure(lhs <= rhs + 1e-12 * (1.0 + rhs), || format!("{lhs} > {rhs}"))
}

pub fn bounds_from(mu: [f64; 2], l: [f64; 2]) -> BlockBounds {
    BlockBounds::two_player(mu[0], mu[1], l[0], l[1]).unwrap()
}

pub fn c_matrix_scaling_and_monotonicity(mu: [f64; 2], l: [f64; 2], w: [f64; 2], s: f64, a1: f64, a2: f64) -> Check {
    let b = bounds_from(mu, l);
    let sw = [w[0] * s, w[1] * s];
    let c = sgn::build_c(&b, &w, a1).unwrap();
    let cs = sgn::build_c(&b, &sw, a1).unwrap();
    ensure((cs - &c * s).amax() <= 1e-12 * s * (1.0 + c.amax()), || "C(sw) != s C(w)".into())?;
    let m1 = sgn::sgn_margin(&b, &w).unwrap();
    let m2 = sgn::sgn_margin(&b, &sw).unwrap();
    ensure(m1.feasible == m2.feasible && (m1.alpha - m2.alpha).abs() <= 2e-9, || format!("{m1:?} vs {m2:?}"))?;
    let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
    let e_lo = metric::sym_min_eig(&sgn::build_c(&b, &w, lo).unwrap());
    let e_hi = metric::sym_min_eig(&sgn::build_c(&b, &w, hi).unwrap());
    ensure(e_lo >= e_hi - 1e-12 * (1.0 + e_lo.abs()), || format!("λ_min not monotone: {e_lo} < {e_hi}"))
}

pub fn gershgorin_below_exact(mu: Vec<f64>, l: Vec<f64>, w: Vec<f64>) -> Check {
    let n = mu.len();
    let lm = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { l[i * n + j] });
    let b = BlockBounds::new(mu, lm).unwrap();
    let g = sgn::gershgorin_margin(&b, &w).unwrap();
    let m = sgn::sgn_margin(&b, &w).unwrap();
    if g > 0.0 {
        ensure(m.feasible && g <= m.alpha + 2e-9, || format!("gershgorin {g} above exact {m:?}"))?;
    }
    let nm = sgn::normalized_margin(&b, &w).unwrap();
    let probe = 0.5 * nm.abs();
    if sgn::normalized_gershgorin_check(&b, &w, probe).unwrap() {
        ensure(nm >= probe - 1e-12, || format!("normalized check passed but margin {nm} < {probe}"))?;
    }
    Ok(())
}

pub fn gershgorin_case(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = (0..n).map(|_| rng.gen_range(0.05..5.0)).collect();
    let l = (0..n * n).map(|_| rng.gen_range(0.0..2.0)).collect();
    let w = (0..n).map(|_| rng.gen_range(0.05..20.0)).collect();
    gershgorin_below_exact(mu, l, w)
}

pub fn band_matches_feasibility(mu: [f64; 2], l: [f64; 2], log_r: f64) -> Check {
    let b = bounds_from(mu, l);
    let r = log_r.exp();
    let band = sgn::two_player_band(&b, 0.0).unwrap();
    let near = |e: Option<f64>| e.is_some_and(|e| ((r - e) / e).abs() < 1e-6);
    if near(band.r_lo) || near(band.r_hi) {
        return Ok(());
    }
    let feas = sgn::sgn_margin(&b, &[1.0, r]).unwrap().feasible;
    ensure(band.contains(r) == feas, || format!("r = {r}: band {band:?} vs feasible {feas}"))
}

/// `F(x) = H x + κ x³` (elementwise cube) with two 3-dimensional players.
pub struct CubicGame {
    pub h: DMatrix<f64>,
    pub kappa: f64,
    pub structure: BlockStructure,
}

impl CubicGame {
    pub fn new(seed: u64, kappa: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-0.5..0.5));
        for i in 0..6 {
            for j in 0..i {
                if i / 3 == j / 3 {
                    h[(j, i)] = h[(i, j)];
                }
            }
            h[(i, i)] += 2.0;
        }
        Self {
            h,
            kappa,
            structure: BlockStructure::identity(&[3, 3]).unwrap(),
        }
    }
}

impl GameModel for CubicGame {
    fn structure(&self) -> &BlockStructure {
        &self.structure
    }
    fn eval_f(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.h * x + x.map(|v| self.kappa * v * v * v))
    }
    fn eval_jg(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-(&self.h + DMatrix::from_diagonal(&x.map(|v| 3.0 * self.kappa * v * v))))
    }
    fn equilibrium_hint(&self) -> Option<DVector<f64>> {
        Some(DVector::zeros(6))
    }
}

pub fn sampling_refinement_is_monotone(seed: u64, kappa: f64, budget: usize) -> Check {
    let g = CubicGame::new(seed, kappa);
    let region = RegionSpec::cube(vec![0.0; 6], 1.0);
    let coarse = region::sample_region(&region, budget, seed).unwrap();
    let fine = region::sample_region(&region, 2 * budget, seed).unwrap();
    ensure(fine[..budget] == coarse[..], || "refined sample set does not extend the coarse one".into())?;
    let bc = region::estimate_block_bounds(&g, &g.structure, &coarse).unwrap();
    let bf = region::estimate_block_bounds(&g, &g.structure, &fine).unwrap();
    for i in 0..2 {
        ensure(bf.mu()[i] <= bc.mu()[i], || format!("μ_{i} grew under refinement"))?;
        for j in 0..2 {
            ensure(bf.l(i, j) >= bc.l(i, j), || format!("L_{i}{j} shrank under refinement"))?;
        }
    }
    Ok(())
}

pub fn probe_matches_dense(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let s = (&a + a.transpose()) * 0.5;
    let scale = metric::spectral_norm(&s).max(1.0);
    for which in [Extreme::Min, Extreme::Max] {
        let dense = metric::extreme_eig(&s, which, &SpectralProbeConfig::dense()).unwrap();
        let lz = metric::extreme_eig(&s, which, &SpectralProbeConfig::lanczos(1e-12)).unwrap();
        ensure((dense - lz).abs() <= 1e-8 * scale, || format!("{which:?}: lanczos {lz} vs dense {dense}"))?;
    }
    Ok(())
}

pub fn small_lq(lambda: f64, seed: u64) -> (QuadraticGame, WeightedMetric) {
    let spec = LqSpec {
        block_dim: 4,
        seed,
        ..LqSpec::default()
    };
    let g = LqFamily::new(spec).unwrap().game(lambda).unwrap();
    let m = WeightedMetric::new(BlockStructure::identity(&[4, 4]).unwrap(), spec.balanced_weights()).unwrap();
    (g, m)
}

pub fn euler_contraction(lambda: f64, seed: u64, frac: f64, x: Vec<f64>, y: Vec<f64>) -> Check {
    let (g, m) = small_lq(lambda, seed);
    let mc = integrators::metric_constants(&g, &m).unwrap();
    if !mc.sgn_feasible || mc.alpha_sgn <= 0.0 {
        return Ok(());
    }
    let (a, b) = (mc.alpha_sgn, mc.beta);
    let eta = frac * 2.0 * a / (b * b);
    let (x, y) = (DVector::from_vec(x), DVector::from_vec(y));
    let d0 = m.norm(&(&x - &y)).unwrap();
    if d0 == 0.0 {
        return Ok(());
    }
    let set = ConstraintSet::Unconstrained;
    let tx = integrators::euler_step(&g, &x, eta, &set, &m).unwrap();
    let ty = integrators::euler_step(&g, &y, eta, &set, &m).unwrap();
    let factor = m.norm(&(tx - ty)).unwrap() / d0;
    let bound = sgn::euler_factor(a, b, eta);
    ensure(factor <= bound + 1e-9, || format!("factor {factor} > bound {bound}"))
}

pub fn forward_invariance(lambda: f64, seed: u64, frac: f64, x0: Vec<f64>) -> Check {
    let (g, m) = small_lq(lambda, seed);
    let mc = integrators::metric_constants(&g, &m).unwrap();
    if !mc.sgn_feasible || mc.alpha_sgn <= 0.0 {
        return Ok(());
    }
    let eta = frac * 2.0 * mc.alpha_sgn / (mc.beta * mc.beta);
    let radius = 2.0;
    let mut x0 = DVector::from_vec(x0);
    let n0 = m.norm(&x0).unwrap();
    if n0 > radius {
        x0 *= radius / n0;
    }
    let traj = integrators::run_dynamics(&g, &x0, 50, Method::Euler, eta, &ConstraintSet::Unconstrained, &m, None).unwrap();
    ensure(traj.metric_dists.iter().all(|d| *d <= radius * (1.0 + 1e-12)), || "iterate left the ball".into())
}

pub fn euler_matches_matrix_powers(lambda: f64, seed: u64, step: f64, x0: Vec<f64>) -> Check {
    let (g, m) = small_lq(lambda, seed);
    let t = integrators::one_step_matrix(&g, Method::Euler, step).unwrap();
    let x0 = DVector::from_vec(x0);
    let traj = integrators::run_dynamics(&g, &x0, 10, Method::Euler, step, &ConstraintSet::Unconstrained, &m, None).unwrap();
    let mut x = x0.clone();
    for (k, it) in traj.iterates.iter().enumerate() {
        let scale = 1.0 + x.amax();
        ensure((it - &x).amax() <= 1e-12 * scale, || format!("step {k} differs"))?;
        x = &t * x;
    }
    Ok(())
}

pub fn mirror_identities(z: Vec<f64>, shift: Vec<f64>, w: [f64; 2]) -> Check {
    let psi = MirrorMap::tabular(2, 2, 2).unwrap();
    let z = DVector::from_vec(z);
    let x = psi.softmax(&z).unwrap();
    for (o, m) in psi.segments() {
        let s: f64 = x.rows(o, m).sum();
        ensure((s - 1.0).abs() <= 1e-14, || format!("softmax sums to {s}"))?;
    }
    let x_star = psi.softmax(&DVector::from_vec(vec![0.2, -0.2, 0.0, 0.0, -0.1, 0.1, 0.3, -0.3])).unwrap();
    let v = mirror::lyapunov_v(&psi, &x, &x_star, &w).unwrap();
    ensure(v >= 0.0, || "negative V".into())?;
    let mut gauge = DVector::zeros(8);
    for (k, (o, m)) in psi.segments().into_iter().enumerate() {
        gauge.rows_mut(o, m).fill(shift[k]);
    }
    let xs = psi.softmax(&(&z + gauge)).unwrap();
    let vs = mirror::lyapunov_v(&psi, &xs, &x_star, &w).unwrap();
    ensure((v - vs).abs() <= 1e-12 * (1.0 + v), || format!("V not gauge invariant: {v} vs {vs}"))?;
    for (o, m) in psi.segments() {
        let zs: Vec<f64> = z.rows(o, m).iter().copied().collect();
        let f = mirror::fisher_block(&mirror::softmax(&zs)).unwrap();
        let lse_hess = lse_hessian(&zs);
        ensure((f - lse_hess).amax() <= 1e-10, || "Fisher differs from the log-sum-exp Hessian".into())?;
    }
    Ok(())
}

/// Jacobian of softmax by Richardson-extrapolated central differences.
fn lse_hessian(z: &[f64]) -> DMatrix<f64> {
    let m = z.len();
    let mut h = DMatrix::zeros(m, m);
    for j in 0..m {
        let d = |s: f64| {
            let mut zp = z.to_vec();
            zp[j] += s;
            let mut zm = z.to_vec();
            zm[j] -= s;
            let (p, q) = (mirror::softmax(&zp), mirror::softmax(&zm));
            DVector::from_fn(m, |i, _| (p[i] - q[i]) / (2.0 * s))
        };
        let col = (d(5e-4) * 4.0 - d(1e-3)) / 3.0;
        h.set_column(j, &col);
    }
    h
}

pub fn decoupled_spd_margin(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = vec![rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)];
    let b = BlockBounds::decoupled(mu.clone()).unwrap();
    let got = sgn::sgn_margin(&b, &[1.0, rng.gen_range(0.1..10.0)]).unwrap().alpha;
    let want = mu[0].min(mu[1]);
    ensure((got - want).abs() <= 2e-9, || format!("{got} vs {want}"))
}

pub fn lq_exact_bounds(lambda: f64, seed: u64) -> BlockBounds {
    let (g, m) = small_lq(lambda, seed);
    games::exact_block_bounds(&g, m.structure()).unwrap()
}

pub fn vecf(n: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, n)
}

pub fn weights() -> impl Strategy<Value = [f64; 2]> {
    (0.01f64..100.0, 0.01f64..100.0).prop_map(|(a, b)| [a, b])
}

pub fn mus() -> impl Strategy<Value = [f64; 2]> {
    (0.05f64..5.0, 0.05f64..5.0).prop_map(|(a, b)| [a, b])
}

pub fn couplings() -> impl Strategy<Value = [f64; 2]> {
    (0.0f64..5.0, 0.0f64..5.0).prop_map(|(a, b)| [a, b])
}

