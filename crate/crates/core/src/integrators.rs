//! Projected Euler and RK4 in the block metric, one-step matrices of
//! linear games, stability thresholds and phase diagrams.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{GameModel, LqFamily, QuadraticGame};
use crate::metric::{self, BlockStructure, WeightedMetric};
use crate::sgn;

/// Metric distance above which a run is flagged as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Substeps per recorded step of the fine flow reference.
pub const FLOW_SUBSTEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintSet {
    #[default]
    Unconstrained,
    /// Coordinatewise bounds on the joint vector.
    ProductBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Ball of the given radius in `M(w)`.
    MetricBall { center: Vec<f64>, radius: f64 },
}

impl ConstraintSet {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ConstraintSet::Unconstrained => Ok(()),
            ConstraintSet::ProductBox { lower, upper } => {
                for v in [lower, upper] {
                    if v.len() != dim {
                        return Err(Error::Dimension { expected: dim, found: v.len() });
                    }
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(Error::invalid("box bounds must satisfy lower <= upper"));
                }
                Ok(())
            }
            ConstraintSet::MetricBall { center, radius } => {
                if center.len() != dim {
                    return Err(Error::Dimension { expected: dim, found: center.len() });
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::invalid("ball radius must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Metric projection onto the constraint set.
///
/// Boxes are projected by clamping, which is the `M(w)` projection only
/// when every `P_i` is diagonal.
pub fn project_metric(x: &DVector<f64>, set: &ConstraintSet, m: &WeightedMetric) -> Result<DVector<f64>> {
    m.structure().check_vector(x)?;
    set.validate(x.len())?;
    match set {
        ConstraintSet::Unconstrained => Ok(x.clone()),
        ConstraintSet::ProductBox { lower, upper } => {
            if !m.structure().is_diagonal() {
                return Err(Error::Unsupported(
                    "product-box projection in a metric with non-diagonal blocks".into(),
                ));
            }
            Ok(DVector::from_iterator(
                x.len(),
                x.iter().enumerate().map(|(k, v)| v.clamp(lower[k], upper[k])),
            ))
        }
        ConstraintSet::MetricBall { center, radius } => {
            let c = DVector::from_column_slice(center);
            let d = x - &c;
            let n = m.norm(&d)?;
            if n <= *radius {
                Ok(x.clone())
            } else {
                Ok(c + d * (radius / n))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
    /// RK4 with `FLOW_SUBSTEPS` substeps per recorded step.
    FlowRk4Fine,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
            Method::FlowRk4Fine => "flow-rk4-fine",
        }
    }
}

pub fn euler_step(
    game: &dyn GameModel,
    x: &DVector<f64>,
    eta: f64,
    set: &ConstraintSet,
    m: &WeightedMetric,
) -> Result<DVector<f64>> {
    check_step(eta)?;
    let g = game.eval_g(x)?;
    project_metric(&(x + g * eta), set, m)
}

/// Unprojected classical RK4 map `Φ_h` of `ẋ = G(x)`.
pub fn rk4_flow_map(game: &dyn GameModel, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let k1 = game.eval_g(x)?;
    let k2 = game.eval_g(&(x + &k1 * (h / 2.0)))?;
    let k3 = game.eval_g(&(x + &k2 * (h / 2.0)))?;
    let k4 = game.eval_g(&(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

pub fn rk4_step(
    game: &dyn GameModel,
    x: &DVector<f64>,
    h: f64,
    set: &ConstraintSet,
    m: &WeightedMetric,
) -> Result<DVector<f64>> {
    check_step(h)?;
    project_metric(&rk4_flow_map(game, x, h)?, set, m)
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("step size {h} must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iterates: Vec<DVector<f64>>,
    /// `‖x_k − x*‖_M` for every stored iterate.
    pub metric_dists: Vec<f64>,
    /// `dist[k+1]/dist[k]`, absent when `dist[k] = 0`.
    pub step_factors: Vec<Option<f64>>,
    pub lyapunov: Option<Vec<f64>>,
    pub method: Method,
    pub step_size: f64,
    pub diverged: bool,
}

impl TrajectoryRecord {
    pub fn max_factor(&self) -> f64 {
        self.step_factors.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }
}

/// Runs `steps` steps of the chosen method and records metric distances to
/// `x*` (the game's equilibrium hint when not given).
#[allow(clippy::too_many_arguments)]
pub fn run_dynamics(
    game: &dyn GameModel,
    x0: &DVector<f64>,
    steps: usize,
    method: Method,
    step: f64,
    set: &ConstraintSet,
    m: &WeightedMetric,
    x_star: Option<&DVector<f64>>,
) -> Result<TrajectoryRecord> {
    check_step(step)?;
    m.structure().check_vector(x0)?;
    let x_star = match x_star {
        Some(x) => x.clone(),
        None => game
            .equilibrium_hint()
            .ok_or_else(|| Error::invalid("no reference point given and the game has no equilibrium hint"))?,
    };
    let dist = |x: &DVector<f64>| m.norm(&(x - &x_star));
    let mut iterates = vec![x0.clone()];
    let mut metric_dists = vec![dist(x0)?];
    let mut diverged = false;
    let mut x = x0.clone();
    for _ in 0..steps {
        x = match method {
            Method::Euler => euler_step(game, &x, step, set, m)?,
            Method::Rk4 => rk4_step(game, &x, step, set, m)?,
            Method::FlowRk4Fine => {
                let sub = step / FLOW_SUBSTEPS as f64;
                let mut y = x;
                for _ in 0..FLOW_SUBSTEPS {
                    y = rk4_step(game, &y, sub, set, m)?;
                }
                y
            }
        };
        let d = dist(&x)?;
        iterates.push(x.clone());
        metric_dists.push(d);
        if !(d <= DIVERGENCE_GUARD) {
            diverged = true;
            break;
        }
    }
    let step_factors = metric_dists
        .windows(2)
        .map(|w| if w[0] > 0.0 { Some(w[1] / w[0]) } else { None })
        .collect();
    Ok(TrajectoryRecord {
        iterates,
        metric_dists,
        step_factors,
        lyapunov: None,
        method,
        step_size: step,
        diverged,
    })
}

/// Stability polynomial `R(z)` of one step applied to `ż = λ z`, at `z = hλ`.
pub fn stability_polynomial(method: Method, z: Complex<f64>) -> Complex<f64> {
    let one = Complex::new(1.0, 0.0);
    match method {
        Method::Euler => one + z,
        Method::Rk4 => rk4_poly(z),
        Method::FlowRk4Fine => {
            let r = rk4_poly(z / FLOW_SUBSTEPS as f64);
            r.powu(FLOW_SUBSTEPS as u32)
        }
    }
}

fn rk4_poly(z: Complex<f64>) -> Complex<f64> {
    let one = Complex::new(1.0, 0.0);
    (((z / 24.0 + one / 6.0) * z + one / 2.0) * z + one) * z + one
}

/// Scalar `R(z) = 1 + z + z²/2 + z³/6 + z⁴/24`.
pub fn rk4_stability_function(z: f64) -> f64 {
    (((z / 24.0 + 1.0 / 6.0) * z + 0.5) * z + 1.0) * z + 1.0
}

/// Linear one-step map of an unconstrained quadratic game.
pub fn one_step_matrix(game: &dyn GameModel, method: Method, step: f64) -> Result<DMatrix<f64>> {
    let q = game
        .as_quadratic()
        .ok_or_else(|| Error::Unsupported("one-step matrices exist only for quadratic games".into()))?;
    check_step(step)?;
    let d = q.h().nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let horner = |z: &DMatrix<f64>| (((z / 24.0 + &id / 6.0) * z + &id / 2.0) * z + &id) * z + &id;
    Ok(match method {
        Method::Euler => &id - q.h() * step,
        Method::Rk4 => horner(&(q.h() * -step)),
        Method::FlowRk4Fine => {
            let sub = horner(&(q.h() * (-step / FLOW_SUBSTEPS as f64)));
            (0..FLOW_SUBSTEPS).fold(id.clone(), |acc, _| acc * &sub)
        }
    })
}

/// Spectral radius of the one-step map, through the eigenvalues of `H`.
pub struct StepSpectrum {
    eigs: Vec<Complex<f64>>,
    method: Method,
}

impl StepSpectrum {
    pub fn new(game: &QuadraticGame, method: Method) -> Self {
        Self {
            eigs: metric::general_eigenvalues(game.h()),
            method,
        }
    }

    pub fn rho(&self, h: f64) -> f64 {
        self.eigs
            .iter()
            .map(|l| stability_polynomial(self.method, -l * h).norm())
            .fold(0.0, f64::max)
    }

    /// Largest `h` in the first stable interval, or zero if none.
    pub fn threshold(&self, h_max_search: f64) -> f64 {
        const SCAN: usize = 4000;
        let h0 = h_max_search * 1e-6;
        if !(self.rho(h0) < 1.0) {
            return 0.0;
        }
        let ratio = (h_max_search / h0).powf(1.0 / SCAN as f64);
        let mut lo = h0;
        let mut hi = None;
        for k in 1..=SCAN {
            let h = h0 * ratio.powi(k as i32);
            if self.rho(h) < 1.0 {
                lo = h;
            } else {
                hi = Some(h);
                break;
            }
        }
        let Some(mut hi) = hi else {
            return h_max_search;
        };
        while hi - lo > 1e-6 * lo {
            let mid = 0.5 * (lo + hi);
            if self.rho(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Largest step with `ρ(T(h)) < 1`, by scan then bisection to 1e-6
/// relative; zero when every searched step is unstable.
pub fn stability_threshold(game: &dyn GameModel, method: Method, h_max_search: f64) -> Result<f64> {
    let q = game
        .as_quadratic()
        .ok_or_else(|| Error::Unsupported("stability thresholds need a quadratic game".into()))?;
    check_step(h_max_search)?;
    Ok(StepSpectrum::new(q, method).threshold(h_max_search))
}

/// Certified margin and Lipschitz bound of a quadratic game in a fixed metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConstants {
    pub alpha_sgn: f64,
    pub sgn_feasible: bool,
    pub alpha_true: f64,
    pub beta: f64,
}

pub fn metric_constants(game: &QuadraticGame, m: &WeightedMetric) -> Result<MetricConstants> {
    let bounds = crate::games::exact_block_bounds(game, m.structure())?;
    let sm = sgn::sgn_margin(&bounds, m.weights())?;
    let roots = m.roots();
    Ok(MetricConstants {
        alpha_sgn: sm.alpha,
        sgn_feasible: sm.feasible,
        alpha_true: metric::min_sym_eig_with_roots(game.h(), &roots)?,
        beta: metric::spectral_norm(&roots.similarity(game.h())),
    })
}

/// Certified step for the method: `2α/β²` for Euler, `C4/β` for RK4.
pub fn certified_step(method: Method, alpha: f64, beta: f64, c4: f64) -> Option<f64> {
    if !(alpha > 0.0) {
        return None;
    }
    Some(match method {
        Method::Euler => 2.0 * alpha / (beta * beta),
        Method::Rk4 | Method::FlowRk4Fine => c4 / beta,
    })
}

/// `(log ρ over the h grid, certified step, empirical threshold)` for one λ.
type PhaseRowData = (Vec<f64>, Option<f64>, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub method: Method,
    pub lambda_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
    /// `log ρ(T(λ, h))`, rows indexed by λ.
    pub log_rho: Vec<Vec<f64>>,
    pub sgn_step_curve: Vec<Option<f64>>,
    pub stability_curve: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    !v.is_empty() && v.windows(2).all(|w| w[0] < w[1])
}

/// Phase diagram of the LQ family in the metric with the given weights.
pub fn phase_diagram(
    family: &LqFamily,
    weights: &[f64],
    lambda_grid: &[f64],
    h_grid: &[f64],
    method: Method,
    c4: f64,
) -> Result<PhaseDiagram> {
    if !strictly_increasing(lambda_grid) || !strictly_increasing(h_grid) {
        return Err(Error::invalid("phase-diagram grids must be nonempty and strictly increasing"));
    }
    let n = family.spec().block_dim;
    let m = WeightedMetric::new(BlockStructure::identity(&[n, n])?, weights.to_vec())?;
    let h_search = h_grid[h_grid.len() - 1].max(10.0);
    let rows: Vec<Result<PhaseRowData>> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let game = family.game(lambda)?;
            let spec = StepSpectrum::new(&game, method);
            let log_rho = h_grid.iter().map(|&h| spec.rho(h).ln()).collect();
            let mc = metric_constants(&game, &m)?;
            let cert = certified_step(method, if mc.sgn_feasible { mc.alpha_sgn } else { 0.0 }, mc.beta, c4);
            Ok((log_rho, cert, spec.threshold(h_search)))
        })
        .collect();
    let mut out = PhaseDiagram {
        method,
        lambda_grid: lambda_grid.to_vec(),
        h_grid: h_grid.to_vec(),
        log_rho: Vec::new(),
        sgn_step_curve: Vec::new(),
        stability_curve: Vec::new(),
    };
    for r in rows {
        let (lr, c, s) = r?;
        out.log_rho.push(lr);
        out.sgn_step_curve.push(c);
        out.stability_curve.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{canonical_lq, two_player_scalar_example, LqSpec};
    use approx::assert_relative_eq;

    fn id_game(n: usize) -> QuadraticGame {
        QuadraticGame::new(DMatrix::identity(n, n), &vec![1; n]).unwrap()
    }

    fn euclid(n: usize) -> WeightedMetric {
        WeightedMetric::uniform(BlockStructure::identity(&vec![1; n]).unwrap())
    }

    #[test]
    fn projection_examples() {
        let m = euclid(2);
        let ball = ConstraintSet::MetricBall {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let p = project_metric(&DVector::from_vec(vec![3.0, 4.0]), &ball, &m).unwrap();
        assert!((p - DVector::from_vec(vec![0.6, 0.8])).amax() < 1e-15);
        let inside = DVector::from_vec(vec![0.1, -0.2]);
        assert_eq!(project_metric(&inside, &ball, &m).unwrap(), inside);
        let bx = ConstraintSet::ProductBox {
            lower: vec![-1.0, 0.0],
            upper: vec![1.0, 0.5],
        };
        assert_eq!(
            project_metric(&DVector::from_vec(vec![2.0, -3.0]), &bx, &m).unwrap(),
            DVector::from_vec(vec![1.0, 0.0])
        );
    }

    #[test]
    fn box_with_full_block_is_unsupported() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = WeightedMetric::uniform(BlockStructure::new(vec![p]).unwrap());
        let bx = ConstraintSet::ProductBox {
            lower: vec![0.0; 2],
            upper: vec![1.0; 2],
        };
        assert!(matches!(
            project_metric(&DVector::zeros(2), &bx, &m),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn scalar_euler_matches_bound() {
        let g = id_game(1);
        let m = euclid(1);
        let x = euler_step(&g, &DVector::from_vec(vec![1.0]), 0.5, &ConstraintSet::Unconstrained, &m).unwrap();
        assert_eq!(x[0], 0.5);
        assert_relative_eq!(sgn::euler_factor(1.0, 1.0, 0.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rk4_matches_polynomial() {
        let g = canonical_lq(&LqSpec {
            block_dim: 5,
            ..LqSpec::default()
        })
        .unwrap();
        let m = euclid(10);
        let x = DVector::from_fn(10, |i, _| (i as f64 * 0.37).sin());
        for h in [0.01, 0.3, 1.4] {
            let step = rk4_step(&g, &x, h, &ConstraintSet::Unconstrained, &m).unwrap();
            let t = one_step_matrix(&g, Method::Rk4, h).unwrap();
            assert!((step - t * &x).amax() < 1e-12 * (1.0 + x.amax()));
        }
    }

    #[test]
    fn one_step_examples() {
        let g = id_game(3);
        assert!(one_step_matrix(&g, Method::Euler, 1.0).unwrap().amax() < 1e-15);
        let t = one_step_matrix(&g, Method::Rk4, 0.7).unwrap();
        assert_relative_eq!(t[(1, 1)], rk4_stability_function(-0.7), epsilon = 1e-15);
    }

    #[test]
    fn thresholds_for_identity() {
        let g = id_game(2);
        assert!((stability_threshold(&g, Method::Euler, 10.0).unwrap() - 2.0).abs() < 2e-6);
        let h4 = stability_threshold(&g, Method::Rk4, 10.0).unwrap();
        assert!((h4 - 2.785).abs() < 1e-3, "{h4}");
    }

    #[test]
    fn spectrum_route_matches_matrix_route() {
        let g = canonical_lq(&LqSpec {
            block_dim: 4,
            lambda: 1.2,
            ..LqSpec::default()
        })
        .unwrap();
        for method in [Method::Euler, Method::Rk4] {
            let s = StepSpectrum::new(&g, method);
            for h in [0.05, 0.4, 1.1, 2.0] {
                let direct = metric::spectral_radius(&one_step_matrix(&g, method, h).unwrap());
                assert!((s.rho(h) - direct).abs() < 1e-9 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn unstable_everywhere_gives_zero() {
        let g = QuadraticGame::new(DMatrix::from_row_slice(1, 1, &[-1.0]), &[1]).unwrap();
        assert_eq!(stability_threshold(&g, Method::Euler, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_steps_keep_start() {
        let g = id_game(2);
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let r = run_dynamics(&g, &x0, 0, Method::Euler, 0.1, &ConstraintSet::Unconstrained, &euclid(2), None).unwrap();
        assert_eq!(r.iterates, vec![x0]);
        assert!(r.step_factors.is_empty());
    }

    #[test]
    fn euclidean_euler_on_scalar_example_blows_up() {
        let g = two_player_scalar_example();
        let b = crate::games::exact_block_bounds(&g, &BlockStructure::identity(&[1, 1]).unwrap()).unwrap();
        let w = [1.0, 200.0];
        let m_sgn = WeightedMetric::new(BlockStructure::identity(&[1, 1]).unwrap(), w.to_vec()).unwrap();
        let mc = metric_constants(&g, &m_sgn).unwrap();
        assert!(sgn::sgn_margin(&b, &w).unwrap().feasible);
        let eta = 2.0 * mc.alpha_sgn / (mc.beta * mc.beta);
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let r = run_dynamics(&g, &x0, 200, Method::Euler, 1.9 * eta, &ConstraintSet::Unconstrained, &euclid(2), None).unwrap();
        let peak = r.metric_dists.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 3.0 * r.metric_dists[0], "Euclidean view should show a large excursion");
    }

    #[test]
    fn divergence_is_flagged() {
        let g = QuadraticGame::new(DMatrix::from_row_slice(1, 1, &[-1.0]), &[1]).unwrap();
        let r = run_dynamics(&g, &DVector::from_vec(vec![1.0]), 10_000, Method::Euler, 1.0, &ConstraintSet::Unconstrained, &euclid(1), None)
            .unwrap();
        assert!(r.diverged);
        assert!(r.iterates.len() < 100);
    }

    #[test]
    fn flow_fine_tracks_exponential() {
        let g = id_game(1);
        let r = run_dynamics(&g, &DVector::from_vec(vec![1.0]), 3, Method::FlowRk4Fine, 0.5, &ConstraintSet::Unconstrained, &euclid(1), None)
            .unwrap();
        assert_relative_eq!(r.metric_dists[3], (-1.5f64).exp(), epsilon = 1e-10);
    }
}
