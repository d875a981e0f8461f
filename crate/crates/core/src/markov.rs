//! Two-player tabular Markov game with softmax policies.
//!
//! Both players share the reward and minimize
//! `f_i = −J_i`, `J_i = c·ρ₀ᵀV_π − τ Σ_s Σ_a π_i(a|s) log π_i(a|s)`,
//! where `V_π` is the exact reward value and `c` is `1 − γ` under the
//! default normalization. Logits are indexed `i·S·A + s·A + a`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::GameModel;
use crate::metric::BlockStructure;
use crate::mirror::{self, MirrorBounds, MirrorGame, MirrorMap};
use crate::region::{self, RegionSpec};
use crate::sgn::{self, WeightStrategy};

/// Bellman residual tolerated by the exact solves.
pub const BELLMAN_RESIDUAL_TOL: f64 = 1e-12;
/// Base step of the finite-difference pseudo-gradient.
pub const FD_STEP: f64 = 1e-5;
/// Distance threshold of the step-size sweep.
pub const SWEEP_DIST_THRESHOLD: f64 = 1.0;
/// Small-gradient stopping criterion.
pub const SMALL_GRADIENT_TOL: f64 = 1e-6;

const DIVERGENCE_LOGIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ValueNormalization {
    /// Value term scaled by `1 − γ`.
    #[default]
    Normalized,
    Unnormalized,
}

/// Transition probabilities of the two-state coordination kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    /// Stay probability after the joint action `(s, s)`.
    pub stay_coordinated: f64,
    /// Flip probability after `(1 − s, 1 − s)`.
    pub flip_opposite: f64,
    /// Flip probability after a mismatch.
    pub flip_mismatch: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            stay_coordinated: 0.9,
            flip_opposite: 0.9,
            flip_mismatch: 0.9,
        }
    }
}

/// Shared-reward Markov game; `reward[s][a1][a2]`, `transition[s][a1][a2][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovGameSpec {
    pub n_states: usize,
    pub actions_per_player: usize,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    pub gamma: f64,
    pub tau: f64,
    pub initial_dist: Vec<f64>,
    #[serde(default)]
    pub normalization: ValueNormalization,
}

/// Coordination game: `+1` on matching actions, `−1` otherwise.
pub fn coordination_game(kernel: KernelParams, gamma: f64, tau: f64) -> Result<MarkovGameSpec> {
    let mut reward = vec![vec![vec![0.0; 2]; 2]; 2];
    let mut transition = vec![vec![vec![vec![0.0; 2]; 2]; 2]; 2];
    for s in 0..2 {
        for a1 in 0..2 {
            for a2 in 0..2 {
                reward[s][a1][a2] = if a1 == a2 { 1.0 } else { -1.0 };
                let flip = if a1 != a2 {
                    kernel.flip_mismatch
                } else if a1 == s {
                    1.0 - kernel.stay_coordinated
                } else {
                    kernel.flip_opposite
                };
                transition[s][a1][a2][1 - s] = flip;
                transition[s][a1][a2][s] = 1.0 - flip;
            }
        }
    }
    let spec = MarkovGameSpec {
        n_states: 2,
        actions_per_player: 2,
        reward,
        transition,
        gamma,
        tau,
        initial_dist: vec![0.5, 0.5],
        normalization: ValueNormalization::Normalized,
    };
    spec.validate()?;
    Ok(spec)
}

/// `γ = 0.9`, `τ = 1`, stickiness 0.9.
pub fn default_coordination_game() -> MarkovGameSpec {
    coordination_game(KernelParams::default(), 0.9, 1.0).expect("default kernel is valid")
}

impl MarkovGameSpec {
    pub fn validate(&self) -> Result<()> {
        let (s_n, a_n) = (self.n_states, self.actions_per_player);
        if s_n == 0 || a_n < 2 {
            return Err(Error::invalid("need at least one state and two actions"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("discount {} must lie in [0, 1)", self.gamma)));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid(format!("entropy weight {} must be nonnegative", self.tau)));
        }
        let dist_ok = self.initial_dist.len() == s_n
            && self.initial_dist.iter().all(|p| *p >= 0.0)
            && (self.initial_dist.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        if !dist_ok {
            return Err(Error::invalid("initial distribution must be a probability vector over states"));
        }
        let shape_ok = self.reward.len() == s_n
            && self.transition.len() == s_n
            && self.reward.iter().all(|r| r.len() == a_n && r.iter().all(|row| row.len() == a_n))
            && self
                .transition
                .iter()
                .all(|t| t.len() == a_n && t.iter().all(|row| row.len() == a_n && row.iter().all(|p| p.len() == s_n)));
        if !shape_ok {
            return Err(Error::invalid("reward or transition tensor has the wrong shape"));
        }
        for (s, t) in self.transition.iter().enumerate() {
            for (a1, row) in t.iter().enumerate() {
                for (a2, p) in row.iter().enumerate() {
                    let sum: f64 = p.iter().sum();
                    if p.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-12 {
                        return Err(Error::invalid(format!("transition row ({s}, {a1}, {a2}) is not stochastic")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Logits per player.
    pub fn player_dim(&self) -> usize {
        self.n_states * self.actions_per_player
    }

    pub fn total_dim(&self) -> usize {
        2 * self.player_dim()
    }

    pub fn value_scale(&self) -> f64 {
        match self.normalization {
            ValueNormalization::Normalized => 1.0 - self.gamma,
            ValueNormalization::Unnormalized => 1.0,
        }
    }

    /// Whether swapping the two players leaves reward and kernel unchanged.
    pub fn is_player_symmetric(&self) -> bool {
        let a_n = self.actions_per_player;
        (0..self.n_states).all(|s| {
            (0..a_n).all(|a| {
                (0..a_n).all(|b| self.reward[s][a][b] == self.reward[s][b][a] && self.transition[s][a][b] == self.transition[s][b][a])
            })
        })
    }
}

/// Joint logits, centered per (player, state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    theta: DVector<f64>,
}

impl PolicyParams {
    pub fn new(spec: &MarkovGameSpec, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != spec.total_dim() {
            return Err(Error::Dimension {
                expected: spec.total_dim(),
                found: theta.len(),
            });
        }
        let psi = mirror_map(spec)?;
        Ok(Self { theta: psi.center(&theta)? })
    }

    pub fn uniform(spec: &MarkovGameSpec) -> Self {
        Self {
            theta: DVector::zeros(spec.total_dim()),
        }
    }

    /// Uniform draws in `[−half_width, half_width]`, then centered.
    pub fn random(spec: &MarkovGameSpec, half_width: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = DVector::from_fn(spec.total_dim(), |_, _| rng.gen_range(-half_width..=half_width));
        Self::new(spec, theta)
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.theta
    }
}

fn mirror_map(spec: &MarkovGameSpec) -> Result<MirrorMap> {
    MirrorMap::tabular(2, spec.n_states, spec.actions_per_player)
}

/// Exact policy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSolution {
    /// Reward value `V_π(s)`, shared by both players.
    pub v: Vec<f64>,
    /// `Q(s, a1, a2)` flattened in row-major order.
    pub q: Vec<f64>,
    /// Discounted occupancy `d = (I − γP_πᵀ)⁻¹ρ₀`, summing to `1/(1 − γ)`.
    pub occupancy: Vec<f64>,
    /// Objectives `J_i` (maximized).
    pub j: Vec<f64>,
    pub residual: f64,
}

struct Joint<'a> {
    spec: &'a MarkovGameSpec,
    x: &'a [f64],
}

impl Joint<'_> {
    fn pi(&self, i: usize, s: usize, a: usize) -> f64 {
        let (sd, ad) = (self.spec.n_states, self.spec.actions_per_player);
        self.x[i * sd * ad + s * ad + a]
    }
}

fn check_policy_entries(x: &[f64]) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !(**v >= mirror::INTERIOR_TOL)) {
        return Err(Error::Boundary(format!("policy probability {v:e} is below {:e}", mirror::INTERIOR_TOL)));
    }
    Ok(())
}

fn evaluate(spec: &MarkovGameSpec, x: &[f64]) -> Result<ValueSolution> {
    let (sd, ad) = (spec.n_states, spec.actions_per_player);
    let jt = Joint { spec, x };
    let mut r_pi = DVector::zeros(sd);
    let mut p_pi = DMatrix::zeros(sd, sd);
    for s in 0..sd {
        for a in 0..ad {
            for b in 0..ad {
                let p = jt.pi(0, s, a) * jt.pi(1, s, b);
                r_pi[s] += p * spec.reward[s][a][b];
                for t in 0..sd {
                    p_pi[(s, t)] += p * spec.transition[s][a][b][t];
                }
            }
        }
    }
    let a_mat = DMatrix::identity(sd, sd) - &p_pi * spec.gamma;
    let lu = a_mat.clone().lu();
    let v = lu.solve(&r_pi).ok_or_else(|| Error::Singular("Bellman system".into()))?;
    let residual = (&a_mat * &v - &r_pi).amax();
    if !(residual <= BELLMAN_RESIDUAL_TOL * (1.0 + r_pi.amax())) {
        return Err(Error::Singular(format!("Bellman residual {residual:e}")));
    }
    let rho = DVector::from_column_slice(&spec.initial_dist);
    let d = a_mat
        .transpose()
        .lu()
        .solve(&rho)
        .ok_or_else(|| Error::Singular("occupancy system".into()))?;
    let mut q = vec![0.0; sd * ad * ad];
    for s in 0..sd {
        for a in 0..ad {
            for b in 0..ad {
                let next: f64 = (0..sd).map(|t| spec.transition[s][a][b][t] * v[t]).sum();
                q[(s * ad + a) * ad + b] = spec.reward[s][a][b] + spec.gamma * next;
            }
        }
    }
    let base = spec.value_scale() * rho.dot(&v);
    let j = (0..2)
        .map(|i| {
            let ent: f64 = (0..sd)
                .flat_map(|s| (0..ad).map(move |a| (s, a)))
                .map(|(s, a)| {
                    let p = jt.pi(i, s, a);
                    -p * p.ln()
                })
                .sum();
            base + spec.tau * ent
        })
        .collect();
    Ok(ValueSolution {
        v: v.iter().copied().collect(),
        q,
        occupancy: d.iter().copied().collect(),
        j,
        residual,
    })
}

/// Exact evaluation of the softmax policies of `theta`.
pub fn solve_values(spec: &MarkovGameSpec, theta: &PolicyParams) -> Result<ValueSolution> {
    let x = mirror_map(spec)?.softmax(theta.theta())?;
    solve_values_for_policies(spec, x.as_slice())
}

/// Exact evaluation of explicit policies; deterministic policies are
/// allowed when `τ = 0`.
pub fn solve_values_for_policies(spec: &MarkovGameSpec, x: &[f64]) -> Result<ValueSolution> {
    spec.validate()?;
    if x.len() != spec.total_dim() {
        return Err(Error::Dimension {
            expected: spec.total_dim(),
            found: x.len(),
        });
    }
    let ad = spec.actions_per_player;
    for (k, chunk) in x.chunks(ad).enumerate() {
        if chunk.iter().any(|p| *p < 0.0) || (chunk.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("policy block {k} is not a distribution")));
        }
    }
    if spec.tau > 0.0 {
        check_policy_entries(x)?;
    }
    let mut sol = evaluate(spec, x)?;
    if spec.tau == 0.0 {
        // 0·log 0 is taken as 0.
        let base = spec.value_scale() * spec.initial_dist.iter().zip(&sol.v).map(|(p, v)| p * v).sum::<f64>();
        sol.j = vec![base; 2];
    }
    Ok(sol)
}

/// Gradient path used for the logit pseudo-gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    /// Richardson-extrapolated central differences of the exact objectives.
    #[default]
    FiniteDifference,
    /// Policy-gradient theorem.
    Analytic,
}

/// The Markov game seen both in logit space ([`GameModel`]) and on the
/// simplices ([`MirrorGame`]).
#[derive(Debug, Clone)]
pub struct MarkovGame {
    spec: MarkovGameSpec,
    psi: MirrorMap,
    structure: BlockStructure,
    gradient: GradientMethod,
}

impl MarkovGame {
    pub fn new(spec: MarkovGameSpec) -> Result<Self> {
        spec.validate()?;
        let psi = mirror_map(&spec)?;
        let structure = BlockStructure::identity(&[spec.player_dim(), spec.player_dim()])?;
        Ok(Self {
            spec,
            psi,
            structure,
            gradient: GradientMethod::default(),
        })
    }

    pub fn with_gradient(mut self, gradient: GradientMethod) -> Self {
        self.gradient = gradient;
        self
    }

    pub fn spec(&self) -> &MarkovGameSpec {
        &self.spec
    }

    pub fn gradient_method(&self) -> GradientMethod {
        self.gradient
    }

    pub fn policies(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.psi.softmax(theta)
    }

    /// `(f_1, f_2) = (−J_1, −J_2)` at logits `theta`.
    pub fn costs(&self, theta: &DVector<f64>) -> Result<[f64; 2]> {
        let x = self.psi.softmax(theta)?;
        check_policy_entries(x.as_slice())?;
        let sol = evaluate(&self.spec, x.as_slice())?;
        Ok([-sol.j[0], -sol.j[1]])
    }

    /// `F(θ)` by the configured path.
    pub fn pseudo_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        match self.gradient {
            GradientMethod::FiniteDifference => self.fd_gradient(theta),
            GradientMethod::Analytic => self.analytic_gradient(theta),
        }
    }

    /// Central differences at `h` and `h/2` combined as `(4D(h/2) − D(h))/3`.
    pub fn fd_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.spec.total_dim();
        let pd = self.spec.player_dim();
        if theta.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: theta.len(),
            });
        }
        let mut g = DVector::zeros(n);
        for k in 0..n {
            let i = k / pd;
            let diff = |h: f64| -> Result<f64> {
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                Ok((self.costs(&tp)?[i] - self.costs(&tm)?[i]) / (2.0 * h))
            };
            let d1 = diff(FD_STEP)?;
            let d2 = diff(FD_STEP / 2.0)?;
            g[k] = (4.0 * d2 - d1) / 3.0;
        }
        self.psi.center(&g)
    }

    /// `∇_θ f_i = Fisher · ∇_{π_i} f_i` state by state.
    pub fn analytic_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.psi.softmax(theta)?;
        let gx = self.primal_gradient(&x)?;
        let mut g = DVector::zeros(x.len());
        for (o, m) in self.psi.segments() {
            let f = mirror::fisher_block(&x.as_slice()[o..o + m])?;
            let part = f * gx.rows(o, m);
            g.rows_mut(o, m).copy_from(&part);
        }
        self.psi.center(&g)
    }
}

impl MirrorGame for MarkovGame {
    fn mirror_map(&self) -> &MirrorMap {
        &self.psi
    }

    /// `∇_{π_i(·|s)} f_i = −c·d(s)·Q_i(s, ·) + τ(log π_i(·|s) + 1)`.
    fn primal_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let spec = &self.spec;
        if x.len() != spec.total_dim() {
            return Err(Error::Dimension {
                expected: spec.total_dim(),
                found: x.len(),
            });
        }
        check_policy_entries(x.as_slice())?;
        let sol = evaluate(spec, x.as_slice())?;
        let (sd, ad) = (spec.n_states, spec.actions_per_player);
        let jt = Joint { spec, x: x.as_slice() };
        let c = spec.value_scale();
        let mut g = DVector::zeros(x.len());
        for s in 0..sd {
            for a in 0..ad {
                let mut q1 = 0.0;
                let mut q2 = 0.0;
                for b in 0..ad {
                    q1 += jt.pi(1, s, b) * sol.q[(s * ad + a) * ad + b];
                    q2 += jt.pi(0, s, b) * sol.q[(s * ad + b) * ad + a];
                }
                let d = sol.occupancy[s];
                g[s * ad + a] = -c * d * q1 + spec.tau * (jt.pi(0, s, a).ln() + 1.0);
                g[sd * ad + s * ad + a] = -c * d * q2 + spec.tau * (jt.pi(1, s, a).ln() + 1.0);
            }
        }
        Ok(g)
    }
}

impl GameModel for MarkovGame {
    fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    fn eval_f(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.pseudo_gradient(x)
    }

    /// Central differences of the analytic logit gradient.
    fn eval_jg(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = x.len();
        let h = 1e-6;
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let col = (self.analytic_gradient(&xm)? - self.analytic_gradient(&xp)?) / (2.0 * h);
            j.set_column(k, &col);
        }
        Ok(j)
    }

    fn equilibrium_hint(&self) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.spec.total_dim()))
    }
}

/// Natural policy gradient step with the gauge-reduced Fisher inverse.
pub fn npg_step(game: &MarkovGame, theta: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    check_step(eta)?;
    npg_update(game, theta, &game.pseudo_gradient(theta)?, eta)
}

fn npg_update(game: &MarkovGame, theta: &DVector<f64>, g: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    let psi = game.mirror_map();
    let x = psi.softmax(theta)?;
    let pd = game.spec.player_dim();
    let mut next = theta.clone();
    for i in 0..2 {
        let gi = g.rows(i * pd, pd).into_owned();
        let dir = psi.natural_direction(i, &x, &gi)?;
        let mut block = next.rows_mut(i * pd, pd);
        block -= dir * eta;
    }
    psi.center(&next)
}

/// Euclidean gradient step on centered logits.
pub fn epg_step(game: &MarkovGame, theta: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    check_step(eta)?;
    game.mirror_map().center(&(theta - game.pseudo_gradient(theta)? * eta))
}

fn check_step(eta: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("step size {eta} must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PgMethod {
    Npg,
    Epg,
}

impl PgMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PgMethod::Npg => "npg",
            PgMethod::Epg => "epg",
        }
    }

    pub fn step(&self, game: &MarkovGame, theta: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
        match self {
            PgMethod::Npg => npg_step(game, theta, eta),
            PgMethod::Epg => epg_step(game, theta, eta),
        }
    }

    fn update(&self, game: &MarkovGame, theta: &DVector<f64>, g: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
        match self {
            PgMethod::Npg => npg_update(game, theta, g, eta),
            PgMethod::Epg => game.mirror_map().center(&(theta - g * eta)),
        }
    }
}

/// One policy-gradient trajectory measured against `θ* = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgRun {
    pub method: PgMethod,
    pub eta: f64,
    /// `V(θ_k)` for every recorded iterate, starting at `k = 0`.
    pub v: Vec<f64>,
    /// `‖θ_k − θ*‖₂`.
    pub dist: Vec<f64>,
    pub final_grad_norm: f64,
    /// The small-gradient criterion fired.
    pub stopped_early: bool,
    /// Iterates blew up, left the interior, or the solve failed.
    pub failed: bool,
}

impl PgRun {
    /// Small gradient, or final distance below `threshold`.
    pub fn converged(&self, threshold: f64) -> bool {
        !self.failed && (self.stopped_early || self.dist.last().is_some_and(|d| *d < threshold))
    }
}

/// Runs `steps` policy-gradient iterations from `theta0`.
pub fn run_policy_gradient(
    game: &MarkovGame,
    method: PgMethod,
    theta0: &DVector<f64>,
    eta: f64,
    steps: usize,
    w: &[f64],
    small_grad_tol: f64,
) -> Result<PgRun> {
    check_step(eta)?;
    let psi = game.mirror_map();
    let x_star = psi.softmax(&DVector::zeros(theta0.len()))?;
    let mut theta = psi.center(theta0)?;
    let mut run = PgRun {
        method,
        eta,
        v: Vec::with_capacity(steps + 1),
        dist: Vec::with_capacity(steps + 1),
        final_grad_norm: f64::NAN,
        stopped_early: false,
        failed: false,
    };
    let record = |theta: &DVector<f64>, run: &mut PgRun| -> Result<()> {
        let x = psi.softmax(theta)?;
        run.v.push(mirror::lyapunov_v(psi, &x, &x_star, w)?);
        run.dist.push(theta.norm());
        Ok(())
    };
    if record(&theta, &mut run).is_err() {
        run.failed = true;
        return Ok(run);
    }
    for _ in 0..steps {
        let g = match game.pseudo_gradient(&theta) {
            Ok(g) => g,
            Err(_) => {
                run.failed = true;
                return Ok(run);
            }
        };
        run.final_grad_norm = g.norm();
        if run.final_grad_norm < small_grad_tol {
            run.stopped_early = true;
            return Ok(run);
        }
        match method.update(game, &theta, &g, eta) {
            Ok(next) if next.iter().all(|v| v.is_finite()) && next.amax() < DIVERGENCE_LOGIT => theta = next,
            _ => {
                run.failed = true;
                return Ok(run);
            }
        }
        if record(&theta, &mut run).is_err() {
            run.failed = true;
            return Ok(run);
        }
    }
    run.final_grad_norm = match game.pseudo_gradient(&theta) {
        Ok(g) => g.norm(),
        Err(_) => f64::NAN,
    };
    if run.final_grad_norm < small_grad_tol {
        run.stopped_early = true;
    }
    Ok(run)
}

/// Sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub seeds: usize,
    pub max_steps: usize,
    pub base_seed: u64,
    pub init_half_width: f64,
    pub small_grad_tol: f64,
    pub dist_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            max_steps: 500,
            base_seed: 0,
            init_half_width: 0.5,
            small_grad_tol: SMALL_GRADIENT_TOL,
            dist_threshold: SWEEP_DIST_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub multiplier: f64,
    pub method: PgMethod,
    pub fraction: f64,
}

/// Fraction of seeded runs classified convergent, per method and per
/// multiple of `η_SGN`.
pub fn step_sweep(game: &MarkovGame, eta_sgn: f64, multipliers: &[f64], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    check_step(eta_sgn)?;
    if let Some(m) = multipliers.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
        return Err(Error::invalid(format!("multiplier {m} must be positive")));
    }
    if cfg.seeds == 0 {
        return Err(Error::invalid("at least one seed is required"));
    }
    let inits: Vec<DVector<f64>> = (0..cfg.seeds)
        .map(|k| PolicyParams::random(&game.spec, cfg.init_half_width, cfg.base_seed + k as u64).map(PolicyParams::into_inner))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &mult in multipliers {
        for method in [PgMethod::Npg, PgMethod::Epg] {
            let hits: Vec<bool> = inits
                .par_iter()
                .map(|t0| {
                    run_policy_gradient(game, method, t0, mult * eta_sgn, cfg.max_steps, &[1.0, 1.0], cfg.small_grad_tol)
                        .map(|r| r.converged(cfg.dist_threshold))
                        .unwrap_or(false)
                })
                .collect();
            rows.push(SweepRow {
                multiplier: mult,
                method,
                fraction: hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// Local mirror certificate around `θ* = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCertificate {
    pub bounds: MirrorBounds,
    /// Best weights, `w_1 = 1`.
    pub weights: Vec<f64>,
    /// `r* = w_2 / w_1`.
    pub ratio: f64,
    /// `λ_min(H(w*))`.
    pub alpha: f64,
    pub beta: f64,
    /// `2α/β²` when `α > 0`.
    pub eta_sgn: Option<f64>,
    pub half_width: f64,
    pub budget: usize,
    pub seed: u64,
}

/// Logit cube `‖θ‖_∞ ≤ half_width`, sampled with `budget` points.
pub fn logit_cube_samples(game: &MarkovGame, half_width: f64, budget: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let cube = RegionSpec::cube(vec![0.0; game.spec.total_dim()], half_width);
    region::sample_region(&cube, budget, seed)
}

pub fn certify_markov(game: &MarkovGame, half_width: f64, budget: usize, seed: u64) -> Result<MarkovCertificate> {
    let psi = game.mirror_map();
    let thetas = logit_cube_samples(game, half_width, budget, seed)?;
    let xs: Vec<DVector<f64>> = thetas.iter().map(|t| psi.softmax(t)).collect::<Result<_>>()?;
    let x_star = psi.softmax(&DVector::zeros(game.spec.total_dim()))?;
    let bounds = mirror::mirror_block_bounds(game, &x_star, &xs)?;
    let search = sgn::optimize_weights(&bounds.bounds, WeightStrategy::TwoPlayerAnalytic)?;
    let weights = search.weights;
    let alpha = mirror::mirror_sgn_margin(&bounds, &weights)?;
    let beta = mirror::mirror_lipschitz(game, &weights, &xs)?;
    Ok(MarkovCertificate {
        ratio: weights[1] / weights[0],
        eta_sgn: (alpha > 0.0).then(|| 2.0 * alpha / (beta * beta)),
        bounds,
        weights,
        alpha,
        beta,
        half_width,
        budget,
        seed,
    })
}

/// `(r, λ_min H(1, r))` over a ratio grid.
pub fn markov_timescale_band(bounds: &MirrorBounds, ratios: &[f64]) -> Result<Vec<(f64, f64)>> {
    ratios
        .iter()
        .map(|&r| {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invalid(format!("ratio {r} must be positive")));
            }
            Ok((r, mirror::mirror_sgn_margin(bounds, &[1.0, r])?))
        })
        .collect()
}
