//! Experiment drivers behind the `smallgain` binary.
//!
//! Each command reads an [`ExperimentConfig`], writes CSV/JSON artifacts
//! into an output directory together with a `manifest.json`, and reports
//! whether certification succeeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{self, EnsembleSpec, GameConfig, GameModel, LqFamily, LqSpec, QuadraticGame};
use crate::integrators::{self, ConstraintSet, Method, StepSpectrum};
use crate::markov::{self, KernelParams, MarkovGame, PgMethod, PolicyParams, SweepConfig, ValueNormalization};
use crate::metric::{self, BlockStructure, WeightedMetric};
use crate::region::{self, CertifyOptions, CertifyOutcome, RegionSpec};
use crate::sgn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Certify,
    QuadraticDemo,
    LqMargins,
    LqBand,
    LqPhase,
    LqFlow,
    LqNoise,
    LqEnsemble,
    MarkovNpg,
    MarkovBand,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::QuadraticDemo => "quadratic-demo",
            Command::LqMargins => "lq-margins",
            Command::LqBand => "lq-band",
            Command::LqPhase => "lq-phase",
            Command::LqFlow => "lq-flow",
            Command::LqNoise => "lq-noise",
            Command::LqEnsemble => "lq-ensemble",
            Command::MarkovNpg => "markov-npg",
            Command::MarkovBand => "markov-band",
        }
    }
}

/// `n` points from `lo` to `hi`, equally spaced in log scale.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// `lo, lo + step, …` up to `hi`, rounded to clean decimals.
pub fn lin_space(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    pub lambda: Vec<f64>,
    pub h: Vec<f64>,
    pub r_lq: Vec<f64>,
    pub r_markov: Vec<f64>,
    pub eps: Vec<f64>,
    pub multipliers: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            lambda: lin_space(0.0, 2.5, 0.1),
            h: log_space(1e-3, 10.0, 161),
            r_lq: log_space(1.0, 1e4, 200),
            r_markov: log_space(1e-3, 1e3, 200),
            eps: lin_space(0.0, 1.0, 0.1),
            multipliers: lin_space(0.25, 2.0, 0.25),
        }
    }
}

impl Grids {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("lambda", &self.lambda),
            ("h", &self.h),
            ("r_lq", &self.r_lq),
            ("r_markov", &self.r_markov),
            ("eps", &self.eps),
            ("multipliers", &self.multipliers),
        ] {
            if g.is_empty() || !g.windows(2).all(|w| w[0] < w[1]) || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("grid `{name}` must be nonempty and strictly increasing")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub x0: Vec<f64>,
    pub weights: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            x0: vec![0.0, 1.0],
            weights: vec![1.0, 200.0],
            t_end: 10.0,
            dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub lambdas: Vec<f64>,
    pub runs: usize,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5, 1.0, 1.5],
            runs: 20,
            t_end: 20.0,
            dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkovConfig {
    pub kernel: KernelParams,
    pub gamma: f64,
    pub tau: f64,
    pub normalization: ValueNormalization,
    pub gradient: markov::GradientMethod,
    /// Half-width of the logit cube the certificate covers.
    pub half_width: f64,
    pub budget: usize,
    pub npg_steps: usize,
    /// Step of the decay runs as a multiple of `η_SGN`.
    pub eta_multiplier: f64,
    /// Initial logits of the decay runs are drawn in this cube.
    pub init_half_width: f64,
    pub sweep: SweepConfig,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            kernel: KernelParams::default(),
            gamma: 0.9,
            tau: 1.0,
            normalization: ValueNormalization::Normalized,
            gradient: markov::GradientMethod::FiniteDifference,
            half_width: 0.1,
            budget: region::DEFAULT_BUDGET,
            npg_steps: 200,
            eta_multiplier: 0.5,
            init_half_width: 0.1,
            sweep: SweepConfig::default(),
        }
    }
}

impl MarkovConfig {
    pub fn game(&self) -> Result<MarkovGame> {
        let mut spec = markov::coordination_game(self.kernel, self.gamma, self.tau)?;
        spec.normalization = self.normalization;
        Ok(MarkovGame::new(spec)?.with_gradient(self.gradient))
    }
}

/// JSON configuration shared by all commands; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Game for `certify`; the canonical LQ game at `lambda` when absent.
    pub game: Option<GameConfig>,
    /// Region for `certify`; the unit cube around the origin when absent.
    pub region: Option<RegionSpec>,
    pub certify: CertifyOptions,
    pub lq: LqSpec,
    /// Coupling used by `certify` and `lq-band`.
    pub lambda: f64,
    /// Metric weights for the LQ commands; balanced when absent.
    pub weights: Option<Vec<f64>>,
    pub grids: Grids,
    pub noise_seeds: usize,
    pub ensemble: EnsembleSpec,
    pub demo: DemoConfig,
    pub flow: FlowConfig,
    pub markov: MarkovConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            game: None,
            region: None,
            certify: CertifyOptions::default(),
            lq: LqSpec::default(),
            lambda: 1.0,
            weights: None,
            grids: Grids::default(),
            noise_seeds: 10,
            ensemble: EnsembleSpec::default(),
            demo: DemoConfig::default(),
            flow: FlowConfig::default(),
            markov: MarkovConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Propagates a command-line seed to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.certify.seed = seed;
        self.ensemble.seed = seed;
        self.markov.sweep.base_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grids.validate()?;
        self.lq.validate()?;
        if let Some(r) = &self.region {
            r.validate()?;
        }
        Ok(())
    }

    fn lq_weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| self.lq.balanced_weights())
    }
}

/// How a command ended; infeasible runs still write their outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    Infeasible,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Infeasible => 2,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    outputs: Vec<String>,
    status: &'a str,
    config: &'a ExperimentConfig,
    timestamp: u64,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

/// Runs a command and writes its artifacts plus `manifest.json` into `out`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<RunStatus> {
    cfg.validate()?;
    let mut o = Outputs::new(out)?;
    let status = match cmd {
        Command::Certify => cmd_certify(cfg, &mut o)?,
        Command::QuadraticDemo => cmd_quadratic_demo(cfg, &mut o)?,
        Command::LqMargins => cmd_lq_margins(cfg, &mut o)?,
        Command::LqBand => cmd_lq_band(cfg, &mut o)?,
        Command::LqPhase => cmd_lq_phase(cfg, &mut o)?,
        Command::LqFlow => cmd_lq_flow(cfg, &mut o)?,
        Command::LqNoise => cmd_lq_noise(cfg, &mut o)?,
        Command::LqEnsemble => cmd_lq_ensemble(cfg, &mut o)?,
        Command::MarkovNpg => cmd_markov_npg(cfg, &mut o)?,
        Command::MarkovBand => cmd_markov_band(cfg, &mut o)?,
    };
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = Manifest {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        outputs: o.files.clone(),
        status: match status {
            RunStatus::Success => "ok",
            RunStatus::Infeasible => "infeasible",
        },
        config: cfg,
        timestamp,
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(status)
}

fn row_or_nan<T>(what: &str, r: Result<T>, nan: impl FnOnce() -> T) -> T {
    r.unwrap_or_else(|e| {
        log::warn!("{what}: {e}");
        nan()
    })
}

fn cmd_certify(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let game: QuadraticGame = match &cfg.game {
        Some(g) => g.build()?,
        None => games::canonical_lq(&cfg.lq.with_lambda(cfg.lambda))?,
    };
    let region = cfg
        .region
        .clone()
        .unwrap_or_else(|| RegionSpec::cube(vec![0.0; game.total_dim()], 1.0));
    let p = BlockStructure::identity(game.dims())?;
    let run = region::certify_detailed(&game, &region, &p, &cfg.certify)?;
    region::write_estimation_report(&o.path("estimation.csv"), &run.report)?;
    match &run.outcome {
        CertifyOutcome::Certified(c) => {
            o.json("certificate.json", c.as_ref())?;
            Ok(RunStatus::Success)
        }
        CertifyOutcome::Failed(f) => {
            o.json("failure.json", f)?;
            Ok(RunStatus::Infeasible)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoRow {
    pub t: f64,
    pub euclid_norm: f64,
    pub sgn_norm: f64,
}

fn cmd_quadratic_demo(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let d = &cfg.demo;
    let game = match &cfg.game {
        Some(g) => g.build()?,
        None => games::two_player_scalar_example(),
    };
    let m = WeightedMetric::new(BlockStructure::identity(game.dims())?, d.weights.clone())?;
    let x0 = DVector::from_column_slice(&d.x0);
    let steps = (d.t_end / d.dt).round() as usize;
    let traj = integrators::run_dynamics(&game, &x0, steps, Method::Rk4, d.dt, &ConstraintSet::Unconstrained, &m, None)?;
    let rows: Vec<DemoRow> = traj
        .iterates
        .iter()
        .enumerate()
        .map(|(k, x)| DemoRow {
            t: k as f64 * d.dt,
            euclid_norm: x.norm(),
            sgn_norm: traj.metric_dists[k],
        })
        .collect();
    o.csv("quadratic_demo.csv", &rows)?;
    let bounds = games::exact_block_bounds(&game, m.structure())?;
    Ok(if sgn::sgn_margin(&bounds, m.weights())?.feasible {
        RunStatus::Success
    } else {
        RunStatus::Infeasible
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginRow {
    pub lambda: f64,
    pub gamma_euc: f64,
    pub alpha_sgn: f64,
    pub alpha_true: f64,
    pub beta: f64,
}

/// `(γ_euc, λ_min H(w), α_true, β)` of the LQ game at `lambda`.
pub fn lq_margin_row(family: &LqFamily, m: &WeightedMetric, lambda: f64) -> Result<MarginRow> {
    let game = family.game(lambda)?;
    let bounds = games::exact_block_bounds(&game, m.structure())?;
    let mc = integrators::metric_constants(&game, m)?;
    Ok(MarginRow {
        lambda,
        gamma_euc: game.euclidean_margin(),
        alpha_sgn: sgn::normalized_margin(&bounds, m.weights())?,
        alpha_true: mc.alpha_true,
        beta: mc.beta,
    })
}

fn lq_metric(cfg: &ExperimentConfig) -> Result<WeightedMetric> {
    let n = cfg.lq.block_dim;
    WeightedMetric::new(BlockStructure::identity(&[n, n])?, cfg.lq_weights())
}

fn cmd_lq_margins(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let family = LqFamily::new(cfg.lq)?;
    let m = lq_metric(cfg)?;
    let rows: Vec<MarginRow> = cfg
        .grids
        .lambda
        .par_iter()
        .map(|&l| {
            row_or_nan(&format!("lambda {l}"), lq_margin_row(&family, &m, l), || MarginRow {
                lambda: l,
                gamma_euc: f64::NAN,
                alpha_sgn: f64::NAN,
                alpha_true: f64::NAN,
                beta: f64::NAN,
            })
        })
        .collect();
    o.csv("margins.csv", &rows)?;
    Ok(RunStatus::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandRow {
    pub r: f64,
    pub alpha_sgn: f64,
    pub alpha_true: f64,
    pub feasible: bool,
}

fn cmd_lq_band(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let game = games::canonical_lq(&cfg.lq.with_lambda(cfg.lambda))?;
    let p = BlockStructure::identity(game.dims())?;
    let bounds = games::exact_block_bounds(&game, &p)?;
    let rows: Vec<BandRow> = cfg
        .grids
        .r_lq
        .par_iter()
        .map(|&r| {
            let row = || -> Result<BandRow> {
                let w = vec![1.0, r];
                let m = WeightedMetric::new(p.clone(), w.clone())?;
                Ok(BandRow {
                    r,
                    alpha_sgn: sgn::normalized_margin(&bounds, &w)?,
                    alpha_true: metric::min_sym_eig_with_roots(game.h(), &m.roots())?,
                    feasible: sgn::sgn_margin(&bounds, &w)?.feasible,
                })
            };
            row_or_nan(&format!("ratio {r}"), row(), || BandRow {
                r,
                alpha_sgn: f64::NAN,
                alpha_true: f64::NAN,
                feasible: false,
            })
        })
        .collect();
    o.csv("band.csv", &rows)?;
    Ok(if rows.iter().any(|r| r.feasible) {
        RunStatus::Success
    } else {
        RunStatus::Infeasible
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseRow {
    pub lambda: f64,
    pub h: f64,
    pub log_rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRow {
    pub lambda: f64,
    pub h_sgn: Option<f64>,
    pub h_stab: f64,
}

fn cmd_lq_phase(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let family = LqFamily::new(cfg.lq)?;
    let w = cfg.lq_weights();
    for (method, tag) in [(Method::Euler, "euler"), (Method::Rk4, "rk4")] {
        let pd = integrators::phase_diagram(&family, &w, &cfg.grids.lambda, &cfg.grids.h, method, cfg.certify.rk4_step_constant)?;
        let mut phase = Vec::new();
        let mut curves = Vec::new();
        for (k, &lambda) in pd.lambda_grid.iter().enumerate() {
            for (j, &h) in pd.h_grid.iter().enumerate() {
                phase.push(PhaseRow {
                    lambda,
                    h,
                    log_rho: pd.log_rho[k][j],
                });
            }
            curves.push(CurveRow {
                lambda,
                h_sgn: pd.sgn_step_curve[k],
                h_stab: pd.stability_curve[k],
            });
        }
        o.csv(&format!("phase_{tag}.csv"), &phase)?;
        o.csv(&format!("curves_{tag}.csv"), &curves)?;
    }
    Ok(RunStatus::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRow {
    pub t: f64,
    pub run_id: usize,
    pub metric_norm: f64,
}

/// Describes each `run_id` of the flow CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRunRow {
    pub run_id: usize,
    pub lambda: f64,
    pub seed: u64,
    pub alpha_true: f64,
    pub alpha_sgn: f64,
}

fn cmd_lq_flow(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let f = &cfg.flow;
    let family = LqFamily::new(cfg.lq)?;
    let m = lq_metric(cfg)?;
    let n = m.total_dim();
    let steps = (f.t_end / f.dt).round() as usize;
    let jobs: Vec<(usize, f64, u64)> = f
        .lambdas
        .iter()
        .flat_map(|&l| (0..f.runs).map(move |k| (l, k)))
        .enumerate()
        .map(|(id, (l, k))| (id, l, cfg.seed.wrapping_add(k as u64)))
        .collect();
    let results: Vec<Result<(FlowRunRow, Vec<FlowRow>)>> = jobs
        .par_iter()
        .map(|&(id, lambda, seed)| {
            let game = family.game(lambda)?;
            let mc = integrators::metric_constants(&game, &m)?;
            let bounds = games::exact_block_bounds(&game, m.structure())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let x0 = &raw / m.norm(&raw)?;
            let traj = integrators::run_dynamics(&game, &x0, steps, Method::Rk4, f.dt, &ConstraintSet::Unconstrained, &m, None)?;
            let rows = traj
                .metric_dists
                .iter()
                .enumerate()
                .map(|(k, &d)| FlowRow {
                    t: k as f64 * f.dt,
                    run_id: id,
                    metric_norm: d,
                })
                .collect();
            Ok((
                FlowRunRow {
                    run_id: id,
                    lambda,
                    seed,
                    alpha_true: mc.alpha_true,
                    alpha_sgn: sgn::normalized_margin(&bounds, m.weights())?,
                },
                rows,
            ))
        })
        .collect();
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for r in results {
        let (run, mut rs) = r?;
        runs.push(run);
        rows.append(&mut rs);
    }
    o.csv("flow.csv", &rows)?;
    o.csv("flow_runs.csv", &runs)?;
    Ok(RunStatus::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseRow {
    pub eps: f64,
    pub seed: u64,
    pub alpha_true: f64,
    pub alpha_sgn: f64,
    /// `α_true / α*`; empty when SGN does not certify.
    pub ratio: Option<f64>,
}

/// Margins of the coupling-perturbed LQ game in the fixed metric `m`.
pub fn noise_row(base: &QuadraticGame, m: &WeightedMetric, eps: f64, seed: u64) -> Result<NoiseRow> {
    let game = games::perturb_couplings(base, eps, seed)?;
    let bounds = games::exact_block_bounds(&game, m.structure())?;
    let alpha_sgn = sgn::normalized_margin(&bounds, m.weights())?;
    let alpha_true = metric::min_sym_eig_with_roots(game.h(), &m.roots())?;
    Ok(NoiseRow {
        eps,
        seed,
        alpha_true,
        alpha_sgn,
        ratio: (alpha_sgn > 0.0).then(|| alpha_true / alpha_sgn),
    })
}

fn cmd_lq_noise(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let base = games::canonical_lq(&cfg.lq.with_lambda(cfg.lambda))?;
    let m = lq_metric(cfg)?;
    let jobs: Vec<(f64, u64)> = cfg
        .grids
        .eps
        .iter()
        .flat_map(|&e| (0..cfg.noise_seeds as u64).map(move |s| (e, s)))
        .collect();
    let rows: Vec<NoiseRow> = jobs
        .par_iter()
        .map(|&(eps, k)| {
            let seed = cfg.seed.wrapping_add(k);
            row_or_nan(&format!("eps {eps} seed {seed}"), noise_row(&base, &m, eps, seed), || NoiseRow {
                eps,
                seed,
                alpha_true: f64::NAN,
                alpha_sgn: f64::NAN,
                ratio: None,
            })
        })
        .collect();
    o.csv("noise.csv", &rows)?;
    Ok(RunStatus::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub instance: usize,
    pub lambda: f64,
    /// `α* / α_true`; empty unless both are positive.
    pub alpha_ratio: Option<f64>,
    /// `log10(h_SGN / h_stab)` for RK4; empty unless SGN certifies.
    pub log_step_ratio: Option<f64>,
    pub euclid_positive: bool,
    pub sgn_positive: bool,
}

/// Ensemble statistics of one instance in its balanced metric.
pub fn ensemble_row(inst: &games::EnsembleInstance, lambda: f64, c4: f64) -> Result<EnsembleRow> {
    let game = inst.game(lambda)?;
    let m = WeightedMetric::new(BlockStructure::identity(game.dims())?, inst.balanced_weights())?;
    let mc = integrators::metric_constants(&game, &m)?;
    let sgn_positive = mc.sgn_feasible && mc.alpha_sgn > 0.0;
    let log_step_ratio = if sgn_positive {
        let h_sgn = integrators::certified_step(Method::Rk4, mc.alpha_sgn, mc.beta, c4).unwrap_or(0.0);
        let h_stab = StepSpectrum::new(&game, Method::Rk4).threshold(10.0 * h_sgn.max(1.0));
        Some((h_sgn / h_stab).log10())
    } else {
        None
    };
    Ok(EnsembleRow {
        instance: inst.index,
        lambda,
        alpha_ratio: (sgn_positive && mc.alpha_true > 0.0).then(|| mc.alpha_sgn / mc.alpha_true),
        log_step_ratio,
        euclid_positive: game.euclidean_margin() > 0.0,
        sgn_positive,
    })
}

fn cmd_lq_ensemble(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let insts = games::random_lq_ensemble(&cfg.ensemble)?;
    let c4 = cfg.certify.rk4_step_constant;
    let jobs: Vec<(usize, f64)> = (0..insts.len())
        .flat_map(|i| cfg.grids.lambda.iter().map(move |&l| (i, l)))
        .collect();
    let rows: Vec<EnsembleRow> = jobs
        .par_iter()
        .map(|&(i, l)| {
            row_or_nan(&format!("instance {i} lambda {l}"), ensemble_row(&insts[i], l, c4), || EnsembleRow {
                instance: insts[i].index,
                lambda: l,
                alpha_ratio: None,
                log_step_ratio: None,
                euclid_positive: false,
                sgn_positive: false,
            })
        })
        .collect();
    o.csv("ensemble.csv", &rows)?;
    Ok(RunStatus::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NpgRow {
    pub step: usize,
    pub method: PgMethod,
    #[serde(rename = "V")]
    pub v: f64,
    pub dist: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub multiplier: f64,
    pub method: PgMethod,
    pub fraction: f64,
}

fn cmd_markov_npg(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let mc = &cfg.markov;
    let game = mc.game()?;
    let cert = markov::certify_markov(&game, mc.half_width, mc.budget, cfg.seed)?;
    o.json("markov_certificate.json", &cert)?;
    let Some(eta_sgn) = cert.eta_sgn else {
        return Ok(RunStatus::Infeasible);
    };
    let theta0 = PolicyParams::random(game.spec(), mc.init_half_width, cfg.seed)?.into_inner();
    let eta = mc.eta_multiplier * eta_sgn;
    let mut rows = Vec::new();
    for method in [PgMethod::Npg, PgMethod::Epg] {
        let run = markov::run_policy_gradient(&game, method, &theta0, eta, mc.npg_steps, &cert.weights, 0.0)?;
        rows.extend(run.v.iter().zip(&run.dist).enumerate().map(|(k, (&v, &dist))| NpgRow {
            step: k,
            method,
            v,
            dist,
        }));
    }
    o.csv("npg.csv", &rows)?;
    let sweep: Vec<SweepCsvRow> = markov::step_sweep(&game, eta_sgn, &cfg.grids.multipliers, &mc.sweep)?
        .into_iter()
        .map(|r| SweepCsvRow {
            multiplier: r.multiplier,
            method: r.method,
            fraction: r.fraction,
        })
        .collect();
    o.csv("sweep.csv", &sweep)?;
    Ok(RunStatus::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovBandRow {
    pub r: f64,
    pub alpha_star: f64,
}

fn cmd_markov_band(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<RunStatus> {
    let mc = &cfg.markov;
    let game = mc.game()?;
    let cert = markov::certify_markov(&game, mc.half_width, mc.budget, cfg.seed)?;
    o.json("markov_certificate.json", &cert)?;
    let rows: Vec<MarkovBandRow> = markov::markov_timescale_band(&cert.bounds, &cfg.grids.r_markov)?
        .into_iter()
        .map(|(r, alpha_star)| MarkovBandRow { r, alpha_star })
        .collect();
    o.csv("markov_band.csv", &rows)?;
    Ok(if rows.iter().any(|r| r.alpha_star > 0.0) {
        RunStatus::Success
    } else {
        RunStatus::Infeasible
    })
}
