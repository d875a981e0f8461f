use std::sync::OnceLock;

use nalgebra::DVector;
use smallgain::markov::{self, GradientMethod, MarkovCertificate, MarkovGame, PgMethod, PolicyParams, SweepConfig};
use smallgain::mirror::{self, MirrorGame, MirrorMethod};

fn game() -> &'static MarkovGame {
    static G: OnceLock<MarkovGame> = OnceLock::new();
    G.get_or_init(|| MarkovGame::new(markov::default_coordination_game()).unwrap())
}

fn cert() -> &'static MarkovCertificate {
    static C: OnceLock<MarkovCertificate> = OnceLock::new();
    C.get_or_init(|| markov::certify_markov(game(), 0.1, 2000, 0).unwrap())
}

fn slope(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let ys: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = ys.iter().enumerate().map(|(k, y)| (k as f64 - mx) * (y - my)).sum();
    let den: f64 = (0..v.len()).map(|k| (k as f64 - mx).powi(2)).sum();
    num / den
}

#[test]
fn cube_samples_stay_in_cube() {
    let s = markov::logit_cube_samples(game(), 0.1, 2000, 0).unwrap();
    assert_eq!(s.len(), 2000);
    assert!(s.iter().all(|t| t.amax() <= 0.1 + 1e-15));
}

#[test]
fn certificate_is_positive_and_symmetric() {
    let c = cert();
    assert!(c.alpha > 0.0);
    assert!(c.beta >= c.alpha);
    let mu = c.bounds.bounds.mu();
    assert!((mu[0] - mu[1]).abs() < 1e-3);
    assert!((c.bounds.bounds.l(0, 1) - c.bounds.bounds.l(1, 0)).abs() < 1e-3);
    assert!((c.ratio - 1.0).abs() < 0.05);
    let eta = c.eta_sgn.unwrap();
    assert!((eta - 2.0 * c.alpha / (c.beta * c.beta)).abs() < 1e-15);
}

#[test]
fn symmetric_bounds_peak_at_unit_ratio() {
    let c = cert();
    let at_one = mirror::mirror_sgn_margin(&c.bounds, &[1.0, 1.0]).unwrap();
    for r in [0.8, 0.9, 1.1, 1.25] {
        assert!(mirror::mirror_sgn_margin(&c.bounds, &[1.0, r]).unwrap() <= at_one + 1e-12);
    }
}

#[test]
fn timescale_band_shape() {
    let c = cert();
    let grid: Vec<f64> = (0..200).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 199.0)).collect();
    let band = markov::markov_timescale_band(&c.bounds, &grid).unwrap();
    let inside: Vec<f64> = band.iter().filter(|(_, a)| *a > 0.0).map(|(r, _)| *r).collect();
    assert!(!inside.is_empty());
    let lo = inside[0];
    let hi = *inside.last().unwrap();
    assert!(lo < 1.0 && hi > 1.0);
    assert!(band[0].1 < 0.0 && band[199].1 < 0.0);
    assert!((hi * lo - 1.0).abs() < 0.2, "band [{lo}, {hi}]");
    assert!(markov::markov_timescale_band(&c.bounds, &[0.0]).is_err());
}

#[test]
fn strong_monotonicity_inequality_near_equilibrium() {
    let c = cert();
    let g = game();
    let psi = g.mirror_map();
    let x_star = psi.softmax(&DVector::zeros(8)).unwrap();
    let f_star = g.primal_gradient(&x_star).unwrap();
    for t in markov::logit_cube_samples(g, 0.1, 300, 11).unwrap() {
        let x = psi.softmax(&t).unwrap();
        let df = g.primal_gradient(&x).unwrap() - &f_star;
        let dx = &x - &x_star;
        let lhs = c.weights[0] * dx.rows(0, 4).dot(&df.rows(0, 4)) + c.weights[1] * dx.rows(4, 4).dot(&df.rows(4, 4));
        let v = mirror::lyapunov_v(psi, &x, &x_star, &c.weights).unwrap();
        assert!(lhs >= c.alpha * v - 1e-9, "{lhs} < {} ", c.alpha * v);
    }
}

#[test]
fn fine_mirror_flow_decays_at_certified_rate() {
    let c = cert();
    let g = game();
    let psi = g.mirror_map();
    let x_star = psi.softmax(&DVector::zeros(8)).unwrap();
    let h = 0.01;
    let mut z = PolicyParams::random(g.spec(), 0.1, 5).unwrap().into_inner();
    let mut v = mirror::lyapunov_v(psi, &psi.softmax(&z).unwrap(), &x_star, &c.weights).unwrap();
    for _ in 0..300 {
        z = mirror::mirror_step(g, &z, h, MirrorMethod::Rk4).unwrap();
        let nv = mirror::lyapunov_v(psi, &psi.softmax(&z).unwrap(), &x_star, &c.weights).unwrap();
        if nv < 1e-20 {
            break;
        }
        assert!((nv.ln() - v.ln()) / h <= -c.alpha + 1e-3);
        v = nv;
    }
}

#[test]
fn npg_at_half_certified_step_decays_monotonically() {
    let c = cert();
    let eta = 0.5 * c.eta_sgn.unwrap();
    let exact = MarkovGame::new(markov::default_coordination_game())
        .unwrap()
        .with_gradient(GradientMethod::Analytic);
    for seed in 0..5 {
        let t0 = PolicyParams::random(game().spec(), 0.1, seed).unwrap().into_inner();
        let run = markov::run_policy_gradient(&exact, PgMethod::Npg, &t0, eta, 200, &c.weights, 0.0).unwrap();
        assert!(!run.failed);
        assert!(run.v[1..].windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
        assert!(*run.dist.last().unwrap() < 1e-6);
    }
}

#[test]
fn certified_lyapunov_ratio_holds() {
    let c = cert();
    for frac in [0.25, 0.5, 0.9] {
        let eta = frac * c.eta_sgn.unwrap();
        let q = 1.0 - 2.0 * c.alpha * eta + c.beta * c.beta * eta * eta;
        for seed in 0..5 {
            let t0 = PolicyParams::random(game().spec(), 0.1, 100 + seed).unwrap().into_inner();
            let run = markov::run_policy_gradient(game(), PgMethod::Npg, &t0, eta, 60, &c.weights, 0.0).unwrap();
            let trace = mirror::LyapunovTrace::new(run.v.clone(), q);
            for (k, r) in trace.ratios().iter().enumerate().skip(1) {
                if trace.v[k] > 1e-24 {
                    assert!(*r <= q + 0.05, "frac {frac} seed {seed} step {k}: {r} > {q}");
                }
            }
        }
    }
}

#[test]
fn npg_is_faster_than_epg_and_below_certified_rate() {
    let c = cert();
    let eta = 0.5 * c.eta_sgn.unwrap();
    let t0 = PolicyParams::random(game().spec(), 0.1, 0).unwrap().into_inner();
    let npg = markov::run_policy_gradient(game(), PgMethod::Npg, &t0, eta, 40, &c.weights, 0.0).unwrap();
    let epg = markov::run_policy_gradient(game(), PgMethod::Epg, &t0, eta, 40, &c.weights, 0.0).unwrap();
    let (sn, se) = (slope(&npg.v), slope(&epg.v));
    assert!(sn < se, "npg {sn} epg {se}");
    let q = 1.0 - 2.0 * c.alpha * eta + c.beta * c.beta * eta * eta;
    assert!(sn <= q.ln(), "npg slope {sn} vs bound {}", q.ln());
}

#[test]
fn sweep_converges_in_certified_regime() {
    let eta = cert().eta_sgn.unwrap();
    let rows = markov::step_sweep(game(), eta, &[0.25, 0.5, 0.75, 1.0], &SweepConfig::default()).unwrap();
    for r in rows.iter().filter(|r| r.method == PgMethod::Npg) {
        assert!(r.fraction >= 0.9, "{r:?}");
        if r.multiplier == 0.5 {
            assert_eq!(r.fraction, 1.0);
        }
    }
    let again = markov::step_sweep(game(), eta, &[0.25, 0.5, 0.75, 1.0], &SweepConfig::default()).unwrap();
    assert_eq!(rows, again);
}

#[test]
fn logit_game_model_agrees_with_pseudo_gradient() {
    use smallgain::games::GameModel;
    let g = game();
    let t = PolicyParams::random(g.spec(), 0.3, 9).unwrap().into_inner();
    assert_eq!(g.eval_f(&t).unwrap(), g.pseudo_gradient(&t).unwrap());
    let j = g.eval_jg(&t).unwrap();
    let d = DVector::from_fn(8, |i, _| ((i * 7) % 5) as f64 * 1e-4);
    let lin = -(g.analytic_gradient(&(&t + &d)).unwrap() - g.analytic_gradient(&t).unwrap());
    assert!((j * &d - lin).amax() < 1e-7);
}
