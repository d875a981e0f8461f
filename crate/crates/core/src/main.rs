use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smallgain::experiments::{self, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "smallgain", version, about = "Small-gain certificates and certified game dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Estimate block bounds on a region and emit a certificate.
    Certify,
    /// Escape-vs-trap trajectory of the scalar two-player example.
    QuadraticDemo,
    /// Euclidean, SGN and true margins across the LQ coupling grid.
    LqMargins,
    /// Margins across timescale ratios at a fixed coupling.
    LqBand,
    /// Spectral-radius phase diagrams for Euler and RK4.
    LqPhase,
    /// Metric norms along continuous-time flows.
    LqFlow,
    /// Conservatism under coupling noise.
    LqNoise,
    /// Random LQ ensemble statistics.
    LqEnsemble,
    /// NPG vs EPG Lyapunov decay and step-size sweep on the Markov game.
    MarkovNpg,
    /// Mirror margin across weight ratios on the Markov game.
    MarkovBand,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Certify => Command::Certify,
            Cmd::QuadraticDemo => Command::QuadraticDemo,
            Cmd::LqMargins => Command::LqMargins,
            Cmd::LqBand => Command::LqBand,
            Cmd::LqPhase => Command::LqPhase,
            Cmd::LqFlow => Command::LqFlow,
            Cmd::LqNoise => Command::LqNoise,
            Cmd::LqEnsemble => Command::LqEnsemble,
            Cmd::MarkovNpg => Command::MarkovNpg,
            Cmd::MarkovBand => Command::MarkovBand,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = (|| {
        let mut cfg = match &cli.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = cli.seed {
            cfg = cfg.with_seed(s);
        }
        experiments::run(cli.command.into(), &cfg, &cli.out)
    })();
    match result {
        Ok(status) => {
            println!("{}: {}", Command::from(cli.command).name(), cli.out.join("manifest.json").display());
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
