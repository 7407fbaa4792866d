mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Overrides;
use config::RunConfig;
use failure::Failure;

/// Stochastic averaging of fast-slow systems: averaged coefficients,
/// path simulation, weak-convergence checks, resonance scans and open-book gluing.
#[derive(Parser)]
#[command(name = "stochavg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in config (oscillator-weak-convergence, openbook-splitting)
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate averaged coefficients and check ellipticity
    Average(Common),
    /// Simulate the fast-slow system, or the limit diffusion with --limit
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Time horizon
        #[arg(long = "T", value_name = "T")]
        t_end: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        limit: bool,
    },
    /// Compare finite-eps moments against the limit diffusion
    Compare {
        #[command(flatten)]
        common: Common,
        /// Paths per ensemble in pipeline mode
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Scan a region of action space for resonant frequency vectors
    Resonance(Common),
    /// Measure splitting frequencies at the binding of the double-well open book
    Openbook(Common),
}

fn load(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(p), _) => config::load(p)?,
        (None, Some(name)) => config::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    if let Some(t) = c.threads {
        cfg.threads = Some(t);
    }
    cfg.check()?;
    if let Some(t) = cfg.threads {
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Average(c) => commands::average(load(&c)?, &Overrides { seed: c.seed, ..Default::default() }, &c.out),
        Command::Simulate { common, model, eps, dt, t_end, paths, limit } => {
            let o = Overrides { seed: common.seed, model, eps, dt, t_end, paths, limit };
            commands::simulate(load(&common)?, &o, &common.out)
        }
        Command::Compare { common, paths } => {
            let o = Overrides { seed: common.seed, paths, ..Default::default() };
            commands::compare(load(&common)?, &o, &common.out)
        }
        Command::Resonance(c) => {
            commands::resonance(load(&c)?, &Overrides { seed: c.seed, ..Default::default() }, &c.out)
        }
        Command::Openbook(c) => commands::openbook(load(&c)?, &Overrides { seed: c.seed, ..Default::default() }, &c.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
