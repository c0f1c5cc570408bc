//! Experiment runner for the chronowarp benchmark studies.

pub mod config;
pub mod csvio;
pub mod error;
pub mod pipeline;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "chronowarp", version, about = "Polynomial chaos surrogates with stochastic time warping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML). Defaults to `<out>/config.toml`.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "CHRONOWARP_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the design and integrate the training ensemble.
    Simulate(Common),
    /// Fit the surrogates from the stored ensemble.
    Fit(Common),
    /// Surrogate moments.
    Stats(Common),
    /// Score the surrogates against a fresh solver ensemble.
    Validate(Common),
    /// Summary record and plots.
    Report(Common),
    /// All stages in sequence.
    Run(Common),
    /// Predict a trajectory at one input; CSV on standard output.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Physical input values, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        input: Vec<f64>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Fit(c)
            | Command::Stats(c)
            | Command::Validate(c)
            | Command::Report(c)
            | Command::Run(c) => c,
            Command::Predict { common, .. } => common,
        }
    }
}

/// Resolves the configuration and output directory of a subcommand.
pub fn resolve(common: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let path = match (&common.config, &common.out) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => out.join(pipeline::files::CONFIG),
        (None, None) => {
            return Err(CliError::Config {
                key: "--config".into(),
                line: None,
                message: "either --config or --out is required".into(),
            })
        }
    };
    let mut cfg = ExperimentConfig::from_file(&path, common.seed)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

pub fn run_cli(cli: Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config {
                key: "--threads".into(),
                line: None,
                message: "must be at least 1".into(),
            });
        }
        // Fails only when the pool already exists; the count is advisory then.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialized; --threads ignored");
        }
    }
    let (cfg, out) = resolve(common)?;
    match &cli.command {
        Command::Simulate(_) => pipeline::simulate_cmd(&cfg, &out),
        Command::Fit(_) => pipeline::fit_cmd(&cfg, &out),
        Command::Stats(_) => pipeline::stats_cmd(&cfg, &out),
        Command::Validate(_) => pipeline::validate_cmd(&cfg, &out),
        Command::Report(_) => pipeline::report_cmd(&cfg, &out).map(|s| print_summary(&s)),
        Command::Run(_) => pipeline::run_experiment(&cfg, &out).map(|s| print_summary(&s)),
        Command::Predict { input, .. } => {
            let table = pipeline::predict(&cfg, &out, input)?;
            print_table(&table);
            Ok(())
        }
    }
}

fn print_table(t: &csvio::Table) {
    println!("{}", t.header.join(","));
    for r in 0..t.rows() {
        let row: Vec<String> = t.columns.iter().map(|c| csvio::fmt(c[r])).collect();
        println!("{}", row.join(","));
    }
}

fn print_summary(s: &pipeline::Summary) {
    println!("model {} (n = {}, validation runs = {})", s.model, s.n, s.n_val);
    if let Some(w) = &s.warping {
        println!(
            "  time-warping: exceedance {:.2}%, mean error {}, std error {}, K' = {}, k LOO {:.3e}",
            100.0 * w.exceedance,
            opt(w.mean_error),
            opt(w.std_error),
            w.retained,
            w.k_loo
        );
    }
    if let Some(f) = &s.frozen {
        println!(
            "  time-frozen:  exceedance {:.2}%, mean error {}, std error {}",
            100.0 * f.exceedance,
            opt(f.mean_error),
            opt(f.std_error)
        );
    }
    for w in &s.warnings {
        println!("  warning: {w}");
    }
    for o in &s.observations {
        println!("  note: {o}");
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3e}"))
}
