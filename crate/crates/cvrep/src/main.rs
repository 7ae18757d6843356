use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cvrep::config::{BoundName, ConfigOverrides, DistanceSpec, ExperimentKind, ProtocolName};
use cvrep::output::{sidecar_path, write_outputs};
use cvrep::{experiments, ExperimentConfig, RunError, RunResult, WORKERS_ENV};

/// Simulator for a quantum-scissor CV repeater with Gaussian entanglement
/// swapping: EOF, key rates, bounds and baselines as CSV tables.
#[derive(Debug, Parser)]
#[command(name = "cvrep", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// EOF with gamma -> 0 post-selection, gain optimized under each cap.
    Eof,
    /// Secret key rate with (chi, g) optimized per distance.
    Keyrate,
    /// Lower, numeric (two links) and upper key-rate paths side by side.
    Bounds,
    /// PLOB bound, optimized direct transmission and infinite-squeezing EOF.
    Baselines,
    /// Z_n table against a Monte Carlo estimate.
    Znp,
    /// Key-rate optimization with optimizer traces (optionally over gamma_max).
    Optimize,
}

#[derive(Debug, Args)]
struct Flags {
    /// Number of links.
    #[arg(long, global = true, value_parser = ["2", "4", "8", "16"])]
    links: Option<String>,
    /// Total distance: `300`, `250,300` or `start:stop:step`.
    #[arg(long, global = true)]
    distance_km: Option<String>,
    /// Fixed source squeezing (optimized by default for key rates).
    #[arg(long, global = true)]
    chi: Option<f64>,
    /// Gain cap; repeat for several EOF curves.
    #[arg(long, global = true, value_delimiter = ',')]
    gain_max: Vec<f64>,
    /// Post-selection radius, once for all rounds or once per round.
    #[arg(long, global = true, value_delimiter = ',')]
    gamma_max: Vec<f64>,
    /// Candidate base-round radii for `optimize` (two links).
    #[arg(long, global = true, value_delimiter = ',')]
    gamma_scan: Vec<f64>,
    /// Reconciliation efficiency [default: 0.95].
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    protocol: Option<ProtocolName>,
    #[arg(long, global = true, value_enum)]
    bound: Option<BoundName>,
    /// Fock cutoff (maximum photon number) [default: 12].
    #[arg(long, global = true)]
    cutoff: Option<usize>,
    /// Fiber attenuation in dB/km [default: 0.2].
    #[arg(long, global = true)]
    attenuation: Option<f64>,
    /// Worker threads for the sweep [default: $CVREP_WORKERS or 1].
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for Monte Carlo columns.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials for `znp` [default: 1000000].
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Output CSV; the sidecar goes to `<out>.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML or JSON config; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

fn some_vec(v: Vec<f64>) -> Option<Vec<f64>> {
    (!v.is_empty()).then_some(v)
}

fn overrides(cmd: &Cmd, f: Flags) -> RunResult<ConfigOverrides> {
    let experiment = match cmd {
        Cmd::Eof => ExperimentKind::EofSingle,
        Cmd::Keyrate => ExperimentKind::KeyrateSingle,
        Cmd::Bounds => ExperimentKind::KeyrateBounds,
        Cmd::Baselines => ExperimentKind::Baselines,
        Cmd::Znp => ExperimentKind::ZnpTable,
        Cmd::Optimize => ExperimentKind::Optimize,
    };
    let file = match &f.config {
        Some(p) => ConfigOverrides::from_file(p)?,
        None => ConfigOverrides::default(),
    };
    if let Some(k) = file.experiment {
        let same = k == experiment
            || matches!(
                (k, experiment),
                (ExperimentKind::EofMulti, ExperimentKind::EofSingle)
            );
        if !same {
            return Err(RunError::Config(format!(
                "config file selects {}, command line selects {}",
                k.name(),
                experiment.name()
            )));
        }
    }
    let cli = ConfigOverrides {
        experiment: Some(experiment),
        links: f.links.map(|s| s.parse().expect("validated by clap")),
        distance_km: f.distance_km.as_deref().map(DistanceSpec::parse).transpose()?,
        chi: f.chi,
        gain_max: some_vec(f.gain_max),
        gamma_max: some_vec(f.gamma_max),
        gamma_scan: some_vec(f.gamma_scan),
        beta: f.beta,
        protocol: f.protocol,
        bound: f.bound,
        cutoff: f.cutoff,
        attenuation_db_per_km: f.attenuation,
        workers: f.workers,
        out: f.out,
        seed: f.seed,
        trials: f.trials,
        optimizer: None,
    };
    Ok(file.merge(cli))
}

fn default_workers() -> RunResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| RunError::Config(format!("{WORKERS_ENV}={s} is not a worker count"))),
        Err(_) => Ok(1),
    }
}

fn run(cli: Cli) -> RunResult<ExitCode> {
    let o = overrides(&cli.cmd, cli.flags)?;
    let cfg = ExperimentConfig::resolve(o, default_workers()?)?;
    let table = experiments::run(&cfg)?;
    let hash = write_outputs(&table, &cfg)?;
    eprintln!(
        "wrote {} rows to {} (sidecar {}, content sha256 {hash})",
        table.rows.len(),
        cfg.out.display(),
        sidecar_path(&cfg.out).display()
    );
    if !table.unconverged.is_empty() {
        eprintln!("cvrep: rows {:?} did not converge", table.unconverged);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("cvrep: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
