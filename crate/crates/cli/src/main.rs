//! `hflsim`: runs a scenario and writes its metrics.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hflsim::{parse_strategy, run_scenario, CliError, RunConfig, Scenario};

/// Simulator of UAV-assisted hierarchical federated learning.
#[derive(Debug, Parser)]
#[command(name = "hflsim", version)]
struct Args {
    /// TOML configuration merged over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario preset (single, baseline-compare, threshold-sweep, dropout, mobility-sweep).
    #[arg(long)]
    scenario: Option<String>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Device selection strategy (adaptive, random, distance-only, similarity-only, fixed).
    #[arg(long)]
    strategy: Option<String>,
    /// Round cap.
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

fn configure(args: &Args) -> Result<RunConfig, CliError> {
    let mut run = match &args.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &args.scenario {
        s.parse::<Scenario>()?;
        run.scenario = Some(s.clone());
    }
    if let Some(seed) = args.seed {
        run.sim.seed = seed;
    }
    if let Some(out) = &args.out {
        run.out = Some(out.clone());
    }
    if let Some(s) = &args.strategy {
        run.sim.orchestrator.selection = parse_strategy(s)?;
    }
    if let Some(r) = args.max_rounds {
        run.sim.orchestrator.max_rounds = r;
    }
    run.validate()?;
    Ok(run)
}

fn threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HFLSIM_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::config("HFLSIM_THREADS", format!("expected a positive integer, got `{v}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config("HFLSIM_THREADS", e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main_inner(args: Args) -> Result<(), CliError> {
    threads()?;
    let run = configure(&args)?;
    let out = run.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let quiet = args.quiet;
    let results = run_scenario(&run, &out, |arm, l| {
        if !quiet {
            eprintln!(
                "[{arm}] g={} K={} acc={:.4} T={:.2}s E={:.1}J selected={}",
                l.g,
                l.k_g,
                l.accuracy,
                l.t_total,
                l.e_total,
                l.n_selected()
            );
        }
    })?;
    if !quiet {
        for r in &results {
            println!(
                "{}: {:?} after {} rounds, accuracy {:.4}, T {:.2} s, E {:.1} J ({:.2} s wall) -> {}",
                r.name,
                r.summary.status,
                r.summary.rounds,
                r.summary.final_accuracy,
                r.summary.total_t,
                r.summary.total_e,
                r.wall_clock_s,
                r.dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hflsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
