//! Scenario presets: each expands one configuration into named arms.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use hflsim_core::config::{Redeploy, Selection, SimConfig};
use hflsim_core::orchestrator::{RunSummary, Simulator};

use crate::config::RunConfig;
use crate::export;
use crate::CliError;

/// Built-in experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// One run of the configuration as given.
    Single,
    /// Adaptive selection against the random, distance-only and similarity-only baselines.
    BaselineCompare,
    /// Adaptive selection against fixed similarity thresholds.
    ThresholdSweep,
    /// Scripted low batteries, greedy repositioning against direct aggregator re-election.
    Dropout,
    /// Several device relocation probabilities.
    MobilitySweep,
}

impl Scenario {
    /// Every accepted scenario name.
    pub const NAMES: [&'static str; 5] = ["single", "baseline-compare", "threshold-sweep", "dropout", "mobility-sweep"];
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "single" => Scenario::Single,
            "baseline-compare" => Scenario::BaselineCompare,
            "threshold-sweep" => Scenario::ThresholdSweep,
            "dropout" => Scenario::Dropout,
            "mobility-sweep" => Scenario::MobilitySweep,
            _ => {
                return Err(CliError::config(
                    "scenario",
                    format!("unknown scenario `{s}`, expected one of {}", Scenario::NAMES.join(", ")),
                ))
            }
        })
    }
}

/// One configuration of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub cfg: SimConfig,
}

fn arm(name: impl Into<String>, cfg: SimConfig) -> Arm {
    Arm { name: name.into(), cfg }
}

/// Expands a run configuration into the arms of its scenario.
pub fn arms(run: &RunConfig) -> Result<Vec<Arm>, CliError> {
    let scenario: Scenario = run.scenario.as_deref().unwrap_or("single").parse()?;
    let base = &run.sim;
    let opts = &run.scenario_options;
    let with = |f: &dyn Fn(&mut SimConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let arms = match scenario {
        Scenario::Single => vec![arm("run", base.clone())],
        Scenario::BaselineCompare => {
            [Selection::Adaptive, Selection::Random, Selection::DistanceOnly, Selection::SimilarityOnly]
                .into_iter()
                .map(|s| arm(selection_name(s), with(&|c| c.orchestrator.selection = s)))
                .collect()
        }
        Scenario::ThresholdSweep => {
            let mut v = vec![arm("adaptive", with(&|c| c.orchestrator.selection = Selection::Adaptive))];
            for &t in &opts.thresholds {
                v.push(arm(
                    format!("fixed-{t:.2}"),
                    with(&|c| {
                        c.orchestrator.selection = Selection::Fixed;
                        c.orchestrator.threshold = t;
                    }),
                ));
            }
            v
        }
        Scenario::Dropout => {
            let n = base.net.n_uavs;
            let mut scripted = base.clone();
            if scripted.cost.uav.battery_j_per_uav.is_empty() {
                let victims = if opts.dropout_uavs.is_empty() { vec![n / 2] } else { opts.dropout_uavs.clone() };
                let mut batteries = vec![base.cost.uav.battery_j; n];
                for m in victims {
                    if m >= n {
                        return Err(CliError::config(
                            "scenario_options.dropout_uavs",
                            format!("UAV {m} does not exist in a fleet of {n}"),
                        ));
                    }
                    batteries[m] = opts.dropout_battery_j;
                }
                scripted.cost.uav.battery_j_per_uav = batteries;
            }
            [Redeploy::TwoStageGreedy, Redeploy::DirectDrop]
                .into_iter()
                .map(|r| {
                    let mut c = scripted.clone();
                    c.orchestrator.redeploy = r;
                    arm(redeploy_name(r), c)
                })
                .collect()
        }
        Scenario::MobilitySweep => {
            opts.mobility_xis.iter().map(|&xi| arm(format!("xi-{xi:.2}"), with(&|c| c.net.xi = xi))).collect()
        }
    };
    for a in &arms {
        a.cfg.validate()?;
    }
    Ok(arms)
}

/// Kebab-case name of a selection strategy.
pub fn selection_name(s: Selection) -> &'static str {
    match s {
        Selection::Adaptive => "adaptive",
        Selection::Random => "random",
        Selection::DistanceOnly => "distance-only",
        Selection::SimilarityOnly => "similarity-only",
        Selection::Fixed => "fixed",
    }
}

/// Kebab-case name of a repositioning policy.
pub fn redeploy_name(r: Redeploy) -> &'static str {
    match r {
        Redeploy::TwoStageGreedy => "two-stage-greedy",
        Redeploy::DirectDrop => "direct-drop",
    }
}

/// Outcome of one arm.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub name: String,
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub wall_clock_s: f64,
}

/// Runs every arm of the scenario and writes its outputs under `out`.
///
/// `progress` receives the arm name and each finished round.
pub fn run_scenario(
    run: &RunConfig,
    out: &Path,
    mut progress: impl FnMut(&str, &hflsim_core::orchestrator::RoundLog),
) -> Result<Vec<ArmResult>, CliError> {
    let arms = arms(run)?;
    let hash = run.hash();
    let scenario = run.scenario.clone().unwrap_or_else(|| "single".into());
    export::create_dir(out)?;
    export::write_file(&out.join("config.toml"), run.to_toml().as_bytes())?;
    let mut results = Vec::with_capacity(arms.len());
    for a in arms {
        let start = Instant::now();
        let mut sim = Simulator::new(a.cfg.clone())?;
        for _ in 0..a.cfg.orchestrator.max_rounds {
            let before = sim.logs().len();
            let more = sim.step()?;
            if sim.logs().len() > before {
                progress(&a.name, &sim.logs()[before]);
            }
            if !more {
                break;
            }
        }
        let summary = sim.summary();
        let wall_clock_s = start.elapsed().as_secs_f64();
        let dir = out.join(&a.name);
        let meta = export::RunMeta {
            run_id: format!("{}-{}-{}", &hash[..12], a.name, a.cfg.seed),
            config_hash: hash.clone(),
            scenario: scenario.clone(),
            arm: a.name.clone(),
            seed: a.cfg.seed,
        };
        export::write_run(&dir, &meta, &summary, wall_clock_s)?;
        results.push(ArmResult { name: a.name, dir, summary, wall_clock_s });
    }
    Ok(results)
}
