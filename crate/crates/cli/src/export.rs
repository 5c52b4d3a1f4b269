//! Per-run output files: round table, position trace, summary and timing.

use std::fs;
use std::path::Path;

use hflsim_core::orchestrator::{DropoutEvent, RoundLog, RunStatus, RunSummary};
use hflsim_core::p3::AcceptedMove;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Header of `rounds.csv`.
pub const ROUNDS_HEADER: [&str; 10] =
    ["g", "K_g", "phi", "aggregator", "accuracy", "loss", "T_g_s", "E_g_J", "n_selected", "dropouts"];

/// Header of `positions.csv`.
pub const POSITIONS_HEADER: [&str; 5] = ["g", "entity type", "id", "x", "y"];

/// Identity of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub config_hash: String,
    pub scenario: String,
    pub arm: String,
    pub seed: u64,
}

/// Metrics of one round as stored in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub g: u32,
    pub k_g: u32,
    pub phi: bool,
    pub aggregator: usize,
    pub next_aggregator: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub t_g_s: f64,
    pub e_g_j: f64,
    pub n_selected: usize,
    pub selection_sizes: Vec<usize>,
    pub coverage_sizes: Vec<usize>,
    pub betas: Vec<Option<f64>>,
    pub h_star: Vec<u32>,
    pub dropouts: Vec<usize>,
    pub batteries_j: Vec<f64>,
    pub coverage_post_drop: usize,
    pub coverage_post_redeploy: usize,
    pub moves: Vec<AcceptedMove>,
}

impl From<&RoundLog> for RoundRecord {
    fn from(l: &RoundLog) -> Self {
        RoundRecord {
            g: l.g,
            k_g: l.k_g,
            phi: l.phi,
            aggregator: l.aggregator,
            next_aggregator: l.next_aggregator,
            accuracy: l.accuracy,
            loss: l.loss,
            t_g_s: l.t_total,
            e_g_j: l.e_total,
            n_selected: l.n_selected(),
            selection_sizes: l.selection_sizes.clone(),
            coverage_sizes: l.coverage_sizes.clone(),
            betas: l.betas.clone(),
            h_star: l.h_star.clone(),
            dropouts: l.dropouts.clone(),
            batteries_j: l.batteries.clone(),
            coverage_post_drop: l.coverage_post_drop,
            coverage_post_redeploy: l.coverage_post_redeploy,
            moves: l.moves.clone(),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    #[serde(flatten)]
    pub meta: RunMeta,
    pub status: RunStatus,
    pub rounds: u32,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub total_t_s: f64,
    pub total_e_j: f64,
    pub dropout_timeline: Vec<DropoutEvent>,
    pub per_round: Vec<RoundRecord>,
}

impl SummaryFile {
    /// Builds the summary of a finished run.
    pub fn new(meta: RunMeta, s: &RunSummary) -> Self {
        SummaryFile {
            meta,
            status: s.status,
            rounds: s.rounds,
            final_accuracy: s.final_accuracy,
            final_loss: s.final_loss,
            total_t_s: s.total_t,
            total_e_j: s.total_e,
            dropout_timeline: s.dropouts.clone(),
            per_round: s.logs.iter().map(RoundRecord::from).collect(),
        }
    }
}

/// Contents of `timing.json`, kept apart so the summary stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingFile {
    pub run_id: String,
    pub wall_clock_s: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source: e.into() }
}

/// Creates a directory and its parents.
pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes a whole file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Renders the round table.
pub fn rounds_csv(logs: &[RoundLog]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROUNDS_HEADER)?;
    for l in logs {
        let dropouts: Vec<String> = l.dropouts.iter().map(usize::to_string).collect();
        w.write_record([
            l.g.to_string(),
            l.k_g.to_string(),
            u8::from(l.phi).to_string(),
            l.aggregator.to_string(),
            l.accuracy.to_string(),
            l.loss.to_string(),
            l.t_total.to_string(),
            l.e_total.to_string(),
            l.n_selected().to_string(),
            dropouts.join(";"),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Renders UAV positions at the start of each round and device positions during it.
pub fn positions_csv(logs: &[RoundLog]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(POSITIONS_HEADER)?;
    for l in logs {
        let g = l.g.to_string();
        for (m, p) in l.uav_positions.iter().enumerate() {
            w.write_record([g.as_str(), "uav", &m.to_string(), &p.x.to_string(), &p.y.to_string()])?;
        }
        for (n, p) in l.device_positions.iter().enumerate() {
            w.write_record([g.as_str(), "device", &n.to_string(), &p.x.to_string(), &p.y.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Writes `rounds.csv`, `positions.csv`, `summary.json` and `timing.json` into `dir`.
pub fn write_run(dir: &Path, meta: &RunMeta, summary: &RunSummary, wall_clock_s: f64) -> Result<(), CliError> {
    create_dir(dir)?;
    let rounds = dir.join("rounds.csv");
    write_file(&rounds, &rounds_csv(&summary.logs).map_err(|e| csv_err(&rounds, e))?)?;
    let positions = dir.join("positions.csv");
    write_file(&positions, &positions_csv(&summary.logs).map_err(|e| csv_err(&positions, e))?)?;
    let file = SummaryFile::new(meta.clone(), summary);
    let json = serde_json::to_vec_pretty(&file).expect("summary serializes");
    write_file(&dir.join("summary.json"), &json)?;
    let timing = TimingFile { run_id: meta.run_id.clone(), wall_clock_s };
    write_file(&dir.join("timing.json"), &serde_json::to_vec_pretty(&timing).expect("timing serializes"))
}
