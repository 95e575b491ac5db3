//! JSON config schemas for the subcommands and the output wrappers that
//! embed provenance (config hash, seed).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use hazdid::cox::Ties;
use hazdid::diagnostics::{CostParams, CostReport, SweepResult};
use hazdid::matching::{DistanceMetric, MatchConfig};
use hazdid::simulation::{BoundReport, DgpConfig};
use hazdid::spell::PeriodWindows;

fn default_stratum_width() -> u32 {
    5
}
fn default_cluster() -> String {
    "cluster_id".into()
}
fn default_level() -> f64 {
    0.95
}
fn default_risk_floor() -> f64 {
    30.0
}
fn default_flag_level() -> f64 {
    0.25
}

#[derive(Debug, Deserialize)]
pub struct FitConfig {
    pub spells: PathBuf,
    /// Optional matching-weights CSV (from `hazdid match`), multiplied into
    /// the spell weights; spells without a row get weight 0.
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub windows: PeriodWindows,
    #[serde(default = "default_stratum_width")]
    pub stratum_width: u32,
    #[serde(default)]
    pub ties: Ties,
    /// Covariate columns to include as controls.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// cluster_id | subject | municipality
    #[serde(default = "default_cluster")]
    pub cluster: String,
    /// Reject events past this age (retirement-age censoring bound).
    #[serde(default)]
    pub max_event_age: Option<f64>,
}

#[derive(Debug, Deserialize)]
pub struct MatchCmdConfig {
    pub spells: PathBuf,
    pub distances: PathBuf,
    #[serde(default)]
    pub config: MatchConfig<f64>,
}

#[derive(Debug, Deserialize)]
pub struct PlaceboCmdConfig {
    pub spells: PathBuf,
    pub pseudo_window: PeriodWindows,
    #[serde(default)]
    pub true_windows: Option<PeriodWindows>,
    #[serde(default = "default_stratum_width")]
    pub stratum_width: u32,
    #[serde(default)]
    pub ties: Ties,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "default_cluster")]
    pub cluster: String,
}

#[derive(Debug, Deserialize)]
pub struct SweepCmdConfig {
    pub spells: PathBuf,
    pub distances: PathBuf,
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub windows: PeriodWindows,
    #[serde(default = "default_stratum_width")]
    pub stratum_width: u32,
    #[serde(default)]
    pub ties: Ties,
    #[serde(default = "default_level")]
    pub level: f64,
}

#[derive(Debug, Deserialize)]
pub struct LogLogCmdConfig {
    pub spells: PathBuf,
    #[serde(default)]
    pub windows: PeriodWindows,
    #[serde(default = "default_stratum_width")]
    pub stratum_width: u32,
    #[serde(default)]
    pub by_stratum: bool,
    #[serde(default = "default_risk_floor")]
    pub risk_floor: f64,
    #[serde(default = "default_flag_level")]
    pub flag_level: f64,
}

#[derive(Debug, Serialize)]
pub struct TruthJson {
    pub config_hash: String,
    pub seed: u64,
    pub analytic_ratt: f64,
    pub n_spells: usize,
    pub n_events: usize,
    pub bounds: BoundReport<f64>,
    pub config: DgpConfig<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepJson<'a> {
    pub config_hash: String,
    pub results: &'a [SweepResult<f64>],
}

#[derive(Debug, Serialize)]
pub struct LogLogJson {
    pub config_hash: String,
    pub parallelism_stat: Option<f64>,
    pub flagged: Option<bool>,
    pub flag_level: f64,
    pub risk_floor: f64,
    pub n_curves: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct CostJson<'a> {
    pub config_hash: String,
    pub params: CostParams<f64>,
    pub report: &'a CostReport<f64>,
}
