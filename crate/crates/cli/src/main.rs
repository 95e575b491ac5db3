//! Batch CLI: reproducible estimation runs driven by JSON config files.
//!
//! Every command is a pure function of (config, input files); outputs embed
//! the config hash (and seed where one applies) and are written atomically,
//! so reruns are byte-identical.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use hazdid::cox::{did_terms, fit_cox, Term, Ties};
use hazdid::diagnostics::{
    cost_effectiveness, distance_sweep, loglog_curves, placebo_fit, CostParams, LogLogOptions,
    PlaceboOptions, SweepOptions,
};
use hazdid::episode::build_episodes;
use hazdid::io as hio;
use hazdid::matching::{
    local_sample, muni_units_from_spells, nearest_counterpart, pairwise_weights, DistanceMetric,
    DistanceTable,
};
use hazdid::simulation::{analytic_ratt, bound_check, simulate_population};
use hazdid::spell::SpellData;
use hazdid::CoxOptions;

use config::*;

#[derive(Parser)]
#[command(name = "hazdid", version, about = "Difference-in-differences in stratified Cox models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TiesArg {
    Efron,
    Breslow,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Km,
    Minutes,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the stratified Cox DiD model on a spell CSV.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the tie correction.
        #[arg(long, value_enum)]
        ties: Option<TiesArg>,
        /// Override the clustering variable (cluster_id, subject, municipality).
        #[arg(long)]
        cluster: Option<String>,
    },
    /// Compute nearest-neighbor matching weights from distances.
    Match {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Draw a synthetic population and write spells plus ground truth.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the simulation seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a pseudo-treatment window preceding the true pilot.
    Placebo {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        ties: Option<TiesArg>,
    },
    /// Re-estimate across a set of distance thresholds.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
    },
    /// Log cumulative-hazard curves by treatment region.
    Loglog {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Back-of-the-envelope savings from a hazard reduction.
    Cost {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Input problems exit with 2, estimation failures with 1.
enum CliError {
    Input(anyhow::Error),
    Estimation(anyhow::Error),
}

impl From<hazdid::Error> for CliError {
    fn from(e: hazdid::Error) -> Self {
        use hazdid::Error as E;
        match e {
            E::SingularDesign { .. }
            | E::CollinearTerm { .. }
            | E::NoEvents
            | E::SingleCluster(_)
            | E::NotConverged(_)
            | E::EmptyArm(_) => CliError::Estimation(anyhow!(e.to_string())),
            other => CliError::Input(anyhow!(other.to_string())),
        }
    }
}

fn input_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Input(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Estimation(e)) => {
            eprintln!("estimation error: {e}");
            ExitCode::from(1)
        }
        Err(CliError::Input(e)) => {
            eprintln!("input error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Read a config file, returning its parsed form and content hash.
fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, String), CliError> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(input_err)?;
    let cfg: T = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(input_err)?;
    let hash: String = Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok((cfg, hash))
}

fn read_spells(path: &Path) -> Result<SpellData<f64>, CliError> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(input_err)?;
    Ok(hio::read_spells_csv(file)?)
}

fn read_distances(path: &Path) -> Result<DistanceTable<f64>, CliError> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(input_err)?;
    let records = hio::read_distances_csv::<f64>(file)?;
    Ok(DistanceTable::from_records(&records)?)
}

/// Atomic write: temp file in the target directory, then rename.
fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(input_err)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)
        .and_then(|()| std::fs::rename(&tmp, &path))
        .with_context(|| format!("writing {}", path.display()))
        .map_err(input_err)?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .context("serializing output")
        .map_err(input_err)?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn apply_cluster_choice(spells: &mut SpellData<f64>, choice: &str) -> Result<(), CliError> {
    match choice {
        "cluster_id" => Ok(()),
        "subject" => {
            for s in &mut spells.spells {
                s.cluster_id = s.subject_id.clone();
            }
            Ok(())
        }
        "municipality" => {
            for s in &mut spells.spells {
                s.cluster_id = s.municipality_id.clone();
            }
            Ok(())
        }
        other => Err(input_err(anyhow!(
            "unknown cluster choice {other:?} (expected cluster_id, subject or municipality)"
        ))),
    }
}

fn model_terms(covariates: &[String]) -> Vec<Term> {
    let mut terms = did_terms();
    terms.extend(covariates.iter().cloned().map(Term::Covariate));
    terms
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit { common, ties, cluster } => {
            let (mut cfg, hash) = load_config::<FitConfig>(&common.config)?;
            if let Some(t) = ties {
                cfg.ties = match t {
                    TiesArg::Efron => Ties::Efron,
                    TiesArg::Breslow => Ties::Breslow,
                };
            }
            if let Some(c) = cluster {
                cfg.cluster = c;
            }
            cfg.windows.validate()?;

            let mut spells = read_spells(&cfg.spells)?;
            spells.validate(cfg.max_event_age)?;
            apply_cluster_choice(&mut spells, &cfg.cluster)?;
            if let Some(weights_path) = &cfg.weights {
                apply_weights(&mut spells, weights_path)?;
            }
            let n_munis = distinct_municipalities(&spells);

            let episodes = build_episodes(&spells, &cfg.windows, cfg.stratum_width)?;
            let options = CoxOptions { ties: cfg.ties, ..Default::default() };
            let fit = fit_cox(&episodes, &model_terms(&cfg.covariates), &options)?;

            let mut json = hio::fit_to_json(&fit);
            json.config_hash = Some(hash.clone());
            write_json(&common.out, "fit.json", &json)?;
            let mut table = format!("# config_hash={hash}\n");
            table.push_str(&hio::format_fit_table(&fit, Some(n_munis)));
            write_atomic(&common.out, "fit_table.txt", table.as_bytes())?;
            println!("{}", hio::format_fit_table(&fit, Some(n_munis)));
            Ok(())
        }
        Command::Match { common, metric, threshold } => {
            let (mut cfg, hash) = load_config::<MatchCmdConfig>(&common.config)?;
            if let Some(m) = metric {
                cfg.config.metric = match m {
                    MetricArg::Km => DistanceMetric::Km,
                    MetricArg::Minutes => DistanceMetric::Minutes,
                };
            }
            if let Some(t) = threshold {
                cfg.config.threshold = t;
            }
            let spells = read_spells(&cfg.spells)?;
            let distances = read_distances(&cfg.distances)?;
            let units = muni_units_from_spells(&spells.spells)?;
            let nearest = nearest_counterpart(&units, &distances, &cfg.config)?;
            let local = local_sample(&spells.spells, &nearest, &cfg.config);
            let weights = pairwise_weights(&local, &nearest, &cfg.config)?;
            let mut buf = Vec::new();
            hio::write_weights_csv(&mut buf, &weights, Some(&format!("config_hash={hash}")))?;
            write_atomic(&common.out, "weights.csv", &buf)?;
            println!(
                "matched {} spells ({} treated) across {} municipalities",
                weights.len(),
                local.iter().filter(|s| s.treated).count(),
                distinct_municipalities(&SpellData::new(vec![], local.clone()))
            );
            Ok(())
        }
        Command::Simulate { common, seed } => {
            let (mut cfg, hash) = load_config::<hazdid::simulation::DgpConfig<f64>>(&common.config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let spells = simulate_population(&cfg)?;
            let truth = analytic_ratt(&cfg)?;
            let bounds = bound_check(&cfg.effects, cfg.p_eligible);
            let mut buf = Vec::new();
            hio::write_spells_csv(
                &mut buf,
                &spells,
                Some(&format!("config_hash={hash} seed={}", cfg.seed)),
            )?;
            write_atomic(&common.out, "spells.csv", &buf)?;
            let truth_json = TruthJson {
                config_hash: hash,
                seed: cfg.seed,
                analytic_ratt: truth,
                n_spells: spells.spells.len(),
                n_events: spells.spells.iter().filter(|s| s.event).count(),
                bounds,
                config: cfg,
            };
            write_json(&common.out, "truth.json", &truth_json)?;
            println!(
                "simulated {} spells, analytic rATT {truth:.4}",
                truth_json.n_spells
            );
            Ok(())
        }
        Command::Placebo { common, ties } => {
            let (mut cfg, hash) = load_config::<PlaceboCmdConfig>(&common.config)?;
            if let Some(t) = ties {
                cfg.ties = match t {
                    TiesArg::Efron => Ties::Efron,
                    TiesArg::Breslow => Ties::Breslow,
                };
            }
            let mut spells = read_spells(&cfg.spells)?;
            apply_cluster_choice(&mut spells, &cfg.cluster)?;
            let options = PlaceboOptions {
                stratum_width: cfg.stratum_width,
                cox: CoxOptions { ties: cfg.ties, ..Default::default() },
                extra_terms: cfg.covariates.iter().cloned().map(Term::Covariate).collect(),
            };
            let fit = placebo_fit(&spells, &cfg.pseudo_window, cfg.true_windows.as_ref(), &options)?;
            let mut json = hio::fit_to_json(&fit);
            json.config_hash = Some(hash);
            write_json(&common.out, "placebo.json", &json)?;
            println!("{}", hio::format_fit_table(&fit, None));
            Ok(())
        }
        Command::Sweep { common, metric } => {
            let (mut cfg, hash) = load_config::<SweepCmdConfig>(&common.config)?;
            if let Some(m) = metric {
                cfg.metric = match m {
                    MetricArg::Km => DistanceMetric::Km,
                    MetricArg::Minutes => DistanceMetric::Minutes,
                };
            }
            let spells = read_spells(&cfg.spells)?;
            let distances = read_distances(&cfg.distances)?;
            let options = SweepOptions {
                stratum_width: cfg.stratum_width,
                cox: CoxOptions { ties: cfg.ties, ..Default::default() },
                level: cfg.level,
            };
            let results =
                distance_sweep(&spells, &distances, &cfg.thresholds, cfg.metric, &cfg.windows, &options)?;
            let json = SweepJson { config_hash: hash.clone(), results: &results };
            write_json(&common.out, "sweep.json", &json)?;
            let mut csv_text = format!("# config_hash={hash}\n");
            csv_text.push_str("threshold,metric,hazard_ratio,ci_low,ci_high,n_spells,n_failures_pilot,note\n");
            for r in &results {
                let metric = match r.metric {
                    DistanceMetric::Km => "km",
                    DistanceMetric::Minutes => "minutes",
                };
                match &r.fit {
                    Some(f) => csv_text.push_str(&format!(
                        "{},{},{},{},{},{},{},\n",
                        r.threshold, metric, f.hazard_ratio, f.ci_low, f.ci_high, f.n_spells, f.n_failures_pilot
                    )),
                    None => csv_text.push_str(&format!(
                        "{},{},,,,,,{}\n",
                        r.threshold,
                        metric,
                        r.note.as_deref().unwrap_or("unavailable")
                    )),
                }
            }
            write_atomic(&common.out, "sweep.csv", csv_text.as_bytes())?;
            for r in &results {
                match &r.fit {
                    Some(f) => println!(
                        "threshold {:>8}: HR {:.3} [{:.3}, {:.3}] (n={}, pilot failures={})",
                        r.threshold, f.hazard_ratio, f.ci_low, f.ci_high, f.n_spells, f.n_failures_pilot
                    ),
                    None => println!(
                        "threshold {:>8}: unavailable ({})",
                        r.threshold,
                        r.note.as_deref().unwrap_or("")
                    ),
                }
            }
            Ok(())
        }
        Command::Loglog { common } => {
            let (cfg, hash) = load_config::<LogLogCmdConfig>(&common.config)?;
            let spells = read_spells(&cfg.spells)?;
            let episodes = build_episodes(&spells, &cfg.windows, cfg.stratum_width)?;
            let options = LogLogOptions { risk_floor: cfg.risk_floor, flag_level: cfg.flag_level };
            let report = loglog_curves(&episodes, cfg.by_stratum, &options)?;
            let mut buf = Vec::new();
            hio::write_curves_csv(&mut buf, &report.curves, Some(&format!("config_hash={hash}")))?;
            write_atomic(&common.out, "curves.csv", &buf)?;
            let json = LogLogJson {
                config_hash: hash,
                parallelism_stat: report.parallelism_stat,
                flagged: report.flagged,
                flag_level: cfg.flag_level,
                risk_floor: cfg.risk_floor,
                n_curves: report.curves.len(),
                warnings: report.warnings.clone(),
            };
            write_json(&common.out, "loglog.json", &json)?;
            match report.parallelism_stat {
                Some(s) => println!("parallelism statistic {:.4} (flag level {})", s, cfg.flag_level),
                None => println!("parallelism statistic unavailable"),
            }
            Ok(())
        }
        Command::Cost { common } => {
            let (cfg, hash) = load_config::<CostParams<f64>>(&common.config)?;
            let report = cost_effectiveness(&cfg)?;
            let json = CostJson { config_hash: hash, params: cfg, report: &report };
            write_json(&common.out, "cost.json", &json)?;
            println!(
                "prevented entries {:.1}; gross savings {:.0}; net savings {:.0}",
                report.prevented_entries, report.gross_savings, report.net_savings
            );
            Ok(())
        }
    }
}

fn distinct_municipalities(spells: &SpellData<f64>) -> usize {
    let mut ids: Vec<&str> = spells.spells.iter().map(|s| s.municipality_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

/// Multiply spell weights by matching weights keyed on subject id.
fn apply_weights(spells: &mut SpellData<f64>, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(input_err)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut weights: std::collections::HashMap<String, f64> = Default::default();
    for record in rdr.records() {
        let record = record
            .map_err(|e| input_err(anyhow!("weights csv: {e}")))?;
        let id = record
            .get(0)
            .ok_or_else(|| input_err(anyhow!("weights csv: missing subject_id")))?;
        let w: f64 = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| input_err(anyhow!("weights csv: bad weight for {id}")))?;
        weights.insert(id.to_string(), w);
    }
    // Spells without a weight row are excluded (weight 0): the weight file
    // defines the estimation sample.
    for s in &mut spells.spells {
        s.weight *= weights.get(&s.subject_id).copied().unwrap_or(0.0);
    }
    Ok(())
}
