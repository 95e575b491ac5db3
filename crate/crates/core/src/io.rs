//! CSV and JSON interchange formats.
//!
//! Spell input: `subject_id,birth_year,entry_age,exit_age,event,treated,
//! municipality_id,weight,cluster_id,<covariate...>` with event/treated
//! encoded 0/1. Lines starting with `#` are metadata comments and skipped.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use crate::cox::CoxFit;
use crate::diagnostics::CumHazCurve;
use crate::error::{Error, Result};
use crate::lineardid::{PanelData, PanelRow};
use crate::matching::{DistanceRecord, MatchWeight};
use crate::scalar::Scalar;
use crate::spell::{Spell, SpellData};

const SPELL_COLUMNS: [&str; 9] = [
    "subject_id",
    "birth_year",
    "entry_age",
    "exit_age",
    "event",
    "treated",
    "municipality_id",
    "weight",
    "cluster_id",
];

const PANEL_COLUMNS: [&str; 8] = [
    "outcome", "treat", "pilot", "post", "canton", "year", "weight", "cluster_id",
];

fn csv_err(line: Option<u64>, msg: impl Into<String>) -> Error {
    Error::Csv { line, msg: msg.into() }
}

fn reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn record_line(record: &csv::StringRecord) -> Option<u64> {
    record.position().map(|p| p.line())
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T> {
    let raw = record
        .get(idx)
        .ok_or_else(|| csv_err(record_line(record), format!("missing column {name}")))?;
    raw.parse::<T>().map_err(|_| {
        csv_err(
            record_line(record),
            format!("cannot parse {name} from {raw:?}"),
        )
    })
}

fn parse_bool01(record: &csv::StringRecord, idx: usize, name: &str) -> Result<bool> {
    match record.get(idx) {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        other => Err(csv_err(
            record_line(record),
            format!("{name} must be 0 or 1, got {other:?}"),
        )),
    }
}

fn parse_scalar<F: Scalar>(record: &csv::StringRecord, idx: usize, name: &str) -> Result<F> {
    let v: f64 = parse_field(record, idx, name)?;
    Ok(F::from_f64_lossy(v))
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<Vec<String>> {
    if headers.len() < expected.len() {
        return Err(csv_err(
            Some(1),
            format!("header has {} columns, expected at least {}", headers.len(), expected.len()),
        ));
    }
    for (i, want) in expected.iter().enumerate() {
        let got = headers.get(i).unwrap_or("");
        if got != *want {
            return Err(csv_err(
                Some(1),
                format!("header column {} is {got:?}, expected {want:?}", i + 1),
            ));
        }
    }
    Ok(headers.iter().skip(expected.len()).map(str::to_string).collect())
}

/// Read spells; extra header columns become named covariates.
pub fn read_spells_csv<F: Scalar>(input: impl Read) -> Result<SpellData<F>> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(Some(1), e.to_string()))?
        .clone();
    let covariate_names = check_header(&headers, &SPELL_COLUMNS)?;

    let mut spells = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            csv_err(line, e.to_string())
        })?;
        if record.len() != SPELL_COLUMNS.len() + covariate_names.len() {
            return Err(csv_err(
                record_line(&record),
                format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    SPELL_COLUMNS.len() + covariate_names.len()
                ),
            ));
        }
        let covariates = (0..covariate_names.len())
            .map(|j| parse_scalar(&record, SPELL_COLUMNS.len() + j, &covariate_names[j]))
            .collect::<Result<Vec<F>>>()?;
        spells.push(Spell {
            subject_id: parse_field(&record, 0, "subject_id")?,
            birth_year: parse_field(&record, 1, "birth_year")?,
            entry_age: parse_scalar(&record, 2, "entry_age")?,
            exit_age: parse_scalar(&record, 3, "exit_age")?,
            event: parse_bool01(&record, 4, "event")?,
            treated: parse_bool01(&record, 5, "treated")?,
            municipality_id: parse_field(&record, 6, "municipality_id")?,
            weight: parse_scalar(&record, 7, "weight")?,
            cluster_id: parse_field(&record, 8, "cluster_id")?,
            covariates,
        });
    }
    Ok(SpellData { covariate_names, spells })
}

fn write_comment(out: &mut impl Write, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

pub fn write_spells_csv<F: Scalar>(
    mut out: impl Write,
    data: &SpellData<F>,
    comment: Option<&str>,
) -> Result<()> {
    write_comment(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = SPELL_COLUMNS.to_vec();
    header.extend(data.covariate_names.iter().map(String::as_str));
    w.write_record(&header).map_err(|e| csv_err(None, e.to_string()))?;
    for s in &data.spells {
        let mut row = vec![
            s.subject_id.clone(),
            s.birth_year.to_string(),
            s.entry_age.to_string(),
            s.exit_age.to_string(),
            u8::from(s.event).to_string(),
            u8::from(s.treated).to_string(),
            s.municipality_id.clone(),
            s.weight.to_string(),
            s.cluster_id.clone(),
        ];
        row.extend(s.covariates.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_err(None, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Read distance records: `muni_a,muni_b,travel_km,travel_min`.
pub fn read_distances_csv<F: Scalar>(input: impl Read) -> Result<Vec<DistanceRecord<F>>> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(Some(1), e.to_string()))?
        .clone();
    check_header(&headers, &["muni_a", "muni_b", "travel_km", "travel_min"])?;
    let mut records = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            csv_err(line, e.to_string())
        })?;
        records.push(DistanceRecord {
            muni_a: parse_field(&record, 0, "muni_a")?,
            muni_b: parse_field(&record, 1, "muni_b")?,
            travel_km: parse_scalar(&record, 2, "travel_km")?,
            travel_min: parse_scalar(&record, 3, "travel_min")?,
        });
    }
    Ok(records)
}

/// Write match weights: `subject_id,weight,matched_muni,matched_distance`.
pub fn write_weights_csv<F: Scalar>(
    mut out: impl Write,
    weights: &[MatchWeight<F>],
    comment: Option<&str>,
) -> Result<()> {
    write_comment(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "weight", "matched_muni", "matched_distance"])
        .map_err(|e| csv_err(None, e.to_string()))?;
    for m in weights {
        w.write_record([
            m.spell_ref.clone(),
            m.weight.to_string(),
            m.matched_muni.clone(),
            m.matched_distance.to_string(),
        ])
        .map_err(|e| csv_err(None, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Write cumulative-hazard curves: `group,age,cumhaz,log_cumhaz`.
pub fn write_curves_csv<F: Scalar>(
    mut out: impl Write,
    curves: &[CumHazCurve<F>],
    comment: Option<&str>,
) -> Result<()> {
    write_comment(&mut out, comment)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "age", "cumhaz", "log_cumhaz"])
        .map_err(|e| csv_err(None, e.to_string()))?;
    for c in curves {
        let label = match c.stratum {
            Some(g) => format!("{}@{}", c.group, g),
            None => c.group.clone(),
        };
        for p in &c.points {
            w.write_record([
                label.clone(),
                p.age.to_string(),
                p.cumhaz.to_string(),
                p.cumhaz.ln().to_string(),
            ])
            .map_err(|e| csv_err(None, e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read panel rows: `outcome,treat,pilot,post,canton,year,weight,cluster_id,
/// <covariate...>`; the DiD interactions are formed as treat·pilot and
/// treat·post.
pub fn read_panel_csv<F: Scalar>(input: impl Read) -> Result<PanelData<F>> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(Some(1), e.to_string()))?
        .clone();
    let covariate_names = check_header(&headers, &PANEL_COLUMNS)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            csv_err(line, e.to_string())
        })?;
        let treat = parse_bool01(&record, 1, "treat")?;
        let pilot = parse_bool01(&record, 2, "pilot")?;
        let post = parse_bool01(&record, 3, "post")?;
        let covariates = (0..covariate_names.len())
            .map(|j| parse_scalar(&record, PANEL_COLUMNS.len() + j, &covariate_names[j]))
            .collect::<Result<Vec<F>>>()?;
        rows.push(PanelRow {
            outcome: parse_scalar(&record, 0, "outcome")?,
            treat_x_pilot: treat && pilot,
            treat_x_post: treat && post,
            unit_fe: parse_field(&record, 4, "canton")?,
            time_fe: parse_field(&record, 5, "year")?,
            weight: parse_scalar(&record, 6, "weight")?,
            cluster_id: parse_field(&record, 7, "cluster_id")?,
            covariates,
        });
    }
    Ok(PanelData { covariate_names, rows })
}

/// JSON form of a fitted Cox model.
#[derive(Debug, Clone, Serialize)]
pub struct FitJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub beta: BTreeMap<String, f64>,
    pub se_model: BTreeMap<String, f64>,
    pub se_robust: BTreeMap<String, f64>,
    pub hazard_ratios: BTreeMap<String, f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ties: String,
    pub n_individuals: usize,
    pub n_failures: usize,
    pub n_failures_pilot: usize,
    pub n_episodes: usize,
    pub n_clusters: usize,
    pub baseline: Vec<BaselinePointJson>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselinePointJson {
    pub stratum: i64,
    pub age: f64,
    pub cumhaz: f64,
}

pub fn fit_to_json<F: Scalar>(fit: &CoxFit<F>) -> FitJson {
    let named = |values: Vec<F>| -> BTreeMap<String, f64> {
        fit.term_names
            .iter()
            .cloned()
            .zip(values.into_iter().map(Scalar::to_f64_lossy))
            .collect()
    };
    FitJson {
        config_hash: None,
        seed: None,
        beta: named(fit.beta.clone()),
        se_model: named(fit.se_model()),
        se_robust: named(fit.se_robust()),
        hazard_ratios: named(fit.hazard_ratios()),
        loglik: fit.loglik.to_f64_lossy(),
        iterations: fit.iterations,
        converged: fit.converged,
        ties: match fit.ties {
            crate::cox::Ties::Efron => "efron".into(),
            crate::cox::Ties::Breslow => "breslow".into(),
        },
        n_individuals: fit.n_subjects,
        n_failures: fit.n_events,
        n_failures_pilot: fit.n_events_pilot,
        n_episodes: fit.n_episodes,
        n_clusters: fit.n_clusters,
        baseline: fit
            .baseline
            .iter()
            .flat_map(|b| {
                b.points.iter().map(|&(age, cumhaz)| BaselinePointJson {
                    stratum: b.stratum,
                    age: age.to_f64_lossy(),
                    cumhaz: cumhaz.to_f64_lossy(),
                })
            })
            .collect(),
        warnings: fit.warnings.clone(),
    }
}

/// JSON form of a fixed-effects regression.
#[derive(Debug, Clone, Serialize)]
pub struct OlsJson {
    pub beta: BTreeMap<String, f64>,
    pub se_cluster: BTreeMap<String, f64>,
    pub n: usize,
    pub n_clusters: usize,
    pub r2_within: f64,
}

pub fn ols_to_json<F: Scalar>(fit: &crate::lineardid::OlsFit<F>) -> OlsJson {
    let named = |values: Vec<F>| -> BTreeMap<String, f64> {
        fit.term_names
            .iter()
            .cloned()
            .zip(values.into_iter().map(Scalar::to_f64_lossy))
            .collect()
    };
    OlsJson {
        beta: named(fit.beta.clone()),
        se_cluster: named(fit.se_cluster()),
        n: fit.n,
        n_clusters: fit.n_clusters,
        r2_within: fit.r2_within.to_f64_lossy(),
    }
}

/// Coefficient table styled like the incidence tables: exponentiated
/// coefficients with delta-method standard errors, stars from robust z
/// statistics, and sample counts in the footer.
pub fn format_fit_table<F: Scalar>(fit: &CoxFit<F>, n_municipalities: Option<usize>) -> String {
    use crate::stats;
    let se_rob = fit.se_robust();
    let mut out = String::new();
    out.push_str(&format!("{:<24}{:>14}{:>14}\n", "term", "haz. ratio", "(se)"));
    for j in 0..fit.beta.len() {
        let b = fit.beta[j].to_f64_lossy();
        let se = se_rob[j].to_f64_lossy();
        let hr = b.exp();
        let z = if se > 0.0 { b / se } else { 0.0 };
        out.push_str(&format!(
            "{:<24}{:>11.3}{:<3}{:>14}\n",
            fit.term_names[j],
            hr,
            stats::stars(z),
            format!("({:.3})", hr * se),
        ));
    }
    if let Some(m) = n_municipalities {
        out.push_str(&format!("{:<24}{:>14}\n", "N municipalities", m));
    }
    out.push_str(&format!("{:<24}{:>14}\n", "N individuals", fit.n_subjects));
    out.push_str(&format!("{:<24}{:>14}\n", "N failures", fit.n_events));
    out.push_str(&format!("{:<24}{:>14}\n", "N failures during pilot", fit.n_events_pilot));
    out.push_str(&format!(
        "{:<24}{:>14}\n",
        "log likelihood",
        format!("{:.4}", fit.loglik.to_f64_lossy())
    ));
    out
}
