//! Assumption diagnostics and robustness machinery: log cumulative-hazard
//! curves, placebo reforms, distance-window sweeps, and the back-of-the-
//! envelope cost calculator.

use serde::{Deserialize, Serialize};

use crate::cox::{
    did_terms, did_terms_pilot_only, fit_cox, ratt_from_fit, CoxFit, CoxOptions, Term,
};
use crate::episode::{build_episodes, build_episodes_custom, EpisodeData};
use crate::error::{Error, Result};
use crate::matching::{
    local_sample, muni_units_from_spells, nearest_counterpart, pairwise_weights, DistanceMetric,
    DistanceTable, MatchConfig,
};
use crate::scalar::Scalar;
use crate::spell::{PeriodWindows, SpellData};

/// One point of a cumulative-hazard step function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CumHazPoint<F> {
    pub age: F,
    pub cumhaz: F,
    /// Weighted size of the risk set just before this age.
    pub at_risk: F,
}

/// Nelson-Aalen cumulative hazard for one group (optionally one stratum).
#[derive(Debug, Clone, Serialize)]
pub struct CumHazCurve<F> {
    pub group: String,
    pub stratum: Option<i64>,
    pub points: Vec<CumHazPoint<F>>,
}

impl<F: Scalar> CumHazCurve<F> {
    /// `(age, ln cumhaz)` where the cumulative hazard is positive.
    pub fn log_points(&self) -> Vec<(F, F)> {
        self.points
            .iter()
            .filter(|p| p.cumhaz > F::zero())
            .map(|p| (p.age, p.cumhaz.ln()))
            .collect()
    }

    /// Step-function lookup of the cumulative hazard at `age`.
    pub fn cumhaz_at(&self, age: F) -> F {
        let k = self.points.partition_point(|p| p.age <= age);
        if k == 0 {
            F::zero()
        } else {
            self.points[k - 1].cumhaz
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogLogOptions<F> {
    /// Both groups must have at least this weighted risk-set size at an age
    /// for it to enter the parallelism statistic.
    pub risk_floor: F,
    /// Parallelism flag level on the log scale.
    pub flag_level: F,
}

impl<F: Scalar> Default for LogLogOptions<F> {
    fn default() -> Self {
        Self {
            risk_floor: F::from_f64_lossy(30.0),
            flag_level: F::from_f64_lossy(0.25),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogLogReport<F> {
    pub curves: Vec<CumHazCurve<F>>,
    /// Max over common ages of |Δlog cumhaz − median Δlog|; present only for
    /// the unstratified two-group case with enough common ages.
    pub parallelism_stat: Option<F>,
    /// Whether the statistic exceeds the flag level.
    pub flagged: Option<bool>,
    pub warnings: Vec<String>,
}

/// Weighted Nelson-Aalen over counting-process rows: at each event age,
/// increment = weighted deaths / weighted at-risk.
fn nelson_aalen<F: Scalar>(rows: &[(F, F, bool, F)]) -> Vec<CumHazPoint<F>> {
    let mut times: Vec<F> = rows
        .iter()
        .filter(|r| r.2)
        .map(|r| r.1)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();

    let mut by_stop: Vec<usize> = (0..rows.len()).collect();
    by_stop.sort_by(|&a, &b| rows[b].1.partial_cmp(&rows[a].1).unwrap().then(a.cmp(&b)));
    let mut by_start: Vec<usize> = (0..rows.len()).collect();
    by_start.sort_by(|&a, &b| rows[b].0.partial_cmp(&rows[a].0).unwrap().then(a.cmp(&b)));

    let mut at_risk = F::zero();
    let mut add = 0usize;
    let mut rem = 0usize;
    let mut increments = vec![(F::zero(), F::zero()); times.len()];
    for k in (0..times.len()).rev() {
        let t = times[k];
        while add < by_stop.len() && rows[by_stop[add]].1 >= t {
            at_risk += rows[by_stop[add]].3;
            add += 1;
        }
        while rem < by_start.len() && rows[by_start[rem]].0 >= t {
            at_risk -= rows[by_start[rem]].3;
            rem += 1;
        }
        let deaths: F = rows
            .iter()
            .filter(|r| r.2 && r.1 == t)
            .fold(F::zero(), |acc, r| acc + r.3);
        increments[k] = (deaths / at_risk, at_risk);
    }

    let mut cum = F::zero();
    times
        .iter()
        .zip(increments)
        .map(|(&age, (inc, at_risk))| {
            cum += inc;
            CumHazPoint { age, cumhaz: cum, at_risk }
        })
        .collect()
}

/// Nelson-Aalen curves by treatment region (optionally within strata) plus a
/// parallelism statistic for the two-group case.
///
/// Groups without events are omitted with a warning. The statistic compares
/// `ln Λ_treated - ln Λ_control` across ages where both groups have an event
/// age, positive cumulated hazard and risk sets above the floor.
pub fn loglog_curves<F: Scalar>(
    data: &EpisodeData<F>,
    by_stratum: bool,
    options: &LogLogOptions<F>,
) -> Result<LogLogReport<F>> {
    if data.episodes.is_empty() {
        return Err(Error::InvalidInput("no episodes".into()));
    }
    let mut warnings = Vec::new();
    let mut curves = Vec::new();
    let mut strata: Vec<Option<i64>> = if by_stratum {
        let mut s: Vec<i64> = data.episodes.iter().map(|e| e.stratum).collect();
        s.sort_unstable();
        s.dedup();
        s.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    strata.sort();

    for stratum in strata {
        for (label, flag) in [("control", false), ("treated", true)] {
            let rows: Vec<(F, F, bool, F)> = data
                .episodes
                .iter()
                .filter(|e| e.d == flag && stratum.is_none_or(|g| e.stratum == g) && e.weight > F::zero())
                .map(|e| (e.start, e.stop, e.event, e.weight))
                .collect();
            let points = if rows.is_empty() { vec![] } else { nelson_aalen(&rows) };
            if points.is_empty() {
                warnings.push(match stratum {
                    Some(g) => format!("group {label} in stratum {g} has no events; curve omitted"),
                    None => format!("group {label} has no events; curve omitted"),
                });
                continue;
            }
            curves.push(CumHazCurve { group: label.to_string(), stratum, points });
        }
    }

    let (parallelism_stat, flagged) = if !by_stratum && curves.len() == 2 {
        match parallelism_statistic(&curves[0], &curves[1], options) {
            Some(stat) => (Some(stat), Some(stat > options.flag_level)),
            None => (None, None),
        }
    } else {
        (None, None)
    };

    Ok(LogLogReport { curves, parallelism_stat, flagged, warnings })
}

fn parallelism_statistic<F: Scalar>(
    a: &CumHazCurve<F>,
    b: &CumHazCurve<F>,
    options: &LogLogOptions<F>,
) -> Option<F> {
    let mut deltas: Vec<F> = Vec::new();
    let b_ages: std::collections::BTreeSet<_> = b
        .points
        .iter()
        .map(|p| p.age.to_f64_lossy().to_bits())
        .collect();
    for pa in &a.points {
        if !b_ages.contains(&pa.age.to_f64_lossy().to_bits()) {
            continue;
        }
        let pb = b.points[b.points.partition_point(|p| p.age < pa.age)];
        if pa.at_risk < options.risk_floor || pb.at_risk < options.risk_floor {
            continue;
        }
        if pa.cumhaz > F::zero() && pb.cumhaz > F::zero() {
            deltas.push(pa.cumhaz.ln() - pb.cumhaz.ln());
        }
    }
    if deltas.len() < 3 {
        return None;
    }
    let mut sorted = deltas.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / F::from_f64_lossy(2.0)
    };
    Some(
        deltas
            .iter()
            .fold(F::zero(), |acc, &d| acc.max((d - median).abs())),
    )
}

#[derive(Debug, Clone)]
pub struct PlaceboOptions<F> {
    pub stratum_width: u32,
    pub cox: CoxOptions<F>,
    /// Control covariates to include alongside the period terms.
    pub extra_terms: Vec<Term>,
}

impl<F: Scalar> Default for PlaceboOptions<F> {
    fn default() -> Self {
        Self { stratum_width: 5, cox: CoxOptions::default(), extra_terms: vec![] }
    }
}

/// Fit the full pipeline with the pilot indicator defined on a pseudo window
/// preceding the true pilot.
///
/// With `true_windows` given, the true pilot and post terms are retained as
/// additional indicator covariates (`true_pilot`, `treat_x_true_pilot`,
/// `true_post`, `treat_x_true_post`), so the pseudo interaction is estimated
/// net of the actual reform.
pub fn placebo_fit<F: Scalar>(
    spells: &SpellData<F>,
    pseudo_window: &PeriodWindows,
    true_windows: Option<&PeriodWindows>,
    options: &PlaceboOptions<F>,
) -> Result<CoxFit<F>> {
    pseudo_window.validate()?;
    if let Some(tw) = true_windows {
        tw.validate()?;
        if pseudo_window.pilot_end_exclusive > tw.pilot_start
            || pseudo_window.post_end_exclusive > tw.pilot_start
        {
            return Err(Error::PseudoWindowOverlap {
                pseudo_start: pseudo_window.pilot_start,
                pseudo_end: pseudo_window
                    .pilot_end_exclusive
                    .max(pseudo_window.post_end_exclusive),
                true_start: tw.pilot_start,
            });
        }
    }

    let has_post = pseudo_window.post_end_exclusive > pseudo_window.pilot_end_exclusive;
    let mut terms = if has_post { did_terms() } else { did_terms_pilot_only() };

    let episodes = match true_windows {
        None => build_episodes(spells, pseudo_window, options.stratum_width)?,
        Some(tw) => {
            let ind = |b: bool| if b { F::one() } else { F::zero() };
            let cuts = [tw.pilot_start, tw.pilot_end_exclusive, tw.post_end_exclusive];
            let names = ["true_pilot", "treat_x_true_pilot", "true_post", "treat_x_true_post"];
            let eps = build_episodes_custom(
                spells,
                pseudo_window,
                options.stratum_width,
                &cuts,
                &names,
                |spell, year, _, _| {
                    vec![
                        ind(tw.in_pilot(year)),
                        ind(tw.in_pilot(year) && spell.treated),
                        ind(tw.in_post(year)),
                        ind(tw.in_post(year) && spell.treated),
                    ]
                },
            )?;
            for n in names {
                terms.push(Term::Covariate(n.into()));
            }
            eps
        }
    };
    terms.extend(options.extra_terms.iter().cloned());
    fit_cox(&episodes, &terms, &options.cox)
}

/// One threshold of a distance-window sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult<F> {
    pub threshold: F,
    pub metric: DistanceMetric,
    /// `None` when the threshold yields an empty arm or the fit fails.
    pub fit: Option<SweepFit<F>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFit<F> {
    pub hazard_ratio: F,
    pub ci_low: F,
    pub ci_high: F,
    pub n_spells: usize,
    pub n_failures_pilot: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOptions<F> {
    pub stratum_width: u32,
    pub cox: CoxOptions<F>,
    pub level: F,
}

impl<F: Scalar> Default for SweepOptions<F> {
    fn default() -> Self {
        Self { stratum_width: 5, cox: CoxOptions::default(), level: F::from_f64_lossy(0.95) }
    }
}

/// Rebuild the local sample and weights at each threshold, refit, and record
/// the interaction hazard ratio. Thresholds must be positive and strictly
/// increasing; a threshold that empties an arm is marked unavailable and the
/// sweep continues.
pub fn distance_sweep<F: Scalar>(
    spells: &SpellData<F>,
    distances: &DistanceTable<F>,
    thresholds: &[F],
    metric: DistanceMetric,
    windows: &PeriodWindows,
    options: &SweepOptions<F>,
) -> Result<Vec<SweepResult<F>>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig("no thresholds".into()));
    }
    for w in thresholds.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidConfig("thresholds must be strictly increasing".into()));
        }
    }
    let positive = thresholds[0] > F::zero(); // NaN-safe
    if !positive {
        return Err(Error::InvalidConfig("thresholds must be positive".into()));
    }

    let units = muni_units_from_spells(&spells.spells)?;
    // The nearest map does not depend on the threshold; compute it once.
    let base_config = MatchConfig { metric, threshold: thresholds[0], same_year: false };
    let nearest = nearest_counterpart(&units, distances, &base_config)?;

    let mut results = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let config = MatchConfig { metric, threshold, same_year: false };
        let local = local_sample(&spells.spells, &nearest, &config);
        let outcome = (|| -> Result<SweepFit<F>> {
            let weights = pairwise_weights(&local, &nearest, &config)?;
            let mut weighted = SpellData::new(spells.covariate_names.clone(), local.clone());
            for (s, w) in weighted.spells.iter_mut().zip(&weights) {
                debug_assert_eq!(s.subject_id, w.spell_ref);
                s.weight *= w.weight;
            }
            let episodes = build_episodes(&weighted, windows, options.stratum_width)?;
            let fit = fit_cox(&episodes, &did_terms(), &options.cox)?;
            let ratt = ratt_from_fit(&fit, options.level)?;
            Ok(SweepFit {
                hazard_ratio: ratt.hazard_ratio,
                ci_low: ratt.ci_low,
                ci_high: ratt.ci_high,
                n_spells: local.len(),
                n_failures_pilot: fit.n_events_pilot,
            })
        })();
        results.push(match outcome {
            Ok(fit) => SweepResult { threshold, metric, fit: Some(fit), note: None },
            Err(e) => SweepResult { threshold, metric, fit: None, note: Some(e.to_string()) },
        });
    }
    Ok(results)
}

/// Inputs to the back-of-the-envelope savings calculation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostParams<F> {
    pub at_risk_population: F,
    /// Absolute reduction in the yearly entry hazard (e.g. 0.0009).
    pub hazard_reduction_per_year: F,
    pub avg_annual_benefit: F,
    pub avg_remaining_years: F,
    pub physician_positions: F,
    pub cost_per_position: F,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport<F> {
    pub prevented_entries: F,
    pub gross_savings: F,
    pub net_savings: F,
}

/// `prevented = population × reduction`, `gross = prevented × benefit ×
/// remaining years`, `net = gross − positions × cost`.
pub fn cost_effectiveness<F: Scalar>(params: &CostParams<F>) -> Result<CostReport<F>> {
    for (name, v) in [
        ("at_risk_population", params.at_risk_population),
        ("hazard_reduction_per_year", params.hazard_reduction_per_year),
        ("avg_annual_benefit", params.avg_annual_benefit),
        ("avg_remaining_years", params.avg_remaining_years),
        ("physician_positions", params.physician_positions),
        ("cost_per_position", params.cost_per_position),
    ] {
        if !(v >= F::zero() && v.is_finite()) {
            return Err(Error::InvalidConfig(format!("{name} must be nonnegative, got {v}")));
        }
    }
    let prevented_entries = params.at_risk_population * params.hazard_reduction_per_year;
    let gross_savings = prevented_entries * params.avg_annual_benefit * params.avg_remaining_years;
    let net_savings = gross_savings - params.physician_positions * params.cost_per_position;
    Ok(CostReport { prevented_entries, gross_savings, net_savings })
}
