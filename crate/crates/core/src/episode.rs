//! Episode splitting: spells are cut at the ages where calendar-period
//! indicators flip, producing counting-process rows the likelihood consumes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spell::{PeriodWindows, Spell, SpellData};

/// One counting-process row: the subject is at risk on `(start, stop]` with
/// period indicators constant over the row. An `event` row is terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<F> {
    pub subject_id: String,
    pub start: F,
    pub stop: F,
    pub event: bool,
    /// Treatment-region indicator D.
    pub d: bool,
    /// Pilot-period indicator P.
    pub p: bool,
    /// Post-period indicator Q.
    pub q: bool,
    pub covariates: Vec<F>,
    pub stratum: i64,
    pub weight: F,
    pub cluster_id: String,
}

/// Episodes plus shared covariate names.
#[derive(Debug, Clone, Default)]
pub struct EpisodeData<F> {
    pub covariate_names: Vec<String>,
    pub episodes: Vec<Episode<F>>,
}

impl<F: Scalar> EpisodeData<F> {
    pub fn n_subjects(&self) -> usize {
        let mut ids: Vec<&str> = self.episodes.iter().map(|e| e.subject_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn n_events(&self) -> usize {
        self.episodes.iter().filter(|e| e.event).count()
    }

    pub fn n_events_pilot(&self) -> usize {
        self.episodes.iter().filter(|e| e.event && e.p).count()
    }

    /// Check the counting-process invariants; episodes from `build_episodes`
    /// satisfy them by construction, external episode sets may not.
    pub fn validate(&self) -> Result<()> {
        use std::collections::HashMap;
        let mut by_subject: HashMap<&str, Vec<&Episode<F>>> = HashMap::new();
        for e in &self.episodes {
            if e.start >= e.stop {
                return Err(Error::InvalidInput(format!(
                    "episode for {} has start {} >= stop {}",
                    e.subject_id, e.start, e.stop
                )));
            }
            if e.covariates.len() != self.covariate_names.len() {
                return Err(Error::InvalidInput(format!(
                    "episode for {} has {} covariates, expected {}",
                    e.subject_id,
                    e.covariates.len(),
                    self.covariate_names.len()
                )));
            }
            by_subject.entry(e.subject_id.as_str()).or_default().push(e);
        }
        for (id, mut eps) in by_subject {
            eps.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
            for w in eps.windows(2) {
                if w[0].stop != w[1].start {
                    return Err(Error::InvalidInput(format!(
                        "episodes for {id} are not contiguous at age {}",
                        w[0].stop
                    )));
                }
                if w[0].event {
                    return Err(Error::InvalidInput(format!(
                        "subject {id} has an event before its last episode"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Episode splitting for the standard pilot/post windows.
///
/// Split points fall at ages `boundary_year - birth_year`; the age-year
/// `(a, a+1]` of a subject born in `B` takes place during calendar year
/// `B + a`, so a row `(s, e]` carries `p = 1` exactly when
/// `pilot_start - B <= s` and `e <= pilot_end_exclusive - B`.
pub fn build_episodes<F: Scalar>(
    data: &SpellData<F>,
    windows: &PeriodWindows,
    stratum_width: u32,
) -> Result<EpisodeData<F>> {
    windows.validate()?;
    build_episodes_custom(data, windows, stratum_width, &[], &[], |_, _, _, _| Vec::new())
}

/// Episode splitting with extra cut years and extra per-row indicator
/// covariates.
///
/// `extra` receives `(spell, calendar year of the row's first age-year, row
/// start, row stop)` and must return one value per name in `extra_names`.
/// Used by the placebo machinery to retain true-pilot terms alongside a
/// pseudo window.
pub fn build_episodes_custom<F: Scalar>(
    data: &SpellData<F>,
    windows: &PeriodWindows,
    stratum_width: u32,
    extra_cut_years: &[i32],
    extra_names: &[&str],
    extra: impl Fn(&Spell<F>, i32, F, F) -> Vec<F>,
) -> Result<EpisodeData<F>> {
    if stratum_width < 1 {
        return Err(Error::InvalidConfig(format!(
            "stratum_width must be >= 1, got {stratum_width}"
        )));
    }
    data.validate(None)?;

    let mut names = data.covariate_names.clone();
    names.extend(extra_names.iter().map(|s| s.to_string()));

    let mut episodes = Vec::with_capacity(data.spells.len() * 2);
    for spell in &data.spells {
        let b = spell.birth_year;
        let stratum = i64::from(b.div_euclid(stratum_width as i32));
        let pilot_lo = F::from_f64_lossy(f64::from(windows.pilot_start - b));
        let pilot_hi = F::from_f64_lossy(f64::from(windows.pilot_end_exclusive - b));
        let post_hi = F::from_f64_lossy(f64::from(windows.post_end_exclusive - b));

        let mut cuts: Vec<F> = [pilot_lo, pilot_hi, post_hi]
            .into_iter()
            .chain(
                extra_cut_years
                    .iter()
                    .map(|&y| F::from_f64_lossy(f64::from(y - b))),
            )
            .filter(|&a| spell.entry_age < a && a < spell.exit_age)
            .collect();
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        cuts.push(spell.exit_age);

        let mut start = spell.entry_age;
        for (k, &stop) in cuts.iter().enumerate() {
            let last = k + 1 == cuts.len();
            let p = start >= pilot_lo && stop <= pilot_hi;
            let q = start >= pilot_hi && stop <= post_hi;
            // Calendar year during the row's first age-year, for callers that
            // need extra period indicators. The unit interval starting at any
            // age a in [k, k+1) lies in year b + k.
            let first_year = b + start.to_f64_lossy().floor() as i32;
            let mut covariates = spell.covariates.clone();
            covariates.extend(extra(spell, first_year, start, stop));
            episodes.push(Episode {
                subject_id: spell.subject_id.clone(),
                start,
                stop,
                event: last && spell.event,
                d: spell.treated,
                p,
                q,
                covariates,
                stratum,
                weight: spell.weight,
                cluster_id: spell.cluster_id.clone(),
            });
            start = stop;
        }
    }

    Ok(EpisodeData { covariate_names: names, episodes })
}
