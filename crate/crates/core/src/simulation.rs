//! Synthetic-population generator with latent eligibility types, analytic
//! evaluation of the effect decomposition and its bound conditions, and
//! Monte Carlo machinery for validating the estimators.
//!
//! The data-generating process uses discrete yearly Bernoulli hazards on the
//! age timescale, so every oracle is hand-computable and ties match the
//! integer-age data model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cox::{did_terms, did_terms_pilot_only, fit_cox, CoxOptions, Term};
use crate::episode::build_episodes;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spell::{PeriodWindows, Spell, SpellData};

/// Per-year potential hazards by treatment state and latent eligibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeEffects<F> {
    pub h0_eligible: F,
    pub h1_eligible: F,
    pub h0_ineligible: F,
    pub h1_ineligible: F,
}

impl<F: Scalar> TypeEffects<F> {
    /// Homogeneous multiplicative effect: `h1 = ratio * h0` for both types.
    pub fn proportional(h0_eligible: F, h0_ineligible: F, ratio: F) -> Self {
        Self {
            h0_eligible,
            h1_eligible: ratio * h0_eligible,
            h0_ineligible,
            h1_ineligible: ratio * h0_ineligible,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, h) in [
            ("h0_eligible", self.h0_eligible),
            ("h1_eligible", self.h1_eligible),
            ("h0_ineligible", self.h0_ineligible),
            ("h1_ineligible", self.h1_ineligible),
        ] {
            if !(h >= F::zero() && h < F::one()) {
                return Err(Error::InvalidConfig(format!(
                    "per-year hazard {name} = {h} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

fn default_one<F: Scalar>() -> F {
    F::one()
}
fn default_half<F: Scalar>() -> F {
    F::from_f64_lossy(0.5)
}
fn default_boost<F: Scalar>() -> F {
    F::from_f64_lossy(1.5)
}
fn default_entry() -> u32 {
    18
}
fn default_retirement() -> u32 {
    64
}
fn default_munis() -> u32 {
    25
}

/// Ground truth for the simulator: latent-type shares and hazards, assumption
/// toggles, and the reproducibility seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    deserialize = "F: Scalar + serde::Deserialize<'de>",
    serialize = "F: serde::Serialize"
))]
pub struct DgpConfig<F> {
    pub n_subjects: usize,
    /// Share of eligible types p(E=1) (control arm and counterfactuals).
    pub p_eligible: F,
    /// Optional p¹(E=1) for the treated arm; setting it different from
    /// `p_eligible` toggles self-screening.
    #[serde(default)]
    pub p_eligible_treated_counterfactual: Option<F>,
    pub effects: TypeEffects<F>,
    #[serde(default = "default_half")]
    pub share_treated: F,
    pub birth_year_range: (i32, i32),
    #[serde(default)]
    pub windows: PeriodWindows,
    /// Years before the pilot in which treated-arm inflow is pulled forward;
    /// 0 means the no-anticipation condition holds.
    #[serde(default)]
    pub anticipation_shift: u32,
    /// Hazard multiplier applied in the anticipation window.
    #[serde(default = "default_boost")]
    pub anticipation_boost: F,
    /// Multiplicative drift on the treated arm from the pilot start onward;
    /// 1 means the common-trend condition holds.
    #[serde(default = "default_one")]
    pub trend_break: F,
    /// Hazard multiplier for both arms during the post period.
    #[serde(default = "default_one")]
    pub post_multiplier: F,
    /// Piecewise baseline multiplier by age: `(age_from, multiplier)`,
    /// ascending; 1 before the first knot.
    #[serde(default)]
    pub baseline_age_multipliers: Vec<(u32, F)>,
    /// Piecewise multiplier by birth year, for stratum-level shifts.
    #[serde(default)]
    pub cohort_multipliers: Vec<(i32, F)>,
    #[serde(default = "default_entry")]
    pub entry_age: u32,
    #[serde(default = "default_retirement")]
    pub retirement_age: u32,
    #[serde(default = "default_munis")]
    pub munis_per_arm: u32,
    pub seed: u64,
}

impl<F: Scalar> DgpConfig<F> {
    /// A small, valid configuration for tests and examples.
    pub fn example(seed: u64) -> Self {
        Self {
            n_subjects: 1000,
            p_eligible: F::from_f64_lossy(0.5),
            p_eligible_treated_counterfactual: None,
            effects: TypeEffects::proportional(
                F::from_f64_lossy(0.004),
                F::from_f64_lossy(0.004),
                F::one(),
            ),
            share_treated: default_half(),
            birth_year_range: (1940, 1980),
            windows: PeriodWindows::default(),
            anticipation_shift: 0,
            anticipation_boost: default_boost(),
            trend_break: F::one(),
            post_multiplier: F::one(),
            baseline_age_multipliers: vec![],
            cohort_multipliers: vec![],
            entry_age: default_entry(),
            retirement_age: default_retirement(),
            munis_per_arm: default_munis(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::InvalidConfig("n_subjects must be >= 1".into()));
        }
        self.effects.validate()?;
        self.windows.validate()?;
        let unit = |name: &str, v: F| -> Result<()> {
            if v >= F::zero() && v <= F::one() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("p_eligible", self.p_eligible)?;
        if let Some(p1) = self.p_eligible_treated_counterfactual {
            unit("p_eligible_treated_counterfactual", p1)?;
        }
        unit("share_treated", self.share_treated)?;
        if self.birth_year_range.0 > self.birth_year_range.1 {
            return Err(Error::InvalidConfig("birth_year_range is reversed".into()));
        }
        for (name, v) in [
            ("anticipation_boost", self.anticipation_boost),
            ("trend_break", self.trend_break),
            ("post_multiplier", self.post_multiplier),
        ] {
            if !(v > F::zero() && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        for w in self.baseline_age_multipliers.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidConfig(
                    "baseline_age_multipliers must have ascending ages".into(),
                ));
            }
        }
        for w in self.cohort_multipliers.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidConfig(
                    "cohort_multipliers must have ascending years".into(),
                ));
            }
        }
        if self
            .baseline_age_multipliers
            .iter()
            .map(|&(_, m)| m)
            .chain(self.cohort_multipliers.iter().map(|&(_, m)| m))
            .any(|m| m.partial_cmp(&F::zero()) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::InvalidConfig("schedule multipliers must be positive".into()));
        }
        if self.entry_age >= self.retirement_age {
            return Err(Error::InvalidConfig("entry_age must precede retirement_age".into()));
        }
        if self.munis_per_arm == 0 {
            return Err(Error::InvalidConfig("munis_per_arm must be >= 1".into()));
        }
        Ok(())
    }

    fn p_treated_arm(&self) -> F {
        self.p_eligible_treated_counterfactual.unwrap_or(self.p_eligible)
    }

    fn age_multiplier(&self, age: u32) -> F {
        step_lookup(&self.baseline_age_multipliers, age)
    }

    fn cohort_multiplier(&self, birth_year: i32) -> F {
        step_lookup(&self.cohort_multipliers, birth_year)
    }
}

fn step_lookup<K: PartialOrd + Copy, F: Scalar>(steps: &[(K, F)], key: K) -> F {
    let mut m = F::one();
    for &(from, mult) in steps {
        if key >= from {
            m = mult;
        } else {
            break;
        }
    }
    m
}

/// Which potential world to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum World {
    /// Pilot regions experience medical review during the pilot window.
    Factual,
    /// Treatment switched off everywhere: the counterfactual used by the
    /// decomposition oracle. Region-level drift (`trend_break`) persists, the
    /// treatment-induced anticipation response does not.
    ForcedControl,
}

/// The hazard of subject `(treated_arm, eligible)` during the age-year
/// `(a, a+1]`, which takes place in calendar year `birth_year + a`.
fn yearly_hazard<F: Scalar>(
    cfg: &DgpConfig<F>,
    world: World,
    treated_arm: bool,
    eligible: bool,
    birth_year: i32,
    age: u32,
) -> F {
    let year = birth_year + age as i32;
    let exposed = world == World::Factual && treated_arm && cfg.windows.in_pilot(year);
    let base = match (exposed, eligible) {
        (true, true) => cfg.effects.h1_eligible,
        (true, false) => cfg.effects.h1_ineligible,
        (false, true) => cfg.effects.h0_eligible,
        (false, false) => cfg.effects.h0_ineligible,
    };
    let mut h = base * cfg.age_multiplier(age) * cfg.cohort_multiplier(birth_year);
    if cfg.windows.in_post(year) {
        h *= cfg.post_multiplier;
    }
    if treated_arm && year >= cfg.windows.pilot_start {
        h *= cfg.trend_break;
    }
    if world == World::Factual
        && treated_arm
        && cfg.anticipation_shift > 0
        && year >= cfg.windows.pilot_start - cfg.anticipation_shift as i32
        && year < cfg.windows.pilot_start
    {
        h *= cfg.anticipation_boost;
    }
    h
}

/// Draw the factual population: yearly Bernoulli failure from `entry_age`,
/// censoring at the sampling horizon or retirement age. Fully reproducible
/// from the seed; subjects use independent counter-based RNG streams, so the
/// output does not depend on thread count.
pub fn simulate_population<F: Scalar>(config: &DgpConfig<F>) -> Result<SpellData<F>> {
    simulate_world(config, World::Factual)
}

/// Draw a chosen potential world with common random numbers across worlds.
pub fn simulate_world<F: Scalar>(config: &DgpConfig<F>, world: World) -> Result<SpellData<F>> {
    config.validate()?;
    let spells: Vec<Option<Spell<F>>> = (0..config.n_subjects)
        .into_par_iter()
        .map(|i| simulate_subject(config, world, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpellData::new(vec![], spells.into_iter().flatten().collect()))
}

fn simulate_subject<F: Scalar>(
    config: &DgpConfig<F>,
    world: World,
    index: usize,
) -> Result<Option<Spell<F>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64 + 1);

    let (lo, hi) = config.birth_year_range;
    let birth_year = rng.random_range(lo..=hi);
    let treated = F::from_f64_lossy(rng.random::<f64>()) < config.share_treated;
    // One uniform decides eligibility in every world, so worlds share
    // randomness and differ only through composition and hazards.
    let u_elig = F::from_f64_lossy(rng.random::<f64>());
    let p = match (world, treated) {
        (World::Factual, true) => config.p_treated_arm(),
        _ => config.p_eligible,
    };
    let eligible = u_elig < p;

    let horizon_age = config.windows.post_end_exclusive - birth_year;
    let censor_age = (config.retirement_age as i32).min(horizon_age);
    if censor_age <= config.entry_age as i32 {
        return Ok(None); // never at risk inside the observation window
    }

    let subject_id = format!("s{index:07}");
    let mut exit_age = censor_age;
    let mut event = false;
    for age in config.entry_age..censor_age as u32 {
        let h = yearly_hazard(config, world, treated, eligible, birth_year, age);
        if !(h >= F::zero() && h < F::one()) {
            return Err(Error::HazardOutOfRange {
                subject: subject_id,
                age,
                value: h.to_f64_lossy(),
            });
        }
        let u = F::from_f64_lossy(rng.random::<f64>());
        if u < h {
            exit_age = age as i32 + 1;
            event = true;
            break;
        }
    }

    let arm = if treated { 't' } else { 'c' };
    let muni = format!("m_{arm}{:03}", index as u32 % config.munis_per_arm);
    Ok(Some(Spell {
        subject_id: subject_id.clone(),
        birth_year,
        entry_age: F::from_f64_lossy(f64::from(config.entry_age)),
        exit_age: F::from_f64_lossy(f64::from(exit_age)),
        event,
        treated,
        municipality_id: muni,
        covariates: vec![],
        weight: F::one(),
        cluster_id: subject_id,
    }))
}

/// Weighted events and person-years inside the pilot window, for aggregate
/// event-rate oracles. The pilot age window of a subject born in `B` is
/// `(pilot_start - B, pilot_end_exclusive - B]`.
pub fn pilot_event_rate<'a, F: Scalar>(
    spells: impl Iterator<Item = &'a Spell<F>>,
    windows: &PeriodWindows,
) -> (F, F) {
    let mut events = F::zero();
    let mut person_years = F::zero();
    for s in spells {
        let lo = F::from_f64_lossy(f64::from(windows.pilot_start - s.birth_year));
        let hi = F::from_f64_lossy(f64::from(windows.pilot_end_exclusive - s.birth_year));
        let a = s.entry_age.max(lo);
        let b = s.exit_age.min(hi);
        if b > a {
            person_years += s.weight * (b - a);
        }
        if s.event && s.exit_age > lo && s.exit_age <= hi {
            events += s.weight;
        }
    }
    (events, person_years)
}

/// The mixture ratio of the effect decomposition: treated-arm pilot hazard
/// under treatment over the same arm's no-treatment counterfactual,
/// conditioning on latent eligibility,
/// `[h¹(E=1)p¹ + h¹(E=0)(1-p¹)] / [h⁰(E=1)p⁰ + h⁰(E=0)(1-p⁰)]`.
pub fn analytic_ratt<F: Scalar>(config: &DgpConfig<F>) -> Result<F> {
    config.effects.validate()?;
    let p1 = config.p_treated_arm();
    let p0 = config.p_eligible;
    let e = &config.effects;
    let num = e.h1_eligible * p1 + e.h1_ineligible * (F::one() - p1);
    let den = e.h0_eligible * p0 + e.h0_ineligible * (F::one() - p0);
    if den == F::zero() {
        return Err(Error::InvalidConfig(
            "analytic rATT undefined: counterfactual hazard mixture is zero".into(),
        ));
    }
    Ok(num / den)
}

/// Which reading of the effect the sign pattern supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    /// Screening works as intended for both types: the estimate bounds the
    /// award-error reduction from below.
    LowerBound,
    /// Perverse for the eligible, intended for the ineligible: upper bound.
    UpperBound,
    /// Perverse for the ineligible with intended effects for the eligible:
    /// no aggregate reduction can be observed.
    DismissedNonreduction,
    /// Perverse for both types: dismissed as implausible.
    DismissedImplausible,
}

/// Bound conditions evaluated on one effect configuration.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport<F> {
    pub ratt: F,
    /// Aggregate reduction: rATT <= 1.
    pub ineq8_holds: bool,
    /// Rearranged form: the population-weighted effect for the eligible is
    /// dominated by the weighted reduction for the ineligible.
    pub ineq9_holds: bool,
    /// Monotone treatment response for eligible types.
    pub mtr_holds: bool,
    pub quadrant: Quadrant,
}

/// Evaluate the aggregate-reduction inequality, its rearranged form, the
/// monotone-treatment-response condition, and assign the effect-matrix
/// quadrant.
pub fn bound_check<F: Scalar>(effects: &TypeEffects<F>, p_eligible: F) -> BoundReport<F> {
    let p = p_eligible;
    let q = F::one() - p;
    let num = effects.h1_eligible * p + effects.h1_ineligible * q;
    let den = effects.h0_eligible * p + effects.h0_ineligible * q;
    let ratt = if den > F::zero() { num / den } else { F::infinity() };

    let ineq8_holds = ratt <= F::one();
    let lhs = (effects.h1_eligible - effects.h0_eligible) * p;
    let rhs = -(effects.h1_ineligible - effects.h0_ineligible) * q;
    let ineq9_holds = lhs <= rhs;
    let mtr_holds = effects.h1_eligible >= effects.h0_eligible;

    let intended_ineligible = effects.h1_ineligible <= effects.h0_ineligible;
    let quadrant = match (mtr_holds, intended_ineligible) {
        (true, true) => Quadrant::LowerBound,
        (false, true) => Quadrant::UpperBound,
        (true, false) => Quadrant::DismissedNonreduction,
        (false, false) => Quadrant::DismissedImplausible,
    };

    BoundReport { ratt, ineq8_holds, ineq9_holds, mtr_holds, quadrant }
}

/// One scenario of the assumption-violation experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult<F> {
    pub label: String,
    pub n_reps: usize,
    /// Mean fitted exp(β₂) across replications.
    pub mean_hazard_ratio: F,
    /// Analytic rATT of the clean configuration.
    pub analytic_truth: F,
    pub bias: F,
    pub mc_se: F,
    /// Mean placebo-window exp(β₂), where the scenario fits one.
    pub mean_placebo_hazard_ratio: Option<F>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViolationReport<F> {
    pub scenarios: Vec<ScenarioResult<F>>,
}

/// Paired simulations quantifying the bias induced by anticipation and trend
/// breaks: a clean run, a trend-break run, and an anticipation run with a
/// pre-pilot placebo fit.
pub fn assumption_violation_suite<F: Scalar>(
    config: &DgpConfig<F>,
    n_reps: usize,
) -> Result<ViolationReport<F>> {
    config.validate()?;
    if n_reps == 0 {
        return Err(Error::InvalidConfig("n_reps must be >= 1".into()));
    }
    let mut clean = config.clone();
    clean.anticipation_shift = 0;
    clean.trend_break = F::one();
    let truth = analytic_ratt(&clean)?;

    let mut trend = clean.clone();
    trend.trend_break = config.trend_break;

    let mut anticipation = clean.clone();
    anticipation.anticipation_shift = config.anticipation_shift.max(1);
    anticipation.anticipation_boost = config.anticipation_boost;

    let scenarios = vec![
        run_scenario("clean", &clean, truth, n_reps, true)?,
        run_scenario("trend_break", &trend, truth, n_reps, false)?,
        run_scenario("anticipation", &anticipation, truth, n_reps, true)?,
    ];
    Ok(ViolationReport { scenarios })
}

fn run_scenario<F: Scalar>(
    label: &str,
    config: &DgpConfig<F>,
    truth: F,
    n_reps: usize,
    with_placebo: bool,
) -> Result<ScenarioResult<F>> {
    let pseudo_len = (config.anticipation_shift.max(1) + 2).min(4) as i32;
    let pseudo = PeriodWindows {
        pilot_start: config.windows.pilot_start - pseudo_len,
        pilot_end_exclusive: config.windows.pilot_start,
        post_end_exclusive: config.windows.pilot_start,
    };
    let idx_did = 2; // treat_x_pilot in did_terms()
    let mut hrs = Vec::with_capacity(n_reps);
    let mut placebo_hrs = Vec::with_capacity(n_reps);
    for rep in 0..n_reps {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(rep as u64);
        let spells = simulate_population(&cfg)?;
        let episodes = build_episodes(&spells, &cfg.windows, 5)?;
        let fit = fit_cox(&episodes, &did_terms(), &CoxOptions::default())?;
        hrs.push(fit.beta[idx_did].exp());
        if with_placebo {
            let pseudo_eps = build_episodes(&spells, &pseudo, 5)?;
            let terms = did_terms_pilot_only();
            let pfit = fit_cox(&pseudo_eps, &terms, &CoxOptions::default())?;
            let j = terms.iter().position(|t| *t == Term::TreatPilot).expect("interaction");
            placebo_hrs.push(pfit.beta[j].exp());
        }
    }
    let nf = F::from_f64_lossy(n_reps as f64);
    let mean = hrs.iter().fold(F::zero(), |a, &b| a + b) / nf;
    let var = hrs
        .iter()
        .fold(F::zero(), |a, &b| a + (b - mean) * (b - mean))
        / nf.max(F::one());
    let mc_se = (var / nf).sqrt();
    let mean_placebo = if placebo_hrs.is_empty() {
        None
    } else {
        Some(placebo_hrs.iter().fold(F::zero(), |a, &b| a + b) / nf)
    };
    Ok(ScenarioResult {
        label: label.to_string(),
        n_reps,
        mean_hazard_ratio: mean,
        analytic_truth: truth,
        bias: mean - truth,
        mc_se,
        mean_placebo_hazard_ratio: mean_placebo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hazards_mean_no_events() {
        let mut cfg = DgpConfig::<f64>::example(1);
        cfg.effects = TypeEffects {
            h0_eligible: 0.0,
            h1_eligible: 0.0,
            h0_ineligible: 0.0,
            h1_ineligible: 0.0,
        };
        let spells = simulate_population(&cfg).unwrap();
        assert!(!spells.spells.is_empty());
        assert!(spells.spells.iter().all(|s| !s.event));
    }

    #[test]
    fn geometric_failure_fraction() {
        // Hazard 0.5 over a two-year horizon: failure probability 0.75.
        let mut cfg = DgpConfig::<f64>::example(2);
        cfg.n_subjects = 20_000;
        cfg.effects = TypeEffects::proportional(0.5, 0.5, 1.0);
        cfg.birth_year_range = (1992, 1992); // ages (18, 20] inside horizon 2012
        let spells = simulate_population(&cfg).unwrap();
        let n = spells.spells.len() as f64;
        let frac = spells.spells.iter().filter(|s| s.event).count() as f64 / n;
        let se = (0.75 * 0.25 / n).sqrt();
        assert!(
            (frac - 0.75).abs() < 3.0 * se,
            "frac {frac} vs 0.75 +- {}",
            3.0 * se
        );
    }

    #[test]
    fn identical_seeds_reproduce_spells() {
        let cfg = DgpConfig::<f64>::example(33);
        let a = simulate_population(&cfg).unwrap();
        let b = simulate_population(&cfg).unwrap();
        assert_eq!(a.spells, b.spells);
        let mut other = cfg;
        other.seed = 34;
        let c = simulate_population(&other).unwrap();
        assert_ne!(a.spells, c.spells);
    }

    #[test]
    fn analytic_ratt_hand_cases() {
        let mut cfg = DgpConfig::<f64>::example(3);
        cfg.effects = TypeEffects {
            h0_eligible: 0.004,
            h1_eligible: 0.004,
            h0_ineligible: 0.003,
            h1_ineligible: 0.0015,
        };
        cfg.p_eligible = 0.6;
        // (0.004*0.6 + 0.0015*0.4) / (0.004*0.6 + 0.003*0.4) = 0.0030/0.0036
        let r = analytic_ratt(&cfg).unwrap();
        assert!((r - 0.0030 / 0.0036).abs() < 1e-15);

        cfg.effects = TypeEffects::proportional(0.01, 0.02, 1.0);
        assert!((analytic_ratt(&cfg).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ratt_monotone_in_type_hazards() {
        let mut cfg = DgpConfig::<f64>::example(4);
        cfg.p_eligible = 0.4;
        cfg.effects = TypeEffects {
            h0_eligible: 0.004,
            h1_eligible: 0.004,
            h0_ineligible: 0.003,
            h1_ineligible: 0.002,
        };
        let base = analytic_ratt(&cfg).unwrap();
        // Weakly increasing in h1(E=0).
        let mut up = cfg.clone();
        up.effects.h1_ineligible = 0.0025;
        assert!(analytic_ratt(&up).unwrap() >= base);
        // Weakly decreasing in h0(E=0).
        let mut down = cfg.clone();
        down.effects.h0_ineligible = 0.004;
        assert!(analytic_ratt(&down).unwrap() <= base);
    }

    #[test]
    fn self_screening_toggle_is_neutral_when_shares_match() {
        let mut cfg = DgpConfig::<f64>::example(5);
        cfg.p_eligible = 0.35;
        cfg.p_eligible_treated_counterfactual = None;
        let a = analytic_ratt(&cfg).unwrap();
        cfg.p_eligible_treated_counterfactual = Some(0.35);
        let b = analytic_ratt(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bound_check_cases() {
        // Intended effects on both types, type-I reduction dominating.
        let effects = TypeEffects {
            h0_eligible: 0.004,
            h1_eligible: 0.004,
            h0_ineligible: 0.003,
            h1_ineligible: 0.0015,
        };
        let r = bound_check(&effects, 0.6);
        assert!(r.ineq8_holds && r.ineq9_holds && r.mtr_holds);
        assert_eq!(r.quadrant, Quadrant::LowerBound);

        // No effect at all: boundary case.
        let flat = TypeEffects::<f64>::proportional(0.004, 0.003, 1.0);
        let r = bound_check(&flat, 0.5);
        assert!((r.ratt - 1.0).abs() < 1e-15);
        assert!(r.ineq8_holds && r.ineq9_holds && r.mtr_holds);
        assert_eq!(r.quadrant, Quadrant::LowerBound);

        // Perverse for the eligible only: upper bound.
        let perverse_eligible = TypeEffects {
            h0_eligible: 0.004,
            h1_eligible: 0.003,
            h0_ineligible: 0.003,
            h1_ineligible: 0.002,
        };
        assert_eq!(bound_check(&perverse_eligible, 0.5).quadrant, Quadrant::UpperBound);

        // Perverse for the ineligible.
        let perverse_ineligible = TypeEffects {
            h0_eligible: 0.004,
            h1_eligible: 0.005,
            h0_ineligible: 0.003,
            h1_ineligible: 0.004,
        };
        assert_eq!(
            bound_check(&perverse_ineligible, 0.5).quadrant,
            Quadrant::DismissedNonreduction
        );
        let perverse_both = TypeEffects {
            h0_eligible: 0.004,
            h1_eligible: 0.003,
            h0_ineligible: 0.003,
            h1_ineligible: 0.004,
        };
        assert_eq!(
            bound_check(&perverse_both, 0.5).quadrant,
            Quadrant::DismissedImplausible
        );
    }

    #[test]
    fn hazard_above_one_after_modulation_errors() {
        let mut cfg = DgpConfig::<f64>::example(6);
        cfg.effects = TypeEffects::proportional(0.3, 0.3, 1.0);
        cfg.trend_break = 4.0; // 0.3 * 4 > 1 in the treated arm from 2002 on
        cfg.birth_year_range = (1983, 1983);
        let err = simulate_population(&cfg);
        assert!(matches!(err, Err(Error::HazardOutOfRange { .. })));
    }

    #[test]
    fn stratum_multiplier_schedules_apply() {
        let mut cfg = DgpConfig::<f64>::example(7);
        cfg.n_subjects = 8000;
        cfg.effects = TypeEffects::proportional(0.01, 0.01, 1.0);
        cfg.cohort_multipliers = vec![(1960, 3.0)];
        let spells = simulate_population(&cfg).unwrap();
        // Compare per person-year event rates across the cohort boundary.
        let py_rate = |pred: &dyn Fn(&&Spell<f64>) -> bool| {
            let (mut ev, mut py) = (0.0, 0.0);
            for s in spells.spells.iter().filter(pred) {
                ev += f64::from(u8::from(s.event));
                py += s.exit_age - s.entry_age;
            }
            ev / py
        };
        let early = py_rate(&|s| s.birth_year < 1960);
        let late = py_rate(&|s| s.birth_year >= 1960);
        assert!(late > 2.0 * early, "late {late} vs early {early}");
    }
}
