//! At-risk spells on the age timescale and the calendar-period windows that
//! drive the time-varying indicators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One subject's at-risk interval on the age timescale.
///
/// Risk begins at `entry_age` (exclusive) and ends at `exit_age` (inclusive);
/// `event = true` means failure at `exit_age`, otherwise censoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Spell<F> {
    pub subject_id: String,
    pub birth_year: i32,
    pub entry_age: F,
    pub exit_age: F,
    pub event: bool,
    pub treated: bool,
    pub municipality_id: String,
    pub covariates: Vec<F>,
    pub weight: F,
    pub cluster_id: String,
}

/// A set of spells plus the shared covariate column names.
#[derive(Debug, Clone, Default)]
pub struct SpellData<F> {
    pub covariate_names: Vec<String>,
    pub spells: Vec<Spell<F>>,
}

impl<F: Scalar> SpellData<F> {
    pub fn new(covariate_names: Vec<String>, spells: Vec<Spell<F>>) -> Self {
        Self { covariate_names, spells }
    }

    /// Validate every spell; `max_event_age` is the retirement-age censoring
    /// bound configured for the run (events past it are rejected).
    pub fn validate(&self, max_event_age: Option<F>) -> Result<()> {
        for s in &self.spells {
            s.validate(max_event_age)?;
            if s.covariates.len() != self.covariate_names.len() {
                return Err(Error::InvalidSpell {
                    subject: s.subject_id.clone(),
                    reason: format!(
                        "{} covariates, expected {}",
                        s.covariates.len(),
                        self.covariate_names.len()
                    ),
                });
            }
        }
        Ok(())
    }
}

impl<F: Scalar> Spell<F> {
    pub fn validate(&self, max_event_age: Option<F>) -> Result<()> {
        let invalid = |reason: String| Error::InvalidSpell {
            subject: self.subject_id.clone(),
            reason,
        };
        if !(self.entry_age.is_finite() && self.exit_age.is_finite()) {
            return Err(invalid("non-finite ages".into()));
        }
        if self.entry_age >= self.exit_age {
            return Err(invalid(format!(
                "entry_age {} >= exit_age {}",
                self.entry_age, self.exit_age
            )));
        }
        if !self.weight.is_finite() || self.weight < F::zero() {
            return Err(invalid(format!("weight {} must be >= 0", self.weight)));
        }
        if let Some(bound) = max_event_age {
            if self.event && self.exit_age > bound {
                return Err(invalid(format!(
                    "event at age {} exceeds censoring bound {}",
                    self.exit_age, bound
                )));
            }
        }
        Ok(())
    }
}

/// Calendar-year windows for the pilot and post periods.
///
/// The pilot covers years `[pilot_start, pilot_end_exclusive)`, the post
/// period `[pilot_end_exclusive, post_end_exclusive)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodWindows {
    pub pilot_start: i32,
    pub pilot_end_exclusive: i32,
    pub post_end_exclusive: i32,
}

impl PeriodWindows {
    pub fn new(pilot_start: i32, pilot_end_exclusive: i32, post_end_exclusive: i32) -> Result<Self> {
        let w = Self { pilot_start, pilot_end_exclusive, post_end_exclusive };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pilot_start < self.pilot_end_exclusive
            && self.pilot_end_exclusive <= self.post_end_exclusive
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "period windows require pilot_start < pilot_end_exclusive <= post_end_exclusive, got ({}, {}, {})",
                self.pilot_start, self.pilot_end_exclusive, self.post_end_exclusive
            )))
        }
    }

    /// Whether calendar year `y` lies in the pilot window.
    pub fn in_pilot(&self, y: i32) -> bool {
        self.pilot_start <= y && y < self.pilot_end_exclusive
    }

    /// Whether calendar year `y` lies in the post window.
    pub fn in_post(&self, y: i32) -> bool {
        self.pilot_end_exclusive <= y && y < self.post_end_exclusive
    }
}

impl Default for PeriodWindows {
    /// The 2002-2004 pilot with post period through 2011.
    fn default() -> Self {
        Self {
            pilot_start: 2002,
            pilot_end_exclusive: 2005,
            post_end_exclusive: 2012,
        }
    }
}
