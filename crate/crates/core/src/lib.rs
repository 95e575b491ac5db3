//! Difference-in-differences estimation inside a stratified Cox
//! proportional-hazards model.
//!
//! The crate covers the full estimation pipeline for evaluating a
//! calendar-period policy on an age timescale:
//!
//! - [`spell`] / [`episode`] — at-risk spells and counting-process episode
//!   splitting for time-varying period indicators;
//! - [`cox`] — weighted stratified partial-likelihood fitting (Efron or
//!   Breslow ties), cluster-robust variance, baseline cumulative hazards and
//!   the ratio-of-hazard-ratios estimand;
//! - [`matching`] — local border samples and nearest-neighbor
//!   pairwise-difference weights from municipality distance data;
//! - [`lineardid`] — linear two-way fixed-effects DiD for auxiliary outcomes;
//! - [`simulation`] — a synthetic-population generator with latent
//!   eligibility types, analytic effect decomposition and bound checks;
//! - [`diagnostics`] — log cumulative-hazard curves, placebo reforms,
//!   distance-window sweeps and a cost-effectiveness calculator.
//!
//! All numerics are generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); concrete `f64` aliases live at the crate root.

// Index loops are the clearest form for the small dense kernels here.
#![allow(clippy::needless_range_loop)]

pub mod cox;
pub mod diagnostics;
pub mod episode;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lineardid;
pub mod matching;
pub mod scalar;
pub mod simulation;
pub mod spell;
pub mod stats;

pub use cox::{
    baseline_cumhaz, did_terms, did_terms_pilot_only, fit_cox, partial_loglik, ratt_from_fit,
    robust_vcov, score_residuals, CoxFit, CoxOptions, RattEstimate, StratumBaseline, Term, Ties,
};
pub use episode::{build_episodes, Episode, EpisodeData};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use spell::{PeriodWindows, Spell, SpellData};

/// `f64` aliases for the main entity types.
pub type Spell64 = Spell<f64>;
pub type SpellData64 = SpellData<f64>;
pub type Episode64 = Episode<f64>;
pub type EpisodeData64 = EpisodeData<f64>;
pub type CoxFit64 = CoxFit<f64>;
pub type CoxOptions64 = CoxOptions<f64>;
pub type RattEstimate64 = RattEstimate<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
