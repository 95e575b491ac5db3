//! Breslow estimator of the per-stratum cumulative baseline hazard.

use serde::Serialize;

use crate::episode::EpisodeData;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::likelihood::Design;
use super::CoxFit;

/// Step function of the cumulative baseline hazard within one stratum.
#[derive(Debug, Clone, Serialize)]
pub struct StratumBaseline<F> {
    pub stratum: i64,
    /// `(age, cumulative hazard)` at each event age, ascending; the hazard is
    /// zero before the first event.
    pub points: Vec<(F, F)>,
}

impl<F: Scalar> StratumBaseline<F> {
    /// Cumulative hazard at `age` (right-continuous step lookup).
    pub fn at(&self, age: F) -> F {
        let k = self.points.partition_point(|&(t, _)| t <= age);
        if k == 0 {
            F::zero()
        } else {
            self.points[k - 1].1
        }
    }
}

/// Breslow increments `dΛ₀g(t) = Σ weighted deaths at t / Σ_{risk} w·exp(xβ)`,
/// cumulated within stratum. At `β = 0` this is the Nelson-Aalen estimator.
pub fn baseline_cumhaz<F: Scalar>(fit: &CoxFit<F>, data: &EpisodeData<F>) -> Result<Vec<StratumBaseline<F>>> {
    if !fit.converged {
        return Err(Error::NotConverged(
            "baseline hazard requires a converged fit".into(),
        ));
    }
    let design = Design::build(data, &fit.terms, fit.ties)?;
    Ok(baseline_cumhaz_design(&design, &fit.beta))
}

pub(crate) fn baseline_cumhaz_design<F: Scalar>(design: &Design<F>, beta: &[F]) -> Vec<StratumBaseline<F>> {
    let (eta, risk) = design.eta_risk(beta);
    let mut out = Vec::with_capacity(design.strata.len());
    for st in &design.strata {
        let mut inc = vec![F::zero(); st.event_times.len()];
        design.sweep(st, &eta, &risk, |k, s| {
            inc[k] = s.wd / s.s0;
        });
        let mut cum = F::zero();
        let points = st
            .event_times
            .iter()
            .zip(&inc)
            .map(|(&t, &d)| {
                cum += d;
                (t, cum)
            })
            .collect();
        out.push(StratumBaseline { stratum: st.id, points });
    }
    out
}
