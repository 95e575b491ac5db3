//! Cluster-robust sandwich variance from martingale score residuals.
//!
//! The sandwich is `H⁻¹ (Σ_c s_c s_cᵀ) H⁻¹` where `s_c` sums weighted score
//! residuals within cluster `c`. Residuals are exact for both tie
//! corrections and sum to the score, so they vanish at the MLE.

use crate::episode::EpisodeData;
use crate::error::{Error, Result};
use crate::linalg::{vec_axpy, Matrix};
use crate::scalar::Scalar;

use super::likelihood::Design;
use super::{CoxFit, Ties};

/// Recompute the cluster-robust covariance of a converged fit.
pub fn robust_vcov<F: Scalar>(fit: &CoxFit<F>, data: &EpisodeData<F>) -> Result<Matrix<F>> {
    if !fit.converged {
        return Err(Error::NotConverged(
            "robust variance requires a converged fit".into(),
        ));
    }
    let design = Design::build(data, &fit.terms, fit.ties)?;
    if design.n_clusters < 2 {
        return Err(Error::SingleCluster(design.n_clusters));
    }
    robust_vcov_design(&design, &fit.beta, &fit.vcov_model, fit.ties)
}

/// Sandwich from a prepared design; `vcov_model` is the inverse information.
pub(crate) fn robust_vcov_design<F: Scalar>(
    design: &Design<F>,
    beta: &[F],
    vcov_model: &Matrix<F>,
    ties: Ties,
) -> Result<Matrix<F>> {
    let p = design.n_terms();
    let residuals = score_residuals_design(design, beta, ties);

    let mut cluster_sums = vec![vec![F::zero(); p]; design.n_clusters];
    for (i, u) in residuals.iter().enumerate() {
        vec_axpy(&mut cluster_sums[design.cluster[i]], design.weight[i], u);
    }
    let mut meat = Matrix::zeros(p, p);
    for s in &cluster_sums {
        meat.add_outer(s, F::one());
    }
    let mut vcov = vcov_model.matmul(&meat).matmul(vcov_model);
    vcov.symmetrize();
    Ok(vcov)
}

/// Per-episode score residuals at `beta`, aligned with the positive-weight
/// episodes of `data` in input order. Residuals are unweighted; weighted
/// residuals sum to the score, so they sum to zero at the MLE.
pub fn score_residuals<F: Scalar>(
    data: &EpisodeData<F>,
    terms: &[super::Term],
    beta: &[F],
    ties: Ties,
) -> Result<Vec<Vec<F>>> {
    let design = Design::build(data, terms, ties)?;
    Ok(score_residuals_design(&design, beta, ties))
}

/// Per-row score residuals U_i (unweighted; callers apply row weights).
///
/// For a row at risk over `(start, stop]`, U_i cumulates
/// `-r_i (x_i - x̄(t)) dΛ(t)` over event ages in its window, plus the death
/// term `x_i - x̄(t_i)` for event rows. Under Efron ties, the row's own death
/// age uses the pseudo-risk-set weights `(1 - r/m)` and the averaged x̄.
pub(crate) fn score_residuals_design<F: Scalar>(
    design: &Design<F>,
    beta: &[F],
    ties: Ties,
) -> Vec<Vec<F>> {
    let p = design.n_terms();
    let (eta, risk) = design.eta_risk(beta);
    let mut residuals = vec![vec![F::zero(); p]; design.x.len()];

    for st in &design.strata {
        let nk = st.event_times.len();
        // Per event age: hazard-increment coefficients for rows at risk (a, b)
        // and for the dying row itself (a', b'), plus the death-term mean x̄.
        let mut a = vec![F::zero(); nk];
        let mut a_death = vec![F::zero(); nk];
        let mut b = vec![vec![F::zero(); p]; nk];
        let mut b_death = vec![vec![F::zero(); p]; nk];
        let mut xbar_mean = vec![vec![F::zero(); p]; nk];

        design.sweep(st, &eta, &risk, |k, s| match ties {
            Ties::Breslow => {
                let dl = s.wd / s.s0;
                a[k] = dl;
                a_death[k] = dl;
                for j in 0..p {
                    let xb = s.s1[j] / s.s0;
                    b[k][j] = dl * xb;
                    b_death[k][j] = dl * xb;
                    xbar_mean[k][j] = xb;
                }
            }
            Ties::Efron => {
                let mf = F::from_f64_lossy(s.m as f64);
                let wbar = s.wd / mf;
                for r_idx in 0..s.m {
                    let frac = F::from_f64_lossy(r_idx as f64) / mf;
                    let den = s.s0 - frac * s.d0;
                    let dl = wbar / den;
                    let keep = F::one() - frac;
                    a[k] += dl;
                    a_death[k] += keep * dl;
                    for j in 0..p {
                        let xb = (s.s1[j] - frac * s.d1[j]) / den;
                        b[k][j] += dl * xb;
                        b_death[k][j] += keep * dl * xb;
                        xbar_mean[k][j] += xb / mf;
                    }
                }
            }
        });

        // Prefix sums over ascending event ages for O(log K) range lookups.
        let mut pa = vec![F::zero(); nk + 1];
        let mut pb = vec![vec![F::zero(); p]; nk + 1];
        for k in 0..nk {
            pa[k + 1] = pa[k] + a[k];
            for j in 0..p {
                pb[k + 1][j] = pb[k][j] + b[k][j];
            }
        }

        for &i in &st.rows {
            let lo = st.event_times.partition_point(|&t| t <= design.start[i]);
            let hi = st.event_times.partition_point(|&t| t <= design.stop[i]);
            let u = &mut residuals[i];
            if lo < hi {
                let a_range = pa[hi] - pa[lo];
                for j in 0..p {
                    u[j] = risk[i] * ((pb[hi][j] - pb[lo][j]) - a_range * design.x[i][j]);
                }
            }
            if design.event[i] {
                let k = hi - 1;
                debug_assert!(st.event_times[k] == design.stop[i]);
                let da = a[k] - a_death[k];
                for j in 0..p {
                    u[j] += risk[i] * (da * design.x[i][j] - (b[k][j] - b_death[k][j]));
                    u[j] += design.x[i][j] - xbar_mean[k][j];
                }
            }
        }
    }

    residuals
}
