//! Stratified, weighted Cox proportional-hazards estimation with
//! counting-process episodes, Efron/Breslow tie handling, cluster-robust
//! variance and baseline-hazard recovery.

mod baseline;
mod likelihood;
mod ratt;
mod robust;

pub use baseline::{baseline_cumhaz, StratumBaseline};
pub use likelihood::{partial_loglik, LikelihoodParts};
pub use ratt::{ratt_from_fit, RattEstimate};
pub use robust::{robust_vcov, score_residuals};

use serde::{Deserialize, Serialize};

use crate::episode::EpisodeData;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, vec_axpy, Matrix};
use crate::scalar::Scalar;

use likelihood::Design;

/// Tie correction for the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    /// Efron's approximation; markedly more accurate under the heavy ties
    /// produced by integer ages. The default.
    #[default]
    Efron,
    Breslow,
}

/// A column of the model: the period/treatment indicators of Eq-style DiD
/// specifications, or a named control covariate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    /// Pilot-period indicator P.
    Pilot,
    /// Treatment-region indicator D.
    Treat,
    /// Interaction P·D, the DiD coefficient of interest.
    TreatPilot,
    /// Post-period indicator Q.
    Post,
    /// Interaction D·Q.
    TreatPost,
    /// Named control covariate.
    Covariate(String),
}

impl Term {
    pub fn name(&self) -> String {
        match self {
            Term::Pilot => "pilot".into(),
            Term::Treat => "treat".into(),
            Term::TreatPilot => "treat_x_pilot".into(),
            Term::Post => "post".into(),
            Term::TreatPost => "treat_x_post".into(),
            Term::Covariate(n) => n.clone(),
        }
    }
}

/// The standard five-term DiD specification: P, D, P·D, Q, D·Q.
pub fn did_terms() -> Vec<Term> {
    vec![Term::Pilot, Term::Treat, Term::TreatPilot, Term::Post, Term::TreatPost]
}

/// The three-term specification without post-period terms.
pub fn did_terms_pilot_only() -> Vec<Term> {
    vec![Term::Pilot, Term::Treat, Term::TreatPilot]
}

/// Newton-Raphson controls.
#[derive(Debug, Clone)]
pub struct CoxOptions<F> {
    pub ties: Ties,
    /// Convergence tolerance on the score max-norm.
    pub tol: F,
    pub max_iter: usize,
    /// Maximum step-halvings per Newton step.
    pub max_halvings: usize,
    /// Monotone-likelihood guard: |beta_j| beyond this flags non-convergence.
    pub coef_bound: F,
}

impl<F: Scalar> Default for CoxOptions<F> {
    fn default() -> Self {
        Self {
            ties: Ties::Efron,
            tol: F::from_f64_lossy(1e-9),
            max_iter: 100,
            max_halvings: 30,
            coef_bound: F::from_f64_lossy(20.0),
        }
    }
}

/// A fitted Cox model.
#[derive(Debug, Clone)]
pub struct CoxFit<F> {
    pub terms: Vec<Term>,
    pub term_names: Vec<String>,
    pub beta: Vec<F>,
    /// Inverse observed information.
    pub vcov_model: Matrix<F>,
    /// Cluster-robust sandwich covariance over `cluster_id`.
    pub vcov_robust: Matrix<F>,
    pub loglik: F,
    pub iterations: usize,
    pub converged: bool,
    pub ties: Ties,
    /// Per-stratum Breslow cumulative baseline hazard.
    pub baseline: Vec<StratumBaseline<F>>,
    pub n_episodes: usize,
    pub n_subjects: usize,
    pub n_events: usize,
    pub n_events_pilot: usize,
    pub n_clusters: usize,
    pub warnings: Vec<String>,
}

impl<F: Scalar> CoxFit<F> {
    pub fn term_index(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn se_model(&self) -> Vec<F> {
        self.vcov_model.diag().iter().map(|v| v.max(F::zero()).sqrt()).collect()
    }

    pub fn se_robust(&self) -> Vec<F> {
        self.vcov_robust.diag().iter().map(|v| v.max(F::zero()).sqrt()).collect()
    }

    pub fn hazard_ratios(&self) -> Vec<F> {
        self.beta.iter().map(|b| b.exp()).collect()
    }
}

/// Maximize the weighted stratified partial likelihood by Newton-Raphson with
/// step-halving.
///
/// Zero-weight episodes are excluded from the likelihood but retained in the
/// reported counts. Strata without events are dropped with a warning. A
/// coefficient running past `coef_bound` (monotone likelihood) flags the fit
/// as non-converged with a diagnostic instead of erroring.
pub fn fit_cox<F: Scalar>(
    data: &EpisodeData<F>,
    terms: &[Term],
    options: &CoxOptions<F>,
) -> Result<CoxFit<F>> {
    let design = Design::build(data, terms, options.ties)?;
    if design.n_clusters < 2 {
        return Err(Error::SingleCluster(design.n_clusters));
    }
    let p = terms.len();
    let mut warnings = design.warnings.clone();

    let mut beta = vec![F::zero(); p];
    let mut parts = design.eval(&beta);
    let mut converged = max_abs(&parts.score) < options.tol;
    let mut iterations = 0usize;

    while !converged && iterations < options.max_iter {
        iterations += 1;
        let mut neg_h = parts.hessian.clone();
        neg_h.scale(-F::one());
        let step = neg_h.solve_spd(&parts.score, |j| design.names[j].clone())?;

        // Step-halving: shrink until the log likelihood does not decrease.
        let mut accepted = None;
        let mut scale = F::one();
        let half = F::from_f64_lossy(0.5);
        for _ in 0..=options.max_halvings {
            let mut cand = beta.clone();
            vec_axpy(&mut cand, scale, &step);
            let cand_parts = design.eval(&cand);
            if cand_parts.loglik.is_finite() && cand_parts.loglik >= parts.loglik {
                accepted = Some((cand, cand_parts));
                break;
            }
            scale *= half;
        }
        let Some((cand, cand_parts)) = accepted else {
            warnings.push(format!(
                "step-halving exhausted at iteration {iterations}; stopping at current estimate"
            ));
            break;
        };

        let old_ll = parts.loglik;
        let step_size = max_abs(&step) * scale;
        beta = cand;
        parts = cand_parts;

        if let Some(j) = beta.iter().position(|b| b.abs() > options.coef_bound) {
            warnings.push(format!(
                "possible monotone likelihood: |{}| = {} exceeds bound {}",
                design.names[j],
                beta[j].abs(),
                options.coef_bound
            ));
            break;
        }
        if max_abs(&parts.score) < options.tol {
            converged = true;
            break;
        }
        // Stalled log likelihood counts as convergence only once the Newton
        // step itself is negligible; the likelihood scale is not invariant to
        // weight rescaling, the step is.
        let denom = F::one() + old_ll.abs();
        if (parts.loglik - old_ll).abs() / denom < F::from_f64_lossy(1e-12)
            && step_size < F::from_f64_lossy(1e-8)
        {
            converged = true;
            break;
        }
    }
    if !converged && iterations >= options.max_iter {
        warnings.push(format!("no convergence within {} iterations", options.max_iter));
    }

    let nan_matrix = || {
        let mut m = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                m[(i, j)] = F::nan();
            }
        }
        m
    };
    let mut neg_h = parts.hessian.clone();
    neg_h.scale(-F::one());
    let vcov_model = match neg_h.inverse_spd(|j| design.names[j].clone()) {
        Ok(m) => m,
        Err(e) => {
            if converged {
                return Err(e);
            }
            warnings.push("information matrix singular at stopping point".into());
            nan_matrix()
        }
    };
    let vcov_robust = if vcov_model[(0, 0)].is_finite() {
        robust::robust_vcov_design(&design, &beta, &vcov_model, options.ties)?
    } else {
        nan_matrix()
    };

    let baseline = baseline::baseline_cumhaz_design(&design, &beta);

    Ok(CoxFit {
        terms: terms.to_vec(),
        term_names: design.names.clone(),
        beta,
        vcov_model,
        vcov_robust,
        loglik: parts.loglik,
        iterations,
        converged,
        ties: options.ties,
        baseline,
        n_episodes: data.episodes.len(),
        n_subjects: data.n_subjects(),
        n_events: data.n_events(),
        n_events_pilot: data.n_events_pilot(),
        n_clusters: design.n_clusters,
        warnings,
    })
}
