//! Partial-likelihood evaluation: log likelihood, score and Hessian for the
//! weighted, stratified counting-process Cox model under Efron or Breslow
//! tie handling.

use rayon::prelude::*;

use crate::episode::EpisodeData;
use crate::error::{Error, Result};
use crate::linalg::{dot, vec_axpy, Matrix};
use crate::scalar::Scalar;

use super::{Term, Ties};

/// Value of the partial log likelihood and its first two derivatives.
#[derive(Debug, Clone)]
pub struct LikelihoodParts<F> {
    pub loglik: F,
    pub score: Vec<F>,
    pub hessian: Matrix<F>,
}

/// Preprocessed design: positive-weight rows with resolved model columns,
/// grouped by stratum with event times and risk-set sweep orders.
pub(crate) struct Design<F> {
    pub names: Vec<String>,
    pub x: Vec<Vec<F>>,
    pub start: Vec<F>,
    pub stop: Vec<F>,
    pub event: Vec<bool>,
    pub weight: Vec<F>,
    pub cluster: Vec<usize>,
    pub n_clusters: usize,
    pub strata: Vec<Stratum<F>>,
    pub warnings: Vec<String>,
    ties: Ties,
}

pub(crate) struct Stratum<F> {
    pub id: i64,
    /// Distinct event ages, ascending.
    pub event_times: Vec<F>,
    /// Row indices of deaths at each event age.
    pub deaths_at: Vec<Vec<usize>>,
    /// Stratum rows ordered by stop descending (risk-set additions).
    pub by_stop_desc: Vec<usize>,
    /// Stratum rows ordered by start descending (risk-set removals).
    pub by_start_desc: Vec<usize>,
    pub rows: Vec<usize>,
}

/// Risk-set aggregates at one event age, visited in descending age order.
pub(crate) struct SweepState<F> {
    pub s0: F,
    pub s1: Vec<F>,
    pub s2: Matrix<F>,
    /// Weighted deaths: count m, sum of weights, and weighted risk-score sums.
    pub m: usize,
    pub wd: F,
    pub d0: F,
    pub d1: Vec<F>,
    pub d2: Matrix<F>,
    /// Death sums of w·x and w·eta for the likelihood terms.
    pub swx: Vec<F>,
    pub sweta: F,
}

impl<F: Scalar> Design<F> {
    pub fn build(data: &EpisodeData<F>, terms: &[Term], ties: Ties) -> Result<Self> {
        let p = terms.len();
        if p == 0 {
            return Err(Error::InvalidInput("empty term list".into()));
        }
        // Resolve covariate terms against the shared name list once.
        let col_of = |name: &str| -> Result<usize> {
            data.covariate_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::MissingTerm(name.to_string()))
        };
        let mut cov_idx = Vec::with_capacity(p);
        for t in terms {
            cov_idx.push(match t {
                Term::Covariate(name) => Some(col_of(name)?),
                _ => None,
            });
        }

        let mut x = Vec::new();
        let mut start = Vec::new();
        let mut stop = Vec::new();
        let mut event = Vec::new();
        let mut weight = Vec::new();
        let mut cluster = Vec::new();
        let mut cluster_ids: std::collections::HashMap<&str, usize> = Default::default();
        let mut strata_rows: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();

        for e in &data.episodes {
            let positive_weight = e.weight > F::zero(); // NaN-safe
            if !positive_weight {
                continue; // zero weight: excluded from the likelihood
            }
            if e.start >= e.stop {
                return Err(Error::InvalidInput(format!(
                    "episode for {} has start {} >= stop {}",
                    e.subject_id, e.start, e.stop
                )));
            }
            let ind = |b: bool| if b { F::one() } else { F::zero() };
            let row: Vec<F> = terms
                .iter()
                .zip(&cov_idx)
                .map(|(t, ci)| match t {
                    Term::Pilot => ind(e.p),
                    Term::Treat => ind(e.d),
                    Term::TreatPilot => ind(e.p && e.d),
                    Term::Post => ind(e.q),
                    Term::TreatPost => ind(e.q && e.d),
                    Term::Covariate(_) => e.covariates[ci.unwrap()],
                })
                .collect();
            let idx = x.len();
            x.push(row);
            start.push(e.start);
            stop.push(e.stop);
            event.push(e.event);
            weight.push(e.weight);
            let next = cluster_ids.len();
            cluster.push(*cluster_ids.entry(e.cluster_id.as_str()).or_insert(next));
            strata_rows.entry(e.stratum).or_default().push(idx);
        }

        let mut warnings = Vec::new();
        let mut strata = Vec::new();
        for (id, rows) in strata_rows {
            let mut event_times: Vec<F> = rows
                .iter()
                .filter(|&&i| event[i])
                .map(|&i| stop[i])
                .collect();
            event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            event_times.dedup();
            if event_times.is_empty() {
                warnings.push(format!("stratum {id} has no events and was dropped"));
                continue;
            }
            let mut deaths_at: Vec<Vec<usize>> = vec![Vec::new(); event_times.len()];
            for &i in &rows {
                if event[i] {
                    let k = event_times.partition_point(|&t| t < stop[i]);
                    deaths_at[k].push(i);
                }
            }
            let mut by_stop_desc = rows.clone();
            by_stop_desc.sort_by(|&a, &b| stop[b].partial_cmp(&stop[a]).unwrap().then(a.cmp(&b)));
            let mut by_start_desc = rows.clone();
            by_start_desc.sort_by(|&a, &b| start[b].partial_cmp(&start[a]).unwrap().then(a.cmp(&b)));
            strata.push(Stratum { id, event_times, deaths_at, by_stop_desc, by_start_desc, rows });
        }
        if strata.is_empty() {
            return Err(Error::NoEvents);
        }

        Ok(Self {
            names: terms.iter().map(Term::name).collect(),
            x,
            start,
            stop,
            event,
            weight,
            cluster,
            n_clusters: cluster_ids.len(),
            strata,
            warnings,
            ties,
        })
    }

    pub fn n_terms(&self) -> usize {
        self.names.len()
    }

    /// Linear predictors and risk scores for all rows.
    pub fn eta_risk(&self, beta: &[F]) -> (Vec<F>, Vec<F>) {
        let cap = F::from_f64_lossy(700.0);
        let eta: Vec<F> = self.x.iter().map(|row| dot(row, beta)).collect();
        let risk: Vec<F> = eta.iter().map(|&e| e.min(cap).max(-cap).exp()).collect();
        (eta, risk)
    }

    /// Evaluate log likelihood, score and Hessian at `beta`.
    ///
    /// Strata are evaluated independently (in parallel) and reduced in fixed
    /// stratum order, so results are identical for any thread count.
    pub fn eval(&self, beta: &[F]) -> LikelihoodParts<F> {
        let p = self.n_terms();
        let (eta, risk) = self.eta_risk(beta);
        let per_stratum: Vec<LikelihoodParts<F>> = self
            .strata
            .par_iter()
            .map(|st| self.eval_stratum(st, &eta, &risk))
            .collect();
        let mut total = LikelihoodParts {
            loglik: F::zero(),
            score: vec![F::zero(); p],
            hessian: Matrix::zeros(p, p),
        };
        for part in per_stratum {
            total.loglik += part.loglik;
            vec_axpy(&mut total.score, F::one(), &part.score);
            total.hessian.add_scaled(&part.hessian, F::one());
        }
        total
    }

    fn eval_stratum(&self, st: &Stratum<F>, eta: &[F], risk: &[F]) -> LikelihoodParts<F> {
        let p = self.n_terms();
        let mut ll = F::zero();
        let mut score = vec![F::zero(); p];
        let mut hess = Matrix::zeros(p, p);
        let mut xbar = vec![F::zero(); p];

        self.sweep(st, eta, risk, |_, s| match self.ties {
            Ties::Breslow => {
                ll += s.sweta - s.wd * s.s0.ln();
                for j in 0..p {
                    xbar[j] = s.s1[j] / s.s0;
                    score[j] += s.swx[j] - s.wd * xbar[j];
                }
                hess.add_scaled(&s.s2, -s.wd / s.s0);
                hess.add_outer(&xbar, s.wd);
            }
            Ties::Efron => {
                let mf = F::from_f64_lossy(s.m as f64);
                let wbar = s.wd / mf;
                ll += s.sweta;
                for j in 0..p {
                    score[j] += s.swx[j];
                }
                for r_idx in 0..s.m {
                    let frac = F::from_f64_lossy(r_idx as f64) / mf;
                    let den = s.s0 - frac * s.d0;
                    ll -= wbar * den.ln();
                    for j in 0..p {
                        xbar[j] = (s.s1[j] - frac * s.d1[j]) / den;
                        score[j] -= wbar * xbar[j];
                    }
                    hess.add_scaled(&s.s2, -wbar / den);
                    hess.add_scaled(&s.d2, wbar * frac / den);
                    hess.add_outer(&xbar, wbar);
                }
            }
        });

        LikelihoodParts { loglik: ll, score, hessian: hess }
    }

    /// Walk a stratum's event ages in descending order, maintaining risk-set
    /// aggregates and death sums, and call `visit(k, state)` at each event
    /// age `event_times[k]`.
    pub(crate) fn sweep(
        &self,
        st: &Stratum<F>,
        eta: &[F],
        risk: &[F],
        mut visit: impl FnMut(usize, &SweepState<F>),
    ) {
        let p = self.n_terms();
        let mut state = SweepState {
            s0: F::zero(),
            s1: vec![F::zero(); p],
            s2: Matrix::zeros(p, p),
            m: 0,
            wd: F::zero(),
            d0: F::zero(),
            d1: vec![F::zero(); p],
            d2: Matrix::zeros(p, p),
            swx: vec![F::zero(); p],
            sweta: F::zero(),
        };
        let mut add = 0usize;
        let mut rem = 0usize;
        for k in (0..st.event_times.len()).rev() {
            let t = st.event_times[k];
            while add < st.by_stop_desc.len() && self.stop[st.by_stop_desc[add]] >= t {
                let i = st.by_stop_desc[add];
                let wr = self.weight[i] * risk[i];
                state.s0 += wr;
                vec_axpy(&mut state.s1, wr, &self.x[i]);
                state.s2.add_outer(&self.x[i], wr);
                add += 1;
            }
            while rem < st.by_start_desc.len() && self.start[st.by_start_desc[rem]] >= t {
                let i = st.by_start_desc[rem];
                let wr = self.weight[i] * risk[i];
                state.s0 -= wr;
                vec_axpy(&mut state.s1, -wr, &self.x[i]);
                state.s2.add_outer(&self.x[i], -wr);
                rem += 1;
            }

            state.m = st.deaths_at[k].len();
            state.wd = F::zero();
            state.d0 = F::zero();
            state.sweta = F::zero();
            state.d1.iter_mut().for_each(|v| *v = F::zero());
            state.swx.iter_mut().for_each(|v| *v = F::zero());
            state.d2.scale(F::zero());
            for &i in &st.deaths_at[k] {
                let w = self.weight[i];
                let wr = w * risk[i];
                state.wd += w;
                state.d0 += wr;
                state.sweta += w * eta[i];
                vec_axpy(&mut state.d1, wr, &self.x[i]);
                vec_axpy(&mut state.swx, w, &self.x[i]);
                state.d2.add_outer(&self.x[i], wr);
            }

            visit(k, &state);
        }
    }
}

/// Evaluate the weighted stratified partial likelihood with exact analytic
/// score and Hessian at `beta`. Risk sets respect `(start, stop]` semantics
/// and strata.
pub fn partial_loglik<F: Scalar>(
    data: &EpisodeData<F>,
    terms: &[Term],
    beta: &[F],
    ties: Ties,
) -> Result<LikelihoodParts<F>> {
    if beta.len() != terms.len() {
        return Err(Error::InvalidInput(format!(
            "beta has length {}, expected {}",
            beta.len(),
            terms.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("beta must be finite".into()));
    }
    let design = Design::build(data, terms, ties)?;
    Ok(design.eval(beta))
}
