//! Linear difference-in-differences with two-way fixed effects.
//!
//! Both fixed-effect sets are absorbed by iterated weighted demeaning
//! (alternating projections), the slopes come from weighted least squares on
//! the transformed data, and inference is a CR0 cluster sandwich (optional
//! CR1 small-sample factor).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;
use crate::stats;

/// One panel observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow<F> {
    pub outcome: F,
    pub treat_x_pilot: bool,
    pub treat_x_post: bool,
    /// Unit fixed effect (canton).
    pub unit_fe: String,
    /// Time fixed effect (year).
    pub time_fe: i32,
    pub covariates: Vec<F>,
    pub weight: F,
    pub cluster_id: String,
}

/// Panel rows plus shared covariate names.
#[derive(Debug, Clone, Default)]
pub struct PanelData<F> {
    pub covariate_names: Vec<String>,
    pub rows: Vec<PanelRow<F>>,
}

/// Model columns for the linear specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OlsTerm {
    TreatPilot,
    TreatPost,
    Covariate(String),
}

impl OlsTerm {
    pub fn name(&self) -> String {
        match self {
            OlsTerm::TreatPilot => "treat_x_pilot".into(),
            OlsTerm::TreatPost => "treat_x_post".into(),
            OlsTerm::Covariate(n) => n.clone(),
        }
    }
}

/// Cluster-variance small-sample correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClusterCorrection {
    /// Plain sandwich, no correction.
    #[default]
    Cr0,
    /// `G/(G-1) * (N-1)/(N-K)`.
    Cr1,
}

#[derive(Debug, Clone)]
pub struct OlsOptions<F> {
    pub correction: ClusterCorrection,
    /// Demeaning stops when the largest within-group mean falls below this.
    pub demean_tol: F,
    pub max_demean_iter: usize,
}

impl<F: Scalar> Default for OlsOptions<F> {
    fn default() -> Self {
        Self {
            correction: ClusterCorrection::Cr0,
            demean_tol: F::from_f64_lossy(1e-10),
            max_demean_iter: 500,
        }
    }
}

/// A fitted fixed-effects regression.
#[derive(Debug, Clone)]
pub struct OlsFit<F> {
    pub terms: Vec<OlsTerm>,
    pub term_names: Vec<String>,
    pub beta: Vec<F>,
    pub vcov_cluster: Matrix<F>,
    pub n: usize,
    pub n_clusters: usize,
    pub r2_within: F,
}

impl<F: Scalar> OlsFit<F> {
    pub fn se_cluster(&self) -> Vec<F> {
        self.vcov_cluster.diag().iter().map(|v| v.max(F::zero()).sqrt()).collect()
    }
}

fn column<F: Scalar>(data: &PanelData<F>, term: &OlsTerm) -> Result<Vec<F>> {
    let ind = |b: bool| if b { F::one() } else { F::zero() };
    match term {
        OlsTerm::TreatPilot => Ok(data.rows.iter().map(|r| ind(r.treat_x_pilot)).collect()),
        OlsTerm::TreatPost => Ok(data.rows.iter().map(|r| ind(r.treat_x_post)).collect()),
        OlsTerm::Covariate(name) => {
            let idx = data
                .covariate_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::MissingTerm(name.clone()))?;
            Ok(data.rows.iter().map(|r| r.covariates[idx]).collect())
        }
    }
}

/// Weighted alternating demeaning over both fixed-effect groupings, applied
/// in place to every column until the largest weighted group mean is below
/// tolerance.
fn absorb_fixed_effects<F: Scalar>(
    cols: &mut [Vec<F>],
    unit_groups: &[Vec<usize>],
    time_groups: &[Vec<usize>],
    w: &[F],
    options: &OlsOptions<F>,
) -> Result<()> {
    let sweep = |col: &mut Vec<F>, groups: &[Vec<usize>]| -> F {
        let mut max_mean = F::zero();
        for g in groups {
            let mut sw = F::zero();
            let mut swx = F::zero();
            for &i in g {
                sw += w[i];
                swx += w[i] * col[i];
            }
            if sw > F::zero() {
                let mean = swx / sw;
                max_mean = max_mean.max(mean.abs());
                for &i in g {
                    col[i] -= mean;
                }
            }
        }
        max_mean
    };
    for col in cols.iter_mut() {
        let mut converged = false;
        for _ in 0..options.max_demean_iter {
            let m1 = sweep(col, unit_groups);
            let m2 = sweep(col, time_groups);
            if m1.max(m2) < options.demean_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::InvalidInput(
                "fixed-effect demeaning did not converge".into(),
            ));
        }
    }
    Ok(())
}

/// Weighted two-way fixed-effects least squares with cluster-robust variance.
pub fn fit_ols_fe<F: Scalar>(
    data: &PanelData<F>,
    terms: &[OlsTerm],
    options: &OlsOptions<F>,
) -> Result<OlsFit<F>> {
    let n = data.rows.len();
    let k = terms.len();
    if n == 0 || k == 0 {
        return Err(Error::InvalidInput("empty panel or term list".into()));
    }
    for r in &data.rows {
        if !(r.weight.is_finite() && r.weight >= F::zero()) {
            return Err(Error::InvalidInput("weights must be nonnegative".into()));
        }
    }
    let w: Vec<F> = data.rows.iter().map(|r| r.weight).collect();

    let mut unit_index: HashMap<&str, usize> = HashMap::new();
    let mut time_index: HashMap<i32, usize> = HashMap::new();
    let mut unit_groups: Vec<Vec<usize>> = Vec::new();
    let mut time_groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in data.rows.iter().enumerate() {
        let next = unit_groups.len();
        let ui = *unit_index.entry(r.unit_fe.as_str()).or_insert_with(|| {
            unit_groups.push(Vec::new());
            next
        });
        unit_groups[ui].push(i);
        let next = time_groups.len();
        let ti = *time_index.entry(r.time_fe).or_insert_with(|| {
            time_groups.push(Vec::new());
            next
        });
        time_groups[ti].push(i);
    }

    let mut cols: Vec<Vec<F>> = Vec::with_capacity(k + 1);
    cols.push(data.rows.iter().map(|r| r.outcome).collect());
    for t in terms {
        cols.push(column(data, t)?);
    }
    absorb_fixed_effects(&mut cols, &unit_groups, &time_groups, &w, options)?;
    let (y, x_cols) = cols.split_first().expect("outcome column");

    // Normal equations on the transformed data.
    let mut xtwx = Matrix::zeros(k, k);
    let mut xtwy = vec![F::zero(); k];
    for i in 0..n {
        for a in 0..k {
            let wxa = w[i] * x_cols[a][i];
            xtwy[a] += wxa * y[i];
            for b in 0..k {
                xtwx[(a, b)] += wxa * x_cols[b][i];
            }
        }
    }
    let name_of = |j: usize| terms[j].name();
    let bread = xtwx
        .inverse_spd(name_of)
        .map_err(|e| match e {
            Error::SingularDesign { term } => Error::CollinearTerm { term },
            other => other,
        })?;
    let beta = bread.matvec(&xtwy);

    // Cluster sums of w·x·e form the meat.
    let mut cluster_index: HashMap<&str, usize> = HashMap::new();
    let mut cluster_sums: Vec<Vec<F>> = Vec::new();
    let mut rss = F::zero();
    let mut tss = F::zero();
    let mut sw = F::zero();
    let mut swy = F::zero();
    for i in 0..n {
        sw += w[i];
        swy += w[i] * y[i];
    }
    let ybar = if sw > F::zero() { swy / sw } else { F::zero() };
    for i in 0..n {
        let xi: Vec<F> = (0..k).map(|j| x_cols[j][i]).collect();
        let e = y[i] - dot(&xi, &beta);
        rss += w[i] * e * e;
        let dy = y[i] - ybar;
        tss += w[i] * dy * dy;
        let next = cluster_sums.len();
        let ci = *cluster_index
            .entry(data.rows[i].cluster_id.as_str())
            .or_insert_with(|| {
                cluster_sums.push(vec![F::zero(); k]);
                next
            });
        for j in 0..k {
            cluster_sums[ci][j] += w[i] * xi[j] * e;
        }
    }
    let n_clusters = cluster_sums.len();
    if n_clusters < 2 {
        return Err(Error::SingleCluster(n_clusters));
    }
    let mut meat = Matrix::zeros(k, k);
    for s in &cluster_sums {
        meat.add_outer(s, F::one());
    }
    let mut vcov = bread.matmul(&meat).matmul(&bread);
    if options.correction == ClusterCorrection::Cr1 {
        let g = F::from_f64_lossy(n_clusters as f64);
        let nn = F::from_f64_lossy(n as f64);
        let kk = F::from_f64_lossy(k as f64);
        vcov.scale(g / (g - F::one()) * (nn - F::one()) / (nn - kk));
    }
    vcov.symmetrize();

    let r2_within = if tss > F::zero() {
        (F::one() - rss / tss).max(F::zero()).min(F::one())
    } else {
        F::zero()
    };

    Ok(OlsFit {
        term_names: terms.iter().map(OlsTerm::name).collect(),
        terms: terms.to_vec(),
        beta,
        vcov_cluster: vcov,
        n,
        n_clusters,
        r2_within,
    })
}

/// One row of the reporting table.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow<F> {
    pub label: String,
    pub coefficient: F,
    pub se: F,
    pub z: F,
    pub stars: String,
}

/// Coefficient table with significance stars at the 10/5/1% levels from
/// normal quantiles on robust t statistics.
pub fn did_report<F: Scalar>(fit: &OlsFit<F>, labels: Option<&[String]>) -> Vec<ReportRow<F>> {
    let se = fit.se_cluster();
    fit.beta
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let label = labels
                .and_then(|l| l.get(j).cloned())
                .unwrap_or_else(|| fit.term_names[j].clone());
            let z = if se[j] > F::zero() { b / se[j] } else { F::zero() };
            ReportRow {
                label,
                coefficient: b,
                se: se[j],
                z,
                stars: stats::stars(z.to_f64_lossy()).to_string(),
            }
        })
        .collect()
}

/// Render a report as fixed-width text.
pub fn format_report<F: Scalar>(rows: &[ReportRow<F>]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<24} {:>12} {:>12}\n", "term", "coef", "se"));
    for r in rows {
        out.push_str(&format!(
            "{:<24} {:>12.6} {:>12.6} {}\n",
            r.label,
            r.coefficient.to_f64_lossy(),
            r.se.to_f64_lossy(),
            r.stars
        ));
    }
    out
}
