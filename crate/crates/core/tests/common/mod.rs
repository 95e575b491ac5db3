//! Independent reference implementations used as test oracles.
//!
//! Everything here is written from first principles with naive O(n²)
//! summation and stays deliberately decoupled from the library's sweep-based
//! evaluation paths.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use hazdid::episode::{Episode, EpisodeData};
use hazdid::{Term, Ties};
use rand::rngs::StdRng;
use rand::Rng;

/// Definition-based weighted stratified partial log likelihood: risk sets are
/// rebuilt from scratch at every event age.
pub fn naive_loglik(data: &EpisodeData<f64>, terms: &[Term], beta: &[f64], ties: Ties) -> f64 {
    let rows: Vec<&Episode<f64>> = data.episodes.iter().filter(|e| e.weight > 0.0).collect();
    let xval = |e: &Episode<f64>, t: &Term| -> f64 {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match t {
            Term::Pilot => ind(e.p),
            Term::Treat => ind(e.d),
            Term::TreatPilot => ind(e.p && e.d),
            Term::Post => ind(e.q),
            Term::TreatPost => ind(e.q && e.d),
            Term::Covariate(name) => {
                let idx = data.covariate_names.iter().position(|n| n == name).unwrap();
                e.covariates[idx]
            }
        }
    };
    let eta = |e: &Episode<f64>| -> f64 {
        terms.iter().zip(beta).map(|(t, b)| xval(e, t) * b).sum()
    };

    let mut strata: Vec<i64> = rows.iter().map(|e| e.stratum).collect();
    strata.sort_unstable();
    strata.dedup();

    let mut ll = 0.0;
    for g in strata {
        let in_g: Vec<&&Episode<f64>> = rows.iter().filter(|e| e.stratum == g).collect();
        let mut times: Vec<f64> = in_g
            .iter()
            .filter(|e| e.event)
            .map(|e| e.stop)
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        for t in times {
            let at_risk: Vec<&&&Episode<f64>> =
                in_g.iter().filter(|e| e.start < t && t <= e.stop).collect();
            let deaths: Vec<&&&Episode<f64>> = at_risk
                .iter()
                .filter(|e| e.event && e.stop == t)
                .copied()
                .collect();
            let m = deaths.len();
            if m == 0 {
                continue;
            }
            let s0: f64 = at_risk.iter().map(|e| e.weight * eta(e).exp()).sum();
            let d0: f64 = deaths.iter().map(|e| e.weight * eta(e).exp()).sum();
            let wd: f64 = deaths.iter().map(|e| e.weight).sum();
            let death_eta: f64 = deaths.iter().map(|e| e.weight * eta(e)).sum();
            match ties {
                Ties::Breslow => {
                    ll += death_eta - wd * s0.ln();
                }
                Ties::Efron => {
                    let wbar = wd / m as f64;
                    ll += death_eta;
                    for r in 0..m {
                        ll -= wbar * (s0 - (r as f64 / m as f64) * d0).ln();
                    }
                }
            }
        }
    }
    ll
}

/// Argmax of `f` over `[lo, hi]` to 1e-6, by staged grid refinement
/// (equivalent to a full 1e-6 grid for a concave objective).
pub fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut best = lo;
    let mut best_val = f64::NEG_INFINITY;
    let scan = |a: f64, b: f64, step: f64, best: &mut f64, best_val: &mut f64| {
        let n = ((b - a) / step).round() as usize;
        for k in 0..=n {
            let x = a + step * k as f64;
            let v = f(x);
            if v > *best_val {
                *best_val = v;
                *best = x;
            }
        }
    };
    scan(lo, hi, 1e-2, &mut best, &mut best_val);
    for step in [1e-4, 1e-6] {
        let a = (best - 250.0 * step).max(lo);
        let b = (best + 250.0 * step).min(hi);
        best_val = f64::NEG_INFINITY;
        scan(a, b, step, &mut best, &mut best_val);
    }
    best
}

/// Random small episode set with one covariate; integer ages produce ties.
pub fn random_small_dataset(rng: &mut StdRng, n_max: usize) -> EpisodeData<f64> {
    let n = rng.random_range(6..=n_max);
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n {
        let start = f64::from(rng.random_range(0..4));
        let stop = start + f64::from(rng.random_range(1..6));
        let x = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        episodes.push(Episode {
            subject_id: format!("s{i}"),
            start,
            stop,
            event: rng.random_bool(0.55),
            d: false,
            p: false,
            q: false,
            covariates: vec![x],
            stratum: i64::from(rng.random_range(0..2u8)),
            weight: 1.0,
            cluster_id: format!("s{i}"),
        });
    }
    EpisodeData { covariate_names: vec!["x".into()], episodes }
}

/// Random episode set with several covariates, weights, staggered entry and
/// heavy ties; exercises every branch of the likelihood.
pub fn random_messy_dataset(rng: &mut StdRng, n: usize, p_cov: usize) -> EpisodeData<f64> {
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n {
        let start = f64::from(rng.random_range(0..5));
        let stop = start + f64::from(rng.random_range(1..7));
        let covariates: Vec<f64> = (0..p_cov).map(|_| rng.random_range(-1.0..1.0)).collect();
        episodes.push(Episode {
            subject_id: format!("s{i}"),
            start,
            stop,
            event: rng.random_bool(0.5),
            d: rng.random_bool(0.5),
            p: rng.random_bool(0.4),
            q: false,
            covariates,
            stratum: i64::from(rng.random_range(0..3u8)),
            weight: rng.random_range(0.25..2.5),
            cluster_id: format!("c{}", rng.random_range(0..(n / 2).max(2))),
        });
    }
    EpisodeData {
        covariate_names: (0..p_cov).map(|j| format!("x{j}")).collect(),
        episodes,
    }
}

/// Central finite difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Matching oracle
// ---------------------------------------------------------------------------

use hazdid::matching::{DistanceTable, MatchConfig, MuniYear};

/// Exhaustive nearest-opposite-group search with the documented tie-break
/// (smaller distance, then smaller counterpart id).
pub fn brute_force_nearest(
    units: &[MuniYear],
    distances: &DistanceTable<f64>,
    config: &MatchConfig<f64>,
) -> std::collections::BTreeMap<(String, i32), Option<(String, f64)>> {
    let mut out = std::collections::BTreeMap::new();
    for u in units {
        let mut best: Option<(String, f64)> = None;
        for v in units {
            if v.treated == u.treated || v.muni == u.muni {
                continue;
            }
            if config.same_year && v.year != u.year {
                continue;
            }
            let Some(d) = distances.get(&u.muni, &v.muni, config.metric) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((bm, bd)) => d < *bd || (d == *bd && v.muni < *bm),
            };
            if better {
                best = Some((v.muni.clone(), d));
            }
        }
        out.insert((u.muni.clone(), u.year), best);
    }
    out
}

/// Definition-based weighted Nelson-Aalen: at each event age, weighted
/// deaths over weighted at-risk, risk sets rebuilt from scratch.
pub fn naive_nelson_aalen(rows: &[(f64, f64, bool, f64)]) -> Vec<(f64, f64)> {
    let mut times: Vec<f64> = rows.iter().filter(|r| r.2).map(|r| r.1).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut cum = 0.0;
    let mut out = Vec::new();
    for t in times {
        let deaths: f64 = rows.iter().filter(|r| r.2 && r.1 == t).map(|r| r.3).sum();
        let at_risk: f64 = rows.iter().filter(|r| r.0 < t && t <= r.1).map(|r| r.3).sum();
        cum += deaths / at_risk;
        out.push((t, cum));
    }
    out
}

/// Brute-force matching weights implementing the documented rule without the
/// library's indexing: treated spells weigh 1 and send one unit of mass to
/// their nearest control municipality, split evenly over its control spells.
pub fn brute_force_weights(
    local: &[hazdid::Spell<f64>],
    best: &dyn Fn(&str) -> Option<(String, f64)>,
) -> Vec<f64> {
    local
        .iter()
        .map(|s| {
            if s.treated {
                1.0
            } else {
                let demand = local
                    .iter()
                    .filter(|t| t.treated)
                    .filter(|t| {
                        best(&t.municipality_id)
                            .is_some_and(|(m, _)| m == s.municipality_id)
                    })
                    .count();
                let supply = local
                    .iter()
                    .filter(|c| !c.treated && c.municipality_id == s.municipality_id)
                    .count();
                demand as f64 / supply as f64
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// OLS oracle
// ---------------------------------------------------------------------------

/// Weighted OLS by normal equations with explicit dummy expansion of both
/// fixed-effect sets (first level dropped, intercept included). Returns the
/// coefficients of the requested leading columns, or `None` when the dummy
/// design is singular.
pub fn dummy_ols(
    y: &[f64],
    x: &[Vec<f64>],
    unit: &[String],
    time: &[i32],
    w: &[f64],
    n_lead: usize,
) -> Option<Vec<f64>> {
    let n = y.len();
    let mut units: Vec<&String> = unit.iter().collect();
    units.sort();
    units.dedup();
    let mut times: Vec<i32> = time.to_vec();
    times.sort_unstable();
    times.dedup();

    let k_x = x.first().map_or(0, Vec::len);
    let k = k_x + (units.len() - 1) + (times.len() - 1) + 1;
    let mut cols = vec![vec![0.0; n]; k];
    for i in 0..n {
        for j in 0..k_x {
            cols[j][i] = x[i][j];
        }
        if let Some(pos) = units.iter().position(|u| **u == unit[i]) {
            if pos > 0 {
                cols[k_x + pos - 1][i] = 1.0;
            }
        }
        if let Some(pos) = times.iter().position(|t| *t == time[i]) {
            if pos > 0 {
                cols[k_x + units.len() - 1 + pos - 1][i] = 1.0;
            }
        }
        cols[k - 1][i] = 1.0;
    }

    // Normal equations (X'WX) b = X'Wy via Gaussian elimination.
    let mut a = vec![vec![0.0; k + 1]; k];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = (0..n).map(|i| w[i] * cols[r][i] * cols[c][i]).sum();
        }
        a[r][k] = (0..n).map(|i| w[i] * cols[r][i] * y[i]).sum();
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-9 {
            return None;
        }
        for c in col..=k {
            a[col][c] /= d;
        }
        for r in 0..k {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..n_lead).map(|j| a[j][k]).collect())
}
