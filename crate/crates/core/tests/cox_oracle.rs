#![allow(clippy::needless_range_loop)]

//! Oracle checks for the partial-likelihood machinery: naive summation,
//! grid-search maximization, finite differences, and the robust-variance
//! identities.

mod common;

use common::{central_diff, grid_argmax, naive_loglik, random_messy_dataset, random_small_dataset, rel_err};
use hazdid::cox::score_residuals;
use hazdid::episode::EpisodeData;
use hazdid::{fit_cox, partial_loglik, ratt_from_fit, robust_vcov, CoxOptions, Term, Ties};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn x_term() -> Vec<Term> {
    vec![Term::Covariate("x".into())]
}

#[test]
fn sweep_likelihood_agrees_with_naive_summation() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..25 {
        let data = random_messy_dataset(&mut rng, 40, 3);
        let terms: Vec<Term> = vec![
            Term::Pilot,
            Term::Treat,
            Term::TreatPilot,
            Term::Covariate("x0".into()),
            Term::Covariate("x1".into()),
            Term::Covariate("x2".into()),
        ];
        let beta: Vec<f64> = (0..terms.len()).map(|_| rng.random_range(-0.6..0.6)).collect();
        for ties in [Ties::Efron, Ties::Breslow] {
            let fast = partial_loglik(&data, &terms, &beta, ties).unwrap().loglik;
            let naive = naive_loglik(&data, &terms, &beta, ties);
            assert!(rel_err(fast, naive) < 1e-12, "{fast} vs {naive}");
        }
    }
}

#[test]
fn six_subject_fit_matches_grid_search() {
    // Distinct event ages, one binary covariate.
    let mut data = random_small_dataset(&mut StdRng::seed_from_u64(0), 6);
    let xs = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    for (i, e) in data.episodes.iter_mut().enumerate() {
        e.start = 0.0;
        e.stop = (i + 1) as f64;
        e.event = true;
        e.covariates[0] = xs[i % 6];
        e.stratum = 0;
        e.weight = 1.0;
    }
    data.episodes.truncate(6);
    for ties in [Ties::Efron, Ties::Breslow] {
        let fit = fit_cox(&data, &x_term(), &CoxOptions { ties, ..Default::default() }).unwrap();
        assert!(fit.converged);
        let oracle = grid_argmax(|b| naive_loglik(&data, &x_term(), &[b], ties), -10.0, 10.0);
        assert!(
            (fit.beta[0] - oracle).abs() <= 1e-6,
            "{:?}: fit {} vs grid {}",
            ties,
            fit.beta[0],
            oracle
        );
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(23);
    for _ in 0..10 {
        let data = random_messy_dataset(&mut rng, 36, 2);
        let terms = vec![
            Term::Treat,
            Term::Covariate("x0".into()),
            Term::Covariate("x1".into()),
        ];
        let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        for ties in [Ties::Efron, Ties::Breslow] {
            let parts = partial_loglik(&data, &terms, &beta, ties).unwrap();
            for j in 0..terms.len() {
                let fd = central_diff(
                    |v| {
                        let mut b = beta.clone();
                        b[j] = v;
                        naive_loglik(&data, &terms, &b, ties)
                    },
                    beta[j],
                    1e-5,
                );
                assert!(
                    rel_err(parts.score[j], fd) < 1e-6,
                    "score[{j}] {} vs fd {fd}",
                    parts.score[j]
                );
                for i in 0..terms.len() {
                    let fd2 = central_diff(
                        |v| {
                            let mut b = beta.clone();
                            b[j] = v;
                            partial_loglik(&data, &terms, &b, ties).unwrap().score[i]
                        },
                        beta[j],
                        1e-5,
                    );
                    assert!(
                        rel_err(parts.hessian[(i, j)], fd2) < 1e-5,
                        "hessian[({i},{j})] {} vs fd {fd2}",
                        parts.hessian[(i, j)]
                    );
                }
            }
        }
    }
}

#[test]
fn weighted_residuals_sum_to_score() {
    let mut rng = StdRng::seed_from_u64(37);
    for _ in 0..10 {
        let data = random_messy_dataset(&mut rng, 40, 2);
        let terms = vec![Term::Treat, Term::Covariate("x0".into()), Term::Covariate("x1".into())];
        let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-0.4..0.4)).collect();
        for ties in [Ties::Efron, Ties::Breslow] {
            let parts = partial_loglik(&data, &terms, &beta, ties).unwrap();
            let resid = score_residuals(&data, &terms, &beta, ties).unwrap();
            let rows: Vec<_> = data.episodes.iter().filter(|e| e.weight > 0.0).collect();
            let mut total = vec![0.0; terms.len()];
            for (e, u) in rows.iter().zip(&resid) {
                for j in 0..terms.len() {
                    total[j] += e.weight * u[j];
                }
            }
            for j in 0..terms.len() {
                assert!(
                    rel_err(total[j], parts.score[j]) < 1e-9,
                    "{:?}: residual sum {} vs score {}",
                    ties,
                    total[j],
                    parts.score[j]
                );
            }
        }
    }
}

#[test]
fn robust_vcov_with_singleton_clusters_is_lin_wei() {
    let mut rng = StdRng::seed_from_u64(41);
    let mut data = random_messy_dataset(&mut rng, 30, 1);
    for (i, e) in data.episodes.iter_mut().enumerate() {
        e.cluster_id = format!("row{i}"); // every episode its own cluster
    }
    let terms = vec![Term::Treat, Term::Covariate("x0".into())];
    let fit = fit_cox(&data, &terms, &CoxOptions::default()).unwrap();
    assert!(fit.converged);

    // Unclustered robust variance assembled directly from score residuals.
    let resid = score_residuals(&data, &terms, &fit.beta, fit.ties).unwrap();
    let rows: Vec<_> = data.episodes.iter().filter(|e| e.weight > 0.0).collect();
    let p = terms.len();
    let mut meat = vec![vec![0.0; p]; p];
    for (e, u) in rows.iter().zip(&resid) {
        for a in 0..p {
            for b in 0..p {
                meat[a][b] += (e.weight * u[a]) * (e.weight * u[b]);
            }
        }
    }
    let v = &fit.vcov_model;
    for a in 0..p {
        for b in 0..p {
            let mut expect = 0.0;
            for i in 0..p {
                for j in 0..p {
                    expect += v[(a, i)] * meat[i][j] * v[(j, b)];
                }
            }
            assert!(
                rel_err(fit.vcov_robust[(a, b)], expect) < 1e-10,
                "({a},{b}): {} vs {}",
                fit.vcov_robust[(a, b)],
                expect
            );
        }
    }
}

#[test]
fn duplicating_subjects_and_halving_weights_preserves_robust_vcov() {
    // Exact under Breslow, where the likelihood depends on the data only
    // through weighted sums. The Efron correction counts discrete death
    // rows, so duplication changes its tie fractions by construction.
    let options = CoxOptions { ties: Ties::Breslow, ..Default::default() };
    let mut rng = StdRng::seed_from_u64(43);
    let data = random_messy_dataset(&mut rng, 30, 1);
    let terms = vec![Term::Treat, Term::Covariate("x0".into())];
    let fit = fit_cox(&data, &terms, &options).unwrap();

    let mut doubled = data.clone();
    for e in &mut doubled.episodes {
        e.weight *= 0.5;
    }
    let mut copies = doubled.episodes.clone();
    for e in &mut copies {
        e.subject_id = format!("{}_dup", e.subject_id);
        // cluster_id intentionally kept: the duplicate is the same unit.
    }
    doubled.episodes.extend(copies);
    let fit2 = fit_cox(&doubled, &terms, &options).unwrap();

    for j in 0..terms.len() {
        assert!((fit.beta[j] - fit2.beta[j]).abs() < 1e-8);
        for i in 0..terms.len() {
            assert!(
                rel_err(fit.vcov_robust[(i, j)], fit2.vcov_robust[(i, j)]) < 1e-8,
                "({i},{j})"
            );
        }
    }
    let r1 = ratt_from_fit(&fit, 0.95).ok();
    let r2 = ratt_from_fit(&fit2, 0.95).ok();
    assert_eq!(r1.is_some(), r2.is_some());
    assert!(fit2.vcov_model.is_symmetric_psd(1e-10));
    assert!(fit2.vcov_robust.is_symmetric_psd(1e-10));
}

#[test]
fn merged_clusters_match_brute_force_recomputation() {
    let mut rng = StdRng::seed_from_u64(47);
    for _ in 0..5 {
        let mut data = random_messy_dataset(&mut rng, 36, 1);
        // Random pairwise merge of the original clusters.
        let mut ids: Vec<String> = data.episodes.iter().map(|e| e.cluster_id.clone()).collect();
        ids.sort();
        ids.dedup();
        let merged: std::collections::HashMap<String, String> = ids
            .iter()
            .map(|c| (c.clone(), format!("m{}", rng.random_range(0..ids.len() / 2 + 1))))
            .collect();
        for e in &mut data.episodes {
            e.cluster_id = merged[&e.cluster_id].clone();
        }
        let terms = vec![Term::Treat, Term::Covariate("x0".into())];
        let Ok(fit) = fit_cox(&data, &terms, &CoxOptions::default()) else {
            continue; // merged down to one cluster
        };
        if !fit.converged {
            continue;
        }
        let vcov = robust_vcov(&fit, &data).unwrap();

        // Brute force: group weighted residuals by cluster in first-seen
        // order, then sandwich.
        let resid = score_residuals(&data, &terms, &fit.beta, fit.ties).unwrap();
        let rows: Vec<_> = data.episodes.iter().filter(|e| e.weight > 0.0).collect();
        let p = terms.len();
        let mut order: Vec<&str> = Vec::new();
        let mut sums: Vec<Vec<f64>> = Vec::new();
        for (e, u) in rows.iter().zip(&resid) {
            let idx = match order.iter().position(|c| *c == e.cluster_id) {
                Some(i) => i,
                None => {
                    order.push(&e.cluster_id);
                    sums.push(vec![0.0; p]);
                    order.len() - 1
                }
            };
            for j in 0..p {
                sums[idx][j] += e.weight * u[j];
            }
        }
        let mut meat = vec![vec![0.0; p]; p];
        for s in &sums {
            for a in 0..p {
                for b in 0..p {
                    meat[a][b] += s[a] * s[b];
                }
            }
        }
        let v = &fit.vcov_model;
        for a in 0..p {
            for b in 0..p {
                let mut expect = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        expect += v[(a, i)] * meat[i][j] * v[(j, b)];
                    }
                }
                assert!(
                    rel_err(vcov[(a, b)], expect) < 1e-12,
                    "({a},{b}): {} vs {expect}",
                    vcov[(a, b)]
                );
            }
        }
    }
}

#[test]
fn rank_and_weight_invariance() {
    let mut rng = StdRng::seed_from_u64(53);
    let data = random_messy_dataset(&mut rng, 40, 1);
    let terms = vec![Term::Treat, Term::Covariate("x0".into())];
    let base = fit_cox(&data, &terms, &CoxOptions::default()).unwrap();

    // Strictly increasing transform of all episode ages preserves the fit.
    let mut warped: EpisodeData<f64> = data.clone();
    for e in &mut warped.episodes {
        let f = |t: f64| t + 0.01 * t * t;
        e.start = f(e.start);
        e.stop = f(e.stop);
    }
    let fit_w = fit_cox(&warped, &terms, &CoxOptions::default()).unwrap();
    for j in 0..terms.len() {
        assert!((base.beta[j] - fit_w.beta[j]).abs() < 1e-8, "rank invariance");
    }

    // Scaling all weights by c > 0 preserves beta, robust vcov and the CI.
    let mut scaled = data.clone();
    for e in &mut scaled.episodes {
        e.weight *= 7.25;
    }
    let fit_s = fit_cox(&scaled, &terms, &CoxOptions::default()).unwrap();
    for j in 0..terms.len() {
        assert!((base.beta[j] - fit_s.beta[j]).abs() < 1e-8, "weight invariance");
        for i in 0..terms.len() {
            assert!(rel_err(base.vcov_robust[(i, j)], fit_s.vcov_robust[(i, j)]) < 1e-7);
        }
    }
}

#[test]
fn robust_vcov_requires_convergence() {
    // Separated data: likelihood increases in beta without bound.
    let mut data = random_small_dataset(&mut StdRng::seed_from_u64(61), 8);
    for (i, e) in data.episodes.iter_mut().enumerate() {
        e.start = 0.0;
        e.stop = (i + 1) as f64;
        e.event = i < 4;
        e.covariates[0] = if i < 4 { 1.0 } else { 0.0 };
        e.stratum = 0;
        e.weight = 1.0;
    }
    let fit = fit_cox(&data, &x_term(), &CoxOptions::default()).unwrap();
    assert!(!fit.converged);
    assert!(matches!(
        robust_vcov(&fit, &data),
        Err(hazdid::Error::NotConverged(_))
    ));
}

#[test]
fn baseline_is_nondecreasing_and_zero_before_first_event() {
    let mut rng = StdRng::seed_from_u64(59);
    for _ in 0..10 {
        let data = random_messy_dataset(&mut rng, 30, 1);
        let terms = vec![Term::Covariate("x0".into())];
        let Ok(fit) = fit_cox(&data, &terms, &CoxOptions::default()) else {
            continue;
        };
        for sb in &fit.baseline {
            let mut prev = 0.0;
            for &(age, ch) in &sb.points {
                assert!(ch >= prev, "nondecreasing");
                prev = ch;
                assert!(sb.at(age - 1e-9) <= ch);
            }
            assert_eq!(sb.at(sb.points[0].0 - 1e-9), 0.0);
        }
    }
}
