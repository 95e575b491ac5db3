//! The estimation stack instantiates at f32 as well as f64; f64 is the
//! production path, f32 trades precision for size.

use hazdid::cox::{fit_cox, CoxOptions, Term};
use hazdid::episode::build_episodes;
use hazdid::simulation::{analytic_ratt, bound_check, DgpConfig, TypeEffects};
use hazdid::spell::{PeriodWindows, Spell, SpellData};

#[test]
fn f32_pipeline_smoke() {
    let windows = PeriodWindows::default();
    let mut spells: Vec<Spell<f32>> = Vec::new();
    for i in 0..80u32 {
        // Paired birth years within each five-year stratum so the period
        // indicators vary inside risk sets.
        let birth_year = [1951, 1954, 1961, 1964][(i % 4) as usize];
        spells.push(Spell {
            subject_id: format!("s{i}"),
            birth_year,
            entry_age: 18.0,
            exit_age: 30.0 + (i % 25) as f32,
            event: i % 3 == 0,
            treated: i % 2 == 0,
            municipality_id: format!("m{}", i % 4),
            covariates: vec![],
            weight: 1.0,
            cluster_id: format!("s{i}"),
        });
    }
    let data = SpellData::new(vec![], spells);
    let episodes = build_episodes(&data, &windows, 5).unwrap();
    let terms = vec![Term::Pilot, Term::Treat, Term::TreatPilot];
    let fit = fit_cox(&episodes, &terms, &CoxOptions::<f32>::default()).unwrap();
    assert_eq!(fit.beta.len(), 3);
    assert!(fit.loglik.is_finite());

    let mut cfg = DgpConfig::<f32>::example(9);
    cfg.n_subjects = 500;
    cfg.effects = TypeEffects::proportional(0.01, 0.01, 0.8);
    let spells = hazdid::simulation::simulate_population(&cfg).unwrap();
    assert!(!spells.spells.is_empty());
    let ratt = analytic_ratt(&cfg).unwrap();
    assert!((ratt - 0.8).abs() < 1e-6);
    let report = bound_check(&cfg.effects, cfg.p_eligible);
    assert!(report.ineq8_holds);
}
