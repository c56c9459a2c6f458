mod common;

use std::sync::Arc;

use delayshare::allocation::SamplingPlan;
use delayshare::experiments::{
    conditional_study, export_density, kde, PlanAdjustment, Rule, StudyOptions, KDE_GRID_POINTS,
};
use delayshare::file::ProjectFile;
use delayshare::{DurationDistribution as D, Error, Project, StochasticProblem, ThresholdCost};

fn example2() -> StochasticProblem {
    ProjectFile::load(&common::fixture("example2.json"), None)
        .unwrap()
        .stochastic_problem()
        .unwrap()
}

fn study(runs: usize, seed: u64, workers: usize) -> delayshare::experiments::StudyOutcome {
    let plan = SamplingPlan::new(200, 200, seed).with_workers(workers);
    conditional_study(&example2(), &StudyOptions::new(runs, plan)).unwrap()
}

#[test]
fn every_run_is_delayed_and_efficient() {
    let sp = example2();
    let out = study(60, 3, 0);
    assert_eq!(out.runs.len(), 60);
    for run in &out.runs {
        let c = sp.cost_fn().cost(sp.project(), &run.actual);
        assert!(run.cost > 0.0);
        assert_eq!(run.cost, c);
        assert!((run.det.iter().sum::<f64>() - c).abs() <= 1e-9);
        assert!((run.stoch.iter().sum::<f64>() - c).abs() <= 1e-9);
        assert!(run.attempts >= 1);
    }
    let total: u64 = out.runs.iter().map(|r| r.attempts - 1).sum();
    assert_eq!(total, out.summary.rejection_count);
    let mean_cost = out.runs.iter().map(|r| r.cost).sum::<f64>() / 60.0;
    assert!((mean_cost - out.summary.mean_cost).abs() < 1e-12);
    assert!((out.summary.mean_alloc.iter().sum::<f64>() - mean_cost).abs() < 1e-9);
}

#[test]
fn sign_table_rows_sum_to_100() {
    let out = study(50, 4, 0);
    assert_eq!(out.signs.rows.len(), 10);
    for row in &out.signs.rows {
        assert_eq!(row.nonneg_pct + row.neg_pct, 100.0);
    }
    // a deterministic rule on a monotone game never charges negative amounts
    for a in 0..5 {
        assert_eq!(out.signs.neg_pct(Rule::Sh, a), Some(0.0));
    }
}

#[test]
fn studies_are_reproducible() {
    let a = study(40, 5, 1);
    let b = study(40, 5, 3);
    assert_eq!(a.runs, b.runs);
    assert_eq!(a.summary, b.summary);
    let c = study(40, 6, 1);
    assert_ne!(a.runs, c.runs);
}

#[test]
fn single_run_study() {
    let out = study(1, 7, 0);
    assert_eq!(out.summary.runs, 1);
    assert!((out.summary.mean_alloc.iter().sum::<f64>() - out.summary.mean_cost).abs() <= 1e-9);
}

#[test]
fn raw_plan_can_charge_negative_amounts() {
    let plan = SamplingPlan::new(200, 200, 8);
    let mut opts = StudyOptions::new(300, plan);
    opts.adjustment = PlanAdjustment::Raw;
    let out = conditional_study(&example2(), &opts).unwrap();
    assert_eq!(out.summary.adjustment, PlanAdjustment::Raw);
    let negative: f64 = (0..5).filter_map(|a| out.signs.neg_pct(Rule::Sh, a)).sum();
    assert!(negative > 0.0);
    for run in &out.runs {
        assert!((run.det.iter().sum::<f64>() - run.cost).abs() <= 1e-9);
    }
}

#[test]
fn impossible_delay_is_a_budget_error() {
    let sp = StochasticProblem::new(
        Arc::new(Project::new(2, &[(0, 1)]).unwrap()),
        vec![
            D::uniform(1.0, 2.0).unwrap(),
            D::triangular(0.0, 1.0, 3.0).unwrap(),
        ],
        vec![2.0, 3.0],
        Arc::new(ThresholdCost::new(100.0).unwrap()),
    )
    .unwrap();
    let mut opts = StudyOptions::new(3, SamplingPlan::new(10, 10, 1));
    opts.max_attempts = 10_000;
    match conditional_study(&sp, &opts) {
        Err(Error::Budget(msg)) => assert!(msg.contains("10000"), "{msg}"),
        other => panic!("expected a budget error, got {other:?}"),
    }
}

#[test]
fn kde_integrates_to_one_and_keeps_the_mean() {
    let out = study(200, 9, 0);
    for d in &out.densities {
        let k = kde(&d.values, KDE_GRID_POINTS).unwrap();
        assert!(
            (k.integral() - 1.0).abs() < 1e-3,
            "{} {}",
            d.rule.name(),
            d.label
        );
        let mean = d.values.iter().sum::<f64>() / d.values.len() as f64;
        assert!((k.mean() - mean).abs() < 1e-3 * (1.0 + mean.abs()));
    }
}

#[test]
fn kde_bandwidth_follows_silverman() {
    let values: Vec<f64> = (0..100)
        .map(|i| (i as f64 * 0.37).sin() * 3.0 + i as f64 * 0.01)
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = values.clone();
    s.sort_by(f64::total_cmp);
    // linear interpolation between order statistics
    let q = |p: f64| {
        let h = p * (n - 1.0);
        let l = h.floor() as usize;
        s[l] + (h - l as f64) * (s[(l + 1).min(s.len() - 1)] - s[l])
    };
    let want = 0.9 * sd.min((q(0.75) - q(0.25)) / 1.34) * n.powf(-0.2);
    let got = kde(&values, 64).unwrap().bandwidth;
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn density_export_has_fixed_columns() {
    let out = study(20, 10, 0);
    let dir = tempfile::tempdir().unwrap();
    let dens = dir.path().join("density.csv");
    let raw = dir.path().join("samples.csv");
    export_density(&out.densities, &dens, &raw).unwrap();
    let text = std::fs::read_to_string(&dens).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rule,activity,grid_point,density"));
    assert_eq!(lines.count(), out.densities.len() * KDE_GRID_POINTS);
    let text = std::fs::read_to_string(&raw).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rule,run,activity,payment"));
    assert_eq!(lines.count(), 2 * 5 * 20);
}
