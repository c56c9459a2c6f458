mod common;

use std::sync::Arc;

use delayshare::game::{oracle, stoch_value_mc, TabularGame, DEFAULT_EXACT_BUDGET};
use delayshare::{
    CharacteristicFunction, Coalition, DeterministicProblem, DurationDistribution as D, Project,
    RngStream, StochasticProblem, ThresholdCost,
};
use proptest::prelude::*;

use common::{discrete_suite, random_discrete, random_problem};

fn example1() -> StochasticProblem {
    StochasticProblem::new(
        Arc::new(Project::new(2, &[]).unwrap()),
        vec![
            D::uniform(0.0, 10.0).unwrap(),
            D::uniform(2.0, 8.0).unwrap(),
        ],
        vec![7.0, 7.0],
        Arc::new(ThresholdCost::new(6.0).unwrap()),
    )
    .unwrap()
}

#[test]
fn example1_mc_values() {
    let sp = example1();
    let samples = sp.sample_matrix(1_000_000, 17);
    let (v1, se1) = stoch_value_mc(&sp, &Coalition::from_members(2, &[0]), &samples);
    let (v2, se2) = stoch_value_mc(&sp, &Coalition::from_members(2, &[1]), &samples);
    assert!((v1 - 13.0 / 12.0).abs() <= 3.0 * se1, "{v1} +- {se1}");
    assert!((v2 - 29.0 / 20.0).abs() <= 3.0 * se2, "{v2} +- {se2}");
    let (vn, sen) = stoch_value_mc(&sp, &Coalition::full(2), &samples);
    assert_eq!((vn, sen), (1.0, 0.0));
}

#[test]
fn mc_converges_to_exact() {
    for (t, sp) in discrete_suite(10, 21).into_iter().enumerate() {
        let n = sp.n();
        let samples = sp.sample_matrix(200_000, t as u64);
        for bits in 1u64..1 << n {
            let s = Coalition::from_bits(n, bits);
            let exact = sp.stoch_value_exact(&s, DEFAULT_EXACT_BUDGET).unwrap();
            let (est, se) = stoch_value_mc(&sp, &s, &samples);
            assert!(
                (est - exact).abs() <= 4.0 * se + 1e-12,
                "instance {t} {bits:b}: {est} vs {exact} (se {se})"
            );
        }
    }
}

#[test]
fn empty_and_grand_coalitions() {
    for sp in discrete_suite(10, 22) {
        let n = sp.n();
        let realized = sp.cost_fn().cost(sp.project(), sp.actual());
        assert_eq!(
            sp.stoch_value_exact(&Coalition::empty(n), DEFAULT_EXACT_BUDGET)
                .unwrap(),
            0.0
        );
        let full = sp
            .stoch_value_exact(&Coalition::full(n), DEFAULT_EXACT_BUDGET)
            .unwrap();
        assert!((full - realized).abs() < 1e-12);
    }
}

#[test]
fn continuous_exact_is_refused() {
    let sp = example1();
    assert!(sp
        .stoch_value_exact(&Coalition::from_members(2, &[0]), DEFAULT_EXACT_BUDGET)
        .is_err());
    assert!(sp.exact_feasible(DEFAULT_EXACT_BUDGET).is_err());
}

#[test]
fn budget_is_enforced() {
    let two = D::discrete(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
    let sp = StochasticProblem::new(
        Arc::new(Project::new(3, &[(0, 1)]).unwrap()),
        vec![two.clone(), two.clone(), two],
        vec![2.0, 2.0, 2.0],
        Arc::new(ThresholdCost::new(2.5).unwrap()),
    )
    .unwrap();
    let s = Coalition::from_members(3, &[0]);
    assert!(matches!(
        sp.stoch_value_exact(&s, 3),
        Err(delayshare::Error::Budget(_))
    ));
    assert!(sp.stoch_value_exact(&s, 4).is_ok());
}

#[test]
fn deterministic_game_is_monotone() {
    let mut rng = RngStream::new(31, 0);
    for _ in 0..30 {
        let n = 2 + rng.below(7);
        let project = Arc::new(common::random_project(n, 0.4, &mut rng));
        let planned: Vec<f64> = (0..n).map(|_| 1.0 + 2.0 * rng.unit()).collect();
        let actual: Vec<f64> = planned.iter().map(|p| p + 2.0 * rng.unit()).collect();
        let delta = project.duration(&planned);
        let dp = DeterministicProblem::new(
            project,
            planned,
            actual,
            Arc::new(ThresholdCost::new(delta).unwrap()),
        )
        .unwrap();
        for bits in 0u64..1 << n {
            let s = Coalition::from_bits(n, bits);
            for i in 0..n {
                if !s.contains(i) {
                    let mut t = s.clone();
                    t.insert(i);
                    assert!(dp.det_value(&t) >= dp.det_value(&s));
                }
            }
        }
    }
}

#[test]
fn deterministic_problem_rejects_early_actuals() {
    let project = Arc::new(Project::new(1, &[]).unwrap());
    let cost = Arc::new(ThresholdCost::new(1.0).unwrap());
    assert!(DeterministicProblem::new(project, vec![1.0], vec![0.5], cost).is_err());
}

#[test]
fn tabular_game_checks_empty_value() {
    assert!(TabularGame::new(2, vec![1.0, 0.0, 0.0, 0.0]).is_err());
    let g = TabularGame::new(2, vec![0.0, 1.0, 2.0, 4.0]).unwrap();
    assert_eq!(g.value(&Coalition::full(2)), 4.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn restriction_matches_nested_expectation(seed in 0u64..10_000) {
        let mut rng = RngStream::new(seed, 0);
        let n = 2 + rng.below(4);
        let sp = random_problem(n, |r| random_discrete(3, r), &mut rng);
        let k = rng.below(n);
        let reduced = sp.eliminate(k).unwrap();
        prop_assert_eq!(reduced.players().len(), n - 1);
        for bits in 0u64..1 << (n - 1) {
            let s = Coalition::from_bits(n - 1, bits);
            let members: Vec<usize> = s.members().map(|p| reduced.players()[p]).collect();
            let a = reduced.stoch_value_exact(&s, DEFAULT_EXACT_BUDGET).unwrap();
            let b = oracle::reduced_value(&sp, k, &members, DEFAULT_EXACT_BUDGET).unwrap();
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn double_elimination_is_order_free(seed in 0u64..10_000) {
        let mut rng = RngStream::new(seed, 1);
        let n = 3 + rng.below(3);
        let sp = random_problem(n, |r| random_discrete(2, r), &mut rng);
        let a = sp.eliminate(0).unwrap().eliminate(1).unwrap();
        let b = sp.eliminate(1).unwrap().eliminate(0).unwrap();
        prop_assert_eq!(a.players(), b.players());
        for bits in 0u64..1 << (n - 2) {
            let s = Coalition::from_bits(n - 2, bits);
            let va = a.stoch_value_exact(&s, DEFAULT_EXACT_BUDGET).unwrap();
            let vb = b.stoch_value_exact(&s, DEFAULT_EXACT_BUDGET).unwrap();
            prop_assert!((va - vb).abs() <= 1e-12);
        }
    }
}
