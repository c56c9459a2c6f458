mod common;

use delayshare::{CostFunction, Error, Project, RngStream, ThresholdCost};
use proptest::prelude::*;

/// Longest path by enumerating every source-to-sink path.
fn brute_force_makespan(n: usize, edges: &[(usize, usize)], y: &[f64]) -> f64 {
    fn walk(node: usize, acc: f64, edges: &[(usize, usize)], y: &[f64], best: &mut f64) {
        let acc = acc + y[node];
        let mut leaf = true;
        for &(i, j) in edges {
            if i == node {
                leaf = false;
                walk(j, acc, edges, y, best);
            }
        }
        if leaf {
            *best = best.max(acc);
        }
    }
    let mut best = 0.0;
    for s in (0..n).filter(|s| edges.iter().all(|&(_, j)| j != *s)) {
        walk(s, 0.0, edges, y, &mut best);
    }
    best
}

fn dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<f64>, Vec<usize>)> {
    (1usize..=12).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let m = pairs.len();
        (
            Just(n),
            proptest::sample::subsequence(pairs, 0..=m),
            proptest::collection::vec(0.0f64..10.0, n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn makespan_matches_path_enumeration((n, edges, y, perm) in dag()) {
        let relabelled: Vec<_> = edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        let mut ry = vec![0.0; n];
        for i in 0..n {
            ry[perm[i]] = y[i];
        }
        let p = Project::new(n, &relabelled).unwrap();
        let want = brute_force_makespan(n, &relabelled, &ry);
        prop_assert!((p.duration(&ry) - want).abs() <= 1e-9);
    }

    #[test]
    fn relabelling_preserves_makespan((n, edges, y, perm) in dag()) {
        let p = Project::new(n, &edges).unwrap();
        let q = p.permuted(&perm).unwrap();
        let mut qy = vec![0.0; n];
        for i in 0..n {
            qy[perm[i]] = y[i];
        }
        prop_assert_eq!(p.duration(&y), q.duration(&qy));
    }

    #[test]
    fn makespan_is_monotone((n, edges, y, _perm) in dag(), k in 0usize..12, bump in 0.0f64..5.0) {
        let p = Project::new(n, &edges).unwrap();
        let mut z = y.clone();
        z[k % n] += bump;
        prop_assert!(p.duration(&z) >= p.duration(&y));
    }

    #[test]
    fn threshold_cost_is_nonnegative((n, edges, y, _perm) in dag(), delta in 0.0f64..50.0) {
        let p = Project::new(n, &edges).unwrap();
        let c = ThresholdCost::new(delta).unwrap().cost(&p, &y);
        prop_assert!(c >= 0.0);
        prop_assert!((c - (p.duration(&y) - delta).max(0.0)).abs() <= 1e-12);
    }

    #[test]
    fn early_times_respect_precedence((n, edges, y, _perm) in dag()) {
        let p = Project::new(n, &edges).unwrap();
        let start = p.early_times(&y);
        for &(i, j) in &edges {
            prop_assert!(start[j] >= start[i] + y[i] - 1e-12);
        }
    }
}

#[test]
fn cycles_are_reported_from_smallest_id() {
    match Project::new(4, &[(0, 1), (2, 3), (3, 1), (1, 2)]) {
        Err(Error::Cycle { cycle }) => assert_eq!(cycle, vec![1, 2, 3]),
        other => panic!("expected a cycle, got {other:?}"),
    }
}

#[test]
fn closure_contains_implied_pairs() {
    let p = Project::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    let closure = p.transitive_closure();
    assert_eq!(closure.len(), 6);
    assert!(closure.contains(&(0, 3)));
}

#[test]
fn large_random_dag_has_valid_order() {
    let mut rng = RngStream::new(3, 0);
    let p = common::random_project(300, 0.05, &mut rng);
    let mut pos = vec![0; 300];
    for (k, &i) in p.topological_order().iter().enumerate() {
        pos[i] = k;
    }
    for &(i, j) in p.immediate_precedences() {
        assert!(pos[i] < pos[j]);
    }
}
