#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use delayshare::{DurationDistribution, Project, RngStream, StochasticProblem, ThresholdCost};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Random DAG on `n` nodes: edge `i -> j` for `i < j` with probability `p`,
/// then a random relabelling so the ids are not already topological.
pub fn random_project(n: usize, p: f64, rng: &mut RngStream) -> Project {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.below(i + 1));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.unit() < p {
                edges.push((perm[i], perm[j]));
            }
        }
    }
    Project::new(n, &edges).expect("forward edges are acyclic")
}

fn quarter(x: f64) -> f64 {
    (x * 4.0).round() / 4.0
}

pub fn random_discrete(max_support: usize, rng: &mut RngStream) -> DurationDistribution {
    let k = 1 + rng.below(max_support);
    let mut values: Vec<f64> = Vec::with_capacity(k);
    while values.len() < k {
        let v = quarter(0.5 + 4.0 * rng.unit());
        if !values.contains(&v) {
            values.push(v);
        }
    }
    let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.unit()).collect();
    let total: f64 = raw.iter().sum();
    let probs = raw.iter().map(|w| w / total).collect();
    DurationDistribution::discrete(values, probs).unwrap()
}

pub fn random_mixed(rng: &mut RngStream) -> DurationDistribution {
    match rng.below(5) {
        0 => {
            let a = 3.0 * rng.unit();
            DurationDistribution::uniform(a, a + 0.5 + 3.0 * rng.unit()).unwrap()
        }
        1 => {
            let lo = 3.0 * rng.unit();
            let hi = lo + 0.5 + 3.0 * rng.unit();
            let mode = lo + (hi - lo) * rng.unit();
            DurationDistribution::triangular(lo, mode, hi).unwrap()
        }
        2 => DurationDistribution::exponential(0.3 + rng.unit()).unwrap(),
        3 => DurationDistribution::point(quarter(4.0 * rng.unit())).unwrap(),
        _ => random_discrete(4, rng),
    }
}

/// Problem with actual durations above the means so the cost is usually
/// positive, and a threshold a little under the expected makespan.
pub fn random_problem(
    n: usize,
    dist: impl Fn(&mut RngStream) -> DurationDistribution,
    rng: &mut RngStream,
) -> StochasticProblem {
    let project = random_project(n, 0.35, rng);
    let dists: Vec<_> = (0..n).map(|_| dist(rng)).collect();
    let means: Vec<f64> = dists.iter().map(|d| d.mean()).collect();
    let actual: Vec<f64> = means
        .iter()
        .map(|m| quarter(m * (0.7 + 0.9 * rng.unit())))
        .collect();
    let delta = quarter(project.duration(&means) * (0.8 + 0.3 * rng.unit()));
    StochasticProblem::new(
        Arc::new(project),
        dists,
        actual,
        Arc::new(ThresholdCost::new(delta).unwrap()),
    )
    .unwrap()
}

pub fn discrete_suite(count: usize, seed: u64) -> Vec<StochasticProblem> {
    let mut rng = RngStream::new(seed, 0);
    (0..count)
        .map(|_| {
            let n = 3 + rng.below(3);
            random_problem(n, |r| random_discrete(3, r), &mut rng)
        })
        .collect()
}
