//! Projects: activities, immediate precedences, early times and makespan.
//!
//! Activities are dense indices `0..n`. Users supply immediate precedences
//! only; the full (transitive) precedence relation is derived on demand.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;

use crate::error::{Error, Result};

pub type ActivityId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    n: usize,
    immediate: Vec<(ActivityId, ActivityId)>,
    labels: Vec<String>,
    preds: Vec<Vec<ActivityId>>,
    order: Vec<ActivityId>,
}

impl Project {
    /// Builds a project with labels `"0".."n-1"`.
    pub fn new(n: usize, immediate: &[(ActivityId, ActivityId)]) -> Result<Self> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::with_labels(labels, immediate)
    }

    pub fn with_labels(
        labels: Vec<String>,
        immediate: &[(ActivityId, ActivityId)],
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::domain("a project needs at least one activity"));
        }
        let mut edges = BTreeSet::new();
        for &(i, j) in immediate {
            if i >= n || j >= n {
                return Err(Error::domain(format!(
                    "precedence ({i},{j}) references an activity outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::Cycle { cycle: vec![i] });
            }
            edges.insert((i, j));
        }
        let immediate: Vec<_> = edges.into_iter().collect();
        let mut preds = vec![Vec::new(); n];
        for &(i, j) in &immediate {
            preds[j].push(i);
        }
        let order = kahn_order(n, &immediate)?;
        Ok(Self {
            n,
            immediate,
            labels,
            preds,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: ActivityId) -> &str {
        &self.labels[i]
    }

    /// Immediate precedences, sorted and deduplicated.
    pub fn immediate_precedences(&self) -> &[(ActivityId, ActivityId)] {
        &self.immediate
    }

    pub fn predecessors(&self, i: ActivityId) -> &[ActivityId] {
        &self.preds[i]
    }

    /// Topological order with ties broken by ascending id.
    pub fn topological_order(&self) -> &[ActivityId] {
        &self.order
    }

    /// The full precedence relation: the transitive closure of the immediate
    /// precedences, as sorted pairs.
    pub fn transitive_closure(&self) -> BTreeSet<(ActivityId, ActivityId)> {
        // ancestors[j] = every activity that must finish before j starts
        let mut ancestors: Vec<BTreeSet<ActivityId>> = vec![BTreeSet::new(); self.n];
        for &j in &self.order {
            let mut acc = BTreeSet::new();
            for &p in &self.preds[j] {
                acc.insert(p);
                acc.extend(ancestors[p].iter().copied());
            }
            ancestors[j] = acc;
        }
        ancestors
            .iter()
            .enumerate()
            .flat_map(|(j, anc)| anc.iter().map(move |&i| (i, j)))
            .collect()
    }

    /// Earliest start of every activity under durations `y`.
    pub fn early_times(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.n);
        let mut early = vec![0.0; self.n];
        for &j in &self.order {
            early[j] = self.preds[j]
                .iter()
                .map(|&p| early[p] + y[p])
                .fold(0.0, f64::max);
        }
        early
    }

    /// Project duration (longest path length) under durations `y`.
    pub fn duration(&self, y: &[f64]) -> f64 {
        let mut finish = vec![0.0; self.n];
        self.duration_with(|i| y[i], &mut finish)
    }

    /// Longest path length with durations supplied by `dur`, reusing `finish`
    /// as scratch space (length `n`).
    #[inline]
    pub fn duration_with(&self, dur: impl Fn(ActivityId) -> f64, finish: &mut [f64]) -> f64 {
        let mut makespan = 0.0f64;
        for &j in &self.order {
            let start = self.preds[j].iter().map(|&p| finish[p]).fold(0.0, f64::max);
            let f = start + dur(j);
            finish[j] = f;
            makespan = makespan.max(f);
        }
        makespan
    }

    /// Relabels activities: activity `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[ActivityId]) -> Result<Self> {
        let mut labels = vec![String::new(); self.n];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = self.labels[i].clone();
        }
        let edges: Vec<_> = self
            .immediate
            .iter()
            .map(|&(i, j)| (perm[i], perm[j]))
            .collect();
        Self::with_labels(labels, &edges)
    }
}

fn kahn_order(n: usize, edges: &[(ActivityId, ActivityId)]) -> Result<Vec<ActivityId>> {
    let mut succs = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for &(i, j) in edges {
        succs[i].push(j);
        indegree[j] += 1;
    }
    let mut ready: BinaryHeap<Reverse<ActivityId>> =
        (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &j in &succs[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.push(Reverse(j));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(Error::Cycle {
        cycle: find_cycle(n, edges, &indegree),
    })
}

/// Every node left with positive indegree after Kahn's pass has a predecessor
/// that is also left over, so walking predecessors must revisit a node.
fn find_cycle(n: usize, edges: &[(ActivityId, ActivityId)], indegree: &[usize]) -> Vec<ActivityId> {
    let mut pred_in_rest = vec![None; n];
    for &(i, j) in edges {
        if indegree[i] > 0 && indegree[j] > 0 && pred_in_rest[j].is_none() {
            pred_in_rest[j] = Some(i);
        }
    }
    let start = (0..n).find(|&i| indegree[i] > 0).expect("cycle remnant");
    let mut seen = vec![usize::MAX; n];
    let mut walk = Vec::new();
    let mut cur = start;
    while seen[cur] == usize::MAX {
        seen[cur] = walk.len();
        walk.push(cur);
        cur = pred_in_rest[cur].expect("remnant node has a remnant predecessor");
    }
    let mut cycle = walk[seen[cur]..].to_vec();
    cycle.reverse();
    // start the reported cycle at its smallest id
    let pos = cycle
        .iter()
        .enumerate()
        .min_by_key(|&(_, &v)| v)
        .map(|(p, _)| p)
        .unwrap_or(0);
    cycle.rotate_left(pos);
    cycle
}

/// A delay cost: non-negative and non-decreasing in every duration.
pub trait CostFunction: fmt::Debug + Send + Sync {
    /// Cost of durations supplied by `dur`; `finish` is scratch of length `n`.
    fn cost_with(
        &self,
        project: &Project,
        dur: &dyn Fn(ActivityId) -> f64,
        finish: &mut [f64],
    ) -> f64;

    fn cost(&self, project: &Project, y: &[f64]) -> f64 {
        let mut finish = vec![0.0; project.len()];
        self.cost_with(project, &|i| y[i], &mut finish)
    }
}

/// `max(duration - delta, 0)`: the project is committed to finish by `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCost {
    delta: f64,
}

impl ThresholdCost {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::domain(format!(
                "threshold must be finite and >= 0, got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn of_duration(&self, duration: f64) -> f64 {
        (duration - self.delta).max(0.0)
    }
}

impl CostFunction for ThresholdCost {
    #[inline]
    fn cost_with(
        &self,
        project: &Project,
        dur: &dyn Fn(ActivityId) -> f64,
        finish: &mut [f64],
    ) -> f64 {
        self.of_duration(project.duration_with(dur, finish))
    }
}

/// Checks that `y` is a valid duration vector for a project of `n` activities.
pub fn check_durations(y: &[f64], n: usize, what: &str) -> Result<()> {
    if y.len() != n {
        return Err(Error::domain(format!(
            "{what} has {} entries, expected {n}",
            y.len()
        )));
    }
    if let Some((i, v)) = y
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
    {
        return Err(Error::domain(format!(
            "{what}[{i}] = {v} is not a finite non-negative duration"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The five-activity network with immediate precedences 1→2, 1→4, 3→4, 2→5.
    fn five() -> Project {
        Project::new(5, &[(0, 1), (0, 3), (2, 3), (1, 4)]).unwrap()
    }

    /// Independent checker: every precedence pair appears in order.
    fn respects(order: &[usize], pairs: &[(usize, usize)]) -> bool {
        let pos: Vec<usize> = {
            let mut p = vec![0; order.len()];
            for (k, &v) in order.iter().enumerate() {
                p[v] = k;
            }
            p
        };
        pairs.iter().all(|&(i, j)| pos[i] < pos[j])
    }

    #[test]
    fn topological_order_ascending_ties() {
        let p = five();
        assert_eq!(p.topological_order(), &[0, 1, 2, 3, 4]);
        let closure: Vec<_> = p.transitive_closure().into_iter().collect();
        assert!(respects(p.topological_order(), &closure));

        let free = Project::new(3, &[]).unwrap();
        assert_eq!(free.topological_order(), &[0, 1, 2]);

        let reversed = Project::new(3, &[(2, 1), (1, 0)]).unwrap();
        assert_eq!(reversed.topological_order(), &[2, 1, 0]);
    }

    #[test]
    fn cycles_are_reported() {
        match Project::new(2, &[(0, 1), (1, 0)]) {
            Err(Error::Cycle { cycle }) => assert_eq!(cycle, vec![0, 1]),
            other => panic!("expected cycle, got {other:?}"),
        }
        match Project::new(4, &[(0, 1), (1, 2), (2, 3), (3, 1)]) {
            Err(Error::Cycle { cycle }) => assert_eq!(cycle, vec![1, 2, 3]),
            other => panic!("expected cycle, got {other:?}"),
        }
        assert!(matches!(
            Project::new(2, &[(1, 1)]),
            Err(Error::Cycle { .. })
        ));
    }

    #[test]
    fn closure_examples() {
        let c: Vec<_> = five().transitive_closure().into_iter().collect();
        assert_eq!(c, vec![(0, 1), (0, 3), (0, 4), (1, 4), (2, 3)]);
        assert!(Project::new(3, &[])
            .unwrap()
            .transitive_closure()
            .is_empty());
        let chain: Vec<_> = Project::new(3, &[(0, 1), (1, 2)])
            .unwrap()
            .transitive_closure()
            .into_iter()
            .collect();
        assert_eq!(chain, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn early_times_and_duration() {
        let p = five();
        let x = [2.5, 1.25, 2.0, 4.5, 3.0];
        assert_eq!(p.early_times(&x), vec![0.0, 2.5, 0.0, 2.5, 3.75]);
        assert_eq!(p.duration(&x), 7.0);
        assert_eq!(p.duration(&[2.0, 1.0, 1.0, 4.0, 2.0]), 6.0);
        assert_eq!(p.early_times(&[0.0; 5]), vec![0.0; 5]);

        let chain = Project::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(chain.early_times(&[1.0, 2.0, 5.0]), vec![0.0, 1.0, 3.0]);
        assert_eq!(Project::new(1, &[]).unwrap().duration(&[4.2]), 4.2);
    }

    #[test]
    fn threshold_cost() {
        let p = five();
        let c = ThresholdCost::new(6.5).unwrap();
        assert_eq!(c.cost(&p, &[2.5, 1.25, 2.0, 4.5, 3.0]), 0.5);
        assert_eq!(c.cost(&p, &[2.0, 1.0, 1.0, 4.0, 2.0]), 0.0);

        let pair = Project::new(2, &[]).unwrap();
        assert_eq!(
            ThresholdCost::new(6.0).unwrap().cost(&pair, &[7.0, 7.0]),
            1.0
        );
        assert!(ThresholdCost::new(-1.0).is_err());
        assert!(ThresholdCost::new(f64::NAN).is_err());
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(Project::new(2, &[(0, 2)]), Err(Error::Domain(_))));
        assert!(Project::new(0, &[]).is_err());
        assert!(check_durations(&[1.0, -0.5], 2, "x").is_err());
        assert!(check_durations(&[1.0], 2, "x").is_err());
        assert!(check_durations(&[0.0, 3.0], 2, "x").is_ok());
    }
}
