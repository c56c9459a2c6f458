//! TU-games induced by scheduling problems with delays.
//!
//! A deterministic problem `(N, prec, x0, x, C)` induces
//! `v(S) = C(x_S, x0_{N\S})`; a stochastic problem `(N, prec, X0, x, C)`
//! induces `v(S) = E[C(x_S, X0_{N\S})]`. In both games `v(empty) = 0`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::distributions::{DurationDistribution, RngStream};
use crate::error::{Error, Result};
use crate::project::{check_durations, ActivityId, CostFunction, Project};
use crate::stats::RunningStats;

/// Default cap on the number of joint outcomes enumerated by the exact path.
pub const DEFAULT_EXACT_BUDGET: u64 = 10_000_000;

/// Monte Carlo coalition values are memoised up to this many players.
pub const MC_CACHE_MAX_PLAYERS: usize = 20;

/// A set of players `0..n`, stored as a bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    n: usize,
    words: Vec<u64>,
}

impl Coalition {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            words: vec![0; n.div_ceil(64).max(1)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut c = Self::empty(n);
        for i in 0..n {
            c.insert(i);
        }
        c
    }

    /// Coalition from a bitmask; bit `i` set means player `i` is a member.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        debug_assert!(n >= 64 || bits >> n == 0);
        let mut c = Self::empty(n);
        c.words[0] = bits;
        c
    }

    pub fn from_members(n: usize, members: &[usize]) -> Self {
        let mut c = Self::empty(n);
        for &i in members {
            c.insert(i);
        }
        c
    }

    pub fn players(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.n, "player {i} outside 0..{}", self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.n
    }

    /// The bitmask, when the player count fits in 64 bits.
    pub fn bits(&self) -> Option<u64> {
        (self.n <= 64).then(|| self.words[0])
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.contains(i))
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

/// Whether coalition values are exact or Monte Carlo estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameKind {
    Exact,
    Estimated { rows: usize },
}

/// Coalition-value accessor of a TU-game on players `0..players()`.
pub trait CharacteristicFunction: Sync {
    fn players(&self) -> usize;

    fn value(&self, s: &Coalition) -> f64;

    fn std_error(&self, _s: &Coalition) -> Option<f64> {
        None
    }

    fn kind(&self) -> GameKind {
        GameKind::Exact
    }
}

/// A game given by its full table of values, indexed by bitmask.
#[derive(Debug, Clone)]
pub struct TabularGame {
    n: usize,
    values: Vec<f64>,
}

impl TabularGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > 30 || values.len() != 1usize << n {
            return Err(Error::domain(format!(
                "a tabular game on {n} players needs 2^{n} values"
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::domain("the empty coalition must have value 0"));
        }
        Ok(Self { n, values })
    }
}

impl CharacteristicFunction for TabularGame {
    fn players(&self) -> usize {
        self.n
    }

    fn value(&self, s: &Coalition) -> f64 {
        self.values[s.bits().expect("tabular games have at most 30 players") as usize]
    }
}

/// `(N, prec, x0, x, C)` with known planned durations `x0`.
#[derive(Debug, Clone)]
pub struct DeterministicProblem {
    project: Arc<Project>,
    planned: Vec<f64>,
    actual: Vec<f64>,
    cost: Arc<dyn CostFunction>,
    adjusted: bool,
}

impl DeterministicProblem {
    /// Requires `actual >= planned` and zero cost at the planned durations.
    pub fn new(
        project: Arc<Project>,
        planned: Vec<f64>,
        actual: Vec<f64>,
        cost: Arc<dyn CostFunction>,
    ) -> Result<Self> {
        let p = Self::relaxed(project, planned, actual, cost)?;
        if let Some(i) = (0..p.project.len()).find(|&i| p.actual[i] < p.planned[i]) {
            return Err(Error::domain(format!(
                "activity {} finished early ({} < planned {})",
                p.project.label(i),
                p.actual[i],
                p.planned[i]
            )));
        }
        let planned_cost = p.cost.cost(&p.project, &p.planned);
        if planned_cost != 0.0 {
            return Err(Error::domain(format!(
                "planned durations already incur cost {planned_cost}"
            )));
        }
        Ok(p)
    }

    /// Skips the `actual >= planned` and zero-planned-cost checks.
    pub fn relaxed(
        project: Arc<Project>,
        planned: Vec<f64>,
        actual: Vec<f64>,
        cost: Arc<dyn CostFunction>,
    ) -> Result<Self> {
        check_durations(&planned, project.len(), "planned")?;
        check_durations(&actual, project.len(), "actual")?;
        Ok(Self {
            project,
            planned,
            actual,
            cost,
            adjusted: false,
        })
    }

    /// Uses `min(reference_i, actual_i)` as the plan, so no activity is early.
    pub fn clamped(
        project: Arc<Project>,
        reference: &[f64],
        actual: Vec<f64>,
        cost: Arc<dyn CostFunction>,
    ) -> Result<Self> {
        check_durations(reference, project.len(), "reference plan")?;
        let planned: Vec<f64> = reference
            .iter()
            .zip(&actual)
            .map(|(&r, &a)| r.min(a))
            .collect();
        let adjusted = planned.iter().zip(reference).any(|(p, r)| p != r);
        let mut p = Self::relaxed(project, planned, actual, cost)?;
        p.adjusted = adjusted;
        Ok(p)
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn planned(&self) -> &[f64] {
        &self.planned
    }

    pub fn actual(&self) -> &[f64] {
        &self.actual
    }

    pub fn cost_fn(&self) -> &dyn CostFunction {
        self.cost.as_ref()
    }

    /// True when the plan was clamped down to actual durations.
    pub fn plan_adjusted(&self) -> bool {
        self.adjusted
    }

    pub fn realized_cost(&self) -> f64 {
        self.cost.cost(&self.project, &self.actual)
    }

    /// `C(x_S, x0_{N\S})`, with `v(empty) = 0`.
    pub fn det_value(&self, s: &Coalition) -> f64 {
        if s.is_empty() {
            return 0.0;
        }
        let mut finish = vec![0.0; self.project.len()];
        self.cost.cost_with(
            &self.project,
            &|i| {
                if s.contains(i) {
                    self.actual[i]
                } else {
                    self.planned[i]
                }
            },
            &mut finish,
        )
    }

    pub fn game(&self) -> DeterministicGame<'_> {
        DeterministicGame { problem: self }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DeterministicGame<'a> {
    problem: &'a DeterministicProblem,
}

impl CharacteristicFunction for DeterministicGame<'_> {
    fn players(&self) -> usize {
        self.problem.project.len()
    }

    fn value(&self, s: &Coalition) -> f64 {
        self.problem.det_value(s)
    }
}

/// `(N, prec, X0, x, C)` with random planned durations.
///
/// A problem obtained by [`eliminate`](Self::eliminate) keeps the removed
/// activities in the underlying project as permanently random components;
/// only the remaining activities are players.
#[derive(Debug, Clone)]
pub struct StochasticProblem {
    project: Arc<Project>,
    dists: Vec<DurationDistribution>,
    actual: Vec<f64>,
    cost: Arc<dyn CostFunction>,
    players: Vec<ActivityId>,
}

impl StochasticProblem {
    pub fn new(
        project: Arc<Project>,
        dists: Vec<DurationDistribution>,
        actual: Vec<f64>,
        cost: Arc<dyn CostFunction>,
    ) -> Result<Self> {
        let n = project.len();
        if dists.len() != n {
            return Err(Error::domain(format!(
                "{} distributions for {n} activities",
                dists.len()
            )));
        }
        for d in &dists {
            d.validate()?;
        }
        check_durations(&actual, n, "actual")?;
        Ok(Self {
            project,
            dists,
            actual,
            cost,
            players: (0..n).collect(),
        })
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn project_arc(&self) -> Arc<Project> {
        Arc::clone(&self.project)
    }

    pub fn distributions(&self) -> &[DurationDistribution] {
        &self.dists
    }

    pub fn actual(&self) -> &[f64] {
        &self.actual
    }

    pub fn cost_fn(&self) -> &dyn CostFunction {
        self.cost.as_ref()
    }

    pub fn cost_arc(&self) -> Arc<dyn CostFunction> {
        Arc::clone(&self.cost)
    }

    /// Underlying activity of each player, ascending.
    pub fn players(&self) -> &[ActivityId] {
        &self.players
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn is_reduced(&self) -> bool {
        self.players.len() < self.project.len()
    }

    pub fn means(&self) -> Vec<f64> {
        self.dists.iter().map(DurationDistribution::mean).collect()
    }

    /// Same problem with new actual durations.
    pub fn with_actual(&self, actual: Vec<f64>) -> Result<Self> {
        check_durations(&actual, self.project.len(), "actual")?;
        Ok(Self {
            actual,
            ..self.clone()
        })
    }

    /// The problem with activity `activity` removed: its duration is
    /// integrated out of the cost, and the precedence among the rest is the
    /// restriction of the full (transitive) relation.
    pub fn eliminate(&self, activity: ActivityId) -> Result<Self> {
        if self.players.len() < 2 {
            return Err(Error::domain(
                "cannot eliminate from a single-activity problem",
            ));
        }
        let pos = self
            .players
            .iter()
            .position(|&a| a == activity)
            .ok_or_else(|| Error::domain(format!("activity {activity} is not a player")))?;
        let mut reduced = self.clone();
        reduced.players.remove(pos);
        Ok(reduced)
    }

    /// Precedence pairs among the players, restricted from the full relation.
    pub fn precedence(&self) -> Vec<(ActivityId, ActivityId)> {
        let alive = self.membership(&Coalition::full(self.n()));
        self.project
            .transitive_closure()
            .into_iter()
            .filter(|&(i, j)| alive[i] && alive[j])
            .collect()
    }

    /// Underlying-activity membership vector of a player coalition.
    pub fn membership(&self, s: &Coalition) -> Vec<bool> {
        let mut member = vec![false; self.project.len()];
        for p in s.members() {
            member[self.players[p]] = true;
        }
        member
    }

    /// `C(x_S, y_{N\S})` for a membership vector and one row of durations.
    #[inline]
    pub fn mixed_cost(&self, member: &[bool], row: &[f64], finish: &mut [f64]) -> f64 {
        self.cost.cost_with(
            &self.project,
            &|i| if member[i] { self.actual[i] } else { row[i] },
            finish,
        )
    }

    /// Player coalition containing every player.
    pub fn grand_coalition(&self) -> Coalition {
        Coalition::full(self.n())
    }

    /// Draws `rows` independent realisations of the planned durations.
    pub fn sample_matrix(&self, rows: usize, seed: u64) -> SampleMatrix {
        SampleMatrix::draw(&self.dists, rows, seed)
    }

    /// Exact `v(S)` for player coalition `s` by enumerating discrete supports.
    pub fn stoch_value_exact(&self, s: &Coalition, budget: u64) -> Result<f64> {
        if s.is_empty() {
            return Ok(0.0);
        }
        let member = self.membership(s);
        let random: Vec<ActivityId> = (0..self.project.len()).filter(|&i| !member[i]).collect();
        let supports = self.supports_of(&random, budget)?;
        let mut finish = vec![0.0; self.project.len()];
        let mut row = self.actual.clone();
        let mut total = 0.0;
        for_each_outcome(&supports, |choice, weight| {
            for (k, &i) in random.iter().enumerate() {
                row[i] = supports[k].0[choice[k]];
            }
            total += weight * self.cost.cost_with(&self.project, &|i| row[i], &mut finish);
        });
        Ok(total)
    }

    pub(crate) fn supports_of(
        &self,
        activities: &[ActivityId],
        budget: u64,
    ) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let mut outcomes: u64 = 1;
        let mut supports = Vec::with_capacity(activities.len());
        for &i in activities {
            let support = self.dists[i].support().ok_or_else(|| {
                Error::domain(format!(
                    "activity {} has a continuous distribution; exact evaluation needs discrete supports",
                    self.project.label(i)
                ))
            })?;
            outcomes = outcomes.saturating_mul(support.0.len() as u64);
            if outcomes > budget {
                return Err(Error::budget(format!(
                    "exact enumeration needs more than {budget} joint outcomes"
                )));
            }
            supports.push(support);
        }
        Ok(supports)
    }

    /// Whether every coalition value can be enumerated within `budget`.
    pub fn exact_feasible(&self, budget: u64) -> Result<()> {
        if self.n() == 0 {
            return Ok(());
        }
        // the costliest non-empty coalition is the smallest-support single player
        let (smallest, _) = self
            .players
            .iter()
            .map(|&p| (p, self.dists[p].support_size().unwrap_or(usize::MAX)))
            .min_by_key(|&(_, k)| k)
            .expect("at least one player");
        let random: Vec<_> = (0..self.project.len()).filter(|&i| i != smallest).collect();
        self.supports_of(&random, budget).map(|_| ())
    }

    pub fn exact_game(&self, budget: u64) -> Result<ExactStochasticGame<'_>> {
        self.exact_feasible(budget)?;
        Ok(ExactStochasticGame {
            problem: self,
            budget,
        })
    }

    pub fn mc_game<'a>(&'a self, samples: &'a SampleMatrix) -> MonteCarloGame<'a> {
        MonteCarloGame::new(self, samples)
    }
}

/// Calls `f(choice, weight)` for every point of a product of finite supports.
pub(crate) fn for_each_outcome(
    supports: &[(Vec<f64>, Vec<f64>)],
    mut f: impl FnMut(&[usize], f64),
) {
    let mut choice = vec![0usize; supports.len()];
    loop {
        let weight: f64 = choice
            .iter()
            .zip(supports)
            .map(|(&c, (_, probs))| probs[c])
            .product();
        f(&choice, weight);
        let mut k = 0;
        loop {
            if k == choice.len() {
                return;
            }
            choice[k] += 1;
            if choice[k] < supports[k].0.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Rows of sampled planned durations shared by every coalition evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    seed: u64,
}

impl SampleMatrix {
    /// Row `j` is drawn from stream `(seed, j)`, columns in activity order.
    pub fn draw(dists: &[DurationDistribution], rows: usize, seed: u64) -> Self {
        let cols = dists.len();
        let mut data = vec![0.0; rows * cols];
        data.par_chunks_mut(cols.max(1))
            .enumerate()
            .for_each(|(j, row)| {
                let mut rng = RngStream::new(seed, j as u64);
                for (cell, d) in row.iter_mut().zip(dists) {
                    *cell = d.sample(&mut rng);
                }
            });
        Self {
            rows,
            cols,
            data,
            seed,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }
}

/// Monte Carlo estimate of `v(S)` and its standard error over the rows of
/// `samples`. The grand coalition of an unreduced problem is exact.
pub fn stoch_value_mc(sp: &StochasticProblem, s: &Coalition, samples: &SampleMatrix) -> (f64, f64) {
    if s.is_empty() {
        return (0.0, 0.0);
    }
    let member = sp.membership(s);
    if member.iter().all(|&m| m) {
        return (sp.cost.cost(&sp.project, &sp.actual), 0.0);
    }
    let mut finish = vec![0.0; sp.project.len()];
    let stats: RunningStats = samples
        .iter_rows()
        .map(|row| sp.mixed_cost(&member, row, &mut finish))
        .collect();
    (stats.mean(), stats.std_error())
}

/// `v^SP` estimated on a fixed sample matrix (common random numbers).
pub struct MonteCarloGame<'a> {
    problem: &'a StochasticProblem,
    samples: &'a SampleMatrix,
    cache: Option<Vec<OnceLock<(f64, f64)>>>,
}

impl<'a> MonteCarloGame<'a> {
    pub fn new(problem: &'a StochasticProblem, samples: &'a SampleMatrix) -> Self {
        let cache = (problem.n() <= MC_CACHE_MAX_PLAYERS).then(|| {
            (0..1usize << problem.n())
                .map(|_| OnceLock::new())
                .collect()
        });
        Self {
            problem,
            samples,
            cache,
        }
    }

    pub fn estimate(&self, s: &Coalition) -> (f64, f64) {
        match (&self.cache, s.bits()) {
            (Some(cache), Some(bits)) => {
                *cache[bits as usize].get_or_init(|| stoch_value_mc(self.problem, s, self.samples))
            }
            _ => stoch_value_mc(self.problem, s, self.samples),
        }
    }
}

impl CharacteristicFunction for MonteCarloGame<'_> {
    fn players(&self) -> usize {
        self.problem.n()
    }

    fn value(&self, s: &Coalition) -> f64 {
        self.estimate(s).0
    }

    fn std_error(&self, s: &Coalition) -> Option<f64> {
        Some(self.estimate(s).1)
    }

    fn kind(&self) -> GameKind {
        GameKind::Estimated {
            rows: self.samples.rows(),
        }
    }
}

/// `v^SP` computed exactly over finite supports.
pub struct ExactStochasticGame<'a> {
    problem: &'a StochasticProblem,
    budget: u64,
}

impl CharacteristicFunction for ExactStochasticGame<'_> {
    fn players(&self) -> usize {
        self.problem.n()
    }

    fn value(&self, s: &Coalition) -> f64 {
        self.problem
            .stoch_value_exact(s, self.budget)
            .expect("feasibility checked at construction")
    }
}

/// Exact evaluation of the eliminated problem's cost by nested expectation,
/// kept apart from the restriction shortcut used in production so the two can
/// be compared.
pub mod oracle {
    use super::*;

    /// `C_{-k}(y) = E[C(y, X0_k)]`; `y` gives durations of every activity but `k`.
    pub fn reduced_cost(sp: &StochasticProblem, k: ActivityId, y: &[f64]) -> Result<f64> {
        let (values, probs) = sp.dists[k]
            .support()
            .ok_or_else(|| Error::domain("nested oracle needs a discrete eliminated activity"))?;
        let mut full = y.to_vec();
        let mut acc = 0.0;
        for (v, p) in values.iter().zip(&probs) {
            full[k] = *v;
            acc += p * sp.cost.cost(&sp.project, &full);
        }
        Ok(acc)
    }

    /// `v^{SP_{-k}}(S)` straight from the definition: the outer expectation runs
    /// over activities outside `S` and `k`, the inner one is `C_{-k}`.
    /// `s` lists underlying activity ids and must not contain `k`.
    pub fn reduced_value(
        sp: &StochasticProblem,
        k: ActivityId,
        s: &[ActivityId],
        budget: u64,
    ) -> Result<f64> {
        if s.contains(&k) {
            return Err(Error::domain("coalition contains the eliminated activity"));
        }
        if s.is_empty() {
            return Ok(0.0);
        }
        let n = sp.project.len();
        let outer: Vec<ActivityId> = (0..n).filter(|i| *i != k && !s.contains(i)).collect();
        let supports = sp.supports_of(&outer, budget)?;
        let mut y = sp.actual.clone();
        let mut total = 0.0;
        let mut err = None;
        for_each_outcome(&supports, |choice, weight| {
            for (pos, &i) in outer.iter().enumerate() {
                y[i] = supports[pos].0[choice[pos]];
            }
            match reduced_cost(sp, k, &y) {
                Ok(c) => total += weight * c,
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }
}
