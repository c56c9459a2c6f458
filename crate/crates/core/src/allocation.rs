//! Shapley allocations of delay costs: exact enumeration for small games,
//! permutation sampling otherwise.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{derive_seed, RngStream};
use crate::error::{Error, Result};
use crate::game::{
    CharacteristicFunction, Coalition, DeterministicProblem, StochasticProblem,
    DEFAULT_EXACT_BUDGET,
};
use crate::project::ActivityId;
use crate::stats::{z_critical, RunningStats};

pub const DEFAULT_EXACT_CUTOFF: usize = 20;

/// Permutations per deterministic work unit; fixed so that results do not
/// depend on the number of workers.
const PERMUTATION_CHUNK: usize = 64;

const MATRIX_DOMAIN: u64 = 0;
const PERMUTATION_DOMAIN: u64 = 1;

/// How to evaluate the Shapley value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exact when the game is small enough (and, for stochastic problems,
    /// every distribution is discrete within budget); sampled otherwise.
    #[default]
    Auto,
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodUsed {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    /// Number of random permutations.
    pub m: usize,
    /// Monte Carlo rows used to estimate the stochastic game.
    pub m1: usize,
    pub seed: u64,
    /// Significance level for reported relative errors.
    pub alpha: f64,
    /// Worker threads; 0 uses rayon's global pool.
    pub workers: usize,
    pub exact_cutoff: usize,
    pub exact_budget: u64,
    pub method: Method,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            m: 1000,
            m1: 1000,
            seed: 0,
            alpha: 0.05,
            workers: 0,
            exact_cutoff: DEFAULT_EXACT_CUTOFF,
            exact_budget: DEFAULT_EXACT_BUDGET,
            method: Method::Auto,
        }
    }
}

impl SamplingPlan {
    pub fn new(m: usize, m1: usize, seed: u64) -> Self {
        Self {
            m,
            m1,
            seed,
            ..Self::default()
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m1 == 0 {
            return Err(Error::domain("sampling plan needs m >= 1 and m1 >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationMeta {
    pub method: MethodUsed,
    /// Permutations used (0 for exact).
    pub m: usize,
    /// Monte Carlo rows used (0 when the game was exact).
    pub m1: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Set when planned durations were clamped to actual durations.
    pub plan_adjusted: bool,
}

/// Per-activity payments. `players[k]` is the activity paying `payments[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub players: Vec<ActivityId>,
    pub payments: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub meta: AllocationMeta,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.payments.iter().sum()
    }

    pub fn payment(&self, activity: ActivityId) -> Option<f64> {
        self.players
            .iter()
            .position(|&a| a == activity)
            .map(|k| self.payments[k])
    }

    /// `z_{alpha/2} * se * 100 / |payment|` per activity; `None` without
    /// standard errors or for a zero payment.
    pub fn relative_errors_pct(&self) -> Vec<Option<f64>> {
        let Some(se) = &self.std_errors else {
            return vec![None; self.payments.len()];
        };
        let z = z_critical(self.meta.alpha).unwrap_or(f64::NAN);
        self.payments
            .iter()
            .zip(se)
            .map(|(&p, &s)| (p != 0.0).then(|| z * s * 100.0 / p.abs()))
            .collect()
    }

    /// Average of the per-activity relative errors that are defined.
    pub fn mean_relative_error_pct(&self) -> Option<f64> {
        let defined: Vec<f64> = self.relative_errors_pct().into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }

    /// Average of the per-activity absolute half-widths `z * se`.
    pub fn mean_half_width(&self) -> Option<f64> {
        let se = self.std_errors.as_ref()?;
        let z = z_critical(self.meta.alpha).ok()?;
        Some(z * se.iter().sum::<f64>() / se.len().max(1) as f64)
    }
}

/// Exact Shapley value by subset enumeration.
pub fn exact_shapley(v: &dyn CharacteristicFunction) -> Result<Vec<f64>> {
    exact_shapley_with_cutoff(v, DEFAULT_EXACT_CUTOFF)
}

pub fn exact_shapley_with_cutoff(
    v: &dyn CharacteristicFunction,
    cutoff: usize,
) -> Result<Vec<f64>> {
    let n = v.players();
    if n > cutoff || n > 30 {
        return Err(Error::budget(format!(
            "exact Shapley value over {n} players exceeds the cutoff of {cutoff}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let values: Vec<f64> = (0..1u64 << n)
        .into_par_iter()
        .map(|bits| {
            if bits == 0 {
                0.0
            } else {
                v.value(&Coalition::from_bits(n, bits))
            }
        })
        .collect();
    // weight of a coalition of size s not containing i: s!(n-s-1)!/n! = 1/(n C(n-1,s))
    let mut weights = vec![0.0; n];
    let mut binom = 1.0f64;
    for (s, w) in weights.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }
    let mut phi = vec![0.0; n];
    for (i, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..values.len() {
            if mask & bit == 0 {
                let s = (mask as u64).count_ones() as usize;
                acc += weights[s] * (values[mask | bit] - values[mask]);
            }
        }
        *slot = acc;
    }
    Ok(phi)
}

/// Permutation-sampling estimate of the Shapley value: means and standard
/// errors of the per-permutation marginal contributions.
///
/// Permutation `j` is drawn by Fisher-Yates from stream `(seed, j)`, and
/// partial results are merged in permutation order, so the output is
/// identical for every worker count.
pub fn sampled_shapley(
    v: &dyn CharacteristicFunction,
    m: usize,
    seed: u64,
    workers: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::domain("need at least one permutation"));
    }
    let n = v.players();
    let chunks = m.div_ceil(PERMUTATION_CHUNK);
    let run_chunk = |c: usize| -> Vec<RunningStats> {
        let mut stats = vec![RunningStats::new(); n];
        let mut order: Vec<usize> = (0..n).collect();
        let end = ((c + 1) * PERMUTATION_CHUNK).min(m);
        for j in c * PERMUTATION_CHUNK..end {
            let mut rng = RngStream::new(seed, j as u64);
            for (k, slot) in order.iter_mut().enumerate() {
                *slot = k;
            }
            for k in (1..n).rev() {
                let r = rng.below(k + 1);
                order.swap(k, r);
            }
            let mut coalition = Coalition::empty(n);
            let mut previous = 0.0;
            for &p in &order {
                coalition.insert(p);
                let value = v.value(&coalition);
                stats[p].push(value - previous);
                previous = value;
            }
        }
        stats
    };
    let partials: Vec<Vec<RunningStats>> = if workers == 0 {
        (0..chunks).into_par_iter().map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
        pool.install(|| (0..chunks).into_par_iter().map(run_chunk).collect())
    };
    let mut total = vec![RunningStats::new(); n];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok((
        total.iter().map(RunningStats::mean).collect(),
        total.iter().map(RunningStats::std_error).collect(),
    ))
}

/// The Shapley rule of a deterministic problem.
pub fn shapley_det(
    problem: &DeterministicProblem,
    plan: Option<&SamplingPlan>,
) -> Result<Allocation> {
    let default_plan = SamplingPlan::default();
    let plan = plan.unwrap_or(&default_plan);
    let game = problem.game();
    let n = game.players();
    let exact = match plan.method {
        Method::Exact => true,
        Method::Sampled => false,
        Method::Auto => n <= plan.exact_cutoff,
    };
    let players = (0..n).collect();
    if exact {
        let payments = exact_shapley_with_cutoff(&game, plan.exact_cutoff)?;
        return Ok(Allocation {
            players,
            payments,
            std_errors: None,
            meta: AllocationMeta {
                method: MethodUsed::Exact,
                m: 0,
                m1: 0,
                seed: plan.seed,
                alpha: plan.alpha,
                plan_adjusted: problem.plan_adjusted(),
            },
        });
    }
    plan.validate()?;
    let (payments, se) = sampled_shapley(
        &game,
        plan.m,
        derive_seed(plan.seed, PERMUTATION_DOMAIN),
        plan.workers,
    )?;
    Ok(Allocation {
        players,
        payments,
        std_errors: Some(se),
        meta: AllocationMeta {
            method: MethodUsed::Sampled,
            m: plan.m,
            m1: 0,
            seed: plan.seed,
            alpha: plan.alpha,
            plan_adjusted: problem.plan_adjusted(),
        },
    })
}

/// The stochastic Shapley rule.
///
/// Exact when allowed and every coalition value can be enumerated; otherwise
/// one sample matrix of `m1` rows is drawn up front and shared by all
/// coalition evaluations of the `m` sampled permutations. Standard errors are
/// conditional on that matrix.
pub fn shapley_stoch(problem: &StochasticProblem, plan: &SamplingPlan) -> Result<Allocation> {
    let n = problem.n();
    let exact_possible =
        || n <= plan.exact_cutoff && problem.exact_feasible(plan.exact_budget).is_ok();
    let exact = match plan.method {
        Method::Exact => {
            if n > plan.exact_cutoff {
                return Err(Error::budget(format!(
                    "{n} activities exceed the exact cutoff of {}",
                    plan.exact_cutoff
                )));
            }
            problem.exact_feasible(plan.exact_budget)?;
            true
        }
        Method::Sampled => false,
        Method::Auto => exact_possible(),
    };
    if exact {
        return exact_stoch_allocation(problem, plan);
    }
    plan.validate()?;
    let samples = problem.sample_matrix(plan.m1, derive_seed(plan.seed, MATRIX_DOMAIN));
    let game = problem.mc_game(&samples);
    let (payments, se) = sampled_shapley(
        &game,
        plan.m,
        derive_seed(plan.seed, PERMUTATION_DOMAIN),
        plan.workers,
    )?;
    Ok(Allocation {
        players: problem.players().to_vec(),
        payments,
        std_errors: Some(se),
        meta: AllocationMeta {
            method: MethodUsed::Sampled,
            m: plan.m,
            m1: plan.m1,
            seed: plan.seed,
            alpha: plan.alpha,
            plan_adjusted: false,
        },
    })
}

fn exact_stoch_allocation(problem: &StochasticProblem, plan: &SamplingPlan) -> Result<Allocation> {
    let game = problem.exact_game(plan.exact_budget)?;
    let payments = exact_shapley_with_cutoff(&game, plan.exact_cutoff)?;
    Ok(Allocation {
        players: problem.players().to_vec(),
        payments,
        std_errors: None,
        meta: AllocationMeta {
            method: MethodUsed::Exact,
            m: 0,
            m1: 0,
            seed: plan.seed,
            alpha: plan.alpha,
            plan_adjusted: false,
        },
    })
}

/// `|[SSh_i(SP) - SSh_i(SP_-j)] - [SSh_j(SP) - SSh_j(SP_-i)]|` with exact
/// coalition values.
pub fn balancedness_residual(
    problem: &StochasticProblem,
    i: ActivityId,
    j: ActivityId,
) -> Result<f64> {
    balancedness_residual_with_budget(problem, i, j, DEFAULT_EXACT_BUDGET)
}

pub fn balancedness_residual_with_budget(
    problem: &StochasticProblem,
    i: ActivityId,
    j: ActivityId,
    budget: u64,
) -> Result<f64> {
    if i == j {
        return Err(Error::domain("balancedness needs two distinct activities"));
    }
    let plan = SamplingPlan {
        method: Method::Exact,
        exact_budget: budget,
        ..SamplingPlan::default()
    };
    let full = exact_stoch_allocation(problem, &plan)?;
    let without_j = exact_stoch_allocation(&problem.eliminate(j)?, &plan)?;
    let without_i = exact_stoch_allocation(&problem.eliminate(i)?, &plan)?;
    let pay = |a: &Allocation, k: ActivityId| {
        a.payment(k)
            .ok_or_else(|| Error::domain(format!("activity {k} is not a player")))
    };
    let lhs = pay(&full, i)? - pay(&without_j, i)?;
    let rhs = pay(&full, j)? - pay(&without_i, j)?;
    Ok((lhs - rhs).abs())
}
