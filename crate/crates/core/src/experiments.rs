//! Conditional simulation study: draw realised durations from the planned
//! distributions, keep the delayed ones, and compare the deterministic rule
//! (on expected durations) with the stochastic rule.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::{shapley_det, shapley_stoch, Method, SamplingPlan};
use crate::distributions::{derive_seed, RngStream};
use crate::error::{Error, Result};
use crate::game::{DeterministicProblem, StochasticProblem};
use crate::project::ActivityId;

pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;
pub const KDE_GRID_POINTS: usize = 512;

const REALIZATION_DOMAIN: u64 = 2;
const RUN_PLAN_DOMAIN: u64 = 3;

/// Which planned durations the deterministic rule uses for a realisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanAdjustment {
    /// `min(E[X0_i], x_i)`, so no activity is counted as early.
    #[default]
    Clamp,
    /// Expected durations as-is, even where the realisation is shorter.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rule {
    /// Deterministic Shapley rule on the expected-duration problem.
    Sh,
    /// Stochastic Shapley rule.
    SSh,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Sh => "Sh",
            Rule::SSh => "SSh",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub runs: usize,
    pub plan: SamplingPlan,
    /// Draws allowed per accepted realisation.
    pub max_attempts: u64,
    pub adjustment: PlanAdjustment,
}

impl StudyOptions {
    pub fn new(runs: usize, plan: SamplingPlan) -> Self {
        Self {
            runs,
            plan,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            adjustment: PlanAdjustment::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalStudyResult {
    pub runs: usize,
    pub mean_alloc: Vec<f64>,
    pub mean_det_alloc: Vec<f64>,
    pub mean_cost: f64,
    pub rejection_count: u64,
    pub adjustment: PlanAdjustment,
    /// Number of runs where the clamp actually changed the plan.
    pub adjusted_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignRow {
    pub rule: Rule,
    pub activity: ActivityId,
    pub nonneg_pct: f64,
    pub neg_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignFrequencyTable {
    pub rows: Vec<SignRow>,
}

impl SignFrequencyTable {
    pub fn neg_pct(&self, rule: Rule, activity: ActivityId) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.rule == rule && r.activity == activity)
            .map(|r| r.neg_pct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensitySample {
    pub rule: Rule,
    pub activity: ActivityId,
    pub label: String,
    pub values: Vec<f64>,
}

/// One accepted realisation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRun {
    pub actual: Vec<f64>,
    pub cost: f64,
    pub attempts: u64,
    pub det: Vec<f64>,
    pub stoch: Vec<f64>,
    pub plan_adjusted: bool,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub summary: ConditionalStudyResult,
    pub signs: SignFrequencyTable,
    pub densities: Vec<DensitySample>,
    pub runs: Vec<StudyRun>,
}

/// Repeats: draw `x` from the planned distributions until `C(x) > 0`, then
/// allocate `C(x)` with both rules. Runs use independent derived streams and
/// are aggregated in run order.
pub fn conditional_study(sp: &StochasticProblem, opts: &StudyOptions) -> Result<StudyOutcome> {
    if opts.runs == 0 {
        return Err(Error::domain("the study needs at least one run"));
    }
    if sp.is_reduced() {
        return Err(Error::domain("the study expects an unreduced problem"));
    }
    let n = sp.n();
    let means = sp.means();
    let draw_seed = derive_seed(opts.plan.seed, REALIZATION_DOMAIN);
    let plan_seed = derive_seed(opts.plan.seed, RUN_PLAN_DOMAIN);

    let one_run = |r: usize| -> Result<StudyRun> {
        let mut rng = RngStream::new(draw_seed, r as u64);
        let mut actual = vec![0.0; n];
        let mut attempts = 0u64;
        let cost = loop {
            if attempts == opts.max_attempts {
                return Err(Error::budget(format!(
                    "no delayed realisation in {} draws (acceptance rate below {:e})",
                    opts.max_attempts,
                    1.0 / opts.max_attempts as f64
                )));
            }
            attempts += 1;
            for (x, d) in actual.iter_mut().zip(sp.distributions()) {
                *x = d.sample(&mut rng);
            }
            let c = sp.cost_fn().cost(sp.project(), &actual);
            if c > 0.0 {
                break c;
            }
        };
        let det_problem = match opts.adjustment {
            PlanAdjustment::Clamp => DeterministicProblem::clamped(
                sp.project_arc(),
                &means,
                actual.clone(),
                sp.cost_arc(),
            )?,
            PlanAdjustment::Raw => DeterministicProblem::relaxed(
                sp.project_arc(),
                means.clone(),
                actual.clone(),
                sp.cost_arc(),
            )?,
        };
        let mut plan = opts.plan.clone();
        plan.seed = derive_seed(plan_seed, r as u64);
        // runs are already spread over workers
        plan.workers = 1;
        let det = shapley_det(
            &det_problem,
            Some(&SamplingPlan {
                method: Method::Auto,
                ..plan.clone()
            }),
        )?;
        let stoch = shapley_stoch(&sp.with_actual(actual.clone())?, &plan)?;
        Ok(StudyRun {
            actual,
            cost,
            attempts,
            det: det.payments,
            stoch: stoch.payments,
            plan_adjusted: det_problem.plan_adjusted(),
        })
    };

    let results: Vec<Result<StudyRun>> = if opts.plan.workers == 0 {
        (0..opts.runs).into_par_iter().map(one_run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.plan.workers)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
        pool.install(|| (0..opts.runs).into_par_iter().map(one_run).collect())
    };
    let runs: Vec<StudyRun> = results.into_iter().collect::<Result<_>>()?;
    Ok(summarize(runs, sp.project().labels(), opts.adjustment))
}

fn summarize(runs: Vec<StudyRun>, labels: &[String], adjustment: PlanAdjustment) -> StudyOutcome {
    let n = labels.len();
    let count = runs.len();
    let mean_of = |f: &dyn Fn(&StudyRun) -> &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| runs.iter().map(|r| f(r)[i]).sum::<f64>() / count as f64)
            .collect()
    };
    let summary = ConditionalStudyResult {
        runs: count,
        mean_alloc: mean_of(&|r| &r.stoch),
        mean_det_alloc: mean_of(&|r| &r.det),
        mean_cost: runs.iter().map(|r| r.cost).sum::<f64>() / count as f64,
        rejection_count: runs.iter().map(|r| r.attempts - 1).sum(),
        adjustment,
        adjusted_runs: runs.iter().filter(|r| r.plan_adjusted).count(),
    };

    let mut rows = Vec::with_capacity(2 * n);
    let mut densities = Vec::with_capacity(2 * n);
    for rule in [Rule::Sh, Rule::SSh] {
        for (i, label) in labels.iter().enumerate() {
            let values: Vec<f64> = runs
                .iter()
                .map(|r| match rule {
                    Rule::Sh => r.det[i],
                    Rule::SSh => r.stoch[i],
                })
                .collect();
            let negative = values.iter().filter(|&&v| v < 0.0).count();
            let neg_pct = 100.0 * negative as f64 / count as f64;
            rows.push(SignRow {
                rule,
                activity: i,
                nonneg_pct: 100.0 - neg_pct,
                neg_pct,
            });
            densities.push(DensitySample {
                rule,
                activity: i,
                label: label.clone(),
                values,
            });
        }
    }
    StudyOutcome {
        summary,
        signs: SignFrequencyTable { rows },
        densities,
        runs,
    }
}

/// Gaussian kernel density estimate on an evenly spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl KdeGrid {
    /// Trapezoid-rule integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Mean of the density by the trapezoid rule.
    pub fn mean(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (g[0] * d[0] + g[1] * d[1]))
            .sum::<f64>()
            / self.integral()
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^(-1/5)`, falling back to the
/// standard deviation when the IQR is zero and to a small positive width for
/// constant data.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-3 * mean.abs().max(1.0)
    }
}

pub fn kde(values: &[f64], points: usize) -> Result<KdeGrid> {
    if values.is_empty() {
        return Err(Error::domain("density estimate needs at least one sample"));
    }
    if points < 2 {
        return Err(Error::domain("density grid needs at least two points"));
    }
    let h = silverman_bandwidth(values);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..points).map(|k| lo + step * k as f64).collect();
    let density = grid
        .par_iter()
        .map(|&g| {
            norm * values
                .iter()
                .map(|&v| {
                    let u = (g - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(KdeGrid {
        bandwidth: h,
        grid,
        density,
    })
}

/// Writes `rule,activity,grid_point,density` to `density_path` and
/// `rule,run,activity,payment` to `samples_path`.
pub fn export_density(
    data: &[DensitySample],
    density_path: &Path,
    samples_path: &Path,
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::domain("no density samples to export"));
    }
    let mut out = BufWriter::new(File::create(density_path)?);
    writeln!(out, "rule,activity,grid_point,density")?;
    for d in data {
        let k = kde(&d.values, KDE_GRID_POINTS)?;
        for (g, f) in k.grid.iter().zip(&k.density) {
            writeln!(out, "{},{},{},{}", d.rule.name(), d.label, g, f)?;
        }
    }
    out.flush()?;

    let mut raw = BufWriter::new(File::create(samples_path)?);
    writeln!(raw, "rule,run,activity,payment")?;
    for d in data {
        for (run, v) in d.values.iter().enumerate() {
            writeln!(raw, "{},{},{},{}", d.rule.name(), run, d.label, v)?;
        }
    }
    raw.flush()?;
    Ok(())
}
