//! Command implementations behind the `delayshare` binary. Each command
//! returns a report value; rendering and exit codes live here too so they can
//! be tested without spawning a process.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::allocation::{shapley_det, shapley_stoch, Allocation, MethodUsed, SamplingPlan};
use crate::error::{Error, Result};
use crate::experiments::{conditional_study, export_density, StudyOptions, StudyOutcome};
use crate::file::{ProjectFile, Violation};
use crate::project::CostFunction;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Budget(_) | Error::Io(_) => EXIT_RUNTIME,
        _ => EXIT_INVALID,
    }
}

#[derive(Debug, Clone)]
pub struct ValidateReport {
    pub activities: usize,
    pub immediate_precedences: usize,
    pub violations: Vec<Violation>,
}

impl ValidateReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        if self.is_valid() {
            let _ = writeln!(
                s,
                "valid: {} activities, {} immediate precedences",
                self.activities, self.immediate_precedences
            );
        } else {
            let _ = writeln!(s, "invalid: {} problem(s)", self.violations.len());
            for v in &self.violations {
                let _ = writeln!(s, "  {v}");
            }
        }
        s
    }
}

pub fn cmd_validate(file: &ProjectFile) -> ValidateReport {
    ValidateReport {
        activities: file.activities.len(),
        immediate_precedences: file.activities.iter().map(|a| a.predecessors.len()).sum(),
        violations: file.violations(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DurationScenario {
    pub name: String,
    pub durations: Vec<f64>,
    pub early_times: Vec<f64>,
    pub makespan: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DurationReport {
    pub labels: Vec<String>,
    pub delta: f64,
    pub scenarios: Vec<DurationScenario>,
}

impl DurationReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "threshold: {}", self.delta);
        for sc in &self.scenarios {
            let _ = writeln!(s, "\n[{}]", sc.name);
            let _ = writeln!(s, "{:<12} {:>12} {:>12}", "activity", "duration", "early");
            for (k, label) in self.labels.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{:<12} {:>12.5} {:>12.5}",
                    label, sc.durations[k], sc.early_times[k]
                );
            }
            let _ = writeln!(s, "makespan: {:.5}", sc.makespan);
            let _ = writeln!(s, "cost: {:.5}", sc.cost);
        }
        s
    }
}

pub fn cmd_duration(file: &ProjectFile) -> Result<DurationReport> {
    let project = file.project()?;
    let cost = file.threshold()?;
    let scenario = |name: &str, y: Vec<f64>| DurationScenario {
        name: name.to_string(),
        early_times: project.early_times(&y),
        makespan: project.duration(&y),
        cost: cost.cost(&project, &y),
        durations: y,
    };
    let mut scenarios = vec![scenario("actual", file.actual())];
    if let Some(p) = file.planned() {
        scenarios.push(scenario("planned", p));
    }
    if let Some(m) = file.means() {
        scenarios.push(scenario("mean", m));
    }
    Ok(DurationReport {
        labels: file.names(),
        delta: cost.delta(),
        scenarios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleChoice {
    Det,
    Stoch,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActivityRow {
    pub activity: String,
    pub payment: f64,
    pub std_error: Option<f64>,
    pub rel_err_pct: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationReport {
    pub rule: RuleChoice,
    pub method: MethodUsed,
    pub m: usize,
    pub m1: usize,
    pub seed: u64,
    pub alpha: f64,
    pub plan_adjusted: bool,
    pub realized_cost: f64,
    pub total: f64,
    pub mean_rel_err_pct: Option<f64>,
    pub activities: Vec<ActivityRow>,
}

impl AllocationReport {
    fn from_allocation(
        rule: RuleChoice,
        labels: &[String],
        realized_cost: f64,
        a: &Allocation,
    ) -> Self {
        let rel = a.relative_errors_pct();
        let activities = a
            .players
            .iter()
            .enumerate()
            .map(|(k, &id)| ActivityRow {
                activity: labels[id].clone(),
                payment: a.payments[k],
                std_error: a.std_errors.as_ref().map(|s| s[k]),
                rel_err_pct: rel[k],
            })
            .collect();
        Self {
            rule,
            method: a.meta.method,
            m: a.meta.m,
            m1: a.meta.m1,
            seed: a.meta.seed,
            alpha: a.meta.alpha,
            plan_adjusted: a.meta.plan_adjusted,
            realized_cost,
            total: a.total(),
            mean_rel_err_pct: a.mean_relative_error_pct(),
            activities,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let method = match self.method {
            MethodUsed::Exact => "exact".to_string(),
            MethodUsed::Sampled => {
                format!("sampled (m={}, m1={}, seed={})", self.m, self.m1, self.seed)
            }
        };
        let rule = match self.rule {
            RuleChoice::Det => "Sh",
            RuleChoice::Stoch => "SSh",
        };
        let _ = writeln!(s, "rule: {rule}  method: {method}");
        if self.plan_adjusted {
            let _ = writeln!(
                s,
                "note: planned durations above actual ones were clamped to the actual values"
            );
        }
        let _ = writeln!(
            s,
            "{:<12} {:>12} {:>12} {:>12}",
            "activity", "payment", "std_error", "rel_err_%"
        );
        for r in &self.activities {
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.5}"));
            let _ = writeln!(
                s,
                "{:<12} {:>12.5} {:>12} {:>12}",
                r.activity,
                r.payment,
                opt(r.std_error),
                opt(r.rel_err_pct)
            );
        }
        let _ = writeln!(
            s,
            "total: {:.5}  realized cost: {:.5}",
            self.total, self.realized_cost
        );
        if let Some(e) = self.mean_rel_err_pct {
            let _ = writeln!(s, "mean relative error: {e:.3}% (alpha={})", self.alpha);
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Columns: `activity,payment,std_error,rel_err_pct` (empty when undefined).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["activity", "payment", "std_error", "rel_err_pct"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.activities {
            w.write_record([
                r.activity.clone(),
                r.payment.to_string(),
                opt(r.std_error),
                opt(r.rel_err_pct),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes CSV for a `.csv` path, JSON otherwise.
    pub fn write(&self, path: &Path) -> Result<()> {
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let body = if is_csv {
            self.to_csv()?
        } else {
            self.to_json()?
        };
        fs::write(path, body)?;
        Ok(())
    }
}

pub fn cmd_allocate(
    file: &ProjectFile,
    rule: RuleChoice,
    plan: &SamplingPlan,
) -> Result<AllocationReport> {
    let labels = file.names();
    match rule {
        RuleChoice::Det => {
            let p = file.deterministic_problem()?;
            let a = shapley_det(&p, Some(plan))?;
            Ok(AllocationReport::from_allocation(
                rule,
                &labels,
                p.realized_cost(),
                &a,
            ))
        }
        RuleChoice::Stoch => {
            let sp = file.stochastic_problem()?;
            let a = shapley_stoch(&sp, plan)?;
            let cost = sp.cost_fn().cost(sp.project(), sp.actual());
            Ok(AllocationReport::from_allocation(rule, &labels, cost, &a))
        }
    }
}

/// Runs the conditional study and writes `summary.json`, `allocations.csv`,
/// `signs.csv`, `runs.csv`, `density.csv` and `samples.csv` into `outdir`.
pub fn cmd_experiment(
    file: &ProjectFile,
    opts: &StudyOptions,
    outdir: &Path,
) -> Result<StudyOutcome> {
    let sp = file.stochastic_problem()?;
    let outcome = conditional_study(&sp, opts)?;
    fs::create_dir_all(outdir)?;
    let labels = file.names();

    fs::write(
        outdir.join("summary.json"),
        serde_json::to_string_pretty(&outcome.summary)? + "\n",
    )?;

    let mut alloc = csv::Writer::from_path(outdir.join("allocations.csv"))?;
    alloc.write_record(["activity", "mean_ssh", "mean_sh"])?;
    for (k, label) in labels.iter().enumerate() {
        alloc.write_record([
            label.clone(),
            outcome.summary.mean_alloc[k].to_string(),
            outcome.summary.mean_det_alloc[k].to_string(),
        ])?;
    }
    alloc.flush()?;

    let mut signs = csv::Writer::from_path(outdir.join("signs.csv"))?;
    signs.write_record(["rule", "activity", "nonneg_pct", "neg_pct"])?;
    for row in &outcome.signs.rows {
        signs.write_record([
            row.rule.name().to_string(),
            labels[row.activity].clone(),
            row.nonneg_pct.to_string(),
            row.neg_pct.to_string(),
        ])?;
    }
    signs.flush()?;

    let mut runs = csv::Writer::from_path(outdir.join("runs.csv"))?;
    runs.write_record(["run", "cost", "attempts", "plan_adjusted"])?;
    for (r, run) in outcome.runs.iter().enumerate() {
        runs.write_record([
            r.to_string(),
            run.cost.to_string(),
            run.attempts.to_string(),
            run.plan_adjusted.to_string(),
        ])?;
    }
    runs.flush()?;

    export_density(
        &outcome.densities,
        &outdir.join("density.csv"),
        &outdir.join("samples.csv"),
    )?;
    Ok(outcome)
}

pub fn render_study(labels: &[String], outcome: &StudyOutcome) -> String {
    let mut s = String::new();
    let sum = &outcome.summary;
    let _ = writeln!(
        s,
        "accepted runs: {}  rejected draws: {}  mean cost: {:.5}",
        sum.runs, sum.rejection_count, sum.mean_cost
    );
    let _ = writeln!(
        s,
        "{:<12} {:>12} {:>12} {:>10} {:>10}",
        "activity", "mean SSh", "mean Sh", "SSh<0 %", "Sh<0 %"
    );
    for (k, label) in labels.iter().enumerate() {
        let neg = |rule| outcome.signs.neg_pct(rule, k).unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "{:<12} {:>12.5} {:>12.5} {:>10.1} {:>10.1}",
            label,
            sum.mean_alloc[k],
            sum.mean_det_alloc[k],
            neg(crate::experiments::Rule::SSh),
            neg(crate::experiments::Rule::Sh)
        );
    }
    if sum.adjusted_runs > 0 {
        let _ = writeln!(
            s,
            "note: the Sh plan was clamped to realised durations in {} run(s)",
            sum.adjusted_runs
        );
    }
    s
}
