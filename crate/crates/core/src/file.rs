//! Project files: JSON documents describing activities, their immediate
//! predecessors, duration distributions, actual (and optionally planned)
//! durations, and the delay cost.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "activities": [
//!     {"name": "1", "predecessors": [], "dist": {"type": "triangular", "min": 1, "mode": 2, "max": 3}, "actual": 2.5},
//!     {"name": "2", "predecessors": ["1"], "dist": {"type": "exponential", "rate": 0.5}, "actual": 3}
//!   ],
//!   "cost": {"type": "threshold", "delta": 6.5}
//! }
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distributions::DurationDistribution;
use crate::error::{Error, Result};
use crate::game::{DeterministicProblem, StochasticProblem};
use crate::project::{Project, ThresholdCost};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivitySpec {
    pub name: String,
    #[serde(default)]
    pub predecessors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<DurationDistribution>,
    pub actual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planned: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CostSpec {
    Threshold { delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectFile {
    pub schema_version: u32,
    pub activities: Vec<ActivitySpec>,
    pub cost: CostSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Schema,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ViolationKind::Schema => "schema",
            ViolationKind::Cycle => "cycle",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Which duration family a command needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    Distributions,
    PlannedOrDistributions,
}

impl ProjectFile {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Loads JSON, or the flat CSV table when the extension is `.csv`
    /// (`delta` is then required).
    pub fn load(path: &Path, delta: Option<f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let delta =
                delta.ok_or_else(|| Error::schema("CSV projects need a threshold (--delta)"))?;
            Self::from_csv_str(&text, delta)
        } else {
            let mut file = Self::from_json_str(&text)?;
            if let Some(d) = delta {
                file.cost = CostSpec::Threshold { delta: d };
            }
            Ok(file)
        }
    }

    /// Flat table with header `name,predecessors,actual,planned,dist`.
    /// Predecessors are `;`-separated names; `planned` may be empty; `dist`
    /// is `point:v`, `uniform:a:b`, `triangular:min:mode:max`,
    /// `exponential:rate`, or empty.
    pub fn from_csv_str(text: &str, delta: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut activities = Vec::new();
        for record in reader.records() {
            let record = record?;
            let field = |k: usize| record.get(k).unwrap_or("");
            let name = field(0).to_string();
            let predecessors = field(1)
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            let number = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("activity {name}: bad {what} {s:?}")))
            };
            let actual = number(field(2), "actual")?;
            let planned = match field(3) {
                "" => None,
                s => Some(number(s, "planned")?),
            };
            let dist = match field(4) {
                "" => None,
                s => Some(
                    parse_compact_dist(s)
                        .map_err(|e| Error::Parse(format!("activity {name}: {e}")))?,
                ),
            };
            activities.push(ActivitySpec {
                name,
                predecessors,
                dist,
                actual,
                planned,
            });
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            activities,
            cost: CostSpec::Threshold { delta },
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.activities.iter().map(|a| a.name.clone()).collect()
    }

    /// Every problem found, with activity names.
    pub fn violations(&self) -> Vec<Violation> {
        let schema = |message: String| Violation {
            kind: ViolationKind::Schema,
            message,
        };
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.activities.is_empty() {
            out.push(schema("no activities".into()));
        }
        let CostSpec::Threshold { delta } = self.cost;
        if !(delta.is_finite() && delta >= 0.0) {
            out.push(schema(format!(
                "threshold delta {delta} must be finite and >= 0"
            )));
        }
        let mut index = HashMap::new();
        for (i, a) in self.activities.iter().enumerate() {
            if a.name.is_empty() {
                out.push(schema(format!("activity #{} has an empty name", i + 1)));
            }
            if index.insert(a.name.as_str(), i).is_some() {
                out.push(schema(format!("duplicate activity name {:?}", a.name)));
            }
        }
        for a in &self.activities {
            for p in &a.predecessors {
                if !index.contains_key(p.as_str()) {
                    out.push(schema(format!(
                        "activity {:?}: unknown predecessor {p:?}",
                        a.name
                    )));
                }
            }
            if !(a.actual.is_finite() && a.actual >= 0.0) {
                out.push(schema(format!(
                    "activity {:?}: actual duration {} is negative or not finite",
                    a.name, a.actual
                )));
            }
            if let Some(p) = a.planned {
                if !(p.is_finite() && p >= 0.0) {
                    out.push(schema(format!(
                        "activity {:?}: planned duration {p} is negative or not finite",
                        a.name
                    )));
                }
            }
            if let Some(d) = &a.dist {
                if let Err(e) = d.validate() {
                    out.push(schema(format!("activity {:?}: {e}", a.name)));
                }
            }
        }
        if out.is_empty() {
            if let Err(Error::Cycle { cycle }) = self.build_project() {
                let names: Vec<&str> = cycle
                    .iter()
                    .map(|&i| self.activities[i].name.as_str())
                    .collect();
                out.push(Violation {
                    kind: ViolationKind::Cycle,
                    message: format!("precedence cycle {}", names.join(" -> ")),
                });
            }
        }
        out
    }

    /// Fails with the first violation.
    pub fn check(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(v) if v.kind == ViolationKind::Cycle => {
                // rebuild for the structured error
                self.build_project().map(|_| ())
            }
            Some(v) => Err(Error::Schema(v.message)),
        }
    }

    pub fn check_for(&self, need: Requirement) -> Result<()> {
        self.check()?;
        let with_dist = self.activities.iter().filter(|a| a.dist.is_some()).count();
        let with_planned = self
            .activities
            .iter()
            .filter(|a| a.planned.is_some())
            .count();
        let n = self.activities.len();
        match need {
            Requirement::Distributions if with_dist != n => Err(Error::schema(
                "every activity needs a distribution for stochastic commands",
            )),
            Requirement::PlannedOrDistributions if with_planned != n && with_dist != n => {
                Err(Error::schema(
                    "every activity needs a planned duration (or every activity a distribution)",
                ))
            }
            _ => Ok(()),
        }
    }

    fn build_project(&self) -> Result<Project> {
        let index: HashMap<&str, usize> = self
            .activities
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.as_str(), i))
            .collect();
        let mut edges = Vec::new();
        for (j, a) in self.activities.iter().enumerate() {
            for p in &a.predecessors {
                let i = *index
                    .get(p.as_str())
                    .ok_or_else(|| Error::schema(format!("unknown predecessor {p:?}")))?;
                edges.push((i, j));
            }
        }
        Project::with_labels(self.names(), &edges)
    }

    pub fn project(&self) -> Result<Project> {
        self.check()?;
        self.build_project()
    }

    pub fn threshold(&self) -> Result<ThresholdCost> {
        let CostSpec::Threshold { delta } = self.cost;
        ThresholdCost::new(delta)
    }

    pub fn actual(&self) -> Vec<f64> {
        self.activities.iter().map(|a| a.actual).collect()
    }

    /// Planned durations if every activity lists one.
    pub fn planned(&self) -> Option<Vec<f64>> {
        self.activities.iter().map(|a| a.planned).collect()
    }

    pub fn means(&self) -> Option<Vec<f64>> {
        self.activities
            .iter()
            .map(|a| a.dist.as_ref().map(DurationDistribution::mean))
            .collect()
    }

    pub fn stochastic_problem(&self) -> Result<StochasticProblem> {
        self.check_for(Requirement::Distributions)?;
        let dists = self
            .activities
            .iter()
            .map(|a| a.dist.clone().expect("checked"))
            .collect();
        StochasticProblem::new(
            Arc::new(self.build_project()?),
            dists,
            self.actual(),
            Arc::new(self.threshold()?),
        )
    }

    /// Deterministic problem from the listed plan, else from the means of the
    /// distributions. A plan above an actual duration is clamped down to it
    /// (recorded in the problem); a plan that already incurs cost is rejected.
    pub fn deterministic_problem(&self) -> Result<DeterministicProblem> {
        self.check_for(Requirement::PlannedOrDistributions)?;
        let reference = self.planned().or_else(|| self.means()).expect("checked");
        let project = Arc::new(self.build_project()?);
        let cost = Arc::new(self.threshold()?);
        let p = DeterministicProblem::clamped(project, &reference, self.actual(), cost)?;
        let planned_cost = p.cost_fn().cost(p.project(), p.planned());
        if planned_cost > 0.0 {
            return Err(Error::domain(format!(
                "planned durations already incur delay cost {planned_cost}"
            )));
        }
        Ok(p)
    }
}

fn parse_compact_dist(s: &str) -> Result<DurationDistribution> {
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or("").to_ascii_lowercase();
    let args: Vec<f64> = parts
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {p:?} in {s:?}")))
        })
        .collect::<Result<_>>()?;
    let arity = |k: usize| {
        if args.len() == k {
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "{kind} takes {k} parameters, got {}",
                args.len()
            )))
        }
    };
    match kind.as_str() {
        "point" => arity(1).and_then(|_| DurationDistribution::point(args[0])),
        "uniform" => arity(2).and_then(|_| DurationDistribution::uniform(args[0], args[1])),
        "triangular" => {
            arity(3).and_then(|_| DurationDistribution::triangular(args[0], args[1], args[2]))
        }
        "exponential" => arity(1).and_then(|_| DurationDistribution::exponential(args[0])),
        other => Err(Error::Parse(format!("unknown distribution {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
      "schema_version": 1,
      "activities": [
        {"name": "a", "dist": {"type": "uniform", "a": 0, "b": 10}, "actual": 7},
        {"name": "b", "predecessors": ["a"], "dist": {"type": "point", "value": 3}, "actual": 4, "planned": 3}
      ],
      "cost": {"type": "threshold", "delta": 6}
    }"#;

    #[test]
    fn parses_and_builds() {
        let f = ProjectFile::from_json_str(EXAMPLE).unwrap();
        assert!(f.violations().is_empty());
        let p = f.project().unwrap();
        assert_eq!(p.immediate_precedences(), &[(0, 1)]);
        assert_eq!(f.means(), Some(vec![5.0, 3.0]));
        assert_eq!(f.planned(), None);
        let sp = f.stochastic_problem().unwrap();
        assert_eq!(sp.n(), 2);
    }

    #[test]
    fn reports_violations_by_name() {
        let mut f = ProjectFile::from_json_str(EXAMPLE).unwrap();
        f.activities[0].actual = -1.0;
        f.activities[1].predecessors.push("zzz".into());
        let v = f.violations();
        assert_eq!(v.len(), 2);
        assert!(v[0].message.contains("\"a\""), "{}", v[0]);
        assert!(v[1].message.contains("zzz"));
        assert!(matches!(f.check(), Err(Error::Schema(_))));

        let mut cyc = ProjectFile::from_json_str(EXAMPLE).unwrap();
        cyc.activities[0].predecessors.push("b".into());
        let v = cyc.violations();
        assert_eq!(v[0].kind, ViolationKind::Cycle);
        assert!(v[0].message.contains("a -> b"));
        assert!(matches!(cyc.check(), Err(Error::Cycle { .. })));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = EXAMPLE.replace("\"actual\": 7", "\"actual\": 7, \"colour\": 1");
        assert!(matches!(
            ProjectFile::from_json_str(&bad),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn csv_import() {
        let text = "name,predecessors,actual,planned,dist\n\
                    1,,2.5,,triangular:1:2:3\n\
                    2,1,1.25,,triangular:0.5:1:1.5\n\
                    3,,2,,point:1\n\
                    4,1;3,4.5,,uniform:3:5\n\
                    5,2,3,,exponential:0.5\n";
        let f = ProjectFile::from_csv_str(text, 6.5).unwrap();
        assert!(f.violations().is_empty());
        assert_eq!(
            f.project().unwrap().immediate_precedences(),
            &[(0, 1), (0, 3), (1, 4), (2, 3)]
        );
        assert_eq!(f.means().unwrap(), vec![2.0, 1.0, 1.0, 4.0, 2.0]);
        assert!(ProjectFile::from_csv_str(
            "name,predecessors,actual,planned,dist\nx,,1,,gamma:2\n",
            1.0
        )
        .is_err());
        assert!(ProjectFile::from_csv_str(
            "name,predecessors,actual,planned,dist\nx,,one,,\n",
            1.0
        )
        .is_err());
    }

    #[test]
    fn deterministic_from_means_clamps() {
        let text = "name,predecessors,actual,planned,dist\na,,3,,uniform:0:10\nb,,7,,uniform:2:8\n";
        let f = ProjectFile::from_csv_str(text, 6.0).unwrap();
        let p = f.deterministic_problem().unwrap();
        assert_eq!(p.planned(), &[3.0, 5.0]);
        assert!(p.plan_adjusted());
    }
}
