use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use delayshare::allocation::{self, Method, MethodUsed, SamplingPlan};
use delayshare::file::ProjectFile as CoreProjectFile;
use delayshare::game::{stoch_value_mc, DEFAULT_EXACT_BUDGET};
use delayshare::{stats, Coalition, CostFunction, Error, RngStream, ThresholdCost};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Budget(_) | Error::Io(_) => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_method(method: &str) -> PyResult<Method> {
    match method {
        "auto" => Ok(Method::Auto),
        "exact" => Ok(Method::Exact),
        "sampled" => Ok(Method::Sampled),
        other => Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    }
}

fn threshold(delta: f64) -> PyResult<Arc<dyn CostFunction>> {
    Ok(Arc::new(ThresholdCost::new(delta).map_err(to_py)?))
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Project {
    inner: Arc<delayshare::Project>,
}

#[pymethods]
impl Project {
    #[new]
    #[pyo3(signature = (n, precedences, labels=None))]
    fn new(
        n: usize,
        precedences: Vec<(usize, usize)>,
        labels: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let inner = match labels {
            Some(l) if l.len() != n => {
                return Err(PyValueError::new_err(
                    "labels must have one entry per activity",
                ))
            }
            Some(l) => delayshare::Project::with_labels(l, &precedences),
            None => delayshare::Project::new(n, &precedences),
        }
        .map_err(to_py)?;
        Ok(Self {
            inner: Arc::new(inner),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    fn topological_order(&self) -> Vec<usize> {
        self.inner.topological_order().to_vec()
    }

    fn transitive_closure(&self) -> Vec<(usize, usize)> {
        self.inner.transitive_closure().into_iter().collect()
    }

    fn early_times(&self, durations: Vec<f64>) -> PyResult<Vec<f64>> {
        delayshare::project::check_durations(&durations, self.inner.len(), "durations")
            .map_err(to_py)?;
        Ok(self.inner.early_times(&durations))
    }

    fn duration(&self, durations: Vec<f64>) -> PyResult<f64> {
        delayshare::project::check_durations(&durations, self.inner.len(), "durations")
            .map_err(to_py)?;
        Ok(self.inner.duration(&durations))
    }

    fn delay_cost(&self, durations: Vec<f64>, delta: f64) -> PyResult<f64> {
        delayshare::project::check_durations(&durations, self.inner.len(), "durations")
            .map_err(to_py)?;
        Ok(ThresholdCost::new(delta)
            .map_err(to_py)?
            .cost(&self.inner, &durations))
    }

    fn __repr__(&self) -> String {
        format!(
            "Project(n={}, precedences={:?})",
            self.inner.len(),
            self.inner.immediate_precedences()
        )
    }
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Distribution {
    inner: delayshare::DurationDistribution,
}

#[pymethods]
impl Distribution {
    #[staticmethod]
    fn point(value: f64) -> PyResult<Self> {
        delayshare::DurationDistribution::point(value)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn uniform(a: f64, b: f64) -> PyResult<Self> {
        delayshare::DurationDistribution::uniform(a, b)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Triangular with (min, mode, max).
    #[staticmethod]
    fn triangular(min: f64, mode: f64, max: f64) -> PyResult<Self> {
        delayshare::DurationDistribution::triangular(min, mode, max)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn exponential(rate: f64) -> PyResult<Self> {
        delayshare::DurationDistribution::exponential(rate)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn discrete(values: Vec<f64>, probs: Vec<f64>) -> PyResult<Self> {
        delayshare::DurationDistribution::discrete(values, probs)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    fn discretize(&self, k: usize) -> PyResult<Self> {
        self.inner
            .discretize(k)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[pyo3(signature = (count, seed, stream=0))]
    fn sample(&self, count: usize, seed: u64, stream: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, stream);
        (0..count).map(|_| self.inner.sample(&mut rng)).collect()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct Allocation {
    players: Vec<usize>,
    payments: Vec<f64>,
    std_errors: Option<Vec<f64>>,
    relative_errors_pct: Vec<Option<f64>>,
    method: String,
    m: usize,
    m1: usize,
    seed: u64,
    plan_adjusted: bool,
}

#[pymethods]
impl Allocation {
    fn total(&self) -> f64 {
        self.payments.iter().sum()
    }

    fn __repr__(&self) -> String {
        format!(
            "Allocation(method={}, payments={:?})",
            self.method, self.payments
        )
    }
}

impl From<allocation::Allocation> for Allocation {
    fn from(a: allocation::Allocation) -> Self {
        Self {
            relative_errors_pct: a.relative_errors_pct(),
            players: a.players,
            payments: a.payments,
            std_errors: a.std_errors,
            method: match a.meta.method {
                MethodUsed::Exact => "exact",
                MethodUsed::Sampled => "sampled",
            }
            .to_string(),
            m: a.meta.m,
            m1: a.meta.m1,
            seed: a.meta.seed,
            plan_adjusted: a.meta.plan_adjusted,
        }
    }
}

fn plan(
    m: usize,
    m1: usize,
    seed: u64,
    method: &str,
    workers: usize,
    alpha: f64,
) -> PyResult<SamplingPlan> {
    Ok(SamplingPlan {
        m,
        m1,
        seed,
        alpha,
        workers,
        method: parse_method(method)?,
        ..SamplingPlan::default()
    })
}

#[pyclass(frozen)]
struct DeterministicProblem {
    inner: delayshare::DeterministicProblem,
}

#[pymethods]
impl DeterministicProblem {
    #[new]
    fn new(project: &Project, planned: Vec<f64>, actual: Vec<f64>, delta: f64) -> PyResult<Self> {
        delayshare::DeterministicProblem::new(
            project.inner.clone(),
            planned,
            actual,
            threshold(delta)?,
        )
        .map(|inner| Self { inner })
        .map_err(to_py)
    }

    fn value(&self, members: Vec<usize>) -> f64 {
        self.inner.det_value(&Coalition::from_members(
            self.inner.project().len(),
            &members,
        ))
    }

    fn realized_cost(&self) -> f64 {
        self.inner.realized_cost()
    }

    #[pyo3(signature = (m=1000, seed=0, method="auto", workers=0, alpha=0.05))]
    fn shapley(
        &self,
        py: Python<'_>,
        m: usize,
        seed: u64,
        method: &str,
        workers: usize,
        alpha: f64,
    ) -> PyResult<Allocation> {
        let plan = plan(m, 1, seed, method, workers, alpha)?;
        py.detach(|| allocation::shapley_det(&self.inner, Some(&plan)))
            .map(Allocation::from)
            .map_err(to_py)
    }
}

#[pyclass(frozen)]
struct StochasticProblem {
    inner: delayshare::StochasticProblem,
}

#[pymethods]
impl StochasticProblem {
    #[new]
    fn new(
        project: &Project,
        dists: Vec<Distribution>,
        actual: Vec<f64>,
        delta: f64,
    ) -> PyResult<Self> {
        delayshare::StochasticProblem::new(
            project.inner.clone(),
            dists.into_iter().map(|d| d.inner).collect(),
            actual,
            threshold(delta)?,
        )
        .map(|inner| Self { inner })
        .map_err(to_py)
    }

    /// Activity ids of the players (fewer than the project after eliminations).
    #[getter]
    fn players(&self) -> Vec<usize> {
        self.inner.players().to_vec()
    }

    fn means(&self) -> Vec<f64> {
        self.inner.means()
    }

    fn eliminate(&self, activity: usize) -> PyResult<Self> {
        self.inner
            .eliminate(activity)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Exact expected cost for a coalition given as player positions.
    #[pyo3(signature = (members, budget=DEFAULT_EXACT_BUDGET))]
    fn value_exact(&self, members: Vec<usize>, budget: u64) -> PyResult<f64> {
        let s = Coalition::from_members(self.inner.n(), &members);
        self.inner.stoch_value_exact(&s, budget).map_err(to_py)
    }

    /// Monte Carlo estimate and standard error.
    fn value_mc(&self, members: Vec<usize>, rows: usize, seed: u64) -> (f64, f64) {
        let s = Coalition::from_members(self.inner.n(), &members);
        let samples = self.inner.sample_matrix(rows, seed);
        stoch_value_mc(&self.inner, &s, &samples)
    }

    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (m=1000, m1=1000, seed=0, method="auto", workers=0, alpha=0.05))]
    fn shapley(
        &self,
        py: Python<'_>,
        m: usize,
        m1: usize,
        seed: u64,
        method: &str,
        workers: usize,
        alpha: f64,
    ) -> PyResult<Allocation> {
        let plan = plan(m, m1, seed, method, workers, alpha)?;
        py.detach(|| allocation::shapley_stoch(&self.inner, &plan))
            .map(Allocation::from)
            .map_err(to_py)
    }

    fn balancedness_residual(&self, i: usize, j: usize) -> PyResult<f64> {
        allocation::balancedness_residual(&self.inner, i, j).map_err(to_py)
    }
}

#[pyclass(frozen)]
struct ProjectFile {
    inner: CoreProjectFile,
}

#[pymethods]
impl ProjectFile {
    #[staticmethod]
    #[pyo3(signature = (path, delta=None))]
    fn load(path: PathBuf, delta: Option<f64>) -> PyResult<Self> {
        CoreProjectFile::load(&path, delta)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreProjectFile::from_json_str(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json_string().map_err(to_py)
    }

    fn names(&self) -> Vec<String> {
        self.inner.names()
    }

    fn violations(&self) -> Vec<String> {
        self.inner
            .violations()
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    fn project(&self) -> PyResult<Project> {
        Ok(Project {
            inner: Arc::new(self.inner.project().map_err(to_py)?),
        })
    }

    fn stochastic_problem(&self) -> PyResult<StochasticProblem> {
        self.inner
            .stochastic_problem()
            .map(|inner| StochasticProblem { inner })
            .map_err(to_py)
    }

    fn deterministic_problem(&self) -> PyResult<DeterministicProblem> {
        self.inner
            .deterministic_problem()
            .map(|inner| DeterministicProblem { inner })
            .map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (samples, alpha=0.05))]
fn relative_error_pct(samples: Vec<f64>, alpha: f64) -> PyResult<f64> {
    stats::relative_error_pct(&samples, alpha).map_err(to_py)
}

#[pymodule]
fn delayshare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Project>()?;
    m.add_class::<Distribution>()?;
    m.add_class::<Allocation>()?;
    m.add_class::<DeterministicProblem>()?;
    m.add_class::<StochasticProblem>()?;
    m.add_class::<ProjectFile>()?;
    m.add_function(wrap_pyfunction!(relative_error_pct, m)?)?;
    Ok(())
}
