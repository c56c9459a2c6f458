//! Planned-duration distributions and reproducible random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent non-negative duration distribution of one activity.
///
/// Triangular parameters are `(min, mode, max)`; exponential is parameterised
/// by its rate, so `rate = 0.5` has mean 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DurationDistribution {
    Point { value: f64 },
    Uniform { a: f64, b: f64 },
    Triangular { min: f64, mode: f64, max: f64 },
    Exponential { rate: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl DurationDistribution {
    pub fn point(value: f64) -> Result<Self> {
        Self::Point { value }.validated()
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::Uniform { a, b }.validated()
    }

    pub fn triangular(min: f64, mode: f64, max: f64) -> Result<Self> {
        Self::Triangular { min, mode, max }.validated()
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::Exponential { rate }.validated()
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Self::Discrete { values, probs }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let ok = match self {
            Self::Point { value } => finite_nonneg(*value),
            Self::Uniform { a, b } => finite_nonneg(*a) && b.is_finite() && a < b,
            Self::Triangular { min, mode, max } => {
                finite_nonneg(*min) && max.is_finite() && min <= mode && mode <= max && min < max
            }
            Self::Exponential { rate } => rate.is_finite() && *rate > 0.0,
            Self::Discrete { values, probs } => {
                !values.is_empty()
                    && values.len() == probs.len()
                    && values.iter().all(|&v| finite_nonneg(v))
                    && probs.iter().all(|&p| p.is_finite() && p > 0.0)
                    && (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid distribution {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Point { value } => *value,
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::Triangular { min, mode, max } => (min + mode + max) / 3.0,
            Self::Exponential { rate } => 1.0 / rate,
            Self::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
        }
    }

    /// Quantile function of a continuous variant.
    fn quantile(&self, p: f64) -> f64 {
        match self {
            Self::Uniform { a, b } => a + (b - a) * p,
            Self::Triangular { min, mode, max } => {
                let (a, c, b) = (*min, *mode, *max);
                if p < (c - a) / (b - a) {
                    a + (p * (b - a) * (c - a)).sqrt()
                } else {
                    b - ((1.0 - p) * (b - a) * (b - c)).sqrt()
                }
            }
            Self::Exponential { rate } => -(1.0 - p).ln() / rate,
            Self::Point { value } => *value,
            Self::Discrete { values, probs } => {
                let mut acc = 0.0;
                for (v, q) in values.iter().zip(probs) {
                    acc += q;
                    if p < acc {
                        return *v;
                    }
                }
                *values.last().expect("non-empty support")
            }
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Point { value } => f64::from(x >= *value),
            Self::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Self::Triangular { min, mode, max } => {
                let (a, c, b) = (*min, *mode, *max);
                if x <= a {
                    0.0
                } else if x >= b {
                    1.0
                } else if x <= c {
                    (x - a).powi(2) / ((b - a) * (c - a))
                } else {
                    1.0 - (b - x).powi(2) / ((b - a) * (b - c))
                }
            }
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * x).exp()
                }
            }
            Self::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(v, _)| **v <= x)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// Draws one duration. Uniform, triangular and discrete use inverse-CDF on
    /// a single uniform; exponential uses `-ln(U)/rate`.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            Self::Point { value } => *value,
            Self::Exponential { rate } => -rng.open_unit().ln() / rate,
            _ => self.quantile(rng.unit()),
        }
    }

    /// Finite support as `(values, probs)`; `None` for continuous variants.
    pub fn support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Point { value } => Some((vec![*value], vec![1.0])),
            Self::Discrete { values, probs } => Some((values.clone(), probs.clone())),
            _ => None,
        }
    }

    pub fn support_size(&self) -> Option<usize> {
        match self {
            Self::Point { .. } => Some(1),
            Self::Discrete { values, .. } => Some(values.len()),
            _ => None,
        }
    }

    /// Equal-probability discretization at the quantile midpoints `(i + 0.5) / k`.
    pub fn discretize(&self, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::domain("discretize needs k >= 2"));
        }
        if matches!(self, Self::Point { .. } | Self::Discrete { .. }) {
            return Err(Error::domain(
                "discretize expects a continuous distribution",
            ));
        }
        let values = (0..k)
            .map(|i| self.quantile((i as f64 + 0.5) / k as f64))
            .collect();
        let probs = vec![1.0 / k as f64; k];
        Ok(Self::Discrete { values, probs })
    }
}

/// A seeded, independently addressable stream of random numbers.
///
/// Backed by ChaCha8 with the stream id selecting one of 2^64 disjoint
/// keystreams, so `(seed, stream_id)` fully determines the sequence no matter
/// which thread consumes it.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`.
    pub fn open_unit(&mut self) -> f64 {
        1.0 - self.unit()
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Derives a child seed from `(seed, index)` with a splitmix64 finaliser.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
