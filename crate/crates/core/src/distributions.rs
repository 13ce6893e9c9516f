//! Nonnegative-integer-valued offspring and immigration laws.
//!
//! Five variants cover the regimes the limit theory distinguishes:
//! criticality with an exact unit mean (Poisson(1), PointMass(1),
//! TwoPoint(0,2,1/2), Geometric(1/2)), the degenerate zero-variance
//! offspring case, bounded support for exact-zero Lindeberg sums, and a
//! table law for everything else. Every variant has exact analytic
//! moments and a sampler; `sample_sum` draws a whole `count`-fold
//! convolution through a distributional closure where one exists.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomStream;
use crate::sampling;

/// Tolerance on pmf normalization at construction.
pub const PMF_NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pmf must sum to 1 within {PMF_NORMALIZATION_TOL:e}, got {0}")]
    BadNormalization(f64),
    #[error("population sum overflow (count {count})")]
    SumOverflow { count: u64 },
}

/// A nonnegative-integer-valued law with exact mean and variance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub enum DistributionSpec {
    /// Poisson with rate `lambda` > 0.
    Poisson { lambda: f64 },
    /// Geometric on {0, 1, ...}: P(k) = (1-p)^k p, p in (0, 1].
    Geometric { p: f64 },
    /// Two atoms a and b with P(value = b) = p.
    TwoPoint { a: u64, b: u64, p: f64 },
    /// Degenerate law at c.
    PointMass { c: u64 },
    /// Finite table of (value, probability) atoms.
    TablePmf(TablePmf),
}

/// Serialized form, e.g. `{"type":"poisson","lambda":1.0}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum SpecRepr {
    Poisson { lambda: f64 },
    Geometric { p: f64 },
    TwoPoint { a: u64, b: u64, p: f64 },
    PointMass { c: u64 },
    TablePmf { entries: Vec<(u64, f64)> },
}

impl TryFrom<SpecRepr> for DistributionSpec {
    type Error = DistError;
    fn try_from(r: SpecRepr) -> Result<Self, DistError> {
        match r {
            SpecRepr::Poisson { lambda } => DistributionSpec::poisson(lambda),
            SpecRepr::Geometric { p } => DistributionSpec::geometric(p),
            SpecRepr::TwoPoint { a, b, p } => DistributionSpec::two_point(a, b, p),
            SpecRepr::PointMass { c } => Ok(DistributionSpec::point_mass(c)),
            SpecRepr::TablePmf { entries } => DistributionSpec::table_pmf(entries),
        }
    }
}

impl From<DistributionSpec> for SpecRepr {
    fn from(s: DistributionSpec) -> SpecRepr {
        match s {
            DistributionSpec::Poisson { lambda } => SpecRepr::Poisson { lambda },
            DistributionSpec::Geometric { p } => SpecRepr::Geometric { p },
            DistributionSpec::TwoPoint { a, b, p } => SpecRepr::TwoPoint { a, b, p },
            DistributionSpec::PointMass { c } => SpecRepr::PointMass { c },
            DistributionSpec::TablePmf(t) => SpecRepr::TablePmf { entries: t.entries },
        }
    }
}

impl PartialEq for DistributionSpec {
    fn eq(&self, other: &Self) -> bool {
        use DistributionSpec::*;
        match (self, other) {
            (Poisson { lambda: a }, Poisson { lambda: b }) => a == b,
            (Geometric { p: a }, Geometric { p: b }) => a == b,
            (
                TwoPoint { a, b, p },
                TwoPoint {
                    a: a2,
                    b: b2,
                    p: p2,
                },
            ) => a == a2 && b == b2 && p == p2,
            (PointMass { c: a }, PointMass { c: b }) => a == b,
            (TablePmf(a), TablePmf(b)) => a.entries == b.entries,
            _ => false,
        }
    }
}

impl DistributionSpec {
    pub fn poisson(lambda: f64) -> Result<Self, DistError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(DistError::InvalidParameter(format!(
                "poisson lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self::Poisson { lambda })
    }

    pub fn geometric(p: f64) -> Result<Self, DistError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(DistError::InvalidParameter(format!(
                "geometric p must lie in (0, 1], got {p}"
            )));
        }
        Ok(Self::Geometric { p })
    }

    pub fn two_point(a: u64, b: u64, p: f64) -> Result<Self, DistError> {
        if !((0.0..=1.0).contains(&p) && p.is_finite()) {
            return Err(DistError::InvalidParameter(format!(
                "two-point p must lie in [0, 1], got {p}"
            )));
        }
        Ok(Self::TwoPoint { a, b, p })
    }

    pub fn point_mass(c: u64) -> Self {
        Self::PointMass { c }
    }

    pub fn table_pmf(entries: Vec<(u64, f64)>) -> Result<Self, DistError> {
        Ok(Self::TablePmf(TablePmf::new(entries)?))
    }

    /// Exact analytic mean.
    pub fn mean(&self) -> f64 {
        match self {
            Self::Poisson { lambda } => *lambda,
            Self::Geometric { p } => (1.0 - p) / p,
            Self::TwoPoint { a, b, p } => (*a as f64) * (1.0 - p) + (*b as f64) * p,
            Self::PointMass { c } => *c as f64,
            Self::TablePmf(t) => t.mean,
        }
    }

    /// Exact analytic variance.
    pub fn variance(&self) -> f64 {
        match self {
            Self::Poisson { lambda } => *lambda,
            Self::Geometric { p } => (1.0 - p) / (p * p),
            Self::TwoPoint { a, b, p } => {
                let d = *b as f64 - *a as f64;
                d * d * p * (1.0 - p)
            }
            Self::PointMass { .. } => 0.0,
            Self::TablePmf(t) => t.variance,
        }
    }

    /// One draw from the law.
    pub fn sample(&self, stream: &mut RandomStream) -> u64 {
        match self {
            Self::Poisson { lambda } => sampling::sample_poisson(*lambda, stream),
            Self::Geometric { p } => sampling::sample_geometric(*p, stream),
            Self::TwoPoint { a, b, p } => {
                if stream.next_f64() < *p {
                    *b
                } else {
                    *a
                }
            }
            Self::PointMass { c } => *c,
            Self::TablePmf(t) => t.sample(stream),
        }
    }

    /// One draw from the `count`-fold convolution of the law
    /// (the empty sum for `count = 0` is 0 and consumes no stream state).
    ///
    /// Poisson, Geometric, PointMass and TwoPoint close under convolution
    /// (Poisson, negative binomial, scaled constant, binomial thinning);
    /// the table law falls back to `count` independent draws.
    pub fn sample_sum(&self, count: u64, stream: &mut RandomStream) -> Result<u64, DistError> {
        if count == 0 {
            return Ok(0);
        }
        let overflow = || DistError::SumOverflow { count };
        match self {
            Self::Poisson { lambda } => {
                if count >= (1u64 << 53) {
                    return Err(overflow());
                }
                Ok(sampling::sample_poisson(count as f64 * lambda, stream))
            }
            Self::Geometric { p } => Ok(sampling::sample_neg_binomial(count, *p, stream)),
            Self::TwoPoint { a, b, p } => {
                let hits = sampling::sample_binomial(count, *p, stream);
                let low = count.checked_mul(*a).ok_or_else(overflow)?;
                let extra = if b >= a {
                    hits.checked_mul(b - a).ok_or_else(overflow)?
                } else {
                    return low.checked_sub(hits * (a - b)).ok_or_else(overflow);
                };
                low.checked_add(extra).ok_or_else(overflow)
            }
            Self::PointMass { c } => count.checked_mul(*c).ok_or_else(overflow),
            Self::TablePmf(_) => self.sample_sum_naive(count, stream),
        }
    }

    /// Reference path: the literal sum of `count` independent draws.
    /// Kept public so tests can check the closure fast paths against it
    /// in distribution.
    pub fn sample_sum_naive(
        &self,
        count: u64,
        stream: &mut RandomStream,
    ) -> Result<u64, DistError> {
        let mut acc: u64 = 0;
        for _ in 0..count {
            acc = acc
                .checked_add(self.sample(stream))
                .ok_or(DistError::SumOverflow { count })?;
        }
        Ok(acc)
    }
}

/// Validated finite pmf with a Vose alias table built at construction;
/// sampling is one uniform per draw.
#[derive(Clone, Debug)]
pub struct TablePmf {
    entries: Vec<(u64, f64)>,
    accept: Vec<f64>,
    alias: Vec<u32>,
    mean: f64,
    variance: f64,
}

impl TablePmf {
    fn new(entries: Vec<(u64, f64)>) -> Result<Self, DistError> {
        if entries.is_empty() {
            return Err(DistError::InvalidParameter("empty pmf table".into()));
        }
        if entries.len() > u32::MAX as usize {
            return Err(DistError::InvalidParameter("pmf table too large".into()));
        }
        let mut total = 0.0;
        for &(v, p) in &entries {
            if !((0.0..=1.0).contains(&p) && p.is_finite()) {
                return Err(DistError::InvalidParameter(format!(
                    "pmf probability out of [0, 1]: P({v}) = {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > PMF_NORMALIZATION_TOL {
            return Err(DistError::BadNormalization(total));
        }
        let mean = entries.iter().map(|&(v, p)| v as f64 * p).sum::<f64>();
        let second = entries
            .iter()
            .map(|&(v, p)| (v as f64) * (v as f64) * p)
            .sum::<f64>();
        let variance = (second - mean * mean).max(0.0);
        let (accept, alias) = build_alias(&entries);
        Ok(Self {
            entries,
            accept,
            alias,
            mean,
            variance,
        })
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    fn sample(&self, stream: &mut RandomStream) -> u64 {
        let n = self.entries.len();
        let x = stream.next_f64() * n as f64;
        let mut cell = x as usize;
        if cell >= n {
            cell = n - 1;
        }
        let coin = x - cell as f64;
        if coin < self.accept[cell] {
            self.entries[cell].0
        } else {
            self.entries[self.alias[cell] as usize].0
        }
    }
}

fn build_alias(entries: &[(u64, f64)]) -> (Vec<f64>, Vec<u32>) {
    let n = entries.len();
    let mut accept = vec![0.0f64; n];
    let mut alias = vec![0u32; n];
    let mut scaled: Vec<f64> = entries.iter().map(|&(_, p)| p * n as f64).collect();
    let mut small: Vec<usize> = Vec::with_capacity(n);
    let mut large: Vec<usize> = Vec::with_capacity(n);
    for (i, &s) in scaled.iter().enumerate() {
        if s < 1.0 {
            small.push(i);
        } else {
            large.push(i);
        }
    }
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        accept[s] = scaled[s];
        alias[s] = l as u32;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if scaled[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    for &i in small.iter().chain(large.iter()) {
        accept[i] = 1.0;
    }
    (accept, alias)
}
