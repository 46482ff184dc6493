//! Treatment-allocation designs and per-unit exposure probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{LueError, Result};
use crate::exposure::{apply_exposure_mapping, Exposure, ExposureMapping, ExposureSpec};
use crate::network::Network;

/// Largest unit count accepted by exhaustive enumeration.
pub const MAX_ENUMERATION_UNITS: usize = 20;

/// A distribution over 0/1 treatment allocations of `n` units.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// Every unit treated independently with probability `p_treat`.
    Bernoulli { n: usize, p_treat: f64 },
    /// Explicit allocation table with probabilities summing to one.
    Explicit { n: usize, table: Vec<(Vec<u8>, f64)> },
}

impl Design {
    pub fn bernoulli(n: usize, p_treat: f64) -> Result<Self> {
        check_p_treat(p_treat)?;
        Ok(Design::Bernoulli { n, p_treat })
    }

    pub fn explicit(n: usize, table: Vec<(Vec<u8>, f64)>) -> Result<Self> {
        let mut total = 0.0;
        for (z, p) in &table {
            if z.len() != n {
                return Err(LueError::LengthMismatch { expected: n, found: z.len() });
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(LueError::InvalidProbability(format!("allocation probability {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(LueError::InvalidProbability(format!("allocation probabilities sum to {total}")));
        }
        Ok(Design::Explicit { n, table })
    }

    pub fn n(&self) -> usize {
        match self {
            Design::Bernoulli { n, .. } | Design::Explicit { n, .. } => *n,
        }
    }

    /// Probability of a single allocation under the design.
    pub fn allocation_probability(&self, z: &[u8]) -> f64 {
        match self {
            Design::Bernoulli { p_treat, .. } => {
                let treated = z.iter().filter(|&&b| b != 0).count() as i32;
                p_treat.powi(treated) * (1.0 - p_treat).powi(z.len() as i32 - treated)
            }
            Design::Explicit { table, .. } => table.iter().filter(|(a, _)| a == z).map(|(_, p)| p).sum(),
        }
    }

    fn sample_one(&self, rng: &mut ChaCha8Rng) -> Vec<u8> {
        match self {
            Design::Bernoulli { n, p_treat } => (0..*n).map(|_| u8::from(rng.gen_bool(*p_treat))).collect(),
            Design::Explicit { table, .. } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (z, p) in table {
                    acc += p;
                    if u < acc {
                        return z.clone();
                    }
                }
                table.iter().rev().find(|(_, p)| *p > 0.0).map(|(z, _)| z.clone()).unwrap_or_default()
            }
        }
    }
}

fn check_p_treat(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(LueError::InvalidProbability(format!("treatment probability {p} must lie in (0, 1)")))
    }
}

/// Probability of each exposure of one unit, stored densely over its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureDistribution {
    spec: ExposureSpec,
    probs: Vec<f64>,
}

impl ExposureDistribution {
    /// `probs` is indexed by [`ExposureSpec::dense_index`].
    pub fn new(spec: ExposureSpec, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != spec.num_exposures() {
            return Err(LueError::LengthMismatch { expected: spec.num_exposures(), found: probs.len() });
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0 && **p <= 1.0)) {
            return Err(LueError::InvalidProbability(format!("exposure probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(LueError::InvalidProbability(format!("exposure probabilities sum to {total}")));
        }
        Ok(ExposureDistribution { spec, probs })
    }

    pub fn from_pairs(spec: ExposureSpec, pairs: &[(Exposure, f64)]) -> Result<Self> {
        let mut probs = vec![0.0; spec.num_exposures()];
        for (e, p) in pairs {
            spec.check(e)?;
            probs[spec.dense_index(e)] += p;
        }
        ExposureDistribution::new(spec, probs)
    }

    pub fn uniform(spec: &ExposureSpec) -> Self {
        let n = spec.num_exposures();
        ExposureDistribution { spec: spec.clone(), probs: vec![1.0 / n as f64; n] }
    }

    pub fn spec(&self) -> &ExposureSpec {
        &self.spec
    }

    pub fn prob(&self, e: &Exposure) -> f64 {
        if self.spec.contains(e) {
            self.probs[self.spec.dense_index(e)]
        } else {
            0.0
        }
    }

    /// Dense probabilities in mixed-radix order.
    pub fn dense(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Returns `p(e)` or an error when it is zero.
    pub fn positive_prob(&self, e: &Exposure) -> Result<f64> {
        let p = self.prob(e);
        if p > 0.0 {
            Ok(p)
        } else {
            Err(LueError::MissingProbability(e.to_string()))
        }
    }
}

/// `P(d treated in-neighbours, own treatment z)` for a unit with in-degree
/// `degree` under Bernoulli(`p_treat`).
pub fn bernoulli_exposure_prob(degree: usize, e: &Exposure, p_treat: f64) -> Result<f64> {
    check_p_treat(p_treat)?;
    let (d, z) = match e.components() {
        &[d, z] if z <= 1 => (d, z),
        _ => return Err(LueError::InvalidSpec(format!("{e} is not a (treated degree, own treatment) exposure"))),
    };
    if d > degree {
        return Err(LueError::ExposureOutOfRange { exposure: e.to_string(), levels: vec![degree, 1] });
    }
    let treated = (d + z) as f64;
    let control = (degree - d + 1 - z) as f64;
    if degree > 50 {
        let ln = ln_binomial(degree as u64, d as u64) + treated * p_treat.ln() + control * (1.0 - p_treat).ln();
        Ok(ln.exp())
    } else {
        Ok(binomial(degree, d) * p_treat.powf(treated) * (1.0 - p_treat).powf(control))
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Closed-form exposure distribution of a unit under Bernoulli and the
/// network-interference mapping.
pub fn bernoulli_distribution(degree: usize, p_treat: f64) -> Result<ExposureDistribution> {
    if degree == 0 {
        return Err(LueError::InvalidSpec("in-degree 0 has no interference exposure set".into()));
    }
    let spec = ExposureSpec::new(vec![degree, 1])?;
    let probs = (0..spec.num_exposures())
        .map(|i| bernoulli_exposure_prob(degree, &spec.exposure_at(i), p_treat))
        .collect::<Result<Vec<_>>>()?;
    ExposureDistribution::new(spec, probs)
}

/// Brute-force exposure distribution of `unit`, summing design mass over
/// every allocation.
pub fn exposure_distribution_exact(
    design: &Design,
    mapping: ExposureMapping,
    network: Option<&Network>,
    unit: usize,
) -> Result<ExposureDistribution> {
    if let Some(net) = network {
        if net.n() != design.n() {
            return Err(LueError::LengthMismatch { expected: design.n(), found: net.n() });
        }
    }
    let spec = mapping.unit_spec(network, unit)?;
    let mut probs = vec![0.0; spec.num_exposures()];
    for (z, p) in allocations(design, &AllocationMode::Exhaustive)? {
        let e = apply_exposure_mapping(mapping, network, &z, unit)?;
        probs[spec.dense_index(&e)] += p;
    }
    ExposureDistribution::new(spec, probs)
}

/// How allocations are visited when averaging over the design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    Exhaustive,
    Sample { count: usize, seed: u64 },
}

/// Allocations paired with their weight: the exact design probability when
/// exhaustive, `1 / count` when sampled.
pub fn allocations(design: &Design, mode: &AllocationMode) -> Result<Vec<(Vec<u8>, f64)>> {
    let n = design.n();
    match mode {
        AllocationMode::Exhaustive => match design {
            Design::Explicit { table, .. } => Ok(table.clone()),
            Design::Bernoulli { .. } => {
                if n > MAX_ENUMERATION_UNITS {
                    return Err(LueError::EnumerationBudget { n, max: MAX_ENUMERATION_UNITS });
                }
                Ok((0u64..1 << n)
                    .map(|mask| {
                        let z: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
                        let p = design.allocation_probability(&z);
                        (z, p)
                    })
                    .collect())
            }
        },
        AllocationMode::Sample { count, seed } => {
            if *count == 0 {
                return Err(LueError::InvalidConfig("sample count must be positive".into()));
            }
            Ok(sample_allocations(design, *count, &mut ChaCha8Rng::seed_from_u64(*seed)))
        }
    }
}

/// `count` i.i.d. allocations from `design`, each weighted `1 / count`.
pub fn sample_allocations(design: &Design, count: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<u8>, f64)> {
    let w = 1.0 / count as f64;
    (0..count).map(|_| (design.sample_one(rng), w)).collect()
}
