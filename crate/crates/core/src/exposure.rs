//! Exposure sets, exposure vectors and the parameterisation of additive
//! potential outcomes.
//!
//! An [`ExposureSpec`] with levels `(m_1, …, m_K)` describes the exposure set
//! `{0..=m_1} × … × {0..=m_K}`. Under additivity the potential outcome of an
//! exposure is `α + Σ_k θ_{k, e_k}` (terms with `e_k = 0` vanish), so every
//! exposure corresponds to a 0/1 indicator vector over the parameter set
//! `Θ = {α} ∪ {θ_{k,j}}`.
//!
//! Components are zero-based in this crate: component `0` is the component
//! of interest after canonicalisation, and its top level `m_1` is the
//! default estimand.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LueError, Result};
use crate::network::Network;

/// Component structure of an exposure set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct ExposureSpec {
    levels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    levels: Vec<usize>,
}

impl TryFrom<SpecRepr> for ExposureSpec {
    type Error = LueError;
    fn try_from(r: SpecRepr) -> Result<Self> {
        ExposureSpec::new(r.levels)
    }
}

impl From<ExposureSpec> for SpecRepr {
    fn from(s: ExposureSpec) -> Self {
        SpecRepr { levels: s.levels }
    }
}

/// A single exposure vector `(e_1, …, e_K)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exposure(Vec<usize>);

/// Position of a parameter in `Θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParameterIndex {
    /// The baseline `α = Y(0, …, 0)`.
    Baseline,
    /// `θ_{k,j}`: effect of component `component` (zero-based) at level `level ≥ 1`.
    Effect { component: usize, level: usize },
}

impl fmt::Display for ParameterIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParameterIndex::Baseline => write!(f, "alpha"),
            ParameterIndex::Effect { component, level } => {
                write!(f, "theta[{},{}]", component + 1, level)
            }
        }
    }
}

impl Exposure {
    pub fn new(components: Vec<usize>) -> Self {
        Exposure(components)
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_baseline(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Componentwise `self ≥ other`.
    pub fn dominates(&self, other: &Exposure) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    /// Comma-separated components, as used by the record formats.
    pub fn to_record(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        parts.join(",")
    }

    pub fn parse_record(s: &str) -> Result<Self> {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| LueError::Parse(format!("bad exposure component `{p}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Exposure)
    }
}

impl From<Vec<usize>> for Exposure {
    fn from(v: Vec<usize>) -> Self {
        Exposure(v)
    }
}

impl std::ops::Index<usize> for Exposure {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

impl fmt::Display for Exposure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.to_record())
    }
}

impl ExposureSpec {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(LueError::InvalidSpec("at least one exposure component is required".into()));
        }
        if let Some(k) = levels.iter().position(|&m| m == 0) {
            return Err(LueError::InvalidSpec(format!("component {} has no non-zero level", k + 1)));
        }
        Ok(ExposureSpec { levels })
    }

    pub fn num_components(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// `m_1`, the level of the default estimand.
    pub fn top_level(&self) -> usize {
        self.levels[0]
    }

    /// `|E| = ∏ (m_k + 1)`.
    pub fn num_exposures(&self) -> usize {
        self.levels.iter().map(|m| m + 1).product()
    }

    /// `|Θ| = 1 + Σ m_k`.
    pub fn num_parameters(&self) -> usize {
        1 + self.levels.iter().sum::<usize>()
    }

    /// Parameters in layout order: `α`, then `θ_{k,j}` in `(k, j)` order.
    pub fn parameters(&self) -> Vec<ParameterIndex> {
        let mut out = Vec::with_capacity(self.num_parameters());
        out.push(ParameterIndex::Baseline);
        for (component, &m) in self.levels.iter().enumerate() {
            out.extend((1..=m).map(|level| ParameterIndex::Effect { component, level }));
        }
        out
    }

    pub fn parameter_position(&self, p: ParameterIndex) -> Option<usize> {
        match p {
            ParameterIndex::Baseline => Some(0),
            ParameterIndex::Effect { component, level } => {
                let m = *self.levels.get(component)?;
                if level == 0 || level > m {
                    return None;
                }
                Some(1 + self.levels[..component].iter().sum::<usize>() + level - 1)
            }
        }
    }

    /// The default estimand `θ_{1,m_1}`.
    pub fn target(&self) -> ParameterIndex {
        ParameterIndex::Effect { component: 0, level: self.levels[0] }
    }

    pub fn baseline(&self) -> Exposure {
        Exposure(vec![0; self.levels.len()])
    }

    pub fn contains(&self, e: &Exposure) -> bool {
        e.len() == self.levels.len() && e.0.iter().zip(&self.levels).all(|(c, m)| c <= m)
    }

    pub fn check(&self, e: &Exposure) -> Result<()> {
        if self.contains(e) {
            Ok(())
        } else {
            Err(LueError::ExposureOutOfRange { exposure: e.to_string(), levels: self.levels.clone() })
        }
    }

    /// Mixed-radix position of `e` (first component most significant).
    /// Used for dense storage; unrelated to the canonical order.
    pub fn dense_index(&self, e: &Exposure) -> usize {
        e.0.iter().zip(&self.levels).fold(0, |acc, (c, m)| acc * (m + 1) + c)
    }

    pub fn exposure_at(&self, mut index: usize) -> Exposure {
        let mut comps = vec![0; self.levels.len()];
        for (slot, m) in comps.iter_mut().zip(&self.levels).rev() {
            *slot = index % (m + 1);
            index /= m + 1;
        }
        Exposure(comps)
    }

    /// Positions (in layout order) of the parameters contributing to `Y(e)`.
    pub fn active_parameters(&self, e: &Exposure) -> Vec<usize> {
        let mut out = vec![0];
        let mut offset = 1;
        for (&c, &m) in e.0.iter().zip(&self.levels) {
            if c > 0 {
                out.push(offset + c - 1);
            }
            offset += m;
        }
        out
    }

    fn group(&self, e: &Exposure) -> u8 {
        let first = e.0[0];
        if first == 0 {
            2
        } else if first == self.levels[0] {
            1
        } else {
            0
        }
    }

    /// Total order used to enumerate exposures and basis estimators.
    ///
    /// Exposures are grouped by first component (`1..m_1`, then `m_1`, then
    /// `0`). Inside a group they are compared on components `K` down to `2`,
    /// larger values first, and ties are broken by the larger first component.
    pub fn canonical_cmp(&self, a: &Exposure, b: &Exposure) -> Ordering {
        self.group(a)
            .cmp(&self.group(b))
            .then_with(|| {
                for k in (1..self.levels.len()).rev() {
                    match b.0[k].cmp(&a.0[k]) {
                        Ordering::Equal => continue,
                        other => return other,
                    }
                }
                Ordering::Equal
            })
            .then_with(|| b.0[0].cmp(&a.0[0]))
    }
}

/// All exposures of `spec` in canonical order.
pub fn enumerate_exposures(spec: &ExposureSpec) -> Vec<Exposure> {
    let mut all: Vec<Exposure> = (0..spec.num_exposures()).map(|i| spec.exposure_at(i)).collect();
    all.sort_by(|a, b| spec.canonical_cmp(a, b));
    all
}

/// Every spec whose exposure set has at most `max_exposures` elements,
/// ordered by component count and then lexicographically.
pub fn enumerate_specs(max_exposures: usize) -> Vec<ExposureSpec> {
    fn extend(prefix: &mut Vec<usize>, budget: usize, out: &mut Vec<Vec<usize>>) {
        for m in 1..budget {
            prefix.push(m);
            out.push(prefix.clone());
            extend(prefix, budget / (m + 1), out);
            prefix.pop();
        }
    }
    let mut all = Vec::new();
    extend(&mut Vec::new(), max_exposures, &mut all);
    all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    all.into_iter().map(|levels| ExposureSpec { levels }).collect()
}

/// 0/1 vector `v_e` over `Θ` (layout order) with `v_eᵀ θ = Y(e)` under additivity.
pub fn indicator_vector(spec: &ExposureSpec, e: &Exposure) -> Result<Vec<f64>> {
    spec.check(e)?;
    let mut v = vec![0.0; spec.num_parameters()];
    for p in spec.active_parameters(e) {
        v[p] = 1.0;
    }
    Ok(v)
}

/// Concrete exposure mappings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureMapping {
    /// `f(i, z) = (z_i)`.
    Sutva,
    /// `f(i, z) = (d_i^z, z_i)` with `d_i^z` the treated in-degree.
    NetworkInterference,
    /// `f(i, z) = (z_i, 1{d_i^z > 0})`.
    FourExposure,
}

impl ExposureMapping {
    pub fn name(self) -> &'static str {
        match self {
            ExposureMapping::Sutva => "sutva",
            ExposureMapping::NetworkInterference => "network_interference",
            ExposureMapping::FourExposure => "four_exposure",
        }
    }

    /// Exposure set of `unit` under this mapping.
    pub fn unit_spec(self, network: Option<&Network>, unit: usize) -> Result<ExposureSpec> {
        match self {
            ExposureMapping::Sutva => ExposureSpec::new(vec![1]),
            ExposureMapping::FourExposure => {
                let net = network.ok_or(LueError::MissingNetwork(self.name()))?;
                net.check_unit(unit)?;
                ExposureSpec::new(vec![1, 1])
            }
            ExposureMapping::NetworkInterference => {
                let net = network.ok_or(LueError::MissingNetwork(self.name()))?;
                net.check_unit(unit)?;
                match net.in_degree(unit) {
                    0 => Err(LueError::DegenerateUnit { unit }),
                    d => ExposureSpec::new(vec![d, 1]),
                }
            }
        }
    }
}

/// Exposure of `unit` under allocation `z` (0/1 per unit).
pub fn apply_exposure_mapping(
    kind: ExposureMapping,
    network: Option<&Network>,
    allocation: &[u8],
    unit: usize,
) -> Result<Exposure> {
    if unit >= allocation.len() {
        return Err(LueError::UnitOutOfRange { unit, n: allocation.len() });
    }
    let own = usize::from(allocation[unit] != 0);
    match kind {
        ExposureMapping::Sutva => Ok(Exposure(vec![own])),
        ExposureMapping::NetworkInterference | ExposureMapping::FourExposure => {
            let net = network.ok_or(LueError::MissingNetwork(kind.name()))?;
            if allocation.len() != net.n() {
                return Err(LueError::LengthMismatch { expected: net.n(), found: allocation.len() });
            }
            let treated = net.treated_in_degree(unit, allocation);
            Ok(match kind {
                ExposureMapping::NetworkInterference => Exposure(vec![treated, own]),
                _ => Exposure(vec![own, usize::from(treated > 0)]),
            })
        }
    }
}

/// Relabelling that moves an arbitrary estimand `θ_{k,j}` to `θ_{1,m_1}`.
///
/// Component `k` becomes the first component and inside it levels `j` and
/// `m_k` are swapped; the other components keep their relative order.
#[derive(Debug, Clone)]
pub struct EstimandRemap {
    original: ExposureSpec,
    canonical: ExposureSpec,
    component: usize,
    level: usize,
}

impl EstimandRemap {
    pub fn new(spec: &ExposureSpec, target: ParameterIndex) -> Result<Self> {
        let (component, level) = match target {
            ParameterIndex::Effect { component, level } if spec.parameter_position(target).is_some() => {
                (component, level)
            }
            _ => {
                return Err(LueError::Precondition(format!(
                    "{target} is not an effect parameter of {:?}",
                    spec.levels()
                )))
            }
        };
        let mut levels = vec![spec.levels[component]];
        levels.extend(spec.levels.iter().enumerate().filter(|(k, _)| *k != component).map(|(_, &m)| m));
        Ok(EstimandRemap {
            original: spec.clone(),
            canonical: ExposureSpec::new(levels)?,
            component,
            level,
        })
    }

    pub fn original_spec(&self) -> &ExposureSpec {
        &self.original
    }

    pub fn canonical_spec(&self) -> &ExposureSpec {
        &self.canonical
    }

    pub fn original_target(&self) -> ParameterIndex {
        ParameterIndex::Effect { component: self.component, level: self.level }
    }

    fn swap_level(&self, c: usize) -> usize {
        let top = self.original.levels[self.component];
        if c == self.level {
            top
        } else if c == top {
            self.level
        } else {
            c
        }
    }

    pub fn to_canonical(&self, e: &Exposure) -> Exposure {
        let mut comps = vec![self.swap_level(e.0[self.component])];
        comps.extend(e.0.iter().enumerate().filter(|(k, _)| *k != self.component).map(|(_, &c)| c));
        Exposure(comps)
    }

    pub fn from_canonical(&self, e: &Exposure) -> Exposure {
        let mut comps = Vec::with_capacity(e.len());
        let mut rest = e.0[1..].iter();
        for k in 0..e.len() {
            if k == self.component {
                comps.push(self.swap_level(e.0[0]));
            } else {
                comps.push(*rest.next().expect("component count"));
            }
        }
        Exposure(comps)
    }
}
