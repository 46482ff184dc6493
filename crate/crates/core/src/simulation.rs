//! Network-interference simulations: potential outcomes, the estimator
//! families compared in the experiments, and IMSE over designs.
//!
//! Every unit `i` with in-degree `d_i ≥ 1` has exposure set
//! `{0..=d_i} × {0, 1}` (treated in-degree, own treatment) and the estimand is
//! the average of `θ_{1,d_i}` over those units.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{allocations, bernoulli_distribution, sample_allocations, AllocationMode, Design};
use crate::error::{LueError, Result};
use crate::estimators::{build_two_term_alue, LinearEstimator};
use crate::exposure::{Exposure, ExposureSpec};
use crate::mivlue::{solve_mivlue, PriorSpec};
use crate::network::{gen_erdos_renyi_directed, gen_k_regular_directed, Network};

/// Ridge added to the dilated prior covariance.
pub const DILATED_RIDGE: f64 = 1e-8;

/// Outcome parameters of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitParameters {
    pub alpha: f64,
    /// Direct effect `θ_{2,1}`.
    pub direct: f64,
    /// `θ_{1,d}` for `d = 1..=d_i`, stored at index `d - 1`.
    pub interference: Vec<f64>,
    /// `Δ_d` for `d = 1..=d_i`; `None` under additivity.
    pub interaction: Option<Vec<f64>>,
}

impl UnitParameters {
    pub fn degree(&self) -> usize {
        self.interference.len()
    }

    /// `θ_{1,d_i}`, or `None` for an isolated unit.
    pub fn estimand(&self) -> Option<f64> {
        self.interference.last().copied()
    }
}

/// `Y(d, z) = α + θ_{2,1} z + θ_{1,d} 1{d > 0} + Δ_d z 1{d > 0}`.
pub fn potential_outcome(params: &UnitParameters, e: &Exposure) -> Result<f64> {
    let (d, z) = match e.components() {
        &[d, z] if z <= 1 => (d, z),
        _ => return Err(LueError::InvalidSpec(format!("{e} is not a (treated degree, own treatment) exposure"))),
    };
    if d > params.degree() {
        return Err(LueError::ExposureOutOfRange { exposure: e.to_string(), levels: vec![params.degree(), 1] });
    }
    Ok(outcome_unchecked(params, d, z == 1))
}

fn outcome_unchecked(params: &UnitParameters, d: usize, treated: bool) -> f64 {
    let mut y = params.alpha;
    if treated {
        y += params.direct;
    }
    if d > 0 {
        y += params.interference[d - 1];
        if treated {
            if let Some(delta) = &params.interaction {
                y += delta[d - 1];
            }
        }
    }
    y
}

/// Distribution of the outcome parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeDistribution {
    /// `α, θ_{2,1} ~ N(0,1)`, `θ_{1,d} ~ N((d/d_i) μ₁, 1)`.
    Independent { mu1: f64 },
    /// `α ~ N(0,1)`, `θ_{2,1} = α`, `θ_{1,d} = (d/d_i) η₁ α`.
    Dilated { eta1: f64 },
    /// Independent plus `Δ_d ~ N((d/d_i) δ₁, 1)`; `Δ ≡ 0` when `δ₁ = 0`.
    Interaction { mu1: f64, delta1: f64 },
}

impl OutcomeDistribution {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeDistribution::Independent { .. } => "independent",
            OutcomeDistribution::Dilated { .. } => "dilated",
            OutcomeDistribution::Interaction { .. } => "interaction",
        }
    }

    /// `μ₁` or `η₁`.
    pub fn scale(&self) -> f64 {
        match *self {
            OutcomeDistribution::Independent { mu1 } | OutcomeDistribution::Interaction { mu1, .. } => mu1,
            OutcomeDistribution::Dilated { eta1 } => eta1,
        }
    }

    pub fn delta1(&self) -> f64 {
        match *self {
            OutcomeDistribution::Interaction { delta1, .. } => delta1,
            _ => 0.0,
        }
    }
}

const STREAM_PARAMETERS: u64 = 0;
const STREAM_INTERACTION: u64 = 1;
const STREAM_ALLOCATIONS: u64 = 2;
const STREAMS_PER_DRAW: u64 = 4;

/// Independent generator for one purpose within one draw.
pub fn draw_rng(master_seed: u64, draw: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(draw as u64 * STREAMS_PER_DRAW + purpose);
    rng
}

fn network_rng_seed(master_seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(u64::MAX);
    rng.gen()
}

/// Parameters of every unit for draw `draw` of `master_seed`.
///
/// `Δ` comes from its own stream, so the other parameters do not depend on
/// whether interaction is switched on.
pub fn sample_parameters_for_draw(
    network: &Network,
    distribution: &OutcomeDistribution,
    master_seed: u64,
    draw: usize,
) -> Vec<UnitParameters> {
    let mut rng = draw_rng(master_seed, draw, STREAM_PARAMETERS);
    let mut drng = draw_rng(master_seed, draw, STREAM_INTERACTION);
    let normal = |r: &mut ChaCha8Rng| r.sample::<f64, _>(StandardNormal);
    (0..network.n())
        .map(|i| {
            let di = network.in_degree(i);
            let frac = |d: usize| d as f64 / di as f64;
            match *distribution {
                OutcomeDistribution::Dilated { eta1 } => {
                    let alpha = normal(&mut rng);
                    UnitParameters {
                        alpha,
                        direct: alpha,
                        interference: (1..=di).map(|d| frac(d) * eta1 * alpha).collect(),
                        interaction: None,
                    }
                }
                OutcomeDistribution::Independent { mu1 } | OutcomeDistribution::Interaction { mu1, .. } => {
                    let alpha = normal(&mut rng);
                    let direct = normal(&mut rng);
                    let interference = (1..=di).map(|d| frac(d) * mu1 + normal(&mut rng)).collect();
                    let delta1 = distribution.delta1();
                    let interaction = (delta1 > 0.0)
                        .then(|| (1..=di).map(|d| frac(d) * delta1 + normal(&mut drng)).collect());
                    UnitParameters { alpha, direct, interference, interaction }
                }
            }
        })
        .collect()
}

pub fn sample_parameters(network: &Network, distribution: &OutcomeDistribution, seed: u64) -> Vec<UnitParameters> {
    sample_parameters_for_draw(network, distribution, seed, 0)
}

/// The estimators compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorFamily {
    /// `HT(d_i, 0) − HT(0, 0)`.
    Ht0,
    /// `HT(d_i, 1) − HT(0, 1)`.
    Ht1,
    HtAvg,
    /// MIV LUE under independent unit-variance priors.
    MInd,
    /// MIV LUE under the dilated prior with scale `η₁`.
    MDil { eta1: f64 },
}

impl EstimatorFamily {
    pub fn all() -> Vec<EstimatorFamily> {
        vec![
            EstimatorFamily::Ht0,
            EstimatorFamily::Ht1,
            EstimatorFamily::HtAvg,
            EstimatorFamily::MInd,
            EstimatorFamily::MDil { eta1: 1.0 },
        ]
    }
}

impl fmt::Display for EstimatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorFamily::Ht0 => write!(f, "HT0"),
            EstimatorFamily::Ht1 => write!(f, "HT1"),
            EstimatorFamily::HtAvg => write!(f, "HTAvg"),
            EstimatorFamily::MInd => write!(f, "MInd"),
            EstimatorFamily::MDil { eta1 } if *eta1 == 1.0 => write!(f, "MDil"),
            EstimatorFamily::MDil { eta1 } => write!(f, "MDil({eta1})"),
        }
    }
}

impl std::str::FromStr for EstimatorFamily {
    type Err = LueError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "HT0" => return Ok(EstimatorFamily::Ht0),
            "HT1" => return Ok(EstimatorFamily::Ht1),
            "HTAvg" => return Ok(EstimatorFamily::HtAvg),
            "MInd" => return Ok(EstimatorFamily::MInd),
            "MDil" => return Ok(EstimatorFamily::MDil { eta1: 1.0 }),
            _ => {}
        }
        s.strip_prefix("MDil(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|v| v.trim().parse().ok())
            .map(|eta1| EstimatorFamily::MDil { eta1 })
            .ok_or_else(|| LueError::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

impl TryFrom<String> for EstimatorFamily {
    type Error = LueError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EstimatorFamily> for String {
    fn from(f: EstimatorFamily) -> String {
        f.to_string()
    }
}

/// Prior over `(α, θ_{1,1..d_i}, θ_{2,1})` for the dilated MIV LUE: the
/// rank-one factor `(1, η₁/d_i, …, η₁, 1)` plus a small ridge.
pub fn dilated_prior(degree: usize, eta1: f64) -> Result<PriorSpec> {
    let dim = degree + 2;
    let ridge = DILATED_RIDGE.sqrt();
    let mut f = DMatrix::zeros(dim, dim + 1);
    f[(0, 0)] = 1.0;
    for d in 1..=degree {
        f[(d, 0)] = d as f64 / degree as f64 * eta1;
    }
    f[(dim - 1, 0)] = 1.0;
    for i in 0..dim {
        f[(i, i + 1)] = ridge;
    }
    PriorSpec::gram(f)
}

/// Estimator of one unit's `θ_{1,d_i}` under `family`.
pub fn unit_estimator(family: EstimatorFamily, degree: usize, p_treat: f64) -> Result<LinearEstimator> {
    let probs = bernoulli_distribution(degree, p_treat)?;
    let spec = probs.spec().clone();
    match family {
        EstimatorFamily::Ht0 => build_two_term_alue(&spec, &[0], &probs),
        EstimatorFamily::Ht1 => build_two_term_alue(&spec, &[1], &probs),
        EstimatorFamily::HtAvg => {
            let a = build_two_term_alue(&spec, &[0], &probs)?;
            let b = build_two_term_alue(&spec, &[1], &probs)?;
            let w = a.weights.into_iter().chain(b.weights).map(|(e, w)| (e, 0.5 * w));
            LinearEstimator::new(spec.clone(), w, Some(spec.target()))
        }
        EstimatorFamily::MInd => Ok(solve_mivlue(&spec, &probs, &PriorSpec::identity(&spec))?.estimator),
        EstimatorFamily::MDil { eta1 } => Ok(solve_mivlue(&spec, &probs, &dilated_prior(degree, eta1)?)?.estimator),
    }
}

/// Per-unit estimators of one family, with dense weight tables indexed by
/// `2 d + z`. Isolated units have no estimator.
#[derive(Debug, Clone)]
pub struct FamilyEstimators {
    pub family: EstimatorFamily,
    pub units: Vec<Option<LinearEstimator>>,
    tables: Vec<Vec<f64>>,
}

impl FamilyEstimators {
    pub fn weight(&self, unit: usize, d: usize, z: u8) -> f64 {
        self.tables[unit].get(2 * d + usize::from(z)).copied().unwrap_or(0.0)
    }
}

pub fn build_estimator_family(family: EstimatorFamily, network: &Network, p_treat: f64) -> Result<FamilyEstimators> {
    let mut by_degree: BTreeMap<usize, LinearEstimator> = BTreeMap::new();
    let mut units = Vec::with_capacity(network.n());
    let mut tables = Vec::with_capacity(network.n());
    for i in 0..network.n() {
        let di = network.in_degree(i);
        if di == 0 {
            units.push(None);
            tables.push(Vec::new());
            continue;
        }
        if !by_degree.contains_key(&di) {
            by_degree.insert(di, unit_estimator(family, di, p_treat)?);
        }
        let est = by_degree[&di].clone();
        let spec = &est.spec;
        let mut table = vec![0.0; spec.num_exposures()];
        for (e, w) in &est.weights {
            table[spec.dense_index(e)] = *w;
        }
        units.push(Some(est));
        tables.push(table);
    }
    Ok(FamilyEstimators { family, units, tables })
}

/// Units whose estimand is defined (in-degree at least one).
pub fn included_units(network: &Network) -> Vec<usize> {
    (0..network.n()).filter(|&i| network.in_degree(i) > 0).collect()
}

/// Average of the per-unit estimates over units with positive in-degree.
pub fn estimate_average_effect(
    family: &FamilyEstimators,
    network: &Network,
    allocation: &[u8],
    params: &[UnitParameters],
) -> Result<f64> {
    if allocation.len() != network.n() {
        return Err(LueError::LengthMismatch { expected: network.n(), found: allocation.len() });
    }
    if params.len() != network.n() {
        return Err(LueError::LengthMismatch { expected: network.n(), found: params.len() });
    }
    let units = included_units(network);
    if units.is_empty() {
        return Err(LueError::InvalidNetwork("every unit has in-degree 0".into()));
    }
    Ok(estimate_unchecked(family, network, allocation, params, &units))
}

fn estimate_unchecked(
    family: &FamilyEstimators,
    network: &Network,
    allocation: &[u8],
    params: &[UnitParameters],
    units: &[usize],
) -> f64 {
    let mut sum = 0.0;
    for &i in units {
        let d = network.treated_in_degree(i, allocation);
        let z = allocation[i];
        let w = family.weight(i, d, z);
        if w != 0.0 {
            sum += w * outcome_unchecked(&params[i], d, z != 0);
        }
    }
    sum / units.len() as f64
}

/// Average estimand `θ̄_{1,d_i}` over included units.
pub fn true_average_effect(params: &[UnitParameters]) -> f64 {
    let vals: Vec<f64> = params.iter().filter_map(UnitParameters::estimand).collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Moments of one estimator over the allocations of one draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    pub mse: f64,
}

/// Weighted moments of every family over `allocs` for fixed parameters.
pub fn draw_statistics(
    families: &[FamilyEstimators],
    network: &Network,
    params: &[UnitParameters],
    allocs: &[(Vec<u8>, f64)],
) -> Result<Vec<DrawStats>> {
    let units = included_units(network);
    if units.is_empty() {
        return Err(LueError::InvalidNetwork("every unit has in-degree 0".into()));
    }
    let truth = true_average_effect(params);
    let total: f64 = allocs.iter().map(|(_, w)| w).sum();
    Ok(families
        .iter()
        .map(|fam| {
            let est: Vec<f64> = allocs.iter().map(|(z, _)| estimate_unchecked(fam, network, z, params, &units)).collect();
            let mean = allocs.iter().zip(&est).map(|((_, w), x)| w * x).sum::<f64>() / total;
            let variance =
                allocs.iter().zip(&est).map(|((_, w), x)| w * (x - mean) * (x - mean)).sum::<f64>() / total;
            let bias = mean - truth;
            DrawStats { mean, variance, bias, mse: variance + bias * bias }
        })
        .collect())
}

/// How the experiment network is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSpec {
    KRegular { n: usize, k: usize },
    ErdosRenyi { n: usize, p_edge: f64 },
    EdgeList { path: PathBuf },
}

impl NetworkSpec {
    pub fn build(&self, master_seed: u64) -> Result<Network> {
        let seed = network_rng_seed(master_seed);
        match self {
            NetworkSpec::KRegular { n, k } => gen_k_regular_directed(*n, *k, seed),
            NetworkSpec::ErdosRenyi { n, p_edge } => gen_erdos_renyi_directed(*n, *p_edge, seed),
            NetworkSpec::EdgeList { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| LueError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
                Network::parse_edge_list(&text)
            }
        }
    }

    /// `k` for regular graphs, `p_edge` for Erdős–Rényi, empty otherwise.
    pub fn k_or_p(&self) -> String {
        match self {
            NetworkSpec::KRegular { k, .. } => k.to_string(),
            NetworkSpec::ErdosRenyi { p_edge, .. } => p_edge.to_string(),
            NetworkSpec::EdgeList { .. } => String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPlan {
    Exhaustive,
    /// Fresh i.i.d. allocations per draw, shared by all estimators.
    Sample { count: usize },
}

fn default_p_treat() -> f64 {
    0.5
}

fn default_estimators() -> Vec<EstimatorFamily> {
    EstimatorFamily::all()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    #[serde(default = "default_p_treat")]
    pub p_treat: f64,
    pub distribution: OutcomeDistribution,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorFamily>,
    pub draws: usize,
    pub allocation: AllocationPlan,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(LueError::InvalidConfig("draws must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(LueError::InvalidConfig("no estimators requested".into()));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(LueError::InvalidConfig(format!("p_treat {} must lie in (0, 1)", self.p_treat)));
        }
        if let AllocationPlan::Sample { count: 0 } = self.allocation {
            return Err(LueError::InvalidConfig("sample count must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn n(&self) -> Option<usize> {
        match &self.network {
            NetworkSpec::KRegular { n, .. } | NetworkSpec::ErdosRenyi { n, .. } => Some(*n),
            NetworkSpec::EdgeList { .. } => None,
        }
    }
}

/// Hex SHA-256 of the compact JSON serialisation of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("value serialises");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// IMSE summary of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorFamily,
    pub imse: f64,
    pub bias2: f64,
    pub variance: f64,
    /// Monte-Carlo standard error of `imse` over parameter draws.
    pub se: f64,
    pub per_draw_mse: Vec<f64>,
    pub per_draw_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImseReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub n: usize,
    pub included_units: usize,
    pub excluded_units: usize,
    pub exact: bool,
    pub estimators: Vec<EstimatorSummary>,
    pub runtime_secs: f64,
}

/// One CSV row of an IMSE report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImseRow {
    pub estimator: String,
    pub n: usize,
    pub k_or_p: String,
    pub distribution: String,
    pub mu1_or_eta1: f64,
    pub delta1: f64,
    pub imse: f64,
    pub bias2: f64,
    pub variance: f64,
    pub se: f64,
    pub seed: u64,
}

impl ImseReport {
    pub fn summary(&self, family: EstimatorFamily) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == family)
    }

    pub fn rows(&self) -> Vec<ImseRow> {
        self.estimators
            .iter()
            .map(|s| ImseRow {
                estimator: s.estimator.to_string(),
                n: self.n,
                k_or_p: self.config.network.k_or_p(),
                distribution: self.config.distribution.name().to_string(),
                mu1_or_eta1: self.config.distribution.scale(),
                delta1: self.config.distribution.delta1(),
                imse: s.imse,
                bias2: s.bias2,
                variance: s.variance,
                se: s.se,
                seed: self.seed,
            })
            .collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean of `xs`.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Mean and standard error of the per-draw differences `a − b`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    (mean(&d), standard_error(&d))
}

/// Runs every parameter draw of `config` and summarises the IMSE.
pub fn compute_imse(config: &ExperimentConfig) -> Result<ImseReport> {
    config.validate()?;
    let start = Instant::now();
    let network = config.network.build(config.seed)?;
    let included = included_units(&network).len();
    if included == 0 {
        return Err(LueError::InvalidNetwork("every unit has in-degree 0".into()));
    }
    if included < network.n() {
        log::info!("excluding {} units with in-degree 0", network.n() - included);
    }
    let design = Design::bernoulli(network.n(), config.p_treat)?;
    let families = config
        .estimators
        .iter()
        .map(|f| build_estimator_family(*f, &network, config.p_treat))
        .collect::<Result<Vec<_>>>()?;
    let exhaustive = match config.allocation {
        AllocationPlan::Exhaustive => Some(allocations(&design, &AllocationMode::Exhaustive)?),
        AllocationPlan::Sample { .. } => None,
    };
    let per_draw: Vec<Vec<DrawStats>> = (0..config.draws)
        .into_par_iter()
        .map(|draw| {
            let params = sample_parameters_for_draw(&network, &config.distribution, config.seed, draw);
            match (&exhaustive, config.allocation) {
                (Some(all), _) => draw_statistics(&families, &network, &params, all),
                (None, AllocationPlan::Sample { count }) => {
                    let mut rng = draw_rng(config.seed, draw, STREAM_ALLOCATIONS);
                    let sample = sample_allocations(&design, count, &mut rng);
                    draw_statistics(&families, &network, &params, &sample)
                }
                (None, AllocationPlan::Exhaustive) => unreachable!("exhaustive allocations are precomputed"),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let estimators = config
        .estimators
        .iter()
        .enumerate()
        .map(|(k, fam)| {
            let mse: Vec<f64> = per_draw.iter().map(|d| d[k].mse).collect();
            let bias: Vec<f64> = per_draw.iter().map(|d| d[k].bias).collect();
            let var: Vec<f64> = per_draw.iter().map(|d| d[k].variance).collect();
            EstimatorSummary {
                estimator: *fam,
                imse: mean(&mse),
                bias2: bias.iter().map(|b| b * b).sum::<f64>() / bias.len() as f64,
                variance: mean(&var),
                se: standard_error(&mse),
                per_draw_mse: mse,
                per_draw_bias: bias,
            }
        })
        .collect();
    Ok(ImseReport {
        config: config.clone(),
        config_hash: config.hash(),
        seed: config.seed,
        n: network.n(),
        included_units: included,
        excluded_units: network.n() - included,
        exact: exhaustive.is_some(),
        estimators,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Spec of a unit with in-degree `degree`.
pub fn unit_exposure_spec(degree: usize) -> Result<ExposureSpec> {
    ExposureSpec::new(vec![degree, 1])
}
