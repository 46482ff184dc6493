//! Linear estimators and the unbiasedness constraints under additivity.
//!
//! A linear estimator of one unit's effect assigns a weight `w(e)` to every
//! exposure and reports `w(e_obs) · Y_obs`. Under additivity it is unbiased
//! for `θ_{1,m_1}` iff `C w = t`, where `C(θ, e) = p(e) · 1{θ ∈ e}` and `t`
//! selects the target row.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::design::ExposureDistribution;
use crate::error::{LueError, Result};
use crate::exposure::{
    enumerate_exposures, indicator_vector, EstimandRemap, Exposure, ExposureSpec, ParameterIndex,
};
use crate::linalg::{self, column_space_basis, least_squares, max_abs, numerical_rank};

/// Tolerance on the constraint residual for an estimator to count as unbiased.
pub const UNBIASED_TOL: f64 = 1e-10;
/// Tolerance on the reconstruction residual of a basis decomposition.
pub const SPAN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    TwoTerm,
    FourTerm,
    Zero,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimator {
    pub spec: ExposureSpec,
    pub weights: BTreeMap<Exposure, f64>,
    /// Estimated parameter; `None` for zero estimators.
    pub target: Option<ParameterIndex>,
    pub label: String,
    pub kind: EstimatorKind,
}

impl LinearEstimator {
    /// Estimator with the given weights; zero weights are dropped.
    pub fn new(
        spec: ExposureSpec,
        weights: impl IntoIterator<Item = (Exposure, f64)>,
        target: Option<ParameterIndex>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (e, w) in weights {
            spec.check(&e)?;
            *map.entry(e).or_insert(0.0) += w;
        }
        map.retain(|_, w| *w != 0.0);
        Ok(LinearEstimator { spec, weights: map, target, label: String::new(), kind: EstimatorKind::General })
    }

    fn with(mut self, kind: EstimatorKind, label: String) -> Self {
        self.kind = kind;
        self.label = label;
        self
    }

    pub fn weight(&self, e: &Exposure) -> f64 {
        self.weights.get(e).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> Vec<Exposure> {
        let mut s: Vec<Exposure> = self.weights.keys().cloned().collect();
        s.sort_by(|a, b| self.spec.canonical_cmp(a, b));
        s
    }

    /// Weights laid out along `order`.
    pub fn weight_vector(&self, order: &[Exposure]) -> DVector<f64> {
        DVector::from_iterator(order.len(), order.iter().map(|e| self.weight(e)))
    }

    pub fn scaled(&self, c: f64) -> LinearEstimator {
        let mut out = self.clone();
        out.weights.values_mut().for_each(|w| *w *= c);
        out.weights.retain(|_, w| *w != 0.0);
        out
    }

    /// True when the support is a chain under componentwise order.
    pub fn support_is_monotone(&self) -> bool {
        let mut s: Vec<&Exposure> = self.weights.keys().collect();
        s.sort_by(|a, b| b.cmp(a));
        s.windows(2).all(|w| w[0].dominates(w[1]))
    }

    /// One `e1,...,eK<TAB>weight` line per support exposure, canonical order.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for e in self.support() {
            let _ = writeln!(out, "{}\t{}", e.to_record(), self.weight(&e));
        }
        out
    }
}

/// Parses estimators written as record blocks. Blocks are separated by
/// blank lines; `#` lines are comments.
pub fn parse_records(spec: &ExposureSpec, text: &str) -> Result<Vec<LinearEstimator>> {
    let mut out = Vec::new();
    let mut current: Vec<(Exposure, f64)> = Vec::new();
    let flush = |current: &mut Vec<(Exposure, f64)>, out: &mut Vec<LinearEstimator>| -> Result<()> {
        if !current.is_empty() {
            out.push(LinearEstimator::new(spec.clone(), current.drain(..), Some(spec.target()))?);
        }
        Ok(())
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            flush(&mut current, &mut out)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (e, w) = line
            .split_once('\t')
            .ok_or_else(|| LueError::Parse(format!("line {}: expected `exposure<TAB>weight`", lineno + 1)))?;
        let w: f64 = w.trim().parse().map_err(|err| LueError::Parse(format!("line {}: {err}", lineno + 1)))?;
        current.push((Exposure::parse_record(e)?, w));
    }
    flush(&mut current, &mut out)?;
    Ok(out)
}

/// Dense constraint matrix with rows in parameter order and columns in
/// canonical exposure order.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    pub parameters: Vec<ParameterIndex>,
    pub exposures: Vec<Exposure>,
    pub matrix: DMatrix<f64>,
}

pub fn constraint_matrix(spec: &ExposureSpec, probs: &ExposureDistribution) -> Result<ConstraintMatrix> {
    check_distribution(spec, probs)?;
    let exposures = enumerate_exposures(spec);
    let mut matrix = DMatrix::zeros(spec.num_parameters(), exposures.len());
    for (c, e) in exposures.iter().enumerate() {
        let p = probs.positive_prob(e)?;
        for r in spec.active_parameters(e) {
            matrix[(r, c)] = p;
        }
    }
    Ok(ConstraintMatrix { parameters: spec.parameters(), exposures, matrix })
}

/// Unit vector on the row of `target` (all zeros for `None`).
pub fn target_vector(spec: &ExposureSpec, target: Option<ParameterIndex>) -> Result<DVector<f64>> {
    let mut t = DVector::zeros(spec.num_parameters());
    if let Some(p) = target {
        let pos = spec
            .parameter_position(p)
            .ok_or_else(|| LueError::Precondition(format!("{p} is not a parameter of {:?}", spec.levels())))?;
        t[pos] = 1.0;
    }
    Ok(t)
}

fn check_distribution(spec: &ExposureSpec, probs: &ExposureDistribution) -> Result<()> {
    if probs.spec() != spec {
        return Err(LueError::Precondition(format!(
            "distribution over {:?} used with spec {:?}",
            probs.spec().levels(),
            spec.levels()
        )));
    }
    Ok(())
}

/// `‖C w − t‖_∞` for the estimator's own target.
pub fn check_unbiased(est: &LinearEstimator, probs: &ExposureDistribution) -> f64 {
    constraint_residual(est, probs, est.target)
}

/// `‖C w − t‖_∞` for an explicit target; `None` means the zero target.
pub fn constraint_residual(
    est: &LinearEstimator,
    probs: &ExposureDistribution,
    target: Option<ParameterIndex>,
) -> f64 {
    let spec = &est.spec;
    let mut acc = vec![0.0; spec.num_parameters()];
    for (e, w) in &est.weights {
        let p = probs.prob(e);
        for r in spec.active_parameters(e) {
            acc[r] += p * w;
        }
    }
    if let Some(pos) = target.and_then(|t| spec.parameter_position(t)) {
        acc[pos] -= 1.0;
    }
    acc.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn evaluate_estimator(est: &LinearEstimator, observed_exposure: &Exposure, observed_outcome: f64) -> f64 {
    est.weight(observed_exposure) * observed_outcome
}

/// `HT_e = 1{E = e} Y / p(e)`, an unbiased estimator of `Y(e)`.
pub fn horvitz_thompson(spec: &ExposureSpec, e: &Exposure, probs: &ExposureDistribution) -> Result<LinearEstimator> {
    let p = probs.positive_prob(e)?;
    Ok(LinearEstimator::new(spec.clone(), [(e.clone(), 1.0 / p)], None)?
        .with(EstimatorKind::General, format!("HT{e}")))
}

fn tail_exposure(first: usize, tail: &[usize]) -> Exposure {
    let mut v = Vec::with_capacity(tail.len() + 1);
    v.push(first);
    v.extend_from_slice(tail);
    Exposure::new(v)
}

/// `HT_(m_1, tail) − HT_(0, tail)`.
pub fn build_two_term_alue(
    spec: &ExposureSpec,
    tail: &[usize],
    probs: &ExposureDistribution,
) -> Result<LinearEstimator> {
    check_distribution(spec, probs)?;
    if tail.len() + 1 != spec.num_components() {
        return Err(LueError::LengthMismatch { expected: spec.num_components() - 1, found: tail.len() });
    }
    let top = tail_exposure(spec.top_level(), tail);
    let bottom = tail_exposure(0, tail);
    spec.check(&top)?;
    let w = [(top.clone(), 1.0 / probs.positive_prob(&top)?), (bottom.clone(), -1.0 / probs.positive_prob(&bottom)?)];
    Ok(LinearEstimator::new(spec.clone(), w, Some(spec.target()))?
        .with(EstimatorKind::TwoTerm, format!("HT{top} - HT{bottom}")))
}

/// Index of the first non-zero component after the first, if any.
fn first_nonzero_tail(e: &Exposure) -> Option<usize> {
    (1..e.len()).find(|&k| e[k] != 0)
}

fn with_component(e: &Exposure, k: usize, value: usize) -> Exposure {
    let mut v = e.components().to_vec();
    v[k] = value;
    Exposure::new(v)
}

/// Four-term estimator anchored at `e = (e_1, tail)` with `0 < e_1 < m_1`.
///
/// Its support is `(m_1, tail)+, (e_1, tail)−, (e_1, tail′)+, (0, tail′)−`
/// where `tail′` zeroes the first non-zero tail component.
pub fn build_four_term_alue(
    spec: &ExposureSpec,
    e: &Exposure,
    probs: &ExposureDistribution,
) -> Result<LinearEstimator> {
    check_distribution(spec, probs)?;
    spec.check(e)?;
    if e[0] == 0 || e[0] >= spec.top_level() {
        return Err(LueError::Precondition(format!("first component of {e} must lie strictly inside 1..{}", spec.top_level())));
    }
    let k = first_nonzero_tail(e).ok_or_else(|| LueError::Precondition(format!("{e} has no non-zero tail component")))?;
    let a = with_component(e, 0, spec.top_level());
    let b = e.clone();
    let c = with_component(e, k, 0);
    let d = with_component(&c, 0, 0);
    let mut w = Vec::with_capacity(4);
    for (x, s) in [(a, 1.0), (b, -1.0), (c, 1.0), (d, -1.0)] {
        let p = probs.positive_prob(&x)?;
        w.push((x, s / p));
    }
    Ok(LinearEstimator::new(spec.clone(), w, Some(spec.target()))?
        .with(EstimatorKind::FourTerm, format!("four-term{e}")))
}

/// Zero estimator anchored at `e` with `e_1 = 0` and at least two non-zero
/// tail components: `HT_e − HT_(only k*) − HT_(k* removed) + HT_0`, where
/// `k*` is the first non-zero tail component.
pub fn build_zero_estimator(
    spec: &ExposureSpec,
    e: &Exposure,
    probs: &ExposureDistribution,
) -> Result<LinearEstimator> {
    check_distribution(spec, probs)?;
    spec.check(e)?;
    if e[0] != 0 || (1..e.len()).filter(|&k| e[k] != 0).count() < 2 {
        return Err(LueError::Precondition(format!(
            "{e} must have first component 0 and two non-zero tail components"
        )));
    }
    let k = first_nonzero_tail(e).expect("checked above");
    let mut only = spec.baseline().components().to_vec();
    only[k] = e[k];
    let only = Exposure::new(only);
    let rest = with_component(e, k, 0);
    let base = spec.baseline();
    let mut w = Vec::with_capacity(4);
    for (x, s) in [(e.clone(), 1.0), (only, -1.0), (rest, -1.0), (base, 1.0)] {
        let p = probs.positive_prob(&x)?;
        w.push((x, s / p));
    }
    Ok(LinearEstimator::new(spec.clone(), w, None)?.with(EstimatorKind::Zero, format!("zero{e}")))
}

fn nonzero_tail_count(e: &Exposure) -> usize {
    (1..e.len()).filter(|&k| e[k] != 0).count()
}

/// Exposures that index a MALUE: `e_1 = m_1`, or `0 < e_1 < m_1` with a
/// non-zero tail. Canonical order.
pub fn identifying_exposures(spec: &ExposureSpec) -> Vec<Exposure> {
    let m1 = spec.top_level();
    enumerate_exposures(spec)
        .into_iter()
        .filter(|e| e[0] == m1 || (e[0] > 0 && nonzero_tail_count(e) > 0))
        .collect()
}

pub fn build_malue_set(spec: &ExposureSpec, probs: &ExposureDistribution) -> Result<Vec<LinearEstimator>> {
    let m1 = spec.top_level();
    identifying_exposures(spec)
        .into_iter()
        .map(|e| {
            if e[0] == m1 {
                build_two_term_alue(spec, &e.components()[1..], probs)
            } else {
                build_four_term_alue(spec, &e, probs)
            }
        })
        .collect()
}

pub fn build_zero_estimators(spec: &ExposureSpec, probs: &ExposureDistribution) -> Result<Vec<LinearEstimator>> {
    enumerate_exposures(spec)
        .into_iter()
        .filter(|e| e[0] == 0 && nonzero_tail_count(e) >= 2)
        .map(|e| build_zero_estimator(spec, &e, probs))
        .collect()
}

/// MALUEs followed by zero estimators.
pub fn build_affine_basis(spec: &ExposureSpec, probs: &ExposureDistribution) -> Result<Vec<LinearEstimator>> {
    let mut basis = build_malue_set(spec, probs)?;
    basis.extend(build_zero_estimators(spec, probs)?);
    Ok(basis)
}

fn tail_product(spec: &ExposureSpec) -> usize {
    spec.levels()[1..].iter().map(|m| m + 1).product()
}

pub fn malue_count(spec: &ExposureSpec) -> usize {
    let t = tail_product(spec);
    t + (spec.top_level() - 1) * (t - 1)
}

pub fn zero_estimator_count(spec: &ExposureSpec) -> usize {
    tail_product(spec) - 1 - spec.levels()[1..].iter().sum::<usize>()
}

/// `|Θ̂| = ∏ (m_k + 1) − Σ m_k`.
pub fn basis_size(spec: &ExposureSpec) -> usize {
    spec.num_exposures() - spec.levels().iter().sum::<usize>()
}

/// Dimension of the affine space of LUEs: `∏ (m_k + 1) − Σ m_k − 1`.
pub fn lue_dimension(spec: &ExposureSpec) -> usize {
    basis_size(spec) - 1
}

/// Matrix whose columns are `[w_i; 1]` for each estimator, rows in
/// canonical exposure order followed by the constant row.
fn augmented_matrix(estimators: &[LinearEstimator]) -> DMatrix<f64> {
    let Some(first) = estimators.first() else { return DMatrix::zeros(0, 0) };
    let order = enumerate_exposures(&first.spec);
    let mut m = DMatrix::zeros(order.len() + 1, estimators.len());
    for (c, est) in estimators.iter().enumerate() {
        m.view_mut((0, c), (order.len(), 1)).copy_from(&est.weight_vector(&order));
        m[(order.len(), c)] = 1.0;
    }
    m
}

/// Numerical rank of the weight vectors augmented with a constant 1.
pub fn affine_rank(estimators: &[LinearEstimator]) -> usize {
    numerical_rank(&augmented_matrix(estimators))
}

/// Exact affine rank for estimators whose weights are integer multiples of
/// a common unit, as produced under uniform exposure probabilities.
pub fn affine_rank_exact(estimators: &[LinearEstimator]) -> Result<usize> {
    let Some(first) = estimators.first() else { return Ok(0) };
    let spec = &first.spec;
    let unit = estimators
        .iter()
        .flat_map(|e| e.weights.values())
        .fold(f64::INFINITY, |m, w| m.min(w.abs()));
    let cols = spec.num_exposures();
    let mut rows = Vec::with_capacity(estimators.len());
    for est in estimators {
        let mut row = Vec::with_capacity(est.weights.len() + 1);
        for (e, w) in &est.weights {
            let x = w / unit;
            let r = x.round();
            if (x - r).abs() > 1e-9 * r.abs().max(1.0) {
                return Err(LueError::Precondition(format!("weight {w} of {} is not a multiple of {unit}", est.label)));
            }
            row.push((spec.dense_index(e), r as i64));
        }
        row.push((cols, 1));
        rows.push(row);
    }
    Ok(linalg::modular_rank(&rows))
}

/// Coefficients of `est` in `basis`. The coefficients of the target-bearing
/// members sum to one; zero estimators enter linearly.
pub fn decompose_in_basis(est: &LinearEstimator, basis: &[LinearEstimator], probs: &ExposureDistribution) -> Result<Vec<f64>> {
    let residual = check_unbiased(est, probs);
    if residual > UNBIASED_TOL {
        return Err(LueError::Precondition(format!("estimator is not unbiased (residual {residual:e})")));
    }
    if basis.is_empty() {
        return Err(LueError::DegenerateBasis { rank: 0, expected: 1 });
    }
    let rank = affine_rank(basis);
    if rank < basis.len() {
        return Err(LueError::DegenerateBasis { rank, expected: basis.len() });
    }
    let order = enumerate_exposures(&est.spec);
    let n = order.len();
    let mut a = DMatrix::zeros(n + 1, basis.len());
    for (c, b) in basis.iter().enumerate() {
        a.view_mut((0, c), (n, 1)).copy_from(&b.weight_vector(&order));
        if b.target.is_some() {
            a[(n, c)] = 1.0;
        }
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(&est.weight_vector(&order));
    rhs[n] = 1.0;
    let coef = least_squares(&a, &rhs)?;
    let residual = max_abs(&(&a * &coef - &rhs));
    if residual > SPAN_TOL {
        return Err(LueError::NotInSpan { residual });
    }
    Ok(coef.iter().copied().collect())
}

/// `Σ c_i b_i` as an estimator of the basis target.
pub fn combine(spec: &ExposureSpec, basis: &[LinearEstimator], coef: &[f64]) -> Result<LinearEstimator> {
    let mut w: BTreeMap<Exposure, f64> = BTreeMap::new();
    for (b, c) in basis.iter().zip(coef) {
        for (e, x) in &b.weights {
            *w.entry(e.clone()).or_insert(0.0) += c * x;
        }
    }
    LinearEstimator::new(spec.clone(), w, Some(spec.target()))
}

/// A random LUE: a two-term ALUE plus a Gaussian vector projected onto the
/// null space of `C`, scaled by `scale`.
pub fn random_lue<R: Rng + ?Sized>(
    spec: &ExposureSpec,
    probs: &ExposureDistribution,
    scale: f64,
    rng: &mut R,
) -> Result<LinearEstimator> {
    let cm = constraint_matrix(spec, probs)?;
    let q = column_space_basis(&cm.matrix.transpose());
    let r = DVector::from_iterator(cm.exposures.len(), (0..cm.exposures.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let null = &r - &q * (q.transpose() * &r);
    let base = build_two_term_alue(spec, &vec![0; spec.num_components() - 1], probs)?;
    let w = base.weight_vector(&cm.exposures) + null * scale;
    let est = LinearEstimator::new(spec.clone(), cm.exposures.iter().cloned().zip(w.iter().copied()), Some(spec.target()))?;
    Ok(est.with(EstimatorKind::General, "random".into()))
}

/// Outcome of [`check_support_condition`].
#[derive(Debug, Clone, PartialEq)]
pub enum SupportCheck {
    Valid,
    Invalid(String),
}

impl SupportCheck {
    pub fn is_valid(&self) -> bool {
        matches!(self, SupportCheck::Valid)
    }
}

/// Whether `support` can carry a minimum-integrated-variance LUE: some LUE
/// lives on it, and no exposure outside it has an indicator vector in the
/// span of the support's indicators.
pub fn check_support_condition(
    support: &[Exposure],
    spec: &ExposureSpec,
    probs: &ExposureDistribution,
) -> Result<SupportCheck> {
    if support.is_empty() {
        return Ok(SupportCheck::Invalid("empty support".into()));
    }
    for e in support {
        if !spec.contains(e) {
            return Ok(SupportCheck::Invalid(format!("{e} is not in the exposure set")));
        }
        if probs.prob(e) <= 0.0 {
            return Ok(SupportCheck::Invalid(format!("{e} has zero probability")));
        }
    }
    let rows = spec.num_parameters();
    let t = target_vector(spec, Some(spec.target()))?;
    let mut cs = DMatrix::zeros(rows, support.len());
    let mut vs = DMatrix::zeros(rows, support.len());
    for (c, e) in support.iter().enumerate() {
        let v = indicator_vector(spec, e)?;
        let p = probs.prob(e);
        for r in 0..rows {
            vs[(r, c)] = v[r];
            cs[(r, c)] = v[r] * p;
        }
    }
    let rank_c = numerical_rank(&cs);
    if numerical_rank(&cs.clone().insert_column(support.len(), 0.0).set_column_with(support.len(), &t)) > rank_c {
        return Ok(SupportCheck::Invalid("no linear unbiased estimator has this support".into()));
    }
    let rank_v = numerical_rank(&vs);
    for e in enumerate_exposures(spec) {
        if support.contains(&e) {
            continue;
        }
        let v = DVector::from_vec(indicator_vector(spec, &e)?);
        let aug = vs.clone().insert_column(support.len(), 0.0).set_column_with(support.len(), &v);
        if numerical_rank(&aug) == rank_v {
            return Ok(SupportCheck::Invalid(format!("indicator of {e} lies in the span of the support")));
        }
    }
    Ok(SupportCheck::Valid)
}

trait SetColumn {
    fn set_column_with(self, c: usize, v: &DVector<f64>) -> Self;
}

impl SetColumn for DMatrix<f64> {
    fn set_column_with(mut self, c: usize, v: &DVector<f64>) -> Self {
        self.set_column(c, v);
        self
    }
}

/// Affine basis for an arbitrary effect parameter `θ_{k,j}` of `spec`.
///
/// The estimand is moved to `θ_{1,m_1}` by relabelling, the basis is built
/// there and mapped back.
pub fn build_affine_basis_for(
    spec: &ExposureSpec,
    target: ParameterIndex,
    probs: &ExposureDistribution,
) -> Result<Vec<LinearEstimator>> {
    check_distribution(spec, probs)?;
    let remap = EstimandRemap::new(spec, target)?;
    let cspec = remap.canonical_spec().clone();
    let mut cprobs = vec![0.0; cspec.num_exposures()];
    for i in 0..spec.num_exposures() {
        let e = spec.exposure_at(i);
        cprobs[cspec.dense_index(&remap.to_canonical(&e))] = probs.dense()[i];
    }
    let cprobs = ExposureDistribution::new(cspec.clone(), cprobs)?;
    build_affine_basis(&cspec, &cprobs)?
        .into_iter()
        .map(|b| {
            let w = b.weights.iter().map(|(e, x)| (remap.from_canonical(e), *x));
            let t = b.target.map(|_| target);
            Ok(LinearEstimator::new(spec.clone(), w, t)?.with(b.kind, b.label))
        })
        .collect()
}
