//! Minimum integrated variance linear unbiased estimators.
//!
//! With a mean-zero prior on `Θ`, the integrated variance of an LUE is
//! `Σ_e p(e) w(e)² Var(Y(e))` up to a constant, where
//! `Var(Y(e)) = v_eᵀ Σ v_e`. Minimising it under `C w = t` gives the block
//! system `[[W, Cᵀ], [C, 0]] [w; λ] = [0; t]` with `W = diag(p · Var)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::design::ExposureDistribution;
use crate::error::{LueError, Result};
use crate::estimators::{check_support_condition, target_vector, LinearEstimator, SupportCheck};
use crate::exposure::{enumerate_exposures, indicator_vector, Exposure, ExposureSpec, ParameterIndex};
use crate::linalg::{column_space_basis, numerical_rank, singular_values};

/// Condition number above which a solution carries a warning.
pub const CONDITION_WARN: f64 = 1e12;

/// Prior covariance over `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Full symmetric matrix.
    Dense(DMatrix<f64>),
    /// `Σ = F Fᵀ` for a `|Θ| × r` factor `F`. Quadratic forms are evaluated
    /// as `‖Fᵀ v‖²`, which stays accurate when `Σ` is scaled by a large
    /// dilation and `v` is close to its null space.
    Gram(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub covariance: Covariance,
    /// Small positive-definite `B` added after dilation.
    pub perturbation: Option<DMatrix<f64>>,
    /// Scalar `η` multiplying `Σ`.
    pub dilation: Option<f64>,
    /// Prior mean of `Θ`; only used by the shifted estimator.
    pub mean: Option<DVector<f64>>,
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(LueError::InvalidPrior(format!("{what} must be square")));
    }
    if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
        return Err(LueError::InvalidPrior(format!("{what} is not symmetric")));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LueError::InvalidPrior(format!("{what} has non-finite entries")));
    }
    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
    if min < -1e-10 {
        return Err(LueError::InvalidPrior(format!("{what} has eigenvalue {min:e} < 0")));
    }
    Ok(())
}

impl PriorSpec {
    pub fn dense(sigma: DMatrix<f64>) -> Result<Self> {
        check_psd(&sigma, "covariance")?;
        Ok(PriorSpec { covariance: Covariance::Dense(sigma), perturbation: None, dilation: None, mean: None })
    }

    /// Independent parameters with the given variances.
    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(LueError::InvalidPrior(format!("variance {v} must be finite and non-negative")));
        }
        let f = DMatrix::from_diagonal(&DVector::from_iterator(variances.len(), variances.iter().map(|v| v.sqrt())));
        Ok(PriorSpec { covariance: Covariance::Gram(f), perturbation: None, dilation: None, mean: None })
    }

    pub fn identity(spec: &ExposureSpec) -> Self {
        PriorSpec::diagonal(&vec![1.0; spec.num_parameters()]).expect("unit variances are valid")
    }

    pub fn gram(factor: DMatrix<f64>) -> Result<Self> {
        if factor.iter().any(|x| !x.is_finite()) {
            return Err(LueError::InvalidPrior("covariance factor has non-finite entries".into()));
        }
        Ok(PriorSpec { covariance: Covariance::Gram(factor), perturbation: None, dilation: None, mean: None })
    }

    pub fn with_perturbation(mut self, b: DMatrix<f64>) -> Result<Self> {
        check_psd(&b, "perturbation")?;
        if b.iter().any(|&x| x <= 0.0) {
            return Err(LueError::InvalidPrior("perturbation entries must be positive".into()));
        }
        self.perturbation = Some(b);
        Ok(self)
    }

    pub fn with_dilation(mut self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(LueError::InvalidPrior(format!("dilation {eta} must be positive")));
        }
        self.dilation = Some(eta);
        Ok(self)
    }

    pub fn with_mean(mut self, mean: DVector<f64>) -> Self {
        self.mean = Some(mean);
        self
    }

    pub fn dimension(&self) -> usize {
        match &self.covariance {
            Covariance::Dense(m) | Covariance::Gram(m) => m.nrows(),
        }
    }

    /// The effective covariance `η Σ + B` as a dense matrix.
    pub fn effective_covariance(&self) -> DMatrix<f64> {
        let base = match &self.covariance {
            Covariance::Dense(m) => m.clone(),
            Covariance::Gram(f) => f * f.transpose(),
        };
        let mut s = base * self.dilation.unwrap_or(1.0);
        if let Some(b) = &self.perturbation {
            s += b;
        }
        s
    }

    /// `vᵀ (η Σ + B) v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> Result<f64> {
        let dim = self.dimension();
        if v.len() != dim {
            return Err(LueError::LengthMismatch { expected: dim, found: v.len() });
        }
        let base = match &self.covariance {
            Covariance::Dense(m) => v.dot(&(m * v)),
            Covariance::Gram(f) => (f.transpose() * v).norm_squared(),
        };
        let mut q = base * self.dilation.unwrap_or(1.0);
        if let Some(b) = &self.perturbation {
            q += v.dot(&(b * v));
        }
        Ok(q)
    }
}

/// `Var(Y(e)) = v_eᵀ Σ̃ v_e`.
pub fn outcome_variance(spec: &ExposureSpec, prior: &PriorSpec, e: &Exposure) -> Result<f64> {
    let v = DVector::from_vec(indicator_vector(spec, e)?);
    prior.quadratic_form(&v)
}

/// Assembled block system.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Exposures of the weight rows, in order.
    pub exposures: Vec<Exposure>,
    /// Parameters of the multiplier rows, in order.
    pub parameters: Vec<ParameterIndex>,
    pub probabilities: Vec<f64>,
    pub variances: Vec<f64>,
}

impl KktSystem {
    pub fn num_weights(&self) -> usize {
        self.exposures.len()
    }
}

/// System over the full exposure set in canonical order.
pub fn assemble_system(spec: &ExposureSpec, probs: &ExposureDistribution, prior: &PriorSpec) -> Result<KktSystem> {
    assemble_system_on(spec, probs, prior, &enumerate_exposures(spec), &spec.parameters())
}

/// System restricted to `exposures` and the multiplier rows `parameters`.
pub fn assemble_system_on(
    spec: &ExposureSpec,
    probs: &ExposureDistribution,
    prior: &PriorSpec,
    exposures: &[Exposure],
    parameters: &[ParameterIndex],
) -> Result<KktSystem> {
    if prior.dimension() != spec.num_parameters() {
        return Err(LueError::LengthMismatch { expected: spec.num_parameters(), found: prior.dimension() });
    }
    let ne = exposures.len();
    let nr = parameters.len();
    let rows: Vec<usize> = parameters
        .iter()
        .map(|p| spec.parameter_position(*p).ok_or_else(|| LueError::Precondition(format!("{p} is not a parameter"))))
        .collect::<Result<_>>()?;
    let mut matrix = DMatrix::zeros(ne + nr, ne + nr);
    let mut probabilities = Vec::with_capacity(ne);
    let mut variances = Vec::with_capacity(ne);
    for (i, e) in exposures.iter().enumerate() {
        let p = probs.positive_prob(e)?;
        let var = outcome_variance(spec, prior, e)?;
        if !(var > 0.0) {
            return Err(LueError::ZeroVariance(e.to_string()));
        }
        matrix[(i, i)] = p * var;
        let active = spec.active_parameters(e);
        for (r, pos) in rows.iter().enumerate() {
            if active.contains(pos) {
                matrix[(i, ne + r)] = p;
                matrix[(ne + r, i)] = p;
            }
        }
        probabilities.push(p);
        variances.push(var);
    }
    let t = target_vector(spec, Some(spec.target()))?;
    let mut rhs = DVector::zeros(ne + nr);
    for (r, pos) in rows.iter().enumerate() {
        rhs[ne + r] = t[*pos];
    }
    Ok(KktSystem {
        matrix,
        rhs,
        exposures: exposures.to_vec(),
        parameters: parameters.to_vec(),
        probabilities,
        variances,
    })
}

/// One exposure of a solved estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub exposure: Exposure,
    pub weight: f64,
    pub variance: f64,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct MivlueSolution {
    pub estimator: LinearEstimator,
    pub rows: Vec<WeightRow>,
    /// `λ(θ)` in parameter layout order, signed so that
    /// `w(e) = Σ_{θ ∈ e} λ(θ) / Var(Y(e))`. Rows dropped as redundant are 0.
    pub multipliers: Vec<f64>,
    /// `Σ_e p(e) w(e)² Var(Y(e))`.
    pub integrated_variance: f64,
    pub condition: f64,
    pub warning: Option<String>,
}

impl MivlueSolution {
    /// `max_e |w(e) − Σ_{θ ∈ e} λ(θ) / Var(Y(e))|`.
    pub fn stationarity_residual(&self) -> f64 {
        let spec = &self.estimator.spec;
        self.rows
            .iter()
            .map(|r| {
                let num: f64 = spec.active_parameters(&r.exposure).iter().map(|&k| self.multipliers[k]).sum();
                (r.weight - num / r.variance).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn solve_dense(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let lu = matrix.clone().lu();
    let mut x = lu.solve(rhs).ok_or_else(|| LueError::Singular("block matrix is singular".into()))?;
    for _ in 0..3 {
        let r = rhs - matrix * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LueError::Singular("solution is not finite".into()));
    }
    let sv = singular_values(matrix);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((x, if min > 0.0 { max / min } else { f64::INFINITY }))
}

/// Solves an assembled system.
pub fn solve_system(spec: &ExposureSpec, sys: &KktSystem) -> Result<MivlueSolution> {
    let (x, condition) = solve_dense(&sys.matrix, &sys.rhs)?;
    let ne = sys.num_weights();
    let mut multipliers = vec![0.0; spec.num_parameters()];
    for (r, p) in sys.parameters.iter().enumerate() {
        multipliers[spec.parameter_position(*p).expect("validated at assembly")] = -x[ne + r];
    }
    let rows: Vec<WeightRow> = (0..ne)
        .map(|i| WeightRow {
            exposure: sys.exposures[i].clone(),
            weight: x[i],
            variance: sys.variances[i],
            probability: sys.probabilities[i],
        })
        .collect();
    let integrated_variance = rows.iter().map(|r| r.probability * r.weight * r.weight * r.variance).sum();
    let estimator = LinearEstimator::new(
        spec.clone(),
        rows.iter().map(|r| (r.exposure.clone(), r.weight)),
        Some(spec.target()),
    )?;
    let warning = (condition > CONDITION_WARN).then(|| {
        let msg = format!("block matrix condition number {condition:.3e} exceeds {CONDITION_WARN:e}");
        log::warn!("{msg}");
        msg
    });
    Ok(MivlueSolution { estimator, rows, multipliers, integrated_variance, condition, warning })
}

/// MIV LUE over the full exposure set.
pub fn solve_mivlue(spec: &ExposureSpec, probs: &ExposureDistribution, prior: &PriorSpec) -> Result<MivlueSolution> {
    solve_system(spec, &assemble_system(spec, probs, prior)?)
}

/// MIV LUE among estimators supported on `support`.
///
/// Constraint rows that vanish on the support or are linear combinations of
/// earlier rows are dropped before solving.
pub fn solve_mivlue_on_support(
    spec: &ExposureSpec,
    probs: &ExposureDistribution,
    prior: &PriorSpec,
    support: &[Exposure],
) -> Result<MivlueSolution> {
    if support.is_empty() {
        return Err(LueError::InvalidSupport("empty support".into()));
    }
    let mut kept: Vec<ParameterIndex> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rank = 0;
    for p in spec.parameters() {
        let pos = spec.parameter_position(p).expect("own parameter");
        let row: Vec<f64> =
            support.iter().map(|e| if spec.active_parameters(e).contains(&pos) { probs.prob(e) } else { 0.0 }).collect();
        if row.iter().all(|&x| x == 0.0) {
            continue;
        }
        rows.push(row);
        let m = DMatrix::from_fn(rows.len(), support.len(), |r, c| rows[r][c]);
        let new_rank = numerical_rank(&m);
        if new_rank > rank {
            rank = new_rank;
            kept.push(p);
        } else {
            rows.pop();
        }
    }
    if !kept.contains(&spec.target()) {
        return Err(LueError::InvalidSupport("the target parameter is not identified on this support".into()));
    }
    let sys = assemble_system_on(spec, probs, prior, support, &kept)?;
    let sol = solve_system(spec, &sys)?;
    let residual = crate::estimators::check_unbiased(&sol.estimator, probs);
    if residual > 1e-9 {
        return Err(LueError::InvalidSupport(format!("no unbiased estimator on this support (residual {residual:e})")));
    }
    Ok(sol)
}

/// Schedule and tolerances of the limit sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub eta_schedule: Vec<f64>,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { eta_schedule: (0..=12).map(|k| 10f64.powi(k)).collect(), epsilon: 1e-6, tolerance: 1e-8 }
    }
}

/// `B = ε (I + ε 11ᵀ)`.
pub fn base_perturbation(dim: usize, epsilon: f64) -> DMatrix<f64> {
    (DMatrix::identity(dim, dim) + DMatrix::from_element(dim, dim, epsilon)) * epsilon
}

/// Covariance factor whose null space is the span of the support's
/// indicator vectors: `Σ = I − X Xᵀ` with `X` an orthonormal basis of the span.
pub fn support_null_prior(spec: &ExposureSpec, support: &[Exposure]) -> Result<DMatrix<f64>> {
    let dim = spec.num_parameters();
    let mut v = DMatrix::zeros(dim, support.len());
    for (c, e) in support.iter().enumerate() {
        v.set_column(c, &DVector::from_vec(indicator_vector(spec, e)?));
    }
    let x = column_space_basis(&v);
    Ok(DMatrix::identity(dim, dim) - &x * x.transpose())
}

/// Result of the limit sequence, with the per-step weight changes.
#[derive(Debug, Clone)]
pub struct LimitSolution {
    pub solution: MivlueSolution,
    pub eta: f64,
    pub changes: Vec<(f64, f64)>,
}

/// Follows MIV LUEs under priors `η Σ + B` with `Σ` vanishing on the span of
/// `support`, until successive weight vectors agree.
pub fn solve_mivlue_limit(
    spec: &ExposureSpec,
    probs: &ExposureDistribution,
    support: &[Exposure],
    options: &LimitOptions,
) -> Result<LimitSolution> {
    if let SupportCheck::Invalid(reason) = check_support_condition(support, spec, probs)? {
        return Err(LueError::InvalidSupport(reason));
    }
    let factor = support_null_prior(spec, support)?;
    let b = base_perturbation(spec.num_parameters(), options.epsilon);
    let base = PriorSpec::gram(factor)?.with_perturbation(b)?;
    let mut previous: Option<DVector<f64>> = None;
    let mut changes = Vec::new();
    let mut last_change = f64::INFINITY;
    for &eta in &options.eta_schedule {
        let prior = base.clone().with_dilation(eta)?;
        let sol = solve_mivlue(spec, probs, &prior)?;
        let w = DVector::from_iterator(sol.rows.len(), sol.rows.iter().map(|r| r.weight));
        if let Some(prev) = &previous {
            last_change = (&w - prev).amax();
            changes.push((eta, last_change));
            if last_change < options.tolerance {
                return Ok(LimitSolution { solution: sol, eta, changes });
            }
        }
        previous = Some(w);
    }
    Err(LueError::NonConvergence { last_change })
}

/// Probabilities and outcome variances on the six exposures
/// `(0,0), (0,j), (m,0), (m,j), (m_1,0), (m_1,j)`, in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SixTerm {
    pub probabilities: [f64; 6],
    pub variances: [f64; 6],
}

/// The six exposures for a two-component spec.
pub fn six_term_support(spec: &ExposureSpec, m: usize, j: usize) -> Result<Vec<Exposure>> {
    let levels = spec.levels();
    if levels.len() != 2 || m == 0 || m >= levels[0] || j == 0 || j > levels[1] {
        return Err(LueError::Precondition(format!("no six-term set for spec {levels:?} with m={m}, j={j}")));
    }
    let m1 = levels[0];
    Ok([(0, 0), (0, j), (m, 0), (m, j), (m1, 0), (m1, j)].iter().map(|&(a, b)| Exposure::new(vec![a, b])).collect())
}

impl SixTerm {
    pub fn new(probabilities: [f64; 6], variances: [f64; 6]) -> Result<Self> {
        for (p, v) in probabilities.iter().zip(&variances) {
            if !(p.is_finite() && *p > 0.0) {
                return Err(LueError::InvalidProbability(format!("six-term probability {p} must be positive")));
            }
            if !(v.is_finite() && *v > 0.0) {
                return Err(LueError::ZeroVariance(format!("six-term variance {v}")));
            }
        }
        Ok(SixTerm { probabilities, variances })
    }

    pub fn from_prior(
        spec: &ExposureSpec,
        probs: &ExposureDistribution,
        prior: &PriorSpec,
        m: usize,
        j: usize,
    ) -> Result<Self> {
        let support = six_term_support(spec, m, j)?;
        let mut p = [0.0; 6];
        let mut v = [0.0; 6];
        for (i, e) in support.iter().enumerate() {
            p[i] = probs.positive_prob(e)?;
            v[i] = outcome_variance(spec, prior, e)?;
        }
        SixTerm::new(p, v)
    }

    fn ratios(&self) -> [f64; 6] {
        let mut r = [0.0; 6];
        for i in 0..6 {
            r[i] = self.probabilities[i] / self.variances[i];
        }
        r
    }
}

/// Closed-form coefficients `(α₁, α₂, α₃)` of the six-term MIV LUE on
/// `HT(m_1,0) − HT(0,0)`, `HT(m_1,j) − HT(0,j)` and
/// `HT(m_1,j) − HT(m,j) + HT(m,0) − HT(0,0)`, with `r(e) = p(e) / Var(Y(e))`.
pub fn six_term_alpha_weights(six: &SixTerm) -> Result<(f64, f64, f64)> {
    let [r00, r0j, rm0, rmj, rm10, rm1j] = six.ratios();
    let d = rm10 * (r00 * rm0 * rm1j + r00 * rmj * rm1j)
        + rm1j * (rm10 * rm0 * r0j + rm10 * rmj * r0j)
        + (rm10 + rm1j) * (r00 * rm0 * r0j + r00 * rm0 * rmj + r00 * rmj * r0j + r0j * rm0 * rmj);
    if !(d.is_finite() && d > 0.0) {
        return Err(LueError::Singular(format!("six-term denominator {d:e}")));
    }
    let a3 = rm0 * rmj * (rm1j * r00 - rm10 * r0j) / d;
    let a1 = rm10
        * (r00 * rm0 * r0j + r00 * rm0 * rm1j + r00 * rm0 * rmj + r00 * rmj * r0j + r00 * rmj * rm1j + r0j * rm0 * rmj)
        / d;
    let a2 = r0j
        * (rm0 * rm1j * r00 + rmj * rm1j * r00 + rm10 * rm0 * rmj + rm10 * rm0 * rm1j + rm10 * rmj * rm1j + rm1j * rm0 * rmj)
        / d;
    Ok((a1, a2, a3))
}

/// Reads `(α₁, α₂, α₃)` off six-term weights `w` (same order as [`SixTerm`]).
pub fn six_term_alpha_from_weights(probabilities: &[f64; 6], weights: &[f64; 6]) -> (f64, f64, f64) {
    let a1 = probabilities[4] * weights[4];
    let a3 = -probabilities[3] * weights[3];
    let a2 = probabilities[5] * weights[5] - a3;
    (a1, a2, a3)
}

/// Supremum of `α₃` over priors: `p(m,j) p(m_1,j) / ([p(0,j) + p(m,j)] [p(m_1,0) + p(m_1,j)])`.
pub fn max_alpha3(probabilities: &[f64; 6]) -> Result<f64> {
    if let Some(p) = probabilities.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(LueError::InvalidProbability(format!("six-term probability {p} must be positive")));
    }
    let [_, p0j, _, pmj, pm10, pm1j] = *probabilities;
    Ok(pmj * pm1j / ((p0j + pmj) * (pm10 + pm1j)))
}

/// `w(e) (Y − μ_{Y(e)}) + μ_θ` for a prior with mean `μ`.
pub fn shifted_prior_estimate(
    est: &LinearEstimator,
    prior: &PriorSpec,
    observed_exposure: &Exposure,
    observed_outcome: f64,
) -> Result<f64> {
    let spec = &est.spec;
    let Some(mu) = &prior.mean else {
        return Ok(est.weight(observed_exposure) * observed_outcome);
    };
    if mu.len() != spec.num_parameters() {
        return Err(LueError::LengthMismatch { expected: spec.num_parameters(), found: mu.len() });
    }
    let v = DVector::from_vec(indicator_vector(spec, observed_exposure)?);
    let target = est.target.unwrap_or_else(|| spec.target());
    let mu_theta = spec.parameter_position(target).map(|k| mu[k]).unwrap_or(0.0);
    Ok(est.weight(observed_exposure) * (observed_outcome - v.dot(mu)) + mu_theta)
}
