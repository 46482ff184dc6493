//! Self-checks run by `lue verify`.
//!
//! Each check compares a construction against an independent oracle on a
//! fixed set of instances and reports the first offending instance.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::design::{
    allocations, bernoulli_exposure_prob, exposure_distribution_exact, AllocationMode, Design, ExposureDistribution,
};
use crate::error::Result;
use crate::estimators::{
    affine_rank, affine_rank_exact, basis_size, build_affine_basis, build_malue_set, build_zero_estimators,
    check_unbiased, constraint_matrix, constraint_residual, decompose_in_basis, lue_dimension, malue_count,
    random_lue, zero_estimator_count, LinearEstimator, UNBIASED_TOL,
};
use crate::exposure::{enumerate_exposures, enumerate_specs, ExposureMapping, ExposureSpec};
use crate::linalg::column_space_basis;
use crate::mivlue::{
    max_alpha3, six_term_alpha_from_weights, six_term_alpha_weights, six_term_support, solve_mivlue,
    solve_mivlue_on_support, PriorSpec, SixTerm,
};
use crate::network::{gen_erdos_renyi_directed, gen_k_regular_directed};
use crate::simulation::{
    build_estimator_family, draw_statistics, sample_parameters_for_draw, EstimatorFamily, OutcomeDistribution,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(serialize_with = "as_secs")]
    pub elapsed: Duration,
}

fn as_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

/// Pass/fail plus a human-readable detail line.
pub type Outcome = std::result::Result<String, String>;

pub type CheckFn = fn() -> Outcome;

pub const CHECKS: &[(&str, CheckFn)] = &[
    ("constraint-residuals", constraint_residuals),
    ("basis-counts", basis_counts),
    ("basis-affine-rank", basis_affine_rank),
    ("basis-spanning", basis_spanning),
    ("six-term-closed-form", six_term_closed_form),
    ("alpha3-max", alpha3_max),
    ("design-oracle", design_oracle),
    ("enumeration-unbiasedness", enumeration_unbiasedness),
    ("kkt-optimality", kkt_optimality),
];

/// Runs every check whose name contains `filter`.
pub fn run_checks(filter: Option<&str>) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .filter(|(name, _)| filter.map_or(true, |f| name.contains(f)))
        .map(|(name, check)| {
            let start = Instant::now();
            let outcome = check();
            let elapsed = start.elapsed();
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult { name, passed, detail, elapsed }
        })
        .collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Random strictly positive distribution over the exposures of `spec`.
pub fn random_distribution<R: Rng + ?Sized>(spec: &ExposureSpec, rng: &mut R) -> ExposureDistribution {
    let raw: Vec<f64> = (0..spec.num_exposures()).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ExposureDistribution::new(spec.clone(), raw.iter().map(|p| p / total).collect())
        .expect("normalised positive probabilities")
}

fn small_specs() -> Vec<ExposureSpec> {
    [vec![1], vec![3], vec![1, 1], vec![3, 1], vec![2, 2], vec![1, 1, 1], vec![2, 1, 1], vec![2, 2, 1], vec![1, 1, 1, 1]]
        .into_iter()
        .map(|l| ExposureSpec::new(l).expect("valid levels"))
        .collect()
}

/// Fails on the first estimator whose constraint residual exceeds the
/// tolerance, naming it.
pub fn check_constraint_residuals(estimators: &[LinearEstimator], probs: &ExposureDistribution) -> Outcome {
    for est in estimators {
        let r = constraint_residual(est, probs, est.target);
        if r > UNBIASED_TOL {
            return Err(format!(
                "estimator `{}` on {:?} has residual {r:e}; weights: {}",
                est.label,
                est.spec.levels(),
                est.to_records().replace('\n', "; ")
            ));
        }
    }
    Ok(format!("{} estimators", estimators.len()))
}

fn constraint_residuals() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut count = 0;
    for spec in small_specs() {
        for _ in 0..5 {
            let probs = random_distribution(&spec, &mut rng);
            let basis = build_affine_basis(&spec, &probs).map_err(err)?;
            check_constraint_residuals(&basis, &probs)?;
            count += basis.len();
        }
    }
    Ok(format!("{count} basis estimators unbiased"))
}

fn basis_counts() -> Outcome {
    let specs = enumerate_specs(64);
    for spec in &specs {
        let probs = ExposureDistribution::uniform(spec);
        let m = build_malue_set(spec, &probs).map_err(err)?.len();
        let z = build_zero_estimators(spec, &probs).map_err(err)?.len();
        if m != malue_count(spec) || z != zero_estimator_count(spec) || m + z != basis_size(spec) {
            return Err(format!("spec {:?}: |M|={m}, |Z|={z}", spec.levels()));
        }
        if basis_size(spec) - 1 != lue_dimension(spec) {
            return Err(format!("spec {:?}: dimension mismatch", spec.levels()));
        }
    }
    Ok(format!("{} specs", specs.len()))
}

fn basis_affine_rank() -> Outcome {
    let specs = enumerate_specs(64);
    for spec in &specs {
        let basis = build_affine_basis(spec, &ExposureDistribution::uniform(spec)).map_err(err)?;
        let rank = affine_rank_exact(&basis).map_err(err)?;
        if rank != basis_size(spec) {
            return Err(format!("spec {:?}: exact affine rank {rank} < {}", spec.levels(), basis_size(spec)));
        }
        if spec.num_exposures() <= 24 && affine_rank(&basis) != rank {
            return Err(format!("spec {:?}: numerical and exact ranks differ", spec.levels()));
        }
    }
    Ok(format!("{} specs full affine rank", specs.len()))
}

fn basis_spanning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for spec in small_specs() {
        let probs = random_distribution(&spec, &mut rng);
        let basis = build_affine_basis(&spec, &probs).map_err(err)?;
        for _ in 0..10 {
            let est = random_lue(&spec, &probs, 2.0, &mut rng).map_err(err)?;
            decompose_in_basis(&est, &basis, &probs).map_err(|e| format!("spec {:?}: {e}", spec.levels()))?;
        }
    }
    Ok("random LUEs decompose".into())
}

/// Random six-term instance on spec `(3, 1)` with `m = 1`, `j = 1`.
pub fn random_six_term<R: Rng + ?Sized>(rng: &mut R) -> (ExposureSpec, ExposureDistribution, PriorSpec) {
    let spec = ExposureSpec::new(vec![3, 1]).expect("valid levels");
    let probs = random_distribution(&spec, rng);
    let vars: Vec<f64> = (0..spec.num_parameters()).map(|_| 10f64.powf(rng.gen_range(-1.5..1.5))).collect();
    let prior = PriorSpec::diagonal(&vars).expect("positive variances");
    (spec, probs, prior)
}

/// Compares `closed_form` with the coefficients read off the numeric
/// restricted solve on random instances.
pub fn check_six_term_closed_form(closed_form: fn(&SixTerm) -> Result<(f64, f64, f64)>, instances: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (spec, probs, prior) = random_six_term(&mut rng);
        let support = six_term_support(&spec, 1, 1).map_err(err)?;
        let six = SixTerm::from_prior(&spec, &probs, &prior, 1, 1).map_err(err)?;
        let sol = solve_mivlue_on_support(&spec, &probs, &prior, &support).map_err(err)?;
        let mut w = [0.0; 6];
        for (i, e) in support.iter().enumerate() {
            w[i] = sol.estimator.weight(e);
        }
        let numeric = six_term_alpha_from_weights(&six.probabilities, &w);
        let closed = closed_form(&six).map_err(err)?;
        let diff = (numeric.0 - closed.0).abs().max((numeric.1 - closed.1).abs()).max((numeric.2 - closed.2).abs());
        worst = worst.max(diff);
        if diff > 1e-8 {
            return Err(format!("p={:?} var={:?}: numeric {numeric:?} vs closed form {closed:?}", six.probabilities, six.variances));
        }
    }
    Ok(format!("{instances} instances, max deviation {worst:e}"))
}

fn six_term_closed_form() -> Outcome {
    check_six_term_closed_form(six_term_alpha_weights, 100)
}

/// Six-term inputs for a unit of in-degree 3 under Bernoulli(1/2) with the
/// variances that push `α₃` to its maximum.
pub fn alpha3_maximising_instance() -> (SixTerm, [f64; 6]) {
    let spec = ExposureSpec::new(vec![3, 1]).expect("valid levels");
    let probs = crate::design::bernoulli_distribution(3, 0.5).expect("valid design");
    // α, θ_{1,1}, θ_{1,2}, θ_{1,3}, θ_{2,1}
    let prior = PriorSpec::diagonal(&[1e-5, 1e-5, 1.0, 1e5, 1.0]).expect("positive variances");
    let six = SixTerm::from_prior(&spec, &probs, &prior, 1, 1).expect("positive inputs");
    let p = six.probabilities;
    (six, p)
}

fn alpha3_max() -> Outcome {
    let (six, p) = alpha3_maximising_instance();
    let (_, _, a3) = six_term_alpha_weights(&six).map_err(err)?;
    let max = max_alpha3(&p).map_err(err)?;
    if (max - 0.375).abs() > 1e-15 || (a3 - max).abs() > 1e-3 {
        return Err(format!("alpha3 {a3} vs maximum {max}"));
    }
    Ok(format!("alpha3 {a3:.6} vs maximum {max}"))
}

fn design_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..6u64 {
        for n in [3usize, 6, 9] {
            let net = if seed % 2 == 0 {
                gen_erdos_renyi_directed(n, 0.4, seed).map_err(err)?
            } else {
                gen_k_regular_directed(n, 2, seed).map_err(err)?
            };
            let p_treat = 0.3 + 0.1 * seed as f64;
            let design = Design::bernoulli(n, p_treat).map_err(err)?;
            for i in 0..n {
                let di = net.in_degree(i);
                if di == 0 {
                    continue;
                }
                let exact = exposure_distribution_exact(&design, ExposureMapping::NetworkInterference, Some(&net), i)
                    .map_err(err)?;
                for e in enumerate_exposures(exact.spec()) {
                    let closed = bernoulli_exposure_prob(di, &e, p_treat).map_err(err)?;
                    let diff = (closed - exact.prob(&e)).abs();
                    worst = worst.max(diff);
                    if diff > 1e-12 {
                        return Err(format!("n={n} seed={seed} unit {i} exposure {e}: {closed} vs {}", exact.prob(&e)));
                    }
                }
            }
        }
    }
    Ok(format!("max deviation {worst:e}"))
}

fn enumeration_unbiasedness() -> Outcome {
    let net = gen_k_regular_directed(8, 2, 4).map_err(err)?;
    let design = Design::bernoulli(8, 0.5).map_err(err)?;
    let all = allocations(&design, &AllocationMode::Exhaustive).map_err(err)?;
    let families = EstimatorFamily::all()
        .into_iter()
        .map(|f| build_estimator_family(f, &net, 0.5))
        .collect::<Result<Vec<_>>>()
        .map_err(err)?;
    let mut worst: f64 = 0.0;
    for draw in 0..5 {
        let params = sample_parameters_for_draw(&net, &OutcomeDistribution::Independent { mu1: 1.0 }, 5, draw);
        let stats = draw_statistics(&families, &net, &params, &all).map_err(err)?;
        for (fam, s) in families.iter().zip(&stats) {
            worst = worst.max(s.bias.abs());
            if s.bias.abs() > 1e-10 {
                return Err(format!("{} biased by {:e} on draw {draw}", fam.family, s.bias));
            }
        }
    }
    Ok(format!("max |bias| {worst:e}"))
}

fn kkt_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for spec in small_specs() {
        let probs = random_distribution(&spec, &mut rng);
        let vars: Vec<f64> = (0..spec.num_parameters()).map(|_| rng.gen_range(0.1..3.0)).collect();
        let prior = PriorSpec::diagonal(&vars).map_err(err)?;
        let sol = solve_mivlue(&spec, &probs, &prior).map_err(err)?;
        let r = check_unbiased(&sol.estimator, &probs);
        let s = sol.stationarity_residual();
        if r > 1e-9 || s > 1e-9 {
            return Err(format!("spec {:?}: residual {r:e}, stationarity {s:e}", spec.levels()));
        }
        let cm = constraint_matrix(&spec, &probs).map_err(err)?;
        let q = column_space_basis(&cm.matrix.transpose());
        let w = DVector::from_iterator(sol.rows.len(), sol.rows.iter().map(|r| r.weight));
        let scale = DVector::from_iterator(sol.rows.len(), sol.rows.iter().map(|r| r.probability * r.variance));
        let iv = |w: &DVector<f64>| w.iter().zip(scale.iter()).map(|(x, s)| s * x * x).sum::<f64>();
        let base = iv(&w);
        for _ in 0..50 {
            let d = DVector::from_iterator(w.len(), (0..w.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let d = &d - &q * (q.transpose() * &d);
            if d.norm() < 1e-12 {
                continue;
            }
            let d = &d * (1e-3 / d.amax());
            if iv(&(&w + &d)) < base {
                return Err(format!("spec {:?}: perturbation lowers integrated variance", spec.levels()));
            }
        }
    }
    Ok("weights stationary and optimal".into())
}
