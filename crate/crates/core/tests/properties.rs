use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lue_core::design::{bernoulli_distribution, bernoulli_exposure_prob, ExposureDistribution};
use lue_core::estimators::{
    build_affine_basis, build_malue_set, check_unbiased, constraint_residual, EstimatorKind,
};
use lue_core::exposure::{
    apply_exposure_mapping, enumerate_exposures, enumerate_specs, indicator_vector, Exposure, ExposureMapping,
    ExposureSpec,
};
use lue_core::mivlue::{outcome_variance, shifted_prior_estimate, solve_mivlue, PriorSpec};
use lue_core::network::{gen_erdos_renyi_directed, gen_k_regular_directed};

fn spec_strategy() -> impl Strategy<Value = ExposureSpec> {
    prop::collection::vec(1usize..=3, 1..=3).prop_map(|l| ExposureSpec::new(l).unwrap())
}

fn distribution(spec: &ExposureSpec, seed: u64) -> ExposureDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..spec.num_exposures()).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ExposureDistribution::new(spec.clone(), raw.iter().map(|p| p / total).collect()).unwrap()
}

fn diagonal_prior(spec: &ExposureSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..spec.num_parameters()).map(|_| 10f64.powf(rng.gen_range(-1.5..1.5))).collect()
}

#[test]
fn enumeration_is_a_bijection() {
    for spec in enumerate_specs(256) {
        let all = enumerate_exposures(&spec);
        assert_eq!(all.len(), spec.num_exposures());
        let set: BTreeSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), all.len());
        assert!(all.iter().all(|e| spec.contains(e)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indicator_ones_and_additivity(spec in spec_strategy(), seed in any::<u64>()) {
        let all = enumerate_exposures(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = &all[rng.gen_range(0..all.len())];
        let v = indicator_vector(&spec, e).unwrap();
        let nonzero = e.components().iter().filter(|&&c| c != 0).count();
        prop_assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1 + nonzero);
        prop_assert_eq!(v.iter().filter(|&&x| x != 0.0 && x != 1.0).count(), 0);

        // e' keeps or zeroes each component of e; with one effect per level,
        // partial reductions like (2) -> (1) do not satisfy the identity
        let lower = Exposure::new(e.components().iter().map(|&c| if rng.gen_bool(0.5) { c } else { 0 }).collect());
        let diff = Exposure::new(e.components().iter().zip(lower.components()).map(|(a, b)| a - b).collect());
        let ve = DVector::from_vec(v);
        let vl = DVector::from_vec(indicator_vector(&spec, &lower).unwrap());
        let vd = DVector::from_vec(indicator_vector(&spec, &diff).unwrap());
        let v0 = DVector::from_vec(indicator_vector(&spec, &spec.baseline()).unwrap());
        prop_assert_eq!(ve - vl, vd - v0);
    }

    #[test]
    fn exposure_ignores_non_neighbours(n in 2usize..12, p in 0.1f64..0.9, seed in any::<u64>()) {
        let net = gen_erdos_renyi_directed(n, p, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let z: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let unit = rng.gen_range(0..n);
        let base = apply_exposure_mapping(ExposureMapping::NetworkInterference, Some(&net), &z, unit).unwrap();
        for j in 0..n {
            if j == unit || net.has_edge(j, unit) {
                continue;
            }
            let mut flipped = z.clone();
            flipped[j] ^= 1;
            let e = apply_exposure_mapping(ExposureMapping::NetworkInterference, Some(&net), &flipped, unit).unwrap();
            prop_assert_eq!(&e, &base);
        }
    }

    #[test]
    fn bernoulli_mass_sums_to_one(degree in 1usize..80, p in 0.01f64..0.99) {
        let dist = bernoulli_distribution(degree, p).unwrap();
        let total: f64 = dist.dense().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(dist.is_positive());
        let e = Exposure::new(vec![degree / 2, 1]);
        prop_assert!(bernoulli_exposure_prob(degree, &e, p).unwrap() > 0.0);
    }

    #[test]
    fn treated_degree_bounded_by_in_degree(n in 2usize..30, k in 1usize..5, seed in any::<u64>()) {
        let k = k.min(n - 1);
        let net = gen_k_regular_directed(n, k, seed).unwrap();
        // column sums of the adjacency matrix are the in-degrees
        let adj = net.adjacency();
        for i in 0..n {
            prop_assert_eq!((0..n).filter(|&j| adj[j][i]).count(), k);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let td = net.treated_degrees(&z).unwrap();
        for i in 0..n {
            prop_assert!(td[i] <= net.in_degree(i));
        }
    }

    #[test]
    fn basis_members_are_unbiased(spec in spec_strategy(), seed in any::<u64>()) {
        let probs = distribution(&spec, seed);
        for est in build_affine_basis(&spec, &probs).unwrap() {
            let r = match est.kind {
                EstimatorKind::Zero => constraint_residual(&est, &probs, None),
                _ => check_unbiased(&est, &probs),
            };
            prop_assert!(r < 1e-10, "{} residual {:e}", est.label, r);
        }
    }

    #[test]
    fn malue_supports_are_monotone(spec in spec_strategy(), seed in any::<u64>()) {
        let probs = distribution(&spec, seed);
        for est in build_malue_set(&spec, &probs).unwrap() {
            prop_assert!(est.support_is_monotone(), "{}", est.label);
        }
    }

    #[test]
    fn solver_is_unbiased_and_stationary(spec in spec_strategy(), seed in any::<u64>()) {
        let probs = distribution(&spec, seed);
        let prior = PriorSpec::diagonal(&diagonal_prior(&spec, seed)).unwrap();
        let sol = solve_mivlue(&spec, &probs, &prior).unwrap();
        prop_assert!(check_unbiased(&sol.estimator, &probs) < 1e-9);
        prop_assert!(sol.stationarity_residual() < 1e-9);
    }

    #[test]
    fn weight_magnitude_falls_with_variance(spec in spec_strategy(), seed in any::<u64>(), bump in 0.1f64..10.0) {
        // Var(Y(e)) is raised for one exposure only through W's diagonal,
        // which is what the quotient form responds to.
        let probs = distribution(&spec, seed);
        let prior = PriorSpec::diagonal(&diagonal_prior(&spec, seed)).unwrap();
        let all = enumerate_exposures(&spec);
        let pick = &all[(seed as usize) % all.len()];
        let exposures = all.clone();
        let parameters = spec.parameters();
        let base = lue_core::mivlue::assemble_system_on(&spec, &probs, &prior, &exposures, &parameters).unwrap();
        let mut bumped = base.clone();
        let c = exposures.iter().position(|e| e == pick).unwrap();
        bumped.variances[c] *= 1.0 + bump;
        bumped.matrix[(c, c)] = bumped.probabilities[c] * bumped.variances[c];
        let w0 = lue_core::mivlue::solve_system(&spec, &base).unwrap().estimator.weight(pick);
        let w1 = lue_core::mivlue::solve_system(&spec, &bumped).unwrap().estimator.weight(pick);
        prop_assert!(w1.abs() <= w0.abs() * (1.0 + 1e-9) + 1e-12, "{} -> {}", w0, w1);
    }

    #[test]
    fn shifted_prior_keeps_weights(spec in spec_strategy(), seed in any::<u64>()) {
        let probs = distribution(&spec, seed);
        let vars = diagonal_prior(&spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = DVector::from_fn(spec.num_parameters(), |_, _| rng.gen_range(-5.0..5.0));
        let plain = solve_mivlue(&spec, &probs, &PriorSpec::diagonal(&vars).unwrap()).unwrap();
        let shifted_prior = PriorSpec::diagonal(&vars).unwrap().with_mean(mu.clone());
        let shifted = solve_mivlue(&spec, &probs, &shifted_prior).unwrap();
        prop_assert_eq!(&plain.estimator.weights, &shifted.estimator.weights);

        // the shifted estimate is still unbiased for θ when the truth equals μ
        let theta = mu;
        let mut expectation = 0.0;
        for e in enumerate_exposures(&spec) {
            let v = DVector::from_vec(indicator_vector(&spec, &e).unwrap());
            let y = v.dot(&theta);
            expectation += probs.prob(&e) * shifted_prior_estimate(&shifted.estimator, &shifted_prior, &e, y).unwrap();
        }
        let k = spec.parameter_position(spec.target()).unwrap();
        prop_assert!((expectation - theta[k]).abs() < 1e-9);
    }

    #[test]
    fn outcome_variance_is_indicator_quadratic_form(spec in spec_strategy(), seed in any::<u64>()) {
        let dim = spec.num_parameters();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let sigma = &a * a.transpose();
        let prior = PriorSpec::dense(sigma.clone()).unwrap();
        for e in enumerate_exposures(&spec) {
            let v = DVector::from_vec(indicator_vector(&spec, &e).unwrap());
            let direct = v.dot(&(&sigma * &v));
            prop_assert!((outcome_variance(&spec, &prior, &e).unwrap() - direct).abs() < 1e-10 * (1.0 + direct));
        }
    }
}
