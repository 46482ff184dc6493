use lue_core::design::{allocations, AllocationMode, Design};
use lue_core::network::gen_k_regular_directed;
use lue_core::simulation::{
    build_estimator_family, compute_imse, draw_statistics, paired_difference, sample_parameters_for_draw,
    AllocationPlan, EstimatorFamily, ExperimentConfig, NetworkSpec, OutcomeDistribution,
};

fn config(allocation: AllocationPlan, draws: usize) -> ExperimentConfig {
    ExperimentConfig {
        network: NetworkSpec::KRegular { n: 10, k: 2 },
        p_treat: 0.5,
        distribution: OutcomeDistribution::Independent { mu1: 0.0 },
        estimators: EstimatorFamily::all(),
        draws,
        allocation,
        seed: 2024,
    }
}

#[test]
fn imse_is_invariant_to_relabeling() {
    let net = gen_k_regular_directed(9, 3, 5).unwrap();
    let perm = [4usize, 7, 0, 2, 8, 1, 6, 3, 5];
    let moved = net.relabeled(&perm).unwrap();
    let design = Design::bernoulli(9, 0.5).unwrap();
    let allocs = allocations(&design, &AllocationMode::Exhaustive).unwrap();
    let moved_allocs: Vec<(Vec<u8>, f64)> = allocs
        .iter()
        .map(|(z, w)| {
            let mut z2 = vec![0u8; 9];
            for (i, &zi) in z.iter().enumerate() {
                z2[perm[i]] = zi;
            }
            (z2, *w)
        })
        .collect();
    let dist = OutcomeDistribution::Interaction { mu1: 3.0, delta1: 2.0 };
    for draw in 0..5 {
        let params = sample_parameters_for_draw(&net, &dist, 77, draw);
        let mut moved_params = params.clone();
        for (i, p) in params.iter().enumerate() {
            moved_params[perm[i]] = p.clone();
        }
        for fam in EstimatorFamily::all() {
            let f = build_estimator_family(fam, &net, 0.5).unwrap();
            let g = build_estimator_family(fam, &moved, 0.5).unwrap();
            let a = draw_statistics(&[f], &net, &params, &allocs).unwrap()[0];
            let b = draw_statistics(&[g], &moved, &moved_params, &moved_allocs).unwrap()[0];
            assert!((a.mse - b.mse).abs() < 1e-10 * (1.0 + a.mse), "{fam}: {} vs {}", a.mse, b.mse);
            assert!((a.bias - b.bias).abs() < 1e-12, "{fam}");
        }
    }
}

#[test]
fn sampled_imse_agrees_with_exact_imse() {
    let exact = compute_imse(&config(AllocationPlan::Exhaustive, 40)).unwrap();
    let sampled = compute_imse(&config(AllocationPlan::Sample { count: 4096 }, 40)).unwrap();
    assert!(exact.exact && !sampled.exact);
    for (e, s) in exact.estimators.iter().zip(&sampled.estimators) {
        let (diff, se) = paired_difference(&s.per_draw_mse, &e.per_draw_mse);
        assert!(diff.abs() < 3.0 * se, "{}: sampled {} vs exact {} (se {se})", e.estimator, s.imse, e.imse);
        assert!((s.imse - e.imse).abs() < 0.1 * e.imse, "{}", e.estimator);
    }
}

#[test]
fn runs_are_reproducible_and_thread_independent() {
    let cfg = config(AllocationPlan::Sample { count: 128 }, 12);
    let a = compute_imse(&cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| compute_imse(&cfg).unwrap());
    for (x, y) in a.estimators.iter().zip(&b.estimators) {
        let xs: Vec<u64> = x.per_draw_mse.iter().map(|v| v.to_bits()).collect();
        let ys: Vec<u64> = y.per_draw_mse.iter().map(|v| v.to_bits()).collect();
        assert_eq!(xs, ys);
    }
    assert_eq!(a.config_hash, b.config_hash);
}

#[test]
fn additive_exact_runs_have_no_bias() {
    let report = compute_imse(&config(AllocationPlan::Exhaustive, 10)).unwrap();
    for s in &report.estimators {
        assert!(s.bias2 < 1e-20, "{} {}", s.estimator, s.bias2);
        assert!((s.imse - s.variance).abs() < 1e-9);
    }
}
