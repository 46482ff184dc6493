//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lue_core::design::{
    bernoulli_distribution, bernoulli_exposure_prob, exposure_distribution_exact, Design, ExposureDistribution,
};
use lue_core::estimators::{
    affine_rank, affine_rank_exact, basis_size, build_affine_basis, build_four_term_alue, build_malue_set,
    build_two_term_alue, build_zero_estimators, check_support_condition, combine, constraint_matrix,
    decompose_in_basis, lue_dimension, malue_count, random_lue, zero_estimator_count,
};
use lue_core::exposure::{enumerate_exposures, enumerate_specs, Exposure, ExposureMapping, ExposureSpec};
use lue_core::linalg::{column_space_basis, max_abs};
use lue_core::mivlue::{
    max_alpha3, six_term_alpha_weights, six_term_support, solve_mivlue, solve_mivlue_limit, solve_mivlue_on_support,
    LimitOptions, PriorSpec, SixTerm,
};
use lue_core::network::{gen_erdos_renyi_directed, gen_k_regular_directed, Network};
use lue_core::simulation::{
    build_estimator_family, compute_imse, paired_difference, sample_parameters_for_draw, AllocationPlan,
    EstimatorFamily, ExperimentConfig, NetworkSpec, OutcomeDistribution,
};

type Outcome = Result<String, String>;

fn ex(v: &[usize]) -> Exposure {
    Exposure::new(v.to_vec())
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_distribution(spec: &ExposureSpec, rng: &mut ChaCha8Rng) -> ExposureDistribution {
    let raw: Vec<f64> = (0..spec.num_exposures()).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ExposureDistribution::new(spec.clone(), raw.iter().map(|p| p / total).collect()).unwrap()
}

fn test_specs() -> Vec<ExposureSpec> {
    [vec![1], vec![4], vec![1, 1], vec![3, 1], vec![2, 2], vec![4, 2], vec![1, 1, 1], vec![2, 1, 1], vec![2, 2, 2], vec![1, 1, 1, 1]]
        .into_iter()
        .map(|l| ExposureSpec::new(l).unwrap())
        .collect()
}

fn network_config(n: usize, k: usize, distribution: OutcomeDistribution, draws: usize, allocation: AllocationPlan, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        network: NetworkSpec::KRegular { n, k },
        p_treat: 0.5,
        distribution,
        estimators: EstimatorFamily::all(),
        draws,
        allocation,
        seed,
    }
}

/// End-to-end unbiasedness under exact enumeration, checked two ways: the
/// simulated per-draw bias and a direct sum over each unit's exposure
/// distribution obtained by brute force.
fn c1_unbiasedness() -> Outcome {
    let cfg = network_config(10, 2, OutcomeDistribution::Independent { mu1: 1.0 }, 50, AllocationPlan::Exhaustive, 101);
    let report = compute_imse(&cfg).map_err(fail)?;
    let mut worst: f64 = 0.0;
    for s in &report.estimators {
        for (draw, b) in s.per_draw_bias.iter().enumerate() {
            worst = worst.max(b.abs());
            if b.abs() >= 1e-10 {
                return Err(format!("{} draw {draw}: bias {b:e}", s.estimator));
            }
        }
    }
    let net = cfg.network.build(cfg.seed).map_err(fail)?;
    let design = Design::bernoulli(10, 0.5).map_err(fail)?;
    let dists: Vec<ExposureDistribution> = (0..10)
        .map(|i| exposure_distribution_exact(&design, ExposureMapping::NetworkInterference, Some(&net), i))
        .collect::<Result<_, _>>()
        .map_err(fail)?;
    for fam in EstimatorFamily::all() {
        let f = build_estimator_family(fam, &net, 0.5).map_err(fail)?;
        for draw in 0..50 {
            let params = sample_parameters_for_draw(&net, &cfg.distribution, cfg.seed, draw);
            let mut expectation = 0.0;
            let mut truth = 0.0;
            for i in 0..10 {
                let est = f.units[i].as_ref().expect("2-regular units have neighbours");
                for e in enumerate_exposures(dists[i].spec()) {
                    let y = lue_core::simulation::potential_outcome(&params[i], &e).map_err(fail)?;
                    expectation += dists[i].prob(&e) * est.weight(&e) * y;
                }
                truth += params[i].estimand().unwrap();
            }
            let bias = (expectation - truth) / 10.0;
            worst = worst.max(bias.abs());
            if bias.abs() >= 1e-10 {
                return Err(format!("{fam} draw {draw}: oracle bias {bias:e}"));
            }
        }
    }
    Ok(format!("5 estimators x 50 draws, max |bias| {worst:.1e}"))
}

fn c2_counts() -> Outcome {
    let start = Instant::now();
    let specs = enumerate_specs(256);
    for spec in &specs {
        let probs = ExposureDistribution::uniform(spec);
        let m = build_malue_set(spec, &probs).map_err(fail)?;
        let z = build_zero_estimators(spec, &probs).map_err(fail)?;
        let prod = spec.num_exposures();
        let sum: usize = spec.levels().iter().sum();
        let tail: usize = spec.levels()[1..].iter().map(|m| m + 1).product();
        let m_closed = tail + (spec.levels()[0] - 1) * (tail - 1);
        let z_closed = tail - 1 - spec.levels()[1..].iter().sum::<usize>();
        if m.len() != m_closed || m.len() != malue_count(spec) {
            return Err(format!("{:?}: |M| = {} vs {m_closed}", spec.levels(), m.len()));
        }
        if z.len() != z_closed || z.len() != zero_estimator_count(spec) {
            return Err(format!("{:?}: |Z| = {} vs {z_closed}", spec.levels(), z.len()));
        }
        if m.len() + z.len() != prod - sum || basis_size(spec) != prod - sum {
            return Err(format!("{:?}: |basis| mismatch", spec.levels()));
        }
        if lue_dimension(spec) != prod - sum - 1 {
            return Err(format!("{:?}: dimension mismatch", spec.levels()));
        }
        let mut basis = m;
        basis.extend(z);
        let rank = affine_rank_exact(&basis).map_err(fail)?;
        if rank != prod - sum {
            return Err(format!("{:?}: affine rank {rank} < {}", spec.levels(), prod - sum));
        }
        if prod <= 32 && affine_rank(&basis) != rank {
            return Err(format!("{:?}: numerical rank disagrees with exact rank", spec.levels()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("{} specs took {secs:.1}s", specs.len()));
    }
    Ok(format!("{} specs, {secs:.2}s", specs.len()))
}

fn c3_spanning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for spec in test_specs() {
        let probs = random_distribution(&spec, &mut rng);
        let basis = build_affine_basis(&spec, &probs).map_err(fail)?;
        let order = enumerate_exposures(&spec);
        for _ in 0..100 {
            let est = random_lue(&spec, &probs, 5.0, &mut rng).map_err(fail)?;
            let coef = decompose_in_basis(&est, &basis, &probs).map_err(|e| format!("{:?}: {e}", spec.levels()))?;
            let back = combine(&spec, &basis, &coef).map_err(fail)?;
            let r = max_abs(&(back.weight_vector(&order) - est.weight_vector(&order)));
            worst = worst.max(r);
            if r >= 1e-8 {
                return Err(format!("{:?}: residual {r:e}", spec.levels()));
            }
        }
    }
    Ok(format!("{} specs x 100 LUEs, max residual {worst:.1e}", test_specs().len()))
}

fn random_pd_prior(dim: usize, rng: &mut ChaCha8Rng) -> (PriorSpec, DMatrix<f64>) {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma = &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.1;
    (PriorSpec::dense(sigma.clone()).unwrap(), sigma)
}

fn c4_kkt() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let specs = test_specs();
    let (mut worst_c, mut worst_q) = (0.0f64, 0.0f64);
    for inst in 0..200 {
        let spec = &specs[inst % specs.len()];
        let probs = random_distribution(spec, &mut rng);
        let (prior, sigma) = random_pd_prior(spec.num_parameters(), &mut rng);
        let sol = solve_mivlue(spec, &probs, &prior).map_err(fail)?;
        let cm = constraint_matrix(spec, &probs).map_err(fail)?;
        let w = sol.estimator.weight_vector(&cm.exposures);
        let mut t = DVector::zeros(spec.num_parameters());
        t[spec.parameter_position(spec.target()).unwrap()] = 1.0;
        let rc = max_abs(&(&cm.matrix * &w - &t));
        // Var(Y(e)) from the dense covariance, independent of the solver
        let var: Vec<f64> = cm
            .exposures
            .iter()
            .map(|e| {
                let v = DVector::from_vec(lue_core::exposure::indicator_vector(spec, e).unwrap());
                v.dot(&(&sigma * &v))
            })
            .collect();
        let mut rq: f64 = 0.0;
        for (c, e) in cm.exposures.iter().enumerate() {
            let num: f64 = spec.active_parameters(e).iter().map(|&k| sol.multipliers[k]).sum();
            rq = rq.max((w[c] - num / var[c]).abs());
        }
        worst_c = worst_c.max(rc);
        worst_q = worst_q.max(rq);
        if rc >= 1e-9 || rq >= 1e-9 {
            return Err(format!("instance {inst} {:?}: constraint {rc:e}, quotient {rq:e}", spec.levels()));
        }
        let iv = |w: &DVector<f64>| (0..w.len()).map(|c| cm.matrix[(0, c)] * w[c] * w[c] * var[c]).sum::<f64>();
        let base = iv(&w);
        let q = column_space_basis(&cm.matrix.transpose());
        for _ in 0..1000 {
            let d = DVector::from_iterator(w.len(), (0..w.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let d = &d - &q * (q.transpose() * &d);
            if d.amax() < 1e-12 {
                continue;
            }
            let d = &d * (1e-3 / d.amax());
            if iv(&(&w + &d)) < base {
                return Err(format!("instance {inst} {:?}: perturbation lowers integrated variance", spec.levels()));
            }
        }
    }
    Ok(format!("200 instances, constraint {worst_c:.1e}, quotient {worst_q:.1e}, 1000 perturbations each"))
}

fn c5_six_term() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let spec = ExposureSpec::new(vec![3, 1]).unwrap();
    let support = six_term_support(&spec, 1, 1).map_err(fail)?;
    let (mut worst, mut worst_sum) = (0.0f64, 0.0f64);
    for inst in 0..500 {
        let probs = random_distribution(&spec, &mut rng);
        let vars: Vec<f64> = (0..5).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
        let prior = PriorSpec::diagonal(&vars).unwrap();
        let sol = solve_mivlue_on_support(&spec, &probs, &prior, &support).map_err(fail)?;
        let basis = vec![
            build_two_term_alue(&spec, &[0], &probs).map_err(fail)?,
            build_two_term_alue(&spec, &[1], &probs).map_err(fail)?,
            build_four_term_alue(&spec, &ex(&[1, 1]), &probs).map_err(fail)?,
        ];
        let coef = decompose_in_basis(&sol.estimator, &basis, &probs).map_err(fail)?;
        let six = SixTerm::from_prior(&spec, &probs, &prior, 1, 1).map_err(fail)?;
        let (a1, a2, a3) = six_term_alpha_weights(&six).map_err(fail)?;
        let d = (coef[0] - a1).abs().max((coef[1] - a2).abs()).max((coef[2] - a3).abs());
        let s = (a1 + a2 + a3 - 1.0).abs();
        worst = worst.max(d);
        worst_sum = worst_sum.max(s);
        if d >= 1e-8 || s >= 1e-12 {
            return Err(format!("instance {inst}: numeric {coef:?} vs closed ({a1}, {a2}, {a3})"));
        }
    }
    let mut worst_sym: f64 = 0.0;
    for _ in 0..200 {
        // equal r on each of the pairs (m1,0)/(m1,j) and (0,0)/(0,j)
        let c = rng.gen_range(0.1..10.0);
        let r0 = rng.gen_range(0.1..10.0);
        let r1 = rng.gen_range(0.1..10.0);
        let ps: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let p = [ps[0], ps[0], ps[1], ps[2], ps[3], ps[3]];
        let v = [ps[0] / r0, ps[0] / r0, ps[1] / c, ps[2] * c, ps[3] / r1, ps[3] / r1];
        let (_, _, a3) = six_term_alpha_weights(&SixTerm::new(p, v).map_err(fail)?).map_err(fail)?;
        worst_sym = worst_sym.max(a3.abs());
    }
    let (a1, a2, a3) = six_term_alpha_weights(&SixTerm::new([0.1; 6], [2.0; 6]).map_err(fail)?).map_err(fail)?;
    worst_sym = worst_sym.max(a3.abs());
    if worst_sym >= 1e-14 || (a1 - 0.5).abs() > 1e-14 || (a2 - 0.5).abs() > 1e-14 {
        return Err(format!("symmetric alpha3 {worst_sym:e}, alpha1 {a1}, alpha2 {a2}"));
    }
    Ok(format!("500 instances, max deviation {worst:.1e}, |sum-1| {worst_sum:.1e}, symmetric |alpha3| {worst_sym:.1e}"))
}

fn six_term_for_scale(eps: f64) -> SixTerm {
    let spec = ExposureSpec::new(vec![3, 1]).unwrap();
    let probs = bernoulli_distribution(3, 0.5).unwrap();
    let prior = PriorSpec::diagonal(&[eps, eps, 1.0, 1.0 / eps, 1.0]).unwrap();
    SixTerm::from_prior(&spec, &probs, &prior, 1, 1).unwrap()
}

fn c6_alpha3_max() -> Outcome {
    let six = six_term_for_scale(1e-5);
    let (.., a3) = six_term_alpha_weights(&six).map_err(fail)?;
    let max = max_alpha3(&six.probabilities).map_err(fail)?;
    // maximum evaluated by hand: (3/16)(1/16) / ((1/16 + 3/16)(1/16 + 1/16))
    let by_hand = (3.0 / 16.0) * (1.0 / 16.0) / ((4.0 / 16.0) * (2.0 / 16.0));
    if (max - by_hand).abs() > 1e-15 || (a3 - max).abs() >= 1e-3 {
        return Err(format!("alpha3 {a3} vs max {max}"));
    }
    let (.., a3_lim) = six_term_alpha_weights(&six_term_for_scale(1e-8)).map_err(fail)?;
    if (a3_lim - max).abs() >= 1e-4 {
        return Err(format!("limit alpha3 {a3_lim} vs max {max}"));
    }
    Ok(format!("alpha3 {a3:.6} (limit {a3_lim:.8}) vs max {max}"))
}

fn c7_supports() -> Outcome {
    let spec = ExposureSpec::new(vec![3, 1]).unwrap();
    let probs = bernoulli_distribution(3, 0.5).unwrap();
    let opts = LimitOptions::default();
    let mut notes = Vec::new();
    for tail in [0usize, 1] {
        let ht = build_two_term_alue(&spec, &[tail], &probs).map_err(fail)?;
        let support = ht.support();
        let lim = solve_mivlue_limit(&spec, &probs, &support, &opts).map_err(fail)?;
        let mut dev: f64 = 0.0;
        let mut off: f64 = 0.0;
        for row in &lim.solution.rows {
            if support.contains(&row.exposure) {
                dev = dev.max((row.weight - ht.weight(&row.exposure)).abs());
            } else {
                off += row.weight.abs();
            }
        }
        if dev >= 1e-6 || off >= 1e-6 {
            return Err(format!("two-term tail {tail}: deviation {dev:e}, off-support mass {off:e}"));
        }
        notes.push(format!("two-term z={tail} converged at eta={:e}", lim.eta));
    }
    let four = [ex(&[3, 1]), ex(&[1, 1]), ex(&[1, 0]), ex(&[0, 0])];
    if check_support_condition(&four, &spec, &probs).map_err(fail)?.is_valid() {
        return Err("four-term support accepted".into());
    }
    if solve_mivlue_limit(&spec, &probs, &four, &opts).is_ok() {
        return Err("limit solve accepted the four-term support".into());
    }
    let six = six_term_support(&spec, 1, 1).map_err(fail)?;
    let lim = solve_mivlue_limit(&spec, &probs, &six, &opts).map_err(fail)?;
    let mut min_on: f64 = f64::INFINITY;
    let mut max_off: f64 = 0.0;
    for row in &lim.solution.rows {
        if six.contains(&row.exposure) {
            min_on = min_on.min(row.weight.abs());
        } else {
            max_off = max_off.max(row.weight.abs());
        }
    }
    if min_on <= 1e-6 || max_off >= 1e-6 {
        return Err(format!("six-term: min |w| on support {min_on:e}, max off support {max_off:e}"));
    }
    notes.push(format!("six-term min |w| {min_on:.3}"));
    Ok(notes.join(", "))
}

fn ordered(report: &lue_core::simulation::ImseReport, order: &[EstimatorFamily]) -> Outcome {
    let mut notes = Vec::new();
    for pair in order.windows(2) {
        let a = report.summary(pair[0]).unwrap();
        let b = report.summary(pair[1]).unwrap();
        let (diff, se) = paired_difference(&b.per_draw_mse, &a.per_draw_mse);
        notes.push(format!("{}<{} by {:.1} SE", pair[0], pair[1], diff / se));
        if diff <= 3.0 * se {
            return Err(format!(
                "{} {:.4} vs {} {:.4}: gap {diff:.4} <= 3 x {se:.4}",
                pair[0], a.imse, pair[1], b.imse
            ));
        }
    }
    Ok(notes.join(", "))
}

fn c8_imse_order() -> Outcome {
    let cfg = network_config(10, 2, OutcomeDistribution::Independent { mu1: 0.0 }, 200, AllocationPlan::Exhaustive, 808);
    let report = compute_imse(&cfg).map_err(fail)?;
    use EstimatorFamily::*;
    let notes = ordered(&report, &[MInd, HtAvg, Ht0, Ht1])?;
    let imse: Vec<String> = report.estimators.iter().map(|s| format!("{}={:.3}", s.estimator, s.imse)).collect();
    Ok(format!("{} ({})", notes, imse.join(" ")))
}

fn c9_interaction_robustness() -> Outcome {
    let mut reference: Option<Vec<f64>> = None;
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for delta1 in [0.0, 2.0, 4.0, 6.0] {
        let cfg = network_config(
            40,
            4,
            OutcomeDistribution::Interaction { mu1: 50.0, delta1 },
            200,
            AllocationPlan::Sample { count: 1024 },
            909,
        );
        let report = compute_imse(&cfg).map_err(fail)?;
        let ht0 = report.summary(EstimatorFamily::Ht0).unwrap();
        match &reference {
            None => reference = Some(ht0.per_draw_mse.clone()),
            Some(r) => {
                let same = r.iter().zip(&ht0.per_draw_mse).all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    return Err(format!("HT0 per-draw IMSE changed at delta1={delta1}"));
                }
            }
        }
        let mut gaps = Vec::new();
        for fam in [EstimatorFamily::HtAvg, EstimatorFamily::MInd, EstimatorFamily::MDil { eta1: 1.0 }] {
            let s = report.summary(fam).unwrap();
            let (diff, se) = paired_difference(&ht0.per_draw_mse, &s.per_draw_mse);
            gaps.push(format!("{fam} {:.1} SE", diff / se));
            if diff <= 3.0 * se {
                failures.push(format!(
                    "delta1={delta1}: {fam} {:.2} vs HT0 {:.2}, gap {diff:.2} <= 3 x {se:.2}",
                    s.imse, ht0.imse
                ));
            }
        }
        notes.push(format!("delta1={delta1} ({})", gaps.join(", ")));
    }
    let summary = format!("HT0 bit-identical across delta1; gaps over HT0: {}", notes.join("; "));
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failures.join("; ")))
    }
}

fn c10_design_oracle() -> Outcome {
    let mut networks: Vec<Network> = Vec::new();
    // every directed graph on 3 and 4 units
    for n in [3usize, 4] {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t))).collect();
        for mask in 0u64..1 << pairs.len() {
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, e)| *e).collect();
            networks.push(Network::from_edges(n, &edges).map_err(fail)?);
        }
    }
    for n in 5..=12usize {
        for seed in 0..3u64 {
            networks.push(gen_erdos_renyi_directed(n, 0.15 + 0.25 * seed as f64, seed).map_err(fail)?);
            networks.push(gen_k_regular_directed(n, 1 + (seed as usize + n) % (n - 1), seed).map_err(fail)?);
        }
    }
    let mut worst: f64 = 0.0;
    let mut units = 0;
    for (idx, net) in networks.iter().enumerate() {
        let p_treat = [0.5, 0.3, 0.8][idx % 3];
        let design = Design::bernoulli(net.n(), p_treat).map_err(fail)?;
        for i in 0..net.n() {
            let di = net.in_degree(i);
            if di == 0 {
                continue;
            }
            let exact = exposure_distribution_exact(&design, ExposureMapping::NetworkInterference, Some(net), i)
                .map_err(fail)?;
            for e in enumerate_exposures(exact.spec()) {
                let diff = (bernoulli_exposure_prob(di, &e, p_treat).map_err(fail)? - exact.prob(&e)).abs();
                worst = worst.max(diff);
                if diff >= 1e-12 {
                    return Err(format!("network {idx} unit {i} exposure {e}: deviation {diff:e}"));
                }
            }
            units += 1;
        }
    }
    Ok(format!("{} networks, {units} units, max deviation {worst:.1e}", networks.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("unbiasedness oracle", c1_unbiasedness),
        ("dimension and count identities", c2_counts),
        ("basis spanning", c3_spanning),
        ("KKT correctness", c4_kkt),
        ("six-term closed form", c5_six_term),
        ("alpha3 maximum", c6_alpha3_max),
        ("limit support realization", c7_supports),
        ("IMSE ordering, n=10 2-regular", c8_imse_order),
        ("robustness to interaction", c9_interaction_robustness),
        ("design closed form vs enumeration", c10_design_oracle),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.2}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.2}s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
