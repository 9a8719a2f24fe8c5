mod common;

use common::*;
use phred_core::linalg::{sigma_max, C64};
use phred_core::objective::{evaluate, sample_errors};
use phred_core::reduce::minimize_loss;
use phred_core::{loss, loss_gradient, BfgsOptions, LossContext, SampleSet, Termination, ThetaVector};
use rand::Rng;

/// Responses of a random order-8 system at `k` log-spaced samples.
fn random_context(rng: &mut impl Rng, m: usize, k: usize) -> LossContext {
    let fom = random_system(rng, 8, m);
    let omegas: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
    let samples = SampleSet::new(omegas).unwrap();
    let responses = samples
        .as_slice()
        .iter()
        .map(|&w| transfer_by_inverse(&fom, C64::new(0.0, w)))
        .collect();
    LossContext::from_responses(1.0, samples, responses).unwrap()
}

/// Level placed at the median sample error so about half the samples are active.
fn straddling(ctx: &LossContext, theta: &ThetaVector) -> LossContext {
    let mut e = sample_errors(ctx, theta).unwrap();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ctx.with_gamma(0.5 * (e[e.len() / 2 - 1] + e[e.len() / 2])).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.gen_range(1..=6);
        let theta = random_theta(&mut r, n, 2);
        let ctx = random_context(&mut r, 2, 12);
        let ctx = straddling(&ctx, &theta);
        let g = loss_gradient(&ctx, &theta).unwrap();
        let fd = central_differences(
            |x| loss(&ctx, &ThetaVector::new(n, 2, x.to_vec()).unwrap()).unwrap(),
            theta.as_slice(),
            1e-6,
        );
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = inf_norm(&diff) / inf_norm(&fd).max(1e-12);
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-5, "worst relative deviation {worst:e}");
}

#[test]
fn sample_errors_match_direct_evaluation() {
    let mut r = rng(12);
    for _ in 0..20 {
        let fom = random_system(&mut r, 8, 2);
        let theta = random_theta(&mut r, 4, 2);
        let samples = SampleSet::new(vec![0.05, 0.4, 1.0, 3.0, 20.0]).unwrap();
        let responses = samples
            .as_slice()
            .iter()
            .map(|&w| transfer_by_inverse(&fom, C64::new(0.0, w)))
            .collect();
        let ctx = LossContext::from_responses(1.0, samples.clone(), responses).unwrap();
        let errs = sample_errors(&ctx, &theta).unwrap();
        let rom = theta.assemble();
        for (k, &w) in samples.as_slice().iter().enumerate() {
            let s = C64::new(0.0, w);
            let direct = sigma_max(&(transfer_by_inverse(&fom, s) - transfer_by_inverse(&rom, s)));
            assert!((errs[k] - direct).abs() <= 1e-9 * direct.max(1.0));
        }
    }
}

#[test]
fn zero_loss_iff_all_samples_within_level() {
    let mut r = rng(13);
    for _ in 0..30 {
        let n = r.gen_range(1..=5);
        let theta = random_theta(&mut r, n, 2);
        let ctx = random_context(&mut r, 2, 12);
        let errs = sample_errors(&ctx, &theta).unwrap();
        let mut levels: Vec<f64> = Vec::new();
        for &e in &errs {
            levels.extend([e, e * (1.0 - 1e-12), e * (1.0 + 1e-12), f64::from_bits(e.to_bits() - 1), f64::from_bits(e.to_bits() + 1)]);
        }
        for gamma in levels {
            let ev = evaluate(&ctx.with_gamma(gamma).unwrap(), &theta, false).unwrap();
            assert_eq!(ev.loss == 0.0, ev.max_error <= gamma, "gamma {gamma:e}");
            let g = loss_gradient(&ctx.with_gamma(gamma).unwrap(), &theta).unwrap();
            if ev.loss == 0.0 {
                assert!(g.iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn loss_formula_on_one_sample() {
    // zero model: error equals sigma_max of the response
    let mut r = rng(14);
    let ctx = random_context(&mut r, 2, 1);
    let zero = ThetaVector::zeros(3, 2);
    let e = sample_errors(&ctx, &zero).unwrap()[0];
    let gamma = 0.5 * e;
    let l = loss(&ctx.with_gamma(gamma).unwrap(), &zero).unwrap();
    assert!((l - (e - gamma).powi(2) / gamma).abs() <= 1e-14 * l);
}

#[test]
fn minimize_returns_start_when_level_met() {
    let mut r = rng(15);
    let theta = random_theta(&mut r, 3, 2);
    let ctx = random_context(&mut r, 2, 12);
    let e = sample_errors(&ctx, &theta).unwrap();
    let ctx = ctx.with_gamma(e.iter().cloned().fold(0.0, f64::max) * 1.01).unwrap();
    let out = minimize_loss(&ctx, &theta, &BfgsOptions::default()).unwrap();
    assert_eq!(out.iterations, 0);
    assert_eq!(out.termination, Termination::ZeroValue);
    assert_eq!(out.theta.as_slice(), theta.as_slice());
}

#[test]
fn minimize_never_increases_loss() {
    let mut r = rng(16);
    for _ in 0..5 {
        let theta = random_theta(&mut r, 4, 2);
        let ctx = random_context(&mut r, 2, 12);
        let ctx = straddling(&ctx, &theta);
        let l0 = loss(&ctx, &theta).unwrap();
        let opts = BfgsOptions {
            max_iter: 200,
            ..BfgsOptions::default()
        };
        let out = minimize_loss(&ctx, &theta, &opts).unwrap();
        assert!(out.loss <= l0);
        assert_eq!(out.loss, loss(&ctx, &out.theta).unwrap());
    }
}

#[test]
fn sigma_max_agrees_with_svd() {
    let mut r = rng(17);
    for _ in 0..100 {
        let m = r.gen_range(1..=3);
        let a = phred_core::linalg::CMatrix::from_fn(m, m, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
        let svd = a.clone().svd(false, false).singular_values.max();
        assert!((sigma_max(&a) - svd).abs() <= 1e-12 * svd.max(1.0));
    }
}
