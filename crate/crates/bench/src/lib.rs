//! Fixtures shared by the benchmarks: the default mass-spring-damper chain
//! and initial reduced models built from it.

use std::sync::Arc;

use phred_core::experiment::{fixed_samples, initial_samples};
use phred_core::{
    greedy_init, msd_chain, theta_from_init, FomResponse, InitOptions, LossContext, MsdConfig, SampleSet,
    ThetaVector,
};

pub fn benchmark_fom() -> Arc<FomResponse> {
    Arc::new(FomResponse::new(msd_chain(&MsdConfig::default()).expect("default chain is valid")))
}

/// Initial parameters of order `r` and the matching adaptive starting set.
pub fn initial(fom: &Arc<FomResponse>, r: usize) -> (ThetaVector, SampleSet) {
    let init = greedy_init(fom, r, &InitOptions::default()).expect("benchmark initializes");
    let theta = theta_from_init(&init.rom).expect("initial model factors");
    let s0 = initial_samples(1e-8, 1e5, init.points()).expect("valid range");
    (theta, s0)
}

/// Loss context on `k` log-spaced samples of the full model at level `gamma`.
pub fn fixed_context(fom: &Arc<FomResponse>, k: usize, gamma: f64) -> LossContext {
    let samples = fixed_samples(1e-8, 1e5, k).expect("valid grid");
    LossContext::new(fom, samples, gamma).expect("benchmark responses evaluate")
}
