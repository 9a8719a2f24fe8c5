//! Adaptive-versus-fixed sampling comparison on a benchmark system.
//!
//! For each reduced order the greedy initializer runs once; the bisection is
//! then run with adaptive sampling (decade grid plus interpolation points) and
//! with a fixed log grid. Only `reduce` is timed, as the median over repeats.
//! Errors are measured on a dense log grid independent of either sample set.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{ErrorFunction, FomResponse, HinfEstimate};
use crate::init::{greedy_init, theta_from_init, InitOptions, InitResult};
use crate::linalg::{log_space, sigma_max, CMatrix, C64};
use crate::reduce::{reduce, ReduceOptions, Reduction};
use crate::sampling::{adapt_samples, AdaptOptions, SampleSet};
use crate::system::PHSystem;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Protocol {
    pub init: InitOptions,
    pub reduce: ReduceOptions,
    pub lo: f64,
    pub hi: f64,
    pub fixed_points: usize,
    pub verify_points: usize,
    pub repeats: usize,
    /// Cap for the single-shot sample count; reaching it gives a lower bound.
    pub single_shot_cap: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            init: InitOptions::default(),
            reduce: ReduceOptions::default(),
            lo: 1e-8,
            hi: 1e5,
            fixed_points: 800,
            verify_points: 100_000,
            repeats: 3,
            single_shot_cap: 2_000_000,
        }
    }
}

/// Powers of ten from `lo` to `hi` (both rounded to decades) joined with the
/// interpolation points.
pub fn initial_samples(lo: f64, hi: f64, points: &[f64]) -> Result<SampleSet> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("need 0 < lo < hi, got {lo}, {hi}")));
    }
    let (a, b) = (lo.log10().round() as i32, hi.log10().round() as i32);
    let mut all: Vec<f64> = (a..=b).map(|k| 10f64.powi(k)).collect();
    all.extend_from_slice(points);
    SampleSet::new(all)
}

pub fn fixed_samples(lo: f64, hi: f64, n: usize) -> Result<SampleSet> {
    if n < 2 {
        return Err(Error::Domain("a fixed grid needs at least two points".into()));
    }
    SampleSet::new(log_space(lo, hi, n))
}

/// Full-order responses on a dense log grid, computed once.
#[derive(Debug, Clone)]
pub struct VerificationGrid {
    omegas: Vec<f64>,
    responses: Vec<CMatrix>,
}

impl VerificationGrid {
    pub fn new(fom: &FomResponse, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let omegas = log_space(lo, hi, n);
        let responses = omegas
            .par_iter()
            .map(|&w| fom.transfer().eval(C64::new(0.0, w)))
            .collect::<Result<_>>()?;
        Ok(Self { omegas, responses })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// `sigma_1(H(iw) - H_rom(iw))` on every grid point.
    pub fn errors(&self, rom: &PHSystem) -> Result<Vec<f64>> {
        let fast = crate::resolvent::FastTransfer::new(rom);
        self.omegas
            .par_iter()
            .zip(&self.responses)
            .map(|(&w, h)| Ok(sigma_max(&(h - fast.eval(C64::new(0.0, w))?))))
            .collect()
    }

    pub fn hinf(&self, rom: &PHSystem) -> Result<HinfEstimate> {
        let errs = self.errors(rom)?;
        let (k, value) = errs
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
        Ok(HinfEstimate {
            value,
            omega: self.omegas[k],
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub adaptive: bool,
    pub reduction: Reduction,
    /// Median over the repeats.
    pub seconds: f64,
    pub all_seconds: Vec<f64>,
    pub hinf: HinfEstimate,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Reduces from a given initial model. Every repeat starts from an empty
/// response cache so that the timings are comparable.
pub fn run_single(
    fom_sys: &PHSystem,
    init: &InitResult,
    adaptive: bool,
    protocol: &Protocol,
    verify: &VerificationGrid,
) -> Result<RunOutcome> {
    let theta0 = theta_from_init(&init.rom)?;
    let s0 = if adaptive {
        initial_samples(protocol.lo, protocol.hi, init.points())?
    } else {
        fixed_samples(protocol.lo, protocol.hi, protocol.fixed_points)?
    };
    let opts = ReduceOptions {
        adaptive,
        ..protocol.reduce
    };
    let mut times = Vec::with_capacity(protocol.repeats.max(1));
    let mut result: Option<Reduction> = None;
    for _ in 0..protocol.repeats.max(1) {
        let fom = Arc::new(FomResponse::new(fom_sys.clone()));
        let start = Instant::now();
        let red = reduce(&fom, &theta0, &s0, &opts)?;
        times.push(start.elapsed().as_secs_f64());
        if let Some(prev) = &result {
            if prev.theta_opt.as_slice() != red.theta_opt.as_slice() {
                return Err(Error::Invariant("repeated reductions disagree".into()));
            }
        }
        result = Some(red);
    }
    let reduction = result.expect("at least one repeat");
    let hinf = verify.hinf(&reduction.theta_opt.assemble())?;
    Ok(RunOutcome {
        adaptive,
        reduction,
        seconds: median(times.clone()),
        all_seconds: times,
        hinf,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub r: usize,
    pub seconds_fixed: f64,
    pub seconds_adaptive: f64,
    /// `seconds_fixed / seconds_adaptive`.
    pub ratio: f64,
    pub n_samples_final: usize,
    pub hinf_adaptive: f64,
    pub hinf_fixed: f64,
    pub gamma_adaptive: f64,
    pub gamma_fixed: f64,
}

#[derive(Debug, Clone)]
pub struct OrderRuns {
    pub r: usize,
    pub init: InitResult,
    pub adaptive: RunOutcome,
    pub fixed: RunOutcome,
}

#[derive(Debug, Clone)]
pub struct ComparisonResult {
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<OrderRuns>,
}

/// Runs both variants for each order in `orders`; `progress` sees each
/// finished row.
pub fn run_comparison(
    fom_sys: &PHSystem,
    orders: &[usize],
    protocol: &Protocol,
    mut progress: impl FnMut(&ComparisonRow),
) -> Result<ComparisonResult> {
    if let Some(r) = orders.iter().find(|r| **r % 2 != 0) {
        return Err(Error::Domain(format!("reduced orders must be even, got {r}")));
    }
    let fom = Arc::new(FomResponse::new(fom_sys.clone()));
    let verify = VerificationGrid::new(&fom, protocol.lo, protocol.hi, protocol.verify_points)?;
    let mut rows = Vec::with_capacity(orders.len());
    let mut runs = Vec::with_capacity(orders.len());
    for &r in orders {
        let init = greedy_init(&fom, r, &protocol.init)?;
        let adaptive = run_single(fom_sys, &init, true, protocol, &verify)?;
        let fixed = run_single(fom_sys, &init, false, protocol, &verify)?;
        let row = ComparisonRow {
            r,
            seconds_fixed: fixed.seconds,
            seconds_adaptive: adaptive.seconds,
            ratio: fixed.seconds / adaptive.seconds,
            n_samples_final: adaptive.reduction.samples.len(),
            hinf_adaptive: adaptive.hinf.value,
            hinf_fixed: fixed.hinf.value,
            gamma_adaptive: adaptive.reduction.report.final_gamma,
            gamma_fixed: fixed.reduction.report.final_gamma,
        };
        progress(&row);
        rows.push(row);
        runs.push(OrderRuns {
            r,
            init,
            adaptive,
            fixed,
        });
    }
    Ok(ComparisonResult { rows, runs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleShot {
    pub count: usize,
    /// The cap was hit, so `count` is only a lower bound.
    pub capped: bool,
}

/// Samples needed when refining once, at level `gamma`, against the initial
/// model instead of interleaving refinement with the bisection.
pub fn single_shot_sample_count(
    fom: &Arc<FomResponse>,
    init_rom: &PHSystem,
    s0: &SampleSet,
    gamma: f64,
    cap: usize,
) -> Result<SingleShot> {
    let err = ErrorFunction::new(fom.clone(), Some(init_rom))?;
    match adapt_samples(&err, s0, gamma, AdaptOptions { cap }) {
        Ok(s) => Ok(SingleShot {
            count: s.len(),
            capped: false,
        }),
        Err(Error::GrowthLimit { .. }) => Ok(SingleShot { count: cap, capped: true }),
        Err(e) => Err(e),
    }
}
