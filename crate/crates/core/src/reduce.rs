//! Bisection over the level `gamma` with warm-started loss minimization.
//!
//! Each pass takes the bracket midpoint, optionally refines the sample set
//! against the current error, and minimizes the loss. A pass succeeds when
//! the loss reaches exactly zero, i.e. every sample error is at most `gamma`.
//! The parameters carry over between levels, failed ones included, and the
//! result of the last minimization is what the run returns.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bfgs::{minimize, BfgsOptions, Termination};
use crate::error::{Error, Result};
use crate::freq::{ErrorFunction, FomResponse};
use crate::objective::{evaluate, sample_errors, LossContext};
use crate::sampling::{adapt_samples, AdaptOptions, SampleSet, DEFAULT_SAMPLE_CAP};
use crate::theta::ThetaVector;

/// Bisection state. Invariant: `0 <= gamma_min < gamma_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBracket {
    gamma_min: f64,
    gamma_max: f64,
    tau_b: f64,
    current: Option<f64>,
}

impl GammaBracket {
    pub fn new(gamma_max: f64, tau_b: f64) -> Result<Self> {
        if !(gamma_max > 0.0 && gamma_max.is_finite()) {
            return Err(Error::Domain(format!("gamma_max must be positive, got {gamma_max}")));
        }
        if !(tau_b > 0.0 && tau_b.is_finite()) {
            return Err(Error::Domain(format!("tau_b must be positive, got {tau_b}")));
        }
        Ok(Self {
            gamma_min: 0.0,
            gamma_max,
            tau_b,
            current: None,
        })
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    /// Smallest level reached so far (or the initial upper bound).
    pub fn gamma_max(&self) -> f64 {
        self.gamma_max
    }

    pub fn current(&self) -> Option<f64> {
        self.current
    }

    /// Loop guard `gamma * tau_b < gamma_max - gamma_min`, with
    /// `gamma = gamma_max` before the first level.
    pub fn should_continue(&self) -> bool {
        let g = self.current.unwrap_or(self.gamma_max);
        g * self.tau_b < self.gamma_max - self.gamma_min
    }

    /// Moves to the bracket midpoint and returns it.
    pub fn next_level(&mut self) -> f64 {
        let g = 0.5 * (self.gamma_max + self.gamma_min);
        self.current = Some(g);
        g
    }

    /// Shrinks the bracket from above on success, from below otherwise.
    pub fn record(&mut self, success: bool) {
        let g = self.current.expect("record called before next_level");
        if success {
            self.gamma_max = g;
        } else {
            self.gamma_min = g;
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReduceOptions {
    pub gamma_max: f64,
    pub tau_b: f64,
    pub max_bisect: usize,
    /// Refine the samples before each level; a fixed sample set otherwise.
    pub adaptive: bool,
    pub sample_cap: usize,
    /// The optimizer targets `gamma * (1 - level_margin)`; success is still
    /// judged at `gamma`. The squared hinge only pushes errors onto the level,
    /// so without a margin the loss decays towards zero without reaching it.
    pub level_margin: f64,
    pub bfgs: BfgsOptions,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        Self {
            gamma_max: 0.5,
            tau_b: 0.1,
            max_bisect: 30,
            adaptive: true,
            sample_cap: DEFAULT_SAMPLE_CAP,
            level_margin: 1e-3,
            bfgs: BfgsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub gamma: f64,
    pub n_samples: usize,
    pub loss: f64,
    pub opt_iters: usize,
    pub grad_norm: f64,
    pub seconds: f64,
    pub success: bool,
    pub max_sample_error: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionReport {
    pub iterations: Vec<IterationRecord>,
    /// Best level met (the upper end of the final bracket).
    pub final_gamma: f64,
    pub theta_len: usize,
    /// Largest error of `theta_opt` on the final sample set.
    pub final_hinf_sampled: f64,
    pub final_n_samples: usize,
    pub aborted: Option<String>,
    pub theta: Vec<f64>,
}

/// Parameters and samples at the end of one level.
#[derive(Debug, Clone)]
pub struct LevelState {
    pub gamma: f64,
    pub theta: ThetaVector,
    pub samples: SampleSet,
}

#[derive(Debug, Clone)]
pub struct Reduction {
    /// Result of the last minimization, whether or not it met its level.
    pub theta_opt: ThetaVector,
    /// Parameters of the last level that was met, or the start if none was.
    /// Every sample error is at most `final_gamma` here.
    pub theta_best: ThetaVector,
    pub samples: SampleSet,
    pub report: ReductionReport,
    pub levels: Vec<LevelState>,
}

impl Reduction {
    pub fn aborted(&self) -> bool {
        self.report.aborted.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub theta: ThetaVector,
    pub loss: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub termination: Termination,
}

impl MinimizeOutcome {
    pub fn stagnated(&self) -> bool {
        self.termination == Termination::Stagnation
    }
}

/// BFGS on the loss of `ctx`, starting at `theta0`.
pub fn minimize_loss(ctx: &LossContext, theta0: &ThetaVector, opts: &BfgsOptions) -> Result<MinimizeOutcome> {
    let (n, m) = (theta0.n(), theta0.m());
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let theta = ThetaVector::new(n, m, x.to_vec())?;
        let ev = evaluate(ctx, &theta, true)?;
        Ok((ev.loss, ev.gradient.expect("requested")))
    };
    let res = minimize(objective, theta0.as_slice().to_vec(), opts)?;
    Ok(MinimizeOutcome {
        theta: ThetaVector::new(n, m, res.x)?,
        loss: res.value,
        iterations: res.iterations,
        grad_norm: res.grad_inf,
        termination: res.termination,
    })
}

/// Runs the bisection from `theta0` and the initial samples `s0`.
///
/// The sample-growth cap ends the run early; the partial report is returned
/// with `aborted` set rather than as an error.
pub fn reduce(
    fom: &Arc<FomResponse>,
    theta0: &ThetaVector,
    s0: &SampleSet,
    opts: &ReduceOptions,
) -> Result<Reduction> {
    Error::check_len("theta input dimension", fom.m(), theta0.m())?;
    if s0.len() < 2 {
        return Err(Error::Domain("need at least two initial samples".into()));
    }
    if !(0.0..1.0).contains(&opts.level_margin) {
        return Err(Error::Domain(format!("level margin must be in [0, 1), got {}", opts.level_margin)));
    }
    let mut bracket = GammaBracket::new(opts.gamma_max, opts.tau_b)?;
    let mut theta = theta0.clone();
    let mut theta_best = theta0.clone();
    let mut samples = s0.clone();
    let mut records = Vec::new();
    let mut levels = Vec::new();
    let mut aborted = None;

    while bracket.should_continue() && records.len() < opts.max_bisect {
        let gamma = bracket.next_level();
        let start = Instant::now();
        if opts.adaptive {
            let err = ErrorFunction::new(fom.clone(), Some(&theta.assemble()))?;
            match adapt_samples(&err, &samples, gamma, AdaptOptions { cap: opts.sample_cap }) {
                Ok(s) => samples = s,
                Err(e @ Error::GrowthLimit { .. }) => {
                    log::warn!("stopping at level {gamma}: {e}");
                    aborted = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let ctx = LossContext::new(fom, samples.clone(), gamma)?;
        let out = minimize_loss(&ctx.with_gamma(gamma * (1.0 - opts.level_margin))?, &theta, &opts.bfgs)?;
        let ev = evaluate(&ctx, &out.theta, false)?;
        let success = ev.loss == 0.0;
        let max_sample_error = ev.max_error;
        bracket.record(success);
        log::info!(
            "level {gamma:.6e}: {} samples, loss {:.3e}, {} iterations, {}",
            samples.len(),
            ev.loss,
            out.iterations,
            if success { "met" } else { "missed" }
        );
        records.push(IterationRecord {
            gamma,
            n_samples: samples.len(),
            loss: ev.loss,
            opt_iters: out.iterations,
            grad_norm: out.grad_norm,
            seconds: start.elapsed().as_secs_f64(),
            success,
            max_sample_error,
            termination: out.termination,
        });
        theta = out.theta;
        if success {
            theta_best = theta.clone();
        }
        levels.push(LevelState {
            gamma,
            theta: theta.clone(),
            samples: samples.clone(),
        });
    }

    let theta_opt = theta;
    let ctx = LossContext::new(fom, samples.clone(), bracket.gamma_max())?;
    let final_hinf_sampled = sample_errors(&ctx, &theta_opt)?.into_iter().fold(0.0, f64::max);
    let report = ReductionReport {
        iterations: records,
        final_gamma: bracket.gamma_max(),
        theta_len: theta_opt.len(),
        final_hinf_sampled,
        final_n_samples: samples.len(),
        aborted,
        theta: theta_opt.as_slice().to_vec(),
    };
    Ok(Reduction {
        theta_opt,
        theta_best,
        samples,
        report,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_failure_moves_up() {
        let mut b = GammaBracket::new(0.5, 0.1).unwrap();
        assert!(b.should_continue());
        assert_eq!(b.next_level(), 0.25);
        b.record(false);
        assert_eq!(b.next_level(), 0.375);
    }

    #[test]
    fn all_successes_halve() {
        let mut b = GammaBracket::new(0.5, 0.1).unwrap();
        let mut seq = Vec::new();
        for _ in 0..6 {
            assert!(b.should_continue());
            seq.push(b.next_level());
            b.record(true);
        }
        assert_eq!(seq, [0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125]);
        // gamma_min stays 0, so the guard alone never stops
        assert!(b.should_continue());
    }

    #[test]
    fn guard_stops_on_narrow_bracket() {
        let mut b = GammaBracket::new(0.5, 0.1).unwrap();
        b.next_level();
        b.record(false); // [0.25, 0.5]
        let mut steps = 0;
        while b.should_continue() {
            b.next_level();
            b.record(false);
            steps += 1;
            assert!(steps < 100);
        }
        let g = b.current().unwrap();
        assert!(g * 0.1 >= b.gamma_max() - b.gamma_min());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GammaBracket::new(0.0, 0.1).is_err());
        assert!(GammaBracket::new(0.5, -1.0).is_err());
    }
}
