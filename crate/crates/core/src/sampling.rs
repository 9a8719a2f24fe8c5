//! Logarithmic sample adaptation with a first-order interval certificate.
//!
//! For two adjacent samples `w_i < w_j` the log-midpoint `w_t` is probed and
//! the larger of the two difference quotients serves as a derivative bound
//! `d*`. With `g* = max(E(w_i), E(w_j))`, the interval is left alone when
//!
//! ```text
//! d* (w_j - w_i) < 2 (g* + gamma) - E(w_i) - E(w_j)
//! ```
//!
//! and otherwise `w_t` is inserted. Sweeps repeat until nothing is inserted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::ErrorSource;

/// Relative distance under which two frequencies are treated as equal.
pub const MERGE_TOL: f64 = 1e-14;

/// Default bound on the number of samples `adapt_samples` may produce.
pub const DEFAULT_SAMPLE_CAP: usize = 100_000;

/// Sorted set of positive sample frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    omegas: Vec<f64>,
}

impl SampleSet {
    /// Sorts, merges near-duplicates and rejects nonpositive entries.
    pub fn new(mut omegas: Vec<f64>) -> Result<Self> {
        if let Some(bad) = omegas.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Domain(format!("sample frequency must be positive and finite, got {bad}")));
        }
        omegas.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut out: Vec<f64> = Vec::with_capacity(omegas.len());
        for w in omegas {
            match out.last() {
                Some(&last) if w - last <= MERGE_TOL * w => {}
                _ => out.push(w),
            }
        }
        Ok(Self { omegas: out })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn union(&self, other: &[f64]) -> Result<Self> {
        let mut all = self.omegas.clone();
        all.extend_from_slice(other);
        Self::new(all)
    }

    pub fn contains(&self, omega: f64) -> bool {
        self.omegas.binary_search_by(|w| w.partial_cmp(&omega).expect("finite")).is_ok()
    }

    pub fn is_superset_of(&self, other: &SampleSet) -> bool {
        other.omegas.iter().all(|&w| self.contains(w))
    }
}

/// `10^((log10 a + log10 b) / 2)`, i.e. the geometric mean.
pub fn log_midpoint(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > a) {
        return Err(Error::Domain(format!("need 0 < a < b, got a={a}, b={b}")));
    }
    Ok(a.sqrt() * b.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDecision {
    pub split: bool,
    pub omega_test: f64,
    pub error_test: f64,
}

/// Lemma-2 certificate: with `bound >= |phi'|` on `[w_i, w_j]`, returns true
/// only if `phi < max(e_i, e_j) + tau` on the whole interval.
pub fn certified_by_bound(bound: f64, (w_i, e_i): (f64, f64), (w_j, e_j): (f64, f64), tau: f64) -> bool {
    let g_star = e_i.max(e_j);
    bound * (w_j - w_i) < 2.0 * (g_star + tau) - (e_i + e_j)
}

/// The certificate test on one interval given the three error values, with
/// the derivative bound estimated from the two difference quotients.
pub fn split_criterion(
    (w_i, e_i): (f64, f64),
    (w_t, e_t): (f64, f64),
    (w_j, e_j): (f64, f64),
    gamma: f64,
) -> bool {
    let d1 = (e_t - e_i) / (w_t - w_i);
    let d2 = (e_j - e_t) / (w_j - w_t);
    let g_star = e_i.max(e_j);
    let d_star = d1.max(d2);
    let rhs = 2.0 * (g_star + gamma) - (e_i + e_j);
    if rhs <= 0.0 {
        return true;
    }
    d_star * (w_j - w_i) >= rhs
}

/// Decides whether `[w_i, w_j]` needs the log-midpoint inserted.
pub fn interval_needs_split<E: ErrorSource + ?Sized>(
    e: &E,
    w_i: f64,
    w_j: f64,
    gamma: f64,
) -> Result<SplitDecision> {
    check_gamma(gamma)?;
    let w_t = log_midpoint(w_i, w_j)?;
    let (e_i, e_t, e_j) = (e.error_at(w_i)?, e.error_at(w_t)?, e.error_at(w_j)?);
    Ok(SplitDecision {
        split: split_criterion((w_i, e_i), (w_t, e_t), (w_j, e_j), gamma),
        omega_test: w_t,
        error_test: e_t,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("level must be positive, got {gamma}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptOptions {
    pub cap: usize,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_SAMPLE_CAP,
        }
    }
}

/// Refines `samples` until every interval passes the certificate at level
/// `gamma` (used as the tolerance as well). Points are only ever added.
///
/// Each sweep tests the intervals created by the previous sweep; an interval
/// that passed once passes again since `e` does not change during the call.
pub fn adapt_samples<E: ErrorSource + ?Sized>(
    e: &E,
    samples: &SampleSet,
    gamma: f64,
    opts: AdaptOptions,
) -> Result<SampleSet> {
    check_gamma(gamma)?;
    if samples.len() < 2 {
        return Err(Error::Domain("need at least two samples to adapt".into()));
    }
    let mut omegas = samples.omegas.clone();
    let mut errs: Vec<f64> = omegas
        .par_iter()
        .map(|&w| e.error_at(w))
        .collect::<Result<_>>()?;
    // open[i] refers to the interval [omegas[i], omegas[i + 1]]
    let mut open = vec![true; omegas.len() - 1];

    loop {
        let pending: Vec<usize> = (0..open.len()).filter(|&i| open[i]).collect();
        if pending.is_empty() {
            break;
        }
        let probes: Vec<Option<(f64, f64)>> = pending
            .par_iter()
            .map(|&i| {
                let (w_i, w_j) = (omegas[i], omegas[i + 1]);
                let w_t = w_i.sqrt() * w_j.sqrt();
                // interval too narrow to bisect in floating point
                if !(w_t - w_i > MERGE_TOL * w_t && w_j - w_t > MERGE_TOL * w_j) {
                    return Ok(None);
                }
                let e_t = e.error_at(w_t)?;
                let split = split_criterion((w_i, errs[i]), (w_t, e_t), (w_j, errs[i + 1]), gamma);
                Ok(split.then_some((w_t, e_t)))
            })
            .collect::<Result<_>>()?;

        let inserted = probes.iter().filter(|p| p.is_some()).count();
        if omegas.len() + inserted > opts.cap {
            return Err(Error::GrowthLimit {
                size: omegas.len() + inserted,
                cap: opts.cap,
            });
        }

        let mut next_w = Vec::with_capacity(omegas.len() + inserted);
        let mut next_e = Vec::with_capacity(omegas.len() + inserted);
        let mut next_open = Vec::with_capacity(open.len() + inserted);
        let mut probe_iter = pending.iter().zip(probes).peekable();
        for i in 0..omegas.len() {
            next_w.push(omegas[i]);
            next_e.push(errs[i]);
            if i + 1 == omegas.len() {
                break;
            }
            let probe = match probe_iter.peek() {
                Some((&k, _)) if k == i => probe_iter.next().map(|(_, p)| p).unwrap(),
                _ => None,
            };
            match probe {
                Some((w_t, e_t)) => {
                    next_w.push(w_t);
                    next_e.push(e_t);
                    next_open.push(true);
                    next_open.push(true);
                }
                None => next_open.push(false),
            }
        }
        omegas = next_w;
        errs = next_e;
        open = next_open;
        if inserted == 0 {
            break;
        }
    }
    Ok(SampleSet { omegas })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_set_normalizes() {
        let s = SampleSet::new(vec![3.0, 1.0, 2.0, 1.0 + 1e-16, 2.0]).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 2.0, 3.0]);
        assert!(SampleSet::new(vec![1.0, 0.0]).is_err());
        assert!(SampleSet::new(vec![-1.0]).is_err());
    }

    #[test]
    fn midpoint_examples() {
        assert!((log_midpoint(1e-2, 1e2).unwrap() - 1.0).abs() < 1e-15);
        assert!((log_midpoint(1.0, 1e2).unwrap() - 10.0).abs() < 1e-14);
        assert!(log_midpoint(0.0, 1.0).is_err());
        assert!(log_midpoint(2.0, 1.0).is_err());
    }

    #[test]
    fn flat_zero_error_never_splits() {
        let zero = |_: f64| 0.0;
        let d = interval_needs_split(&zero, 1.0, 100.0, 0.1).unwrap();
        assert!(!d.split);
        assert_eq!(d.omega_test, 10.0);
        let s = SampleSet::new(vec![1e-3, 1.0, 1e3]).unwrap();
        assert_eq!(adapt_samples(&zero, &s, 0.1, AdaptOptions::default()).unwrap(), s);
    }

    #[test]
    fn spike_at_midpoint_forces_split() {
        // piecewise linear: 0.5 at the ends, 0.5 + delta at w = 10
        let gamma = 0.1;
        let spike = |w: f64| {
            if w <= 10.0 {
                0.5 + 0.4 * (w - 1.0) / 9.0
            } else {
                0.9 - 0.4 * (w - 10.0) / 90.0
            }
        };
        let d = interval_needs_split(&spike, 1.0, 100.0, gamma).unwrap();
        // d1 = 0.4 / 9, d* (w_j - w_i) = 0.4 * 99 / 9 = 4.4 >= 2 gamma = 0.2
        assert!(d.split);
        assert!((d.error_test - 0.9).abs() < 1e-12);
    }

    #[test]
    fn bad_level_rejected() {
        let zero = |_: f64| 0.0;
        assert!(interval_needs_split(&zero, 1.0, 2.0, 0.0).is_err());
        let s = SampleSet::new(vec![1.0]).unwrap();
        assert!(adapt_samples(&zero, &s, 1.0, AdaptOptions::default()).is_err());
    }

    #[test]
    fn growth_cap_aborts() {
        let wiggly = |w: f64| (50.0 * w).sin().abs();
        let s = SampleSet::new(vec![1e-2, 1e2]).unwrap();
        let err = adapt_samples(&wiggly, &s, 1e-6, AdaptOptions { cap: 50 }).unwrap_err();
        assert!(matches!(err, Error::GrowthLimit { cap: 50, .. }));
    }

    #[test]
    fn narrow_spike_gets_sampled() {
        // visible from the log-midpoint w = 1 of the initial interval
        let spike = |w: f64| 1.0 / (1.0 + 100.0 * (w - 1.1).powi(2));
        let s = SampleSet::new(vec![1e-2, 1e2]).unwrap();
        let out = adapt_samples(&spike, &s, 0.05, AdaptOptions::default()).unwrap();
        assert!(out.is_superset_of(&s));
        // some sample lands in the half-maximum band of the spike
        assert!(out.as_slice().iter().any(|&w| (w - 1.1).abs() <= 0.1 + 1e-12));
    }
}
