//! Frequency-domain error `E(w) = sigma_1(H(iw) - H~(iw))` and grid-based
//! H-infinity estimation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{log_space, sigma_max, top_singular_triplet, CMatrix, CVector, C64};
use crate::resolvent::FastTransfer;
use crate::system::PHSystem;

/// Anything that can be sampled as a nonnegative error curve on the
/// positive frequency axis.
pub trait ErrorSource: Sync {
    fn error_at(&self, omega: f64) -> Result<f64>;
}

impl<F> ErrorSource for F
where
    F: Fn(f64) -> f64 + Sync,
{
    fn error_at(&self, omega: f64) -> Result<f64> {
        Ok(self(omega))
    }
}

/// Full-order response with a cache keyed by the bit pattern of `omega`.
#[derive(Debug)]
pub struct FomResponse {
    system: PHSystem,
    transfer: FastTransfer,
    cache: Mutex<HashMap<u64, CMatrix>>,
}

impl FomResponse {
    pub fn new(system: PHSystem) -> Self {
        let transfer = FastTransfer::new(&system);
        Self {
            system,
            transfer,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn system(&self) -> &PHSystem {
        &self.system
    }

    pub fn transfer(&self) -> &FastTransfer {
        &self.transfer
    }

    pub fn m(&self) -> usize {
        self.system.m()
    }

    /// `H(i omega)`.
    pub fn at(&self, omega: f64) -> Result<CMatrix> {
        let key = omega.to_bits();
        if let Some(h) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(h.clone());
        }
        let h = self.transfer.eval(C64::new(0.0, omega))?;
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(key, h.clone());
        Ok(h)
    }

    /// Responses at many frequencies; uncached points are evaluated in parallel.
    pub fn at_many(&self, omegas: &[f64]) -> Result<Vec<CMatrix>> {
        omegas.par_iter().map(|&w| self.at(w)).collect()
    }

    pub fn cached_points(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }
}

/// Error between a full-order response and an (optional) reduced model.
/// `rom = None` stands for the zero model.
pub struct ErrorFunction {
    fom: Arc<FomResponse>,
    rom: Option<FastTransfer>,
}

impl ErrorFunction {
    pub fn new(fom: Arc<FomResponse>, rom: Option<&PHSystem>) -> Result<Self> {
        if let Some(r) = rom {
            Error::check_len("reduced model inputs", fom.m(), r.m())?;
        }
        Ok(Self {
            rom: rom.map(FastTransfer::new),
            fom,
        })
    }

    pub fn fom(&self) -> &Arc<FomResponse> {
        &self.fom
    }

    /// `H(i omega) - H~(i omega)`.
    pub fn error_matrix(&self, omega: f64) -> Result<CMatrix> {
        let h = self.fom.at(omega)?;
        match &self.rom {
            None => Ok(h),
            Some(rom) => Ok(h - rom.eval(C64::new(0.0, omega))?),
        }
    }

    /// Largest singular value of the error together with its singular vectors.
    pub fn error_triplet(&self, omega: f64) -> Result<(f64, CVector, CVector)> {
        Ok(top_singular_triplet(&self.error_matrix(omega)?))
    }
}

impl ErrorSource for ErrorFunction {
    fn error_at(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) {
            return Err(Error::Domain(format!("frequency must be positive, got {omega}")));
        }
        Ok(sigma_max(&self.error_matrix(omega)?))
    }
}

/// Evaluates `e` on all points, in parallel, preserving order.
pub fn evaluate_grid<E: ErrorSource + ?Sized>(e: &E, omegas: &[f64]) -> Result<Vec<f64>> {
    omegas.par_iter().map(|&w| e.error_at(w)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfEstimate {
    pub value: f64,
    pub omega: f64,
}

/// Relative bracket width at which golden-section refinement stops.
pub const REFINE_TOL: f64 = 1e-3;

/// Lower estimate of `sup_w E(w)` over `[lo, hi]`: maximum on a log grid of
/// `n_grid` points, refined by golden-section search (in `log w`) between
/// the neighbours of the grid maximizer.
pub fn hinf_estimate<E: ErrorSource + ?Sized>(
    e: &E,
    lo: f64,
    hi: f64,
    n_grid: usize,
) -> Result<HinfEstimate> {
    if !(lo > 0.0 && lo < hi) || n_grid < 2 {
        return Err(Error::Domain(format!(
            "need 0 < lo < hi and n_grid >= 2 (lo={lo}, hi={hi}, n_grid={n_grid})"
        )));
    }
    let grid = log_space(lo, hi, n_grid);
    let values = evaluate_grid(e, &grid)?;
    let mut k = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[k] {
            k = i;
        }
    }
    let mut best = HinfEstimate {
        value: values[k],
        omega: grid[k],
    };
    let a = grid[k.saturating_sub(1)].ln();
    let b = grid[(k + 1).min(n_grid - 1)].ln();
    if let Some(refined) = golden_max(e, a, b)? {
        if refined.value > best.value {
            best = refined;
        }
    }
    Ok(best)
}

fn golden_max<E: ErrorSource + ?Sized>(e: &E, mut a: f64, mut b: f64) -> Result<Option<HinfEstimate>> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    if !(b > a) {
        return Ok(None);
    }
    let f = |x: f64| e.error_at(x.exp());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    // width in log space below ln(1 + tol) <=> relative width below tol
    let stop = (1.0 + REFINE_TOL).ln();
    while b - a > stop {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(Some(if fc > fd {
        HinfEstimate {
            value: fc,
            omega: c.exp(),
        }
    } else {
        HinfEstimate {
            value: fd,
            omega: d.exp(),
        }
    }))
}
