//! Greedy tangential interpolation used to produce the starting model.
//!
//! Starting from the zero model, each step locates the frequency where the
//! current error peaks, takes the dominant right singular vector `b` of the
//! error there, and adds `Re`/`Im` of `(i w* I - A)^{-1} B b` to the
//! projection basis `V`. The reduced model is the structure-preserving
//! Petrov-Galerkin projection with `W = Q V (V^T Q V)^{-1}`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{hinf_estimate, ErrorFunction, FomResponse};
use crate::linalg::{CVector, C64};
use crate::system::PHSystem;
use crate::theta::{extract, ThetaVector};

/// Peaks at or below this frequency are treated as DC peaks.
pub const DC_THRESHOLD: f64 = 1e-10;
/// Frequency used in place of a DC peak.
pub const DC_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    pub lo: f64,
    pub hi: f64,
    pub n_grid: usize,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            lo: 1e-8,
            hi: 1e5,
            n_grid: 2000,
        }
    }
}

/// Chosen interpolation data together with the projection bases.
#[derive(Debug, Clone)]
pub struct InterpolationState {
    pub points: Vec<f64>,
    pub directions: Vec<CVector>,
    /// Orthonormal basis, `n x r`.
    pub v: DMatrix<f64>,
    /// `Q V (V^T Q V)^{-1}`, so that `W^T V = I`.
    pub w: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct InitResult {
    pub rom: PHSystem,
    pub state: InterpolationState,
}

impl InitResult {
    pub fn points(&self) -> &[f64] {
        &self.state.points
    }
}

pub fn greedy_init(fom: &Arc<FomResponse>, r: usize, opts: &InitOptions) -> Result<InitResult> {
    let n = fom.system().n();
    if r % 2 != 0 || r < 2 || r > n {
        return Err(Error::Domain(format!(
            "reduced order must be even with 2 <= r <= {n}, got {r}"
        )));
    }
    let mut points = Vec::with_capacity(r / 2);
    let mut directions = Vec::with_capacity(r / 2);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(r);
    let mut current: Option<(PHSystem, DMatrix<f64>)> = None;

    for step in 0..r / 2 {
        let err = ErrorFunction::new(fom.clone(), current.as_ref().map(|(s, _)| s))?;
        let peak = hinf_estimate(&err, opts.lo, opts.hi, opts.n_grid)?;
        let omega = if peak.omega <= DC_THRESHOLD {
            DC_CLAMP
        } else {
            peak.omega
        };
        let (_, _, dir) = err.error_triplet(omega)?;
        let x = fom
            .transfer()
            .resolvent_apply_b(C64::new(0.0, omega), dir.as_slice())?;
        for part in [
            x.iter().map(|z| z.re).collect::<Vec<_>>(),
            x.iter().map(|z| z.im).collect::<Vec<_>>(),
        ] {
            let col = orthonormalize(&basis, nalgebra::DVector::from_vec(part))
                .ok_or(Error::RankDeficient { points: step + 1 })?;
            basis.push(col);
        }
        points.push(omega);
        directions.push(dir);
        let v = DMatrix::from_columns(&basis);
        current = Some(project(fom.system(), &v).map_err(|e| match e {
            Error::RankDeficient { .. } => Error::RankDeficient { points: step + 1 },
            other => other,
        })?);
    }
    let (rom, w) = current.expect("r >= 2 gives at least one step");
    Ok(InitResult {
        rom,
        state: InterpolationState {
            points,
            directions,
            v: DMatrix::from_columns(&basis),
            w,
        },
    })
}

/// Two passes of modified Gram-Schmidt; `None` if the vector is (numerically)
/// in the span of `basis`.
fn orthonormalize(
    basis: &[nalgebra::DVector<f64>],
    mut x: nalgebra::DVector<f64>,
) -> Option<nalgebra::DVector<f64>> {
    let norm0 = x.norm();
    if !(norm0 > 0.0) {
        return None;
    }
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&x);
            x.axpy(-c, q, 1.0);
        }
    }
    let norm = x.norm();
    (norm > 1e-10 * norm0).then(|| x / norm)
}

/// Structure-preserving projection onto `span(V)`; returns the reduced
/// system and `W`.
pub fn project(sys: &PHSystem, v: &DMatrix<f64>) -> Result<(PHSystem, DMatrix<f64>)> {
    let qv = sys.q() * v;
    let qr = v.transpose() * &qv;
    let qr = (&qr + qr.transpose()) * 0.5;
    let chol = qr
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficient { points: v.ncols() / 2 })?;
    // W^T = Qr^{-1} V^T Q
    let wt = chol.solve(&qv.transpose());
    let w = wt.transpose();
    let j = &wt * sys.j() * &w;
    let j = (&j - j.transpose()) * 0.5;
    let r = &wt * sys.r() * &w;
    let r = (&r + r.transpose()) * 0.5;
    let b = &wt * sys.b();
    let rom = PHSystem::new(j, r, qr, b)?;
    Ok((rom, w))
}

/// Starting parameters for the optimization.
pub fn theta_from_init(rom: &PHSystem) -> Result<ThetaVector> {
    extract(rom)
}
