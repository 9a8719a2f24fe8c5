//! Level-set loss
//!
//! ```text
//! L(theta) = (1/gamma) * sum_i ( (sigma_1(H(iw_i) - H_theta(iw_i)) - gamma)_+ )^2
//! ```
//!
//! and its exact gradient with respect to the parameter vector.
//!
//! The gradient follows the chain
//! `theta -> (J, R, Q, B) -> H_theta(s) -> sigma_1`. With `A = (J - R) Q`,
//! `X = (sI - A)^{-1} B`, `Z = (sI - A)^{-T} Q B` and `P = v u^H` built from
//! the top singular pair of the error matrix,
//!
//! ```text
//! d Re tr(P dH) / dA = Re(Z P^T X^T)
//! d Re tr(P dH) / dB = Re(Q X P) + Re(Z P^T)
//! d Re tr(P dH) / dQ = Re(B P^T X^T)            (direct term)
//! ```
//!
//! All per-sample quantities live in Hessenberg coordinates `A = U H U^T`,
//! so a sample costs O(r^2 m) and the O(r^3) back-transformation is done
//! once per call.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::freq::FomResponse;
use crate::linalg::{sigma_max, top_singular, CMatrix, C64};
use crate::resolvent::HessenbergResolvent;
use crate::sampling::SampleSet;
use crate::theta::{strict_upper_to_vec, upper_to_vec, vtu, ThetaVector};

const CHUNK: usize = 32;

/// Relative gap between the two largest singular values below which an
/// active sample is reported as a nonsmooth point.
pub const NONSMOOTH_GAP: f64 = 1e-10;

/// Everything the loss needs besides the parameters: the level, the sample
/// frequencies and the full-order responses at those frequencies.
#[derive(Debug, Clone)]
pub struct LossContext {
    gamma: f64,
    samples: SampleSet,
    responses: Arc<Vec<CMatrix>>,
    m: usize,
}

impl LossContext {
    pub fn new(fom: &FomResponse, samples: SampleSet, gamma: f64) -> Result<Self> {
        let responses = fom.at_many(samples.as_slice())?;
        Self::from_responses(gamma, samples, responses)
    }

    /// Builds a context from precomputed responses, one per sample.
    pub fn from_responses(gamma: f64, samples: SampleSet, responses: Vec<CMatrix>) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("level must be positive, got {gamma}")));
        }
        Error::check_len("responses", samples.len(), responses.len())?;
        let m = responses.first().map_or(0, |h| h.nrows());
        if responses.iter().any(|h| h.nrows() != m || h.ncols() != m) {
            return Err(Error::Domain("responses must all be m x m".into()));
        }
        Ok(Self {
            gamma,
            samples,
            responses: Arc::new(responses),
            m,
        })
    }

    /// Same samples and responses at another level.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("level must be positive, got {gamma}")));
        }
        Ok(Self {
            gamma,
            ..self.clone()
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn check(&self, theta: &ThetaVector) -> Result<()> {
        Error::check_len("theta input dimension", self.m, theta.m())
    }
}

/// Value (and optionally gradient) of the loss at one parameter vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: Option<Vec<f64>>,
    /// Largest sample error.
    pub max_error: f64,
    /// Active samples whose top singular value is (numerically) repeated.
    pub nonsmooth: usize,
}

pub fn loss(ctx: &LossContext, theta: &ThetaVector) -> Result<f64> {
    Ok(evaluate(ctx, theta, false)?.loss)
}

pub fn loss_gradient(ctx: &LossContext, theta: &ThetaVector) -> Result<Vec<f64>> {
    let ev = evaluate(ctx, theta, true)?;
    if ev.nonsmooth > 0 {
        log::warn!(
            "{} active samples have a repeated top singular value; gradient uses the selected pair",
            ev.nonsmooth
        );
    }
    Ok(ev.gradient.expect("requested"))
}

/// Errors `sigma_1(H(iw) - H_theta(iw))` at every sample.
pub fn sample_errors(ctx: &LossContext, theta: &ThetaVector) -> Result<Vec<f64>> {
    ctx.check(theta)?;
    let model = ReducedModel::new(theta);
    let om = ctx.samples.as_slice();
    (0..om.len())
        .into_par_iter()
        .map(|i| {
            let h = model.eval(om[i])?;
            Ok(sigma_max(&(&ctx.responses[i] - h)))
        })
        .collect()
}

pub fn evaluate(ctx: &LossContext, theta: &ThetaVector, with_gradient: bool) -> Result<Evaluation> {
    ctx.check(theta)?;
    let model = ReducedModel::new(theta);
    let n_samples = ctx.samples.len();
    let starts: Vec<usize> = (0..n_samples).step_by(CHUNK).collect();
    let partials: Vec<Accumulator> = starts
        .par_iter()
        .map(|&start| {
            let mut acc = Accumulator::new(model.n, model.m, with_gradient);
            for i in start..(start + CHUNK).min(n_samples) {
                model.accumulate(ctx, i, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    // fixed-order reduction keeps results independent of the thread count
    let mut total = Accumulator::new(model.n, model.m, with_gradient);
    for p in &partials {
        total.add(p);
    }
    let gradient = with_gradient.then(|| model.gradient(&total));
    Ok(Evaluation {
        loss: total.loss,
        gradient,
        max_error: total.max_error,
        nonsmooth: total.nonsmooth,
    })
}

struct Accumulator {
    loss: f64,
    max_error: f64,
    nonsmooth: usize,
    // r x r, row-major: sum w Re(Z P^T X^T) in Hessenberg coordinates
    ga: Vec<f64>,
    // r x m, column-major: sum w Re(X P)
    xp: Vec<f64>,
    // r x m, column-major: sum w Re(Z P^T)
    zp: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize, m: usize, with_gradient: bool) -> Self {
        let (g, v) = if with_gradient { (n * n, n * m) } else { (0, 0) };
        Self {
            loss: 0.0,
            max_error: 0.0,
            nonsmooth: 0,
            ga: vec![0.0; g],
            xp: vec![0.0; v],
            zp: vec![0.0; v],
        }
    }

    fn add(&mut self, o: &Accumulator) {
        self.loss += o.loss;
        self.max_error = self.max_error.max(o.max_error);
        self.nonsmooth += o.nonsmooth;
        for (a, b) in self.ga.iter_mut().zip(&o.ga) {
            *a += b;
        }
        for (a, b) in self.xp.iter_mut().zip(&o.xp) {
            *a += b;
        }
        for (a, b) in self.zp.iter_mut().zip(&o.zp) {
            *a += b;
        }
    }
}

/// A parameterized model prepared for repeated frequency evaluation.
struct ReducedModel<'a> {
    theta: &'a ThetaVector,
    n: usize,
    m: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    q: DMatrix<f64>,
    b: DMatrix<f64>,
    resolvent: HessenbergResolvent,
    // U^T B, column-major n x m
    b_h: Vec<C64>,
    // U^T Q B, column-major n x m (columns are rows of C U)
    c_h: Vec<C64>,
}

impl<'a> ReducedModel<'a> {
    fn new(theta: &'a ThetaVector) -> Self {
        let sys = theta.assemble();
        let resolvent = HessenbergResolvent::new(&sys.a());
        let u = resolvent.u();
        let to_c = |m: DMatrix<f64>| m.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>();
        let b_h = to_c(u.transpose() * sys.b());
        let c_h = to_c(u.transpose() * sys.q() * sys.b());
        Self {
            theta,
            n: sys.n(),
            m: sys.m(),
            j: sys.j().clone(),
            r: sys.r().clone(),
            q: sys.q().clone(),
            b: sys.b().clone(),
            resolvent,
            b_h,
            c_h,
        }
    }

    fn eval(&self, omega: f64) -> Result<CMatrix> {
        let lu = self.resolvent.factor(C64::new(0.0, omega))?;
        let mut x = self.b_h.clone();
        for col in x.chunks_mut(self.n) {
            lu.solve_in_place(col);
        }
        Ok(self.output(&x))
    }

    fn output(&self, x: &[C64]) -> CMatrix {
        let n = self.n;
        CMatrix::from_fn(self.m, self.m, |a, b| {
            let c = &self.c_h[a * n..a * n + n];
            let x = &x[b * n..b * n + n];
            c.iter().zip(x).map(|(c, x)| c * x).sum()
        })
    }

    fn accumulate(&self, ctx: &LossContext, i: usize, acc: &mut Accumulator) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let gamma = ctx.gamma;
        let omega = ctx.samples.as_slice()[i];
        let lu = self.resolvent.factor(C64::new(0.0, omega))?;
        let mut x = self.b_h.clone();
        for col in x.chunks_mut(n) {
            lu.solve_in_place(col);
        }
        let err = &ctx.responses[i] - self.output(&x);
        if acc.ga.is_empty() {
            let sigma = sigma_max(&err);
            acc.max_error = acc.max_error.max(sigma);
            if sigma > gamma {
                acc.loss += (sigma - gamma).powi(2) / gamma;
            }
            return Ok(());
        }
        let top = top_singular(&err);
        let sigma = top.sigma1;
        acc.max_error = acc.max_error.max(sigma);
        if !(sigma > gamma) {
            return Ok(());
        }
        acc.loss += (sigma - gamma).powi(2) / gamma;
        if sigma - top.sigma2 <= NONSMOOTH_GAP * sigma {
            acc.nonsmooth += 1;
        }
        // d sigma = -Re(u^H dH v); d loss = 2 (sigma - gamma) / gamma d sigma
        let w = -2.0 * (sigma - gamma) / gamma;
        let p = CMatrix::from_fn(m, m, |a, b| top.v[a] * top.u[b].conj());

        let mut z = self.c_h.clone();
        for col in z.chunks_mut(n) {
            lu.solve_transpose_in_place(col);
        }
        // XP = X P and ZP = Z P^T, both n x m column-major
        let mut xp = vec![C64::new(0.0, 0.0); n * m];
        let mut zp = vec![C64::new(0.0, 0.0); n * m];
        for c in 0..m {
            for a in 0..m {
                let pac = p[(a, c)];
                let pca = p[(c, a)];
                for k in 0..n {
                    xp[c * n + k] += x[a * n + k] * pac;
                    zp[c * n + k] += z[a * n + k] * pca;
                }
            }
        }
        for (dst, v) in acc.xp.iter_mut().zip(&xp) {
            *dst += w * v.re;
        }
        for (dst, v) in acc.zp.iter_mut().zip(&zp) {
            *dst += w * v.re;
        }
        // GA += w Re(ZP X^T)
        for c in 0..m {
            let zc = &zp[c * n..c * n + n];
            let xc = &x[c * n..c * n + n];
            for (row, zi) in zc.iter().enumerate() {
                let (zr, zim) = (w * zi.re, w * zi.im);
                let dst = &mut acc.ga[row * n..row * n + n];
                for (d, xj) in dst.iter_mut().zip(xc) {
                    *d += zr * xj.re - zim * xj.im;
                }
            }
        }
        Ok(())
    }

    fn gradient(&self, acc: &Accumulator) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let u = self.resolvent.u();
        let ga = DMatrix::from_row_slice(n, n, &acc.ga);
        let xp = DMatrix::from_column_slice(n, m, &acc.xp);
        let zp = DMatrix::from_column_slice(n, m, &acc.zp);

        let g_a = u * ga * u.transpose();
        let uxp = u * xp;
        let g_b = &self.q * &uxp + u * zp;
        let g_j = &g_a * &self.q;
        let g_r = -&g_j;
        let g_q = &self.b * uxp.transpose() + (&self.j - &self.r).transpose() * &g_a;

        // J = S^T - S
        let g_s = g_j.transpose() - &g_j;
        // R = U_R^T U_R  =>  dL/dU_R = U_R (G + G^T)
        let ur = vtu(self.theta.theta_r(), n).expect("layout");
        let uq = vtu(self.theta.theta_q(), n).expect("layout");
        let g_ur = &ur * (&g_r + g_r.transpose());
        let g_uq = &uq * (&g_q + g_q.transpose());

        let mut out = Vec::with_capacity(self.theta.len());
        out.extend(strict_upper_to_vec(&g_s));
        out.extend(upper_to_vec(&g_ur));
        out.extend(upper_to_vec(&g_uq));
        out.extend(g_b.iter().cloned());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Context whose reduced model is scalar `q b^2 / (s + r q)` with data `h`.
    fn scalar_ctx(gamma: f64, omegas: &[f64], h: impl Fn(f64) -> C64) -> LossContext {
        let samples = SampleSet::new(omegas.to_vec()).unwrap();
        let responses = samples
            .as_slice()
            .iter()
            .map(|&w| CMatrix::from_element(1, 1, h(w)))
            .collect();
        LossContext::from_responses(gamma, samples, responses).unwrap()
    }

    #[test]
    fn one_active_sample_formula() {
        // theta = (t_r, t_q, t_b) -> r = t_r^2, q = t_q^2, b = t_b
        // model with b = 0 is zero, so error = |h| = 1
        let ctx = scalar_ctx(0.5, &[1.0], |_| C64::new(1.0, 0.0));
        let theta = ThetaVector::new(1, 1, vec![1.0, 1.0, 0.0]).unwrap();
        assert!((loss(&ctx, &theta).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clamp_kills_inactive_samples() {
        let ctx = scalar_ctx(0.5, &[1.0, 2.0], |w| {
            C64::new(if w < 1.5 { 0.2 } else { 0.7 }, 0.0)
        });
        let theta = ThetaVector::new(1, 1, vec![1.0, 1.0, 0.0]).unwrap();
        assert!((loss(&ctx, &theta).unwrap() - 0.08).abs() < 1e-15);
    }

    #[test]
    fn below_level_gives_zero_loss_and_gradient() {
        let ctx = scalar_ctx(0.5, &[0.1, 1.0, 10.0], |_| C64::new(0.3, -0.1));
        let theta = ThetaVector::new(1, 1, vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(loss(&ctx, &theta).unwrap(), 0.0);
        assert!(loss_gradient(&ctx, &theta).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scalar_gradient_matches_hand_derivation() {
        // e(w) = |q b^2 / (iw + r q) - h|, r = t_r^2, q = t_q^2, b = t_b
        let h = |w: f64| C64::new(2.0 / (1.0 + w * w), -0.5 * w / (1.0 + w * w));
        let omegas = [0.3, 1.0, 3.0];
        let gamma = 0.01;
        let ctx = scalar_ctx(gamma, &omegas, h);
        let (tr, tq, tb) = (0.8, 1.3, 0.4);
        let theta = ThetaVector::new(1, 1, vec![tr, tq, tb]).unwrap();
        let g = loss_gradient(&ctx, &theta).unwrap();

        let (r, q, b) = (tr * tr, tq * tq, tb);
        let mut expect = [0.0; 3];
        for &w in &omegas {
            let s = C64::new(0.0, w);
            let den = s + r * q;
            let model = q * b * b / den;
            let e = model - h(w);
            let sigma = e.norm();
            if sigma <= gamma {
                continue;
            }
            // d|e| = Re(conj(e) de) / |e|
            let dm_dr = -q * q * b * b / (den * den);
            let dm_dq = b * b / den - q * b * b * r / (den * den);
            let dm_db = 2.0 * q * b / den;
            let chain = |dm: C64| (e.conj() * dm).re / sigma;
            let coef = 2.0 * (sigma - gamma) / gamma;
            expect[0] += coef * chain(dm_dr) * 2.0 * tr;
            expect[1] += coef * chain(dm_dq) * 2.0 * tq;
            expect[2] += coef * chain(dm_db);
        }
        for k in 0..3 {
            assert!(
                (g[k] - expect[k]).abs() < 1e-12 * expect[k].abs().max(1.0),
                "component {k}: {} vs {}",
                g[k],
                expect[k]
            );
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let ctx = scalar_ctx(0.5, &[1.0], |_| C64::new(1.0, 0.0));
        let theta = ThetaVector::zeros(2, 2);
        assert!(loss(&ctx, &theta).is_err());
        assert!(ctx.with_gamma(0.0).is_err());
    }
}
