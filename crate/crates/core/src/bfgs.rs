//! Dense BFGS with a strong-Wolfe line search (bracketing + zoom with
//! safeguarded cubic interpolation).

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BfgsOptions {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Stop when the max-norm of the gradient falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Stop as soon as the objective is exactly zero. Only meaningful for
    /// nonnegative objectives.
    pub stop_at_zero: bool,
    pub max_line_search: usize,
    /// Reset the inverse Hessian after this many consecutive curvature failures.
    pub restart_after: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-8,
            max_iter: 2000,
            stop_at_zero: true,
            max_line_search: 40,
            restart_after: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroValue,
    GradientTolerance,
    MaxIterations,
    /// The line search could not make progress even along steepest descent.
    Stagnation,
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Minimizes `f`, which returns the value and gradient. Evaluation errors at
/// trial points are treated as `+inf`; an error at `x0` is returned.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (mut fx, mut g) = f(&x0)?;
    let mut x = x0;
    let mut evaluations = 1;
    let mut iterations = 0;
    let mut hinv = identity(n);
    let mut is_identity = true;
    let mut scaled = false;
    let mut curvature_failures = 0;

    let termination = loop {
        if opts.stop_at_zero && fx == 0.0 {
            break Termination::ZeroValue;
        }
        if inf_norm(&g) <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        let mut p = mat_vec(&hinv, &g, n);
        p.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            hinv = identity(n);
            is_identity = true;
            scaled = false;
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let alpha0 = if is_identity && !scaled {
            (1.0 / norm2(&g)).min(1.0)
        } else {
            1.0
        };
        let ls = line_search(&mut f, &x, fx, slope, &p, alpha0, opts);
        evaluations += ls.evaluations;
        let Some(step) = ls.accepted else {
            if is_identity {
                break Termination::Stagnation;
            }
            hinv = identity(n);
            is_identity = true;
            scaled = false;
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = p.iter().map(|v| step.alpha * v).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        fx = step.f;
        g = step.g;

        let sy = dot(&s, &y);
        if sy > 1e-14 * norm2(&s) * norm2(&y) && sy > 0.0 {
            if !scaled {
                let scale = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|h| *h *= scale);
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy, n);
            is_identity = false;
            curvature_failures = 0;
        } else {
            curvature_failures += 1;
            if curvature_failures >= opts.restart_after {
                hinv = identity(n);
                is_identity = true;
                scaled = false;
                curvature_failures = 0;
            }
        }
    };

    Ok(BfgsResult {
        grad_inf: inf_norm(&g),
        x,
        value: fx,
        iterations,
        evaluations,
        termination,
    })
}

struct Step {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
}

struct LineSearch {
    accepted: Option<Step>,
    evaluations: usize,
}

struct Trial {
    alpha: f64,
    f: f64,
    slope: f64,
    g: Vec<f64>,
}

fn line_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    p: &[f64],
    alpha0: f64,
    opts: &BfgsOptions,
) -> LineSearch
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut evaluations = 0;
    let mut eval = |alpha: f64, evaluations: &mut usize| -> Trial {
        *evaluations += 1;
        let xt: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect();
        match f(&xt) {
            Ok((ft, gt)) if ft.is_finite() && gt.iter().all(|v| v.is_finite()) => Trial {
                alpha,
                f: ft,
                slope: dot(&gt, p),
                g: gt,
            },
            _ => Trial {
                alpha,
                f: f64::INFINITY,
                slope: f64::NAN,
                g: Vec::new(),
            },
        }
    };
    let armijo = |t: &Trial| t.f <= f0 + opts.c1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -opts.c2 * slope0;
    let accept = |t: Trial| Some(Step {
        alpha: t.alpha,
        f: t.f,
        g: t.g,
    });
    let mut best: Option<Trial> = None;
    let keep_best = |t: &Trial, best: &mut Option<Trial>| {
        if t.f < f0 && armijo(t) && best.as_ref().map_or(true, |b| t.f < b.f) {
            *best = Some(Trial {
                alpha: t.alpha,
                f: t.f,
                slope: t.slope,
                g: t.g.clone(),
            });
        }
    };

    let mut prev = Trial {
        alpha: 0.0,
        f: f0,
        slope: slope0,
        g: Vec::new(),
    };
    let mut alpha = alpha0;
    let mut bracket: Option<(Trial, Trial)> = None;
    for i in 0..opts.max_line_search {
        let t = eval(alpha, &mut evaluations);
        if opts.stop_at_zero && t.f == 0.0 {
            return LineSearch {
                accepted: accept(t),
                evaluations,
            };
        }
        keep_best(&t, &mut best);
        if !armijo(&t) || (i > 0 && t.f >= prev.f) {
            bracket = Some((prev, t));
            break;
        }
        if curvature(&t) {
            return LineSearch {
                accepted: accept(t),
                evaluations,
            };
        }
        if t.slope >= 0.0 {
            bracket = Some((t, prev));
            break;
        }
        alpha = t.alpha * 2.0;
        prev = t;
        if alpha > 1e10 {
            break;
        }
    }

    if let Some((mut lo, mut hi)) = bracket {
        while evaluations < opts.max_line_search {
            let width = (hi.alpha - lo.alpha).abs();
            if width < 1e-16 * lo.alpha.abs().max(1e-16) {
                break;
            }
            let a = zoom_trial_point(&lo, &hi);
            let t = eval(a, &mut evaluations);
            if opts.stop_at_zero && t.f == 0.0 {
                return LineSearch {
                    accepted: accept(t),
                    evaluations,
                };
            }
            keep_best(&t, &mut best);
            if !armijo(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if curvature(&t) {
                    return LineSearch {
                        accepted: accept(t),
                        evaluations,
                    };
                }
                if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
    }
    LineSearch {
        accepted: best.and_then(accept),
        evaluations,
    }
}

/// Minimizer of the cubic through both ends, kept away from the ends;
/// bisection when the cubic is unusable.
fn zoom_trial_point(lo: &Trial, hi: &Trial) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let (left, right) = (a.min(b), a.max(b));
    let margin = 0.1 * (right - left);
    let mid = 0.5 * (a + b);
    if !hi.f.is_finite() || !hi.slope.is_finite() || !lo.slope.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = hi.slope - lo.slope + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let c = b - (b - a) * (hi.slope + d2 - d1) / denom;
    if c.is_finite() && c > left + margin && c < right - margin {
        c
    } else {
        mid
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&h[i * n..i * n + n], v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

// H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        let row = &mut h[i * n..i * n + n];
        for j in 0..n {
            row[j] += coef * s[i] * s[j] - rho * (s[i] * hy[j] + hy[i] * s[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_quadratic_minimizer() {
        // f = 1/2 x^T A x - b^T x with A SPD; minimizer A^{-1} b
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = [1.0, -2.0, 0.5];
        let f = |x: &[f64]| {
            let ax: Vec<f64> = (0..3).map(|i| dot(&a[i], x)).collect();
            let val = 0.5 * dot(x, &ax) - dot(&b, x);
            let g = ax.iter().zip(&b).map(|(u, v)| u - v).collect();
            Ok((val, g))
        };
        let opts = BfgsOptions {
            stop_at_zero: false,
            ..BfgsOptions::default()
        };
        let res = minimize(f, vec![0.0; 3], &opts).unwrap();
        let am = nalgebra::Matrix3::from_fn(|i, j| a[i][j]);
        let exact = am.try_inverse().unwrap() * nalgebra::Vector3::from_row_slice(&b);
        for i in 0..3 {
            assert!((res.x[i] - exact[i]).abs() < 1e-8, "{:?} {:?} {:?}", res, exact, i);
        }
        assert_eq!(res.termination, Termination::GradientTolerance);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let val = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Ok((val, g))
        };
        let opts = BfgsOptions {
            stop_at_zero: false,
            ..BfgsOptions::default()
        };
        let res = minimize(f, vec![-1.2, 1.0], &opts).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_start_returns_immediately() {
        let f = |x: &[f64]| Ok((0.0, vec![0.0; x.len()]));
        let res = minimize(f, vec![3.0, 4.0], &BfgsOptions::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.x, vec![3.0, 4.0]);
        assert_eq!(res.termination, Termination::ZeroValue);
    }

    #[test]
    fn clamped_quadratic_reaches_exact_zero() {
        // sum ((|x_i| - 1)_+)^2 is zero on the unit box
        let f = |x: &[f64]| {
            let mut val = 0.0;
            let mut g = vec![0.0; x.len()];
            for (i, &xi) in x.iter().enumerate() {
                let e = xi.abs() - 1.0;
                if e > 0.0 {
                    val += e * e;
                    g[i] = 2.0 * e * xi.signum();
                }
            }
            Ok((val, g))
        };
        let res = minimize(f, vec![5.0, -3.0, 0.5], &BfgsOptions::default()).unwrap();
        assert_eq!(res.value, 0.0);
        assert_eq!(res.termination, Termination::ZeroValue);
    }

    #[test]
    fn never_increases_value() {
        let f = |x: &[f64]| Ok(((x[0] - 2.0).powi(4), vec![4.0 * (x[0] - 2.0).powi(3)]));
        let res = minimize(f, vec![-1.0], &BfgsOptions::default()).unwrap();
        assert!(res.value <= 81.0);
    }
}
