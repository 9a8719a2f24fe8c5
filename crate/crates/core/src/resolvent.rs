//! Fast repeated evaluation of `(sI - A)^{-1}` through a Hessenberg form.
//!
//! `A = U H U^T` is computed once. For each frequency the shifted matrix
//! `sI - H` is factored by Gaussian elimination with adjacent-row pivoting,
//! which costs O(n^2) instead of the O(n^3) of a dense LU. Solves with the
//! plain (non-conjugated) transpose are supported for gradient computations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::system::PHSystem;

#[derive(Debug, Clone)]
pub struct HessenbergResolvent {
    n: usize,
    u: DMatrix<f64>,
    // row-major upper Hessenberg entries
    h: Vec<f64>,
    scale: f64,
}

impl HessenbergResolvent {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let (u, hm) = nalgebra::linalg::Hessenberg::new(a.clone()).unpack();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in i.saturating_sub(1)..n {
                h[i * n + j] = hm[(i, j)];
            }
        }
        let scale = hm.iter().map(|x| x * x).sum::<f64>().sqrt();
        Self { n, u, h, scale }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Orthogonal factor with `A = U H U^T`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Factors `sI - H`.
    pub fn factor(&self, s: C64) -> Result<ShiftedLu> {
        let n = self.n;
        let mut k: Vec<C64> = self.h.iter().map(|&x| C64::new(-x, 0.0)).collect();
        for i in 0..n {
            k[i * n + i] += s;
        }
        let mut swap = vec![false; n.saturating_sub(1)];
        let mut mult = vec![C64::new(0.0, 0.0); n.saturating_sub(1)];
        for p in 0..n.saturating_sub(1) {
            if k[(p + 1) * n + p].norm_sqr() > k[p * n + p].norm_sqr() {
                for j in p..n {
                    k.swap(p * n + j, (p + 1) * n + j);
                }
                swap[p] = true;
            }
            let piv = k[p * n + p];
            if piv.norm_sqr() == 0.0 {
                continue;
            }
            let l = k[(p + 1) * n + p] / piv;
            mult[p] = l;
            k[(p + 1) * n + p] = C64::new(0.0, 0.0);
            let (top, bottom) = k.split_at_mut((p + 1) * n);
            let row_p = &top[p * n..p * n + n];
            let row_q = &mut bottom[..n];
            for j in p + 1..n {
                row_q[j] -= l * row_p[j];
            }
        }
        let tol = 1e-15 * (self.scale + s.norm());
        for i in 0..n {
            let d = k[i * n + i];
            if !(d.norm() > tol) || !d.re.is_finite() || !d.im.is_finite() {
                return Err(Error::SingularResolvent { re: s.re, im: s.im });
            }
        }
        Ok(ShiftedLu {
            n,
            upper: k,
            swap,
            mult,
        })
    }
}

/// Factorization `T_{n-2} ... T_0 (sI - H) = Upper` of a shifted Hessenberg matrix.
#[derive(Debug, Clone)]
pub struct ShiftedLu {
    n: usize,
    upper: Vec<C64>,
    swap: Vec<bool>,
    mult: Vec<C64>,
}

impl ShiftedLu {
    /// Solves `(sI - H) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        for p in 0..n.saturating_sub(1) {
            if self.swap[p] {
                b.swap(p, p + 1);
            }
            let t = self.mult[p] * b[p];
            b[p + 1] -= t;
        }
        for i in (0..n).rev() {
            let row = &self.upper[i * n..i * n + n];
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= row[j] * b[j];
            }
            b[i] = acc / row[i];
        }
    }

    /// Solves `(sI - H)^T y = c` in place (plain transpose).
    pub fn solve_transpose_in_place(&self, c: &mut [C64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.upper[i * n..i * n + n];
            let wi = c[i] / row[i];
            c[i] = wi;
            for j in i + 1..n {
                c[j] -= row[j] * wi;
            }
        }
        for p in (0..n.saturating_sub(1)).rev() {
            let t = self.mult[p] * c[p + 1];
            c[p] -= t;
            if self.swap[p] {
                c.swap(p, p + 1);
            }
        }
    }
}

/// Transfer function evaluator in Hessenberg coordinates:
/// `H(s) = C_h (sI - H)^{-1} B_h` with `B_h = U^T B`, `C_h = B^T Q U`.
#[derive(Debug, Clone)]
pub struct FastTransfer {
    resolvent: HessenbergResolvent,
    m: usize,
    // column-major n x m
    b_h: Vec<C64>,
    // row-major m x n
    c_h: Vec<C64>,
}

impl FastTransfer {
    pub fn new(sys: &PHSystem) -> Self {
        let resolvent = HessenbergResolvent::new(&sys.a());
        let u = resolvent.u();
        let b_h = u.transpose() * sys.b();
        let c_h = sys.c() * u;
        let (n, m) = (sys.n(), sys.m());
        let b_h = b_h.iter().map(|&x| C64::new(x, 0.0)).collect();
        let mut c_rows = Vec::with_capacity(m * n);
        for a in 0..m {
            for k in 0..n {
                c_rows.push(C64::new(c_h[(a, k)], 0.0));
            }
        }
        Self {
            resolvent,
            m,
            b_h,
            c_h: c_rows,
        }
    }

    pub fn n(&self) -> usize {
        self.resolvent.n()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn resolvent(&self) -> &HessenbergResolvent {
        &self.resolvent
    }

    /// `H(s)` as an `m x m` matrix.
    pub fn eval(&self, s: C64) -> Result<CMatrix> {
        let lu = self.resolvent.factor(s)?;
        let (n, m) = (self.n(), self.m);
        let mut x = self.b_h.clone();
        for col in x.chunks_mut(n) {
            lu.solve_in_place(col);
        }
        Ok(CMatrix::from_fn(m, m, |a, b| {
            let row = &self.c_h[a * n..a * n + n];
            let col = &x[b * n..b * n + n];
            row.iter().zip(col).map(|(c, x)| c * x).sum()
        }))
    }

    /// `(sI - A)^{-1} B w` in original coordinates.
    pub fn resolvent_apply_b(&self, s: C64, w: &[C64]) -> Result<Vec<C64>> {
        let (n, m) = (self.n(), self.m);
        Error::check_len("tangent direction", m, w.len())?;
        let lu = self.resolvent.factor(s)?;
        let mut rhs = vec![C64::new(0.0, 0.0); n];
        for (b, wb) in w.iter().enumerate() {
            for k in 0..n {
                rhs[k] += self.b_h[b * n + k] * wb;
            }
        }
        lu.solve_in_place(&mut rhs);
        let u = self.resolvent.u();
        Ok((0..n)
            .map(|i| (0..n).map(|k| rhs[k] * u[(i, k)]).sum())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complexify;

    fn test_matrix(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            let x = (i * 7 + j * 13) as f64;
            (x * 0.37).sin() - if i == j { 2.0 } else { 0.0 }
        })
    }

    #[test]
    fn solves_match_dense() {
        let n = 9;
        let a = test_matrix(n);
        let res = HessenbergResolvent::new(&a);
        let s = C64::new(0.0, 0.7);
        let lu = res.factor(s).unwrap();
        let mut hm = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                hm[(i, j)] = res.h[i * n + j];
            }
        }
        let mut k = complexify(&hm).map(|x| -x);
        for i in 0..n {
            k[(i, i)] += s;
        }
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0 - i as f64)).collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let r = &k * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b.clone());
        assert!(r.iter().all(|v| v.norm() < 1e-12));
        let mut y = b.clone();
        lu.solve_transpose_in_place(&mut y);
        let r = k.transpose() * nalgebra::DVector::from_vec(y) - nalgebra::DVector::from_vec(b);
        assert!(r.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn singular_shift_detected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let res = HessenbergResolvent::new(&a);
        assert!(res.factor(C64::new(0.0, 1.0)).is_err());
        assert!(res.factor(C64::new(0.0, 2.0)).is_ok());
    }
}
