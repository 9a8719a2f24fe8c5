//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Smallest eigenvalue and spectral norm of a symmetric matrix.
pub fn sym_eig_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = eig.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max);
    (min, norm)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Top of the singular spectrum of a small square matrix.
#[derive(Debug, Clone)]
pub struct TopSingular {
    pub sigma1: f64,
    /// Second largest singular value (0 for 1x1).
    pub sigma2: f64,
    pub u: CVector,
    pub v: CVector,
}

/// Largest singular value with its left/right singular vectors,
/// normalized so that `u^H E v = sigma1` is real and nonnegative.
pub fn top_singular(e: &CMatrix) -> TopSingular {
    if e.nrows() == 2 && e.ncols() == 2 {
        return top_singular_2x2(e);
    }
    let svd = e.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let k = order[0];
    let u = svd.u.as_ref().expect("requested u").column(k).into_owned();
    let v = svd
        .v_t
        .as_ref()
        .expect("requested v_t")
        .row(k)
        .adjoint()
        .into_owned();
    TopSingular {
        sigma1: svd.singular_values[k],
        sigma2: order.get(1).map_or(0.0, |&i| svd.singular_values[i]),
        u,
        v,
    }
}

pub fn top_singular_triplet(e: &CMatrix) -> (f64, CVector, CVector) {
    let t = top_singular(e);
    (t.sigma1, t.u, t.v)
}

// Eigen-decomposition of E^H E = [[p, c], [conj(c), q]] in closed form.
fn top_singular_2x2(e: &CMatrix) -> TopSingular {
    let (a, b, c_, d) = (e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]);
    let p = a.norm_sqr() + c_.norm_sqr();
    let q = b.norm_sqr() + d.norm_sqr();
    let c = a.conj() * b + c_.conj() * d;
    let half_diff = 0.5 * (p - q);
    let lam = 0.5 * (p + q) + (half_diff * half_diff + c.norm_sqr()).sqrt();
    let sigma1 = lam.max(0.0).sqrt();
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    if sigma1 == 0.0 {
        return TopSingular {
            sigma1,
            sigma2: 0.0,
            u: CVector::from_vec(vec![one, zero]),
            v: CVector::from_vec(vec![one, zero]),
        };
    }
    let v1 = CVector::from_vec(vec![c, C64::new(lam - p, 0.0)]);
    let v2 = CVector::from_vec(vec![C64::new(lam - q, 0.0), c.conj()]);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    let v = if v.norm() > 0.0 {
        v.unscale(v.norm())
    } else {
        CVector::from_vec(vec![one, zero])
    };
    let u = (e * &v).unscale(sigma1);
    let det = (a * d - b * c_).norm();
    TopSingular {
        sigma1,
        sigma2: det / sigma1,
        u,
        v,
    }
}

/// Largest singular value only.
pub fn sigma_max(e: &CMatrix) -> f64 {
    if e.nrows() == 1 && e.ncols() == 1 {
        return e[(0, 0)].norm();
    }
    if e.nrows() == 2 && e.ncols() == 2 {
        return sigma_max_2x2(e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]);
    }
    e.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

// sigma_1^2 is the largest eigenvalue of E^H E = [[p, c], [c*, q]].
fn sigma_max_2x2(a: C64, b: C64, c: C64, d: C64) -> f64 {
    let p = a.norm_sqr() + c.norm_sqr();
    let q = b.norm_sqr() + d.norm_sqr();
    let off = (a.conj() * b + c.conj() * d).norm();
    let half_diff = 0.5 * (p - q);
    let lam = 0.5 * (p + q) + (half_diff * half_diff + off * off).sqrt();
    lam.max(0.0).sqrt()
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
                    }
                })
                .collect()
        }
    }
}

/// Relative deviation `||a - b||_max / max(||a||_max, tiny)`.
pub fn rel_dev(a: &CMatrix, b: &CMatrix) -> f64 {
    let num = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    let den = a.iter().map(|x| x.norm()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}
