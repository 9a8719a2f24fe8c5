//! Unconstrained parameterization of port-Hamiltonian systems.
//!
//! A flat vector `theta = [theta_J, theta_R, theta_Q, theta_B]` is mapped to
//!
//! ```text
//! J = S^T - S,   S = vtsu(theta_J)   (strictly upper triangular)
//! R = U_R^T U_R, U_R = vtu(theta_R)  (upper triangular)
//! Q = U_Q^T U_Q, U_Q = vtu(theta_Q)
//! B = vtf(theta_B)                   (n x m, column-major)
//! ```
//!
//! Every real vector of the right length yields a valid system, so the
//! optimizer can work without constraints. Triangles are filled row by row.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::system::{PHSystem, PSD_TOL};

/// Lengths of the four blocks of a parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaLayout {
    pub n: usize,
    pub m: usize,
}

impl ThetaLayout {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    pub fn j_len(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn tri_len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn b_len(&self) -> usize {
        self.n * self.m
    }

    /// `n (3n + 1) / 2 + n m`.
    pub fn len(&self) -> usize {
        self.j_len() + 2 * self.tri_len() + self.b_len()
    }

    pub fn j_range(&self) -> std::ops::Range<usize> {
        0..self.j_len()
    }

    pub fn r_range(&self) -> std::ops::Range<usize> {
        let s = self.j_len();
        s..s + self.tri_len()
    }

    pub fn q_range(&self) -> std::ops::Range<usize> {
        let s = self.j_len() + self.tri_len();
        s..s + self.tri_len()
    }

    pub fn b_range(&self) -> std::ops::Range<usize> {
        let s = self.j_len() + 2 * self.tri_len();
        s..s + self.b_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    layout: ThetaLayout,
    data: Vec<f64>,
}

impl ThetaVector {
    pub fn new(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Domain("n and m must be positive".into()));
        }
        let layout = ThetaLayout::new(n, m);
        Error::check_len("theta", layout.len(), data.len())?;
        Ok(Self { layout, data })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        let layout = ThetaLayout::new(n, m);
        Self {
            data: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn layout(&self) -> ThetaLayout {
        self.layout
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn m(&self) -> usize {
        self.layout.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn theta_j(&self) -> &[f64] {
        &self.data[self.layout.j_range()]
    }

    pub fn theta_r(&self) -> &[f64] {
        &self.data[self.layout.r_range()]
    }

    pub fn theta_q(&self) -> &[f64] {
        &self.data[self.layout.q_range()]
    }

    pub fn theta_b(&self) -> &[f64] {
        &self.data[self.layout.b_range()]
    }

    /// The system this vector parameterizes.
    pub fn assemble(&self) -> PHSystem {
        let n = self.n();
        let s = vtsu(self.theta_j(), n).expect("layout fixes the length");
        let ur = vtu(self.theta_r(), n).expect("layout fixes the length");
        let uq = vtu(self.theta_q(), n).expect("layout fixes the length");
        let b = vtf(self.theta_b(), n, self.m()).expect("layout fixes the length");
        let j = s.transpose() - &s;
        let r = gram(&ur);
        let q = gram(&uq);
        PHSystem::from_parts(j, r, q, b).expect("shapes fixed by layout")
    }
}

/// Fills an upper-triangular matrix row by row.
pub fn vtu(v: &[f64], n: usize) -> Result<DMatrix<f64>> {
    Error::check_len("vtu input", n * (n + 1) / 2, v.len())?;
    let mut out = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            out[(i, j)] = v[k];
            k += 1;
        }
    }
    Ok(out)
}

/// Fills a strictly upper-triangular matrix row by row.
pub fn vtsu(v: &[f64], n: usize) -> Result<DMatrix<f64>> {
    Error::check_len("vtsu input", n * n.saturating_sub(1) / 2, v.len())?;
    let mut out = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            out[(i, j)] = v[k];
            k += 1;
        }
    }
    Ok(out)
}

/// Reshapes into an `n x m` matrix, column-major.
pub fn vtf(v: &[f64], n: usize, m: usize) -> Result<DMatrix<f64>> {
    Error::check_len("vtf input", n * m, v.len())?;
    Ok(DMatrix::from_column_slice(n, m, v))
}

/// Inverse of [`vtu`]: reads the upper triangle row by row.
pub fn upper_to_vec(u: &DMatrix<f64>) -> Vec<f64> {
    let n = u.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(u[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vtsu`].
pub fn strict_upper_to_vec(s: &DMatrix<f64>) -> Vec<f64> {
    let n = s.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(s[(i, j)]);
        }
    }
    out
}

/// `U^T U`, symmetrized.
fn gram(u: &DMatrix<f64>) -> DMatrix<f64> {
    let g = u.transpose() * u;
    (&g + g.transpose()) * 0.5
}

/// Parameter vector reproducing the given system.
///
/// `R` and `Q` are factored as `U^T U` with `U` upper triangular and a
/// nonnegative diagonal. Positive definite matrices go through Cholesky;
/// semidefinite ones through a clamped eigendecomposition followed by QR.
pub fn extract(sys: &PHSystem) -> Result<ThetaVector> {
    let n = sys.n();
    let m = sys.m();
    let mut data = Vec::with_capacity(ThetaLayout::new(n, m).len());
    // J = S^T - S with S strictly upper, so S_ij = -J_ij for i < j.
    data.extend(strict_upper_to_vec(&(-sys.j())));
    data.extend(upper_to_vec(&upper_factor(sys.r(), "R")?));
    data.extend(upper_to_vec(&upper_factor(sys.q(), "Q")?));
    data.extend(sys.b().iter().cloned());
    ThetaVector::new(n, m, data)
}

/// Upper-triangular `U` with `U^T U = a` for symmetric PSD `a`.
pub fn upper_factor(a: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.l().transpose());
    }
    let eig = SymmetricEigen::new(sym);
    let norm = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * (1.0 + norm) {
        return Err(Error::Invariant(format!(
            "{name} is indefinite (smallest eigenvalue {min:e}); cannot factor"
        )));
    }
    // a = V diag(l) V^T = F^T F with F = diag(sqrt l) V^T; F = Q_f U.
    let mut f = eig.eigenvectors.transpose();
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        f.row_mut(i).scale_mut(s);
    }
    let mut u = f.qr().r();
    for i in 0..n {
        if u[(i, i)] < 0.0 {
            u.row_mut(i).neg_mut();
        }
    }
    Ok(u)
}
