//! Linear port-Hamiltonian systems `x' = (J - R) Q x + B u`, `y = B^T Q x`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{complexify, max_abs, sym_eig_bounds, CMatrix, C64};

/// Entrywise tolerance on `J + J^T`.
pub const SKEW_TOL: f64 = 1e-12;
/// Relative tolerance on negative eigenvalues of `R` and `Q`.
pub const PSD_TOL: f64 = 1e-10;

/// A port-Hamiltonian system given by its four real matrices.
///
/// `J` is skew-symmetric, `R` and `Q` are symmetric positive semidefinite.
/// Instances are immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct PHSystem {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    q: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl PHSystem {
    /// Builds a system and checks the skew/PSD invariants.
    pub fn new(j: DMatrix<f64>, r: DMatrix<f64>, q: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let sys = Self::from_parts(j, r, q, b)?;
        sys.check_invariants()?;
        Ok(sys)
    }

    /// Builds a system checking only the shapes. Used where the invariants
    /// hold by construction.
    pub(crate) fn from_parts(
        j: DMatrix<f64>,
        r: DMatrix<f64>,
        q: DMatrix<f64>,
        b: DMatrix<f64>,
    ) -> Result<Self> {
        let n = j.nrows();
        if n == 0 {
            return Err(Error::Domain("state dimension must be positive".into()));
        }
        if b.ncols() == 0 {
            return Err(Error::Domain("input dimension must be positive".into()));
        }
        for (what, mat) in [("J", &j), ("R", &r), ("Q", &q)] {
            Error::check_len(what, n, mat.nrows())?;
            Error::check_len(what, n, mat.ncols())?;
        }
        Error::check_len("B rows", n, b.nrows())?;
        Ok(Self { j, r, q, b })
    }

    pub fn n(&self) -> usize {
        self.j.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// The system matrix `(J - R) Q`.
    pub fn a(&self) -> DMatrix<f64> {
        (&self.j - &self.r) * &self.q
    }

    /// Output matrix `B^T Q`.
    pub fn c(&self) -> DMatrix<f64> {
        self.b.transpose() * &self.q
    }

    pub fn check_invariants(&self) -> Result<()> {
        let skew = max_abs(&(&self.j + self.j.transpose()));
        if skew > SKEW_TOL {
            return Err(Error::Invariant(format!(
                "J is not skew-symmetric (max |J + J^T| = {skew:e})"
            )));
        }
        for (name, mat) in [("R", &self.r), ("Q", &self.q)] {
            let asym = max_abs(&(mat - mat.transpose()));
            let (min, norm) = sym_eig_bounds(mat);
            if asym > SKEW_TOL * (1.0 + norm) {
                return Err(Error::Invariant(format!(
                    "{name} is not symmetric (max |{name} - {name}^T| = {asym:e})"
                )));
            }
            if min < -PSD_TOL * (1.0 + norm) {
                return Err(Error::Invariant(format!(
                    "{name} is not positive semidefinite (smallest eigenvalue {min:e})"
                )));
            }
        }
        Ok(())
    }

    /// Evaluates `H(s) = B^T Q (sI - (J-R)Q)^{-1} B` through an LU solve of
    /// the resolvent.
    pub fn transfer_eval(&self, s: C64) -> Result<CMatrix> {
        let n = self.n();
        let mut m = complexify(&self.a()).map(|x| -x);
        for i in 0..n {
            m[(i, i)] += s;
        }
        let lu = m.lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(dmin > 1e-14 * dmax.max(s.norm())) {
            return Err(Error::SingularResolvent { re: s.re, im: s.im });
        }
        let x = lu
            .solve(&complexify(&self.b))
            .ok_or(Error::SingularResolvent { re: s.re, im: s.im })?;
        Ok(complexify(&self.c()) * x)
    }

    /// Energy `x^T Q x / 2`.
    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        Error::check_len("state vector", self.n(), x.len())?;
        let x = nalgebra::DVector::from_column_slice(x);
        Ok(0.5 * x.dot(&(&self.q * &x)))
    }

    /// Eigenvalues of `(J - R) Q`.
    pub fn poles(&self) -> Vec<C64> {
        self.a().complex_eigenvalues().iter().cloned().collect()
    }
}
