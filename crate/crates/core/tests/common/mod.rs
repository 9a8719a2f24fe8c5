//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use phred_core::linalg::{complexify, CMatrix, C64};
use phred_core::{PHSystem, ThetaVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_theta(rng: &mut impl Rng, n: usize, m: usize) -> ThetaVector {
    let len = n * (3 * n + 1) / 2 + n * m;
    let data = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ThetaVector::new(n, m, data).unwrap()
}

/// Random system with `Q` and `R` safely positive definite.
pub fn random_system(rng: &mut impl Rng, n: usize, m: usize) -> PHSystem {
    let mut theta = random_theta(rng, n, m).into_vec();
    let tri = n * (n + 1) / 2;
    let j_len = n * (n - 1) / 2;
    // strengthen the diagonals of the triangular factors
    for block in [j_len, j_len + tri] {
        let mut k = block;
        for i in 0..n {
            theta[k] = 1.0 + theta[k].abs();
            k += n - i;
        }
    }
    ThetaVector::new(n, m, theta).unwrap().assemble()
}

/// `B^T Q (sI - (J - R) Q)^{-1} B` through an explicit inverse.
pub fn transfer_by_inverse(sys: &PHSystem, s: C64) -> CMatrix {
    let n = sys.n();
    let a = complexify(&sys.a());
    let shifted = CMatrix::identity(n, n) * s - a;
    let inv = shifted.try_inverse().expect("regular shift");
    complexify(&sys.c()) * inv * complexify(sys.b())
}

pub fn min_eig(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

pub fn random_imag_points(rng: &mut impl Rng, k: usize) -> Vec<C64> {
    (0..k).map(|_| C64::new(0.0, 10f64.powf(rng.gen_range(-3.0..3.0)))).collect()
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Lorentzian bump `a / (1 + b (w - c)^2)` with its exact derivative bound
/// `a (3 sqrt 3 / 8) sqrt b`.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Bump {
    pub fn eval(&self, w: f64) -> f64 {
        self.a / (1.0 + self.b * (w - self.c).powi(2))
    }

    pub fn slope_bound(&self) -> f64 {
        self.a * 3.0 * 3f64.sqrt() / 8.0 * self.b.sqrt()
    }
}

/// Sum of bumps plus a constant; the derivative bound is the sum of the
/// individual bounds.
#[derive(Debug, Clone)]
pub struct RationalTest {
    pub offset: f64,
    pub bumps: Vec<Bump>,
}

impl RationalTest {
    pub fn random(rng: &mut impl Rng) -> Self {
        let k = rng.gen_range(1..=4);
        Self {
            offset: rng.gen_range(0.0..0.2),
            bumps: (0..k)
                .map(|_| Bump {
                    a: rng.gen_range(0.05..2.0),
                    b: 10f64.powf(rng.gen_range(-1.0..3.0)),
                    c: rng.gen_range(0.1..10.0),
                })
                .collect(),
        }
    }

    pub fn eval(&self, w: f64) -> f64 {
        self.offset + self.bumps.iter().map(|b| b.eval(w)).sum::<f64>()
    }

    pub fn slope_bound(&self) -> f64 {
        self.bumps.iter().map(Bump::slope_bound).sum()
    }
}
