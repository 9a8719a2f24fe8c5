//! Mass-spring-damper chain in port-Hamiltonian form.
//!
//! Masses `1..N` sit on a line; mass 1 is tied to a wall and each mass to its
//! successor by a spring of stiffness `k`, and every mass is damped to ground
//! with coefficient `c`. The state is `x = (p, q)` (momenta, then positions):
//!
//! ```text
//! J = [[0, -I], [I, 0]],  R = [[c I, 0], [0, 0]],  Q = [[M^{-1}, 0], [0, K]],
//! B = [[E], [0]]  (forces on the first m masses)
//! ```
//!
//! with `K = k * tridiag(-1, 2, -1)` except `K[N-1][N-1] = k` (free end).
//! The outputs are the velocities of the actuated masses.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::PHSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsdConfig {
    pub n_masses: usize,
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub m_inputs: usize,
}

impl Default for MsdConfig {
    fn default() -> Self {
        Self {
            n_masses: 50,
            mass: 4.0,
            stiffness: 4.0,
            damping: 1.0,
            m_inputs: 2,
        }
    }
}

impl MsdConfig {
    pub fn state_dim(&self) -> usize {
        2 * self.n_masses
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_masses == 0 {
            return Err(Error::Domain("need at least one mass".into()));
        }
        if self.m_inputs == 0 || self.m_inputs > self.n_masses {
            return Err(Error::Domain(format!(
                "inputs must be in 1..={} (got {})",
                self.n_masses, self.m_inputs
            )));
        }
        for (name, v) in [
            ("mass", self.mass),
            ("stiffness", self.stiffness),
            ("damping", self.damping),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Stiffness matrix of the chain.
    pub fn stiffness_matrix(&self) -> DMatrix<f64> {
        let n = self.n_masses;
        let k = self.stiffness;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                if i + 1 == n {
                    k
                } else {
                    2.0 * k
                }
            } else if i.abs_diff(j) == 1 {
                -k
            } else {
                0.0
            }
        })
    }
}

pub fn msd_chain(cfg: &MsdConfig) -> Result<PHSystem> {
    cfg.validate()?;
    let nm = cfg.n_masses;
    let n = 2 * nm;
    let mut j = DMatrix::zeros(n, n);
    let mut r = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, cfg.m_inputs);
    for i in 0..nm {
        j[(i, nm + i)] = -1.0;
        j[(nm + i, i)] = 1.0;
        r[(i, i)] = cfg.damping;
        q[(i, i)] = 1.0 / cfg.mass;
    }
    q.view_mut((nm, nm), (nm, nm)).copy_from(&cfg.stiffness_matrix());
    for a in 0..cfg.m_inputs {
        b[(a, a)] = 1.0;
    }
    PHSystem::new(j, r, q, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complexify, C64};

    #[test]
    fn single_cell_poles_are_oscillator_roots() {
        let cfg = MsdConfig {
            n_masses: 1,
            m_inputs: 1,
            ..MsdConfig::default()
        };
        let sys = msd_chain(&cfg).unwrap();
        // m s^2 + c s + k = 0
        let (m, c, k) = (cfg.mass, cfg.damping, cfg.stiffness);
        let disc = C64::new(c * c - 4.0 * m * k, 0.0).sqrt();
        let roots = [(-c + disc) / (2.0 * m), (-c - disc) / (2.0 * m)];
        let poles = sys.poles();
        for r in roots {
            assert!(poles.iter().any(|p| (p - r).norm() < 1e-12), "{poles:?} vs {r}");
        }
    }

    #[test]
    fn default_chain_is_valid_and_stable() {
        let sys = msd_chain(&MsdConfig::default()).unwrap();
        assert_eq!((sys.n(), sys.m()), (100, 2));
        assert!(sys.poles().iter().all(|p| p.re <= 0.0));
    }

    #[test]
    fn matches_second_order_form() {
        // H(s) = s E^T (s^2 M + s C + K)^{-1} E
        let cfg = MsdConfig {
            n_masses: 6,
            ..MsdConfig::default()
        };
        let sys = msd_chain(&cfg).unwrap();
        let nm = cfg.n_masses;
        let mm = DMatrix::<f64>::identity(nm, nm) * cfg.mass;
        let cc = DMatrix::<f64>::identity(nm, nm) * cfg.damping;
        let kk = cfg.stiffness_matrix();
        let e = DMatrix::<f64>::from_fn(nm, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        for k in 0..20 {
            let s = C64::new(-0.01 * k as f64, 0.05 + 0.17 * k as f64);
            let pencil = complexify(&mm) * (s * s) + complexify(&cc) * s + complexify(&kk);
            let x = pencil.lu().solve(&complexify(&e)).unwrap();
            let h2 = complexify(&e.transpose()) * x * s;
            let h1 = sys.transfer_eval(s).unwrap();
            assert!(crate::linalg::rel_dev(&h2, &h1) < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = MsdConfig {
            m_inputs: 3,
            n_masses: 2,
            ..MsdConfig::default()
        };
        assert!(msd_chain(&bad).is_err());
        let bad = MsdConfig {
            mass: 0.0,
            ..MsdConfig::default()
        };
        assert!(msd_chain(&bad).is_err());
    }
}
