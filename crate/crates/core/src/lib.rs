//! Structure-preserving model-order reduction for linear port-Hamiltonian
//! systems.
//!
//! A reduced model is parameterized so that every parameter vector yields a
//! valid port-Hamiltonian system ([`theta`]). Its parameters are fitted to a
//! full-order model by minimizing a level-set loss on a set of sample
//! frequencies ([`objective`]) for a bisection sequence of levels
//! ([`reduce`]), while the sample set is refined adaptively ([`sampling`]).

pub mod bfgs;
pub mod error;
pub mod experiment;
pub mod freq;
pub mod init;
pub mod io;
pub mod linalg;
pub mod msd;
pub mod objective;
pub mod reduce;
pub mod resolvent;
pub mod sampling;
pub mod system;
pub mod theta;

pub use bfgs::{BfgsOptions, Termination};
pub use error::{Error, Result};
pub use experiment::{run_comparison, ComparisonResult, ComparisonRow, Protocol};
pub use freq::{hinf_estimate, ErrorFunction, ErrorSource, FomResponse, HinfEstimate};
pub use init::{greedy_init, theta_from_init, InitOptions, InitResult};
pub use msd::{msd_chain, MsdConfig};
pub use objective::{loss, loss_gradient, LossContext};
pub use reduce::{reduce, GammaBracket, ReduceOptions, Reduction, ReductionReport};
pub use sampling::{adapt_samples, certified_by_bound, interval_needs_split, log_midpoint, AdaptOptions, SampleSet};
pub use system::PHSystem;
pub use theta::{extract, vtf, vtsu, vtu, ThetaVector};
