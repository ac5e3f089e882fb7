//! Numerical check that the law of motion of charged dust follows from
//! Maxwell's equations and stress-energy conservation, evaluated pointwise
//! in arbitrary curvilinear charts of Minkowski spacetime.
//!
//! Signature `+ − − −` in Gaussian units with `c = 1`.

pub mod calculus;
pub mod chart;
pub mod conservation;
pub mod dust;
pub mod em;
pub mod error;
pub mod linalg;
pub mod parallel;
pub mod poly;
pub mod scenario;
pub mod worldline;

pub use calculus::DerivEngine;
pub use chart::Chart;
pub use conservation::{identity_check, IdentityReport};
pub use dust::DustState;
pub use em::{EMField, Potential, Sign};
pub use error::{Error, Result};
pub use parallel::Execution;
pub use scenario::{run_convergence, run_verify, run_worldline, Scenario};
