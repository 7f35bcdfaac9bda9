//! VAPO: energy-based generative modeling via variational potential flow.
//!
//! The crate learns a scalar potential-energy network by minimizing a
//! variational (deep-Ritz) energy over an analytic Gaussian homotopy from
//! prior to data likelihood, then generates samples by integrating the
//! potential-flow ODE dx/dt = grad Phi(x). Every closed-form quantity is
//! backed by an independent numerical oracle in [`oracle`], runnable through
//! the [`verify`] suites.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod homotopy;
pub mod loss;
pub mod ode;
pub mod oracle;
pub mod potential;
pub mod trainer;
pub mod verify;

pub use error::{Result, VapoError};
pub use homotopy::{CondStats, HomotopyParams};
pub use loss::LossBreakdown;
pub use ode::{OdeConfig, OdeMethod, OdeStats};
pub use potential::{Activation, EvalRecord, PotentialModel};
pub use trainer::{TrainConfig, TrainLogRecord};
