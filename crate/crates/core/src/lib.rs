//! White-box inference-time attacks on time-series health-monitoring models.
//!
//! The crate covers the whole loop: a small reverse-mode autodiff engine
//! ([`tensor`]), a stacked-LSTM normality model and a CNN remaining-useful-life
//! regressor ([`models`]), Mahalanobis residual scoring ([`anomaly`]),
//! FGSM/BIM perturbation generation ([`attacks`]), dataset ingestion and
//! synthetic surrogates ([`data`]), and epsilon-sweep robustness evaluation
//! ([`eval`]).

pub mod anomaly;
pub mod attacks;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};

/// Version of the JSON container and report formats written by this crate.
pub const FORMAT_VERSION: u32 = 1;
