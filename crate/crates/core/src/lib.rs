//! Mesh-free operator learning.
//!
//! * [`autodiff`]: dense arrays and a define-by-run reverse-mode tape.
//! * [`operators`]: BelNet, the DeepONet baseline, the linear separable-kernel
//!   operator with Lagrange quadrature weights, and the DFT factorisation of
//!   circular convolution.
//! * [`data`]: viscous Burgers and multiscale elliptic dataset generators.
//! * [`training`]: loss, Adam, the training loop and evaluation metrics.
//! * [`verify`]: property suites (gradients, quadrature, convolution, solvers).
//! * [`exec`]: sequential/parallel execution policy shared by all of the above.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod exec;
pub mod operators;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Exec;
