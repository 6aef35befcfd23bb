//! Asymptotic mean and covariance of linear spectral statistics of
//! block-Wigner-type random matrices, and Monte Carlo validation on
//! stochastic block models.

pub mod blockmodel;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod contour;
pub mod kernels;
pub mod qve;
pub mod report;
pub mod simulate;
pub mod testfn;

pub use error::{Error, Result};
