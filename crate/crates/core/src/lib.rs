//! Simple eigenvalues of dense complex matrices by steepest descent on
//! `σ_min(zI − A)`, with the step scaled by the pseudospectrum sensitivity
//! `pss(z) = 1/|v_minᴴu_min|`.
//!
//! Modules:
//! - [`kernel`]: matrix type, SVD, minimum triplet, eigen-oracle.
//! - [`gallery`]: named test-matrix generators.
//! - [`solver`]: `pss`, gradient, the descent solver and the two-sided Rayleigh variant.
//! - [`exclusion`]: eigenvalue-free disks.
//! - [`field`]: grid sweeps, Hessian, pseudospectrum area.
//! - [`normal_eig`]: eigenvalues of normal matrices from one SVD.
//! - [`cli`]: the `sdeig` command-line front end.

pub mod cli;
pub mod error;
pub mod exclusion;
pub mod field;
pub mod gallery;
pub mod kernel;
pub mod normal_eig;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::{DenseMatrix, C64};
