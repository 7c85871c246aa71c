//! Free additive and multiplicative convolution of probability measures.
//!
//! The crate is organized bottom-up:
//!
//! * [`ncpart`]: the lattice of non-crossing partitions.
//! * [`series`]: truncated power series over exact rationals or floats.
//! * [`measures`]: atomic and gridded measures, moments, classical
//!   convolution and cumulants, Kolmogorov distance.
//! * [`cumulants`]: moment/free-cumulant transforms, free convolution on
//!   moments, compression, mixed moments of free variables.
//! * [`analytic`]: Cauchy transforms, K/R-transforms, analytic free
//!   convolution, Stieltjes inversion, subordination and the transition kernel.
//! * [`families`]: closed-form families on the line and the circle, and
//!   the multiplicative `ψ`/`Σ` calculus.
//! * [`rmt`]: the random-matrix Monte Carlo harness.
//! * [`doc`]: JSON and CSV document formats.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cumulants;
pub mod doc;
pub mod error;
pub mod families;
pub mod measures;
pub mod ncpart;
pub mod rmt;
pub mod scalar;
pub mod series;

pub use error::{Diagnostic, Error, Result};
pub use num_complex::Complex64;
pub use scalar::{Scalar, ScalarKind};
