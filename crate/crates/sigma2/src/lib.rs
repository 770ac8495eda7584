//! Spectral toolkit for the fully nonlinear sigma_2 curvature problem on S^4.

pub mod blocks;
pub mod calculus;
pub mod config;
pub mod curvature;
pub mod diagnostics;
pub mod error;
pub mod evaluator;
pub mod field;
pub mod functionals;
pub mod gmap;
pub mod grid;
pub mod kspec;
pub mod linearize;
pub mod moebius;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod util;

pub use error::{Result, Sigma2Error};
