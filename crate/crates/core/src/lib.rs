//! Selective inference for least-squares coefficients after an overall F screen.
//!
//! The usual workflow tests `H_0: beta_1 = ... = beta_p = 0` first and only
//! looks at individual coefficients when that test rejects. Standard p-values
//! are invalid under this practice. This crate computes p-values, confidence
//! intervals and point estimates that are valid conditional on the screen,
//! either from raw data or from published summary statistics.

pub mod baselines;
pub mod dist;
pub mod error;
pub mod fisher;
pub mod interval;
pub mod io;
pub mod model;
pub mod retro;
pub mod screen;
pub mod selective;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use model::{
    center, decompose, fit_summary, CenteredDesign, Dataset, IndexSet, QuadraticDecomposition, RegressionOutputs,
};
pub use screen::{
    overall_test, selection_geometry, standard_pvalue, ScreenConfig, ScreeningDecision, SelectionGeometry,
};
pub use selective::{
    debiased_sigma, mc_conditional_prob, selective_p, selective_p_known_var, sigma_hat, McConfig, PValueEstimate,
    SelectivePValue, VarianceSpec,
};
