//! The overall F screen, the standard post hoc p-value, and the selection
//! geometry handed to the Monte Carlo engine.

use serde::{Deserialize, Serialize};

use crate::dist::{f_quantile, f_sf};
use crate::error::{Error, Result};
use crate::model::{IndexSet, QuadraticDecomposition, RegressionOutputs};

/// Checks that a level lies strictly inside (0, 1).
pub fn check_level(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::BadProbability(alpha))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenConfig {
    pub alpha0: f64,
    pub m_set: IndexSet,
    pub alpha: f64,
}

impl ScreenConfig {
    pub fn new(alpha0: f64, m_set: IndexSet, alpha: f64) -> Result<Self> {
        Ok(Self { alpha0: check_level(alpha0)?, m_set, alpha: check_level(alpha)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningDecision {
    pub f_overall: f64,
    pub p_overall: f64,
    pub rejected: bool,
    /// `F^{-1}_{p, n-p-1}(1 - alpha0)`.
    pub threshold: f64,
    pub alpha0: f64,
}

impl ScreeningDecision {
    /// Decision for an F statistic on `(df1, df2)` degrees of freedom. Ties
    /// with the threshold count as rejections.
    pub fn from_statistic(f: f64, df1: usize, df2: usize, alpha0: f64) -> Result<Self> {
        let threshold = f_quantile(1.0 - check_level(alpha0)?, df1, df2)?;
        let rejected = f >= threshold;
        let mut p = f_sf(f, df1, df2);
        // The survival function and the quantile can disagree in the last
        // bits near the boundary; the decision is authoritative.
        if rejected {
            p = p.min(alpha0);
        } else if p <= alpha0 {
            p = alpha0.next_up();
        }
        Ok(Self { f_overall: f, p_overall: p, rejected, threshold, alpha0 })
    }
}

pub fn overall_test(outputs: &RegressionOutputs, alpha0: f64) -> Result<ScreeningDecision> {
    ScreeningDecision::from_statistic(outputs.f_overall, outputs.p, outputs.df_res, alpha0)
}

/// `Pr(F_{m, n-p-1} >= f_m)`, valid only without screening.
pub fn standard_pvalue(outputs: &RegressionOutputs) -> f64 {
    f_sf(outputs.f_m, outputs.m, outputs.df_res)
}

/// `(c, d, r)` plus dimensions: everything the conditional probability needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionGeometry {
    pub c: f64,
    pub d: f64,
    pub r: f64,
    pub n: usize,
    pub p: usize,
    pub m: usize,
}

impl SelectionGeometry {
    pub fn df_res(&self) -> usize {
        self.n - self.p - 1
    }

    /// `ss_m - c * ss_res >= d`, which is the screening rejection rewritten
    /// in the quadratic forms.
    pub fn screening_rejected(&self, decomp: &QuadraticDecomposition) -> bool {
        decomp.ss_m - self.c * decomp.ss_res >= self.d
    }
}

/// `c * df / p`-scaled screening threshold for given dimensions.
pub fn screening_c(p: usize, df_res: usize, alpha0: f64) -> Result<f64> {
    Ok(f_quantile(1.0 - check_level(alpha0)?, p, df_res)? * p as f64 / df_res as f64)
}

pub fn selection_geometry(decomp: &QuadraticDecomposition, alpha0: f64) -> Result<SelectionGeometry> {
    decomp.check_fit()?;
    let c = screening_c(decomp.p, decomp.df_res(), alpha0)?;
    Ok(SelectionGeometry {
        c,
        d: -decomp.ss_nuis,
        r: decomp.ss_m / decomp.ss_res,
        n: decomp.n,
        p: decomp.p,
        m: decomp.m,
    })
}
