//! Selective p-values from published summaries: `(F_M, R^2, RSE)` of a
//! regression, or per-group `(n, mean, sd)` of a one-way ANOVA.
//!
//! The three published numbers determine the selection geometry exactly:
//!
//! * `d = RSE^2 (m F_M - df R^2 / (1 - R^2))`
//! * `r = m F_M / df`

use serde::{Deserialize, Serialize};

use crate::dist::{f_sf, Substream};
use crate::error::{Error, Result};
use crate::screen::{check_level, screening_c, ScreeningDecision, SelectionGeometry};
use crate::selective::{mc_conditional_prob, screened_residual_mean, McConfig, SelectivePValue, VarianceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryInputs {
    pub f_m: f64,
    pub r_squared: f64,
    pub rse: f64,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub alpha0: f64,
}

impl SummaryInputs {
    pub fn df_res(&self) -> usize {
        self.n - self.p - 1
    }

    fn validate(&self) -> Result<()> {
        check_level(self.alpha0)?;
        if self.p == 0 || self.n < self.p + 2 {
            return Err(Error::InsufficientDf { n: self.n, p: self.p });
        }
        if self.m == 0 || self.m > self.p {
            return Err(Error::BadIndexSet(format!("m = {} must lie in 1..={}", self.m, self.p)));
        }
        if self.r_squared == 1.0 || self.rse == 0.0 {
            return Err(Error::DegenerateFit);
        }
        if !(0.0..1.0).contains(&self.r_squared) {
            return Err(Error::Input(format!("R^2 = {} must lie in [0, 1)", self.r_squared)));
        }
        if !(self.rse > 0.0 && self.rse.is_finite()) || !(self.f_m >= 0.0 && self.f_m.is_finite()) {
            return Err(Error::Input("RSE must be positive and F_M nonnegative".into()));
        }
        Ok(())
    }

    /// Overall F implied by `R^2`.
    pub fn f_overall(&self) -> f64 {
        self.r_squared / (1.0 - self.r_squared) * self.df_res() as f64 / self.p as f64
    }

    /// Residual sum of squares `RSE^2 (n - p - 1)`.
    pub fn ss_res(&self) -> f64 {
        self.rse * self.rse * self.df_res() as f64
    }

    pub fn geometry(&self) -> Result<SelectionGeometry> {
        self.validate()?;
        let df = self.df_res() as f64;
        let m = self.m as f64;
        let r2 = self.r_squared;
        let mut d = self.rse * self.rse * (self.f_m * m - (r2 / (1.0 - r2)) * df);
        if d > 0.0 {
            // R^2 must explain at least the tested block's share.
            let scale = self.rse * self.rse * self.f_m * m;
            if d > 1e-9 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Input(format!(
                    "summaries are inconsistent: F_M = {} needs a larger R^2 than {}",
                    self.f_m, self.r_squared
                )));
            }
            d = 0.0;
        }
        Ok(SelectionGeometry {
            c: screening_c(self.p, self.df_res(), self.alpha0)?,
            d,
            r: self.f_m * m / df,
            n: self.n,
            p: self.p,
            m: self.m,
        })
    }
}

/// Selective p-value from `(F_M, R^2, RSE)`. Uses the same substreams as
/// [`crate::selective::selective_p`], so both paths agree draw for draw.
pub fn retro_selective_p(inputs: &SummaryInputs, variance: VarianceSpec, cfg: &McConfig) -> Result<SelectivePValue> {
    let geom = inputs.geometry()?;
    let sigma2 = match variance {
        VarianceSpec::Known(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::BadArgument(format!("known variance must be positive, got {s}")));
            }
            s
        }
        VarianceSpec::PlugIn => inputs.rse * inputs.rse,
        VarianceSpec::Debiased => {
            let vcfg = cfg.with_rng(cfg.rng.substream(Substream::Variance));
            let cm = screened_residual_mean(inputs.p, inputs.df_res(), inputs.alpha0, &vcfg)?;
            inputs.ss_res() / cm.mean
        }
    };
    let pcfg = cfg.with_rng(cfg.rng.substream(Substream::PValue));
    let estimate = mc_conditional_prob(&geom, geom.d / sigma2, &pcfg)?;
    let decision = ScreeningDecision::from_statistic(inputs.f_overall(), inputs.p, inputs.df_res(), inputs.alpha0)?;
    Ok(SelectivePValue { estimate, mode: variance, sigma2, screened: decision.rejected })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl GroupSummary {
    pub fn new(n: usize, mean: f64, sd: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Input(format!("group size {n} is below 2")));
        }
        if !mean.is_finite() || !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::Input(format!("invalid group mean {mean} or sd {sd}")));
        }
        Ok(Self { n, mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaSummary {
    pub groups: Vec<GroupSummary>,
    pub ssb: f64,
    pub ssw: f64,
    pub grand_mean: f64,
    pub n: usize,
}

impl AnovaSummary {
    pub fn new(groups: Vec<GroupSummary>) -> Result<Self> {
        let k = groups.len();
        if k < 2 {
            return Err(Error::Input(format!("need at least two groups, got {k}")));
        }
        for g in &groups {
            GroupSummary::new(g.n, g.mean, g.sd)?;
        }
        let n: usize = groups.iter().map(|g| g.n).sum();
        if n < k + 1 {
            return Err(Error::InsufficientDf { n, p: k - 1 });
        }
        let grand_mean = groups.iter().map(|g| g.n as f64 * g.mean).sum::<f64>() / n as f64;
        let ssb = groups.iter().map(|g| g.n as f64 * (g.mean - grand_mean).powi(2)).sum();
        let ssw = groups.iter().map(|g| (g.n - 1) as f64 * g.sd * g.sd).sum();
        Ok(Self { groups, ssb, ssw, grand_mean, n })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    /// Residual degrees of freedom of the K-group model, `n - K`.
    pub fn df_within(&self) -> usize {
        self.n - self.k()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseF {
    /// Zero-based group indices, `k1 < k2`.
    pub k1: usize,
    pub k2: usize,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub r_squared: f64,
    pub rse: f64,
    pub f_overall: f64,
    pub p_overall: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub pairwise: Vec<PairwiseF>,
}

pub fn anova_from_groups(summary: &AnovaSummary) -> Result<AnovaTable> {
    if summary.ssw.is_nan() || summary.ssw <= 0.0 {
        return Err(Error::DegenerateFit);
    }
    let k = summary.k();
    let dfw = summary.df_within();
    let (ssb, ssw) = (summary.ssb, summary.ssw);
    let f_overall = (ssb / (k - 1) as f64) / (ssw / dfw as f64);
    let mut pairwise = Vec::with_capacity(k * (k - 1) / 2);
    for k1 in 0..k {
        for k2 in k1 + 1..k {
            let (a, b) = (&summary.groups[k1], &summary.groups[k2]);
            let f = dfw as f64 * (a.mean - b.mean).powi(2) / (ssw * (1.0 / a.n as f64 + 1.0 / b.n as f64));
            pairwise.push(PairwiseF { k1, k2, f });
        }
    }
    Ok(AnovaTable {
        r_squared: ssb / (ssb + ssw),
        rse: (ssw / dfw as f64).sqrt(),
        f_overall,
        p_overall: f_sf(f_overall, k - 1, dfw),
        df_between: k - 1,
        df_within: dfw,
        pairwise,
    })
}

/// `1 - (1 - p)^L`.
pub fn sidak(p: f64, tests: usize) -> f64 {
    -((tests as f64) * (-p).ln_1p()).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub k1: usize,
    pub k2: usize,
    pub f: f64,
    pub standard_p: f64,
    /// Display only.
    pub sidak_p: f64,
    pub selective: SelectivePValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRetroReport {
    pub table: AnovaTable,
    pub screening: ScreeningDecision,
    pub pairs: Vec<PairReport>,
}

/// Summary inputs for the `k1` vs `k2` contrast inside the K-group model.
pub fn pair_inputs(table: &AnovaTable, pair: &PairwiseF, alpha0: f64) -> SummaryInputs {
    SummaryInputs {
        f_m: pair.f,
        r_squared: table.r_squared,
        rse: table.rse,
        n: table.df_within + table.df_between + 1,
        p: table.df_between,
        m: 1,
        alpha0,
    }
}

/// Standard, Sidak-adjusted and selective p-values for every pair of groups.
/// Every pair shares `cfg`, exactly as a raw-data analysis of each contrast would.
pub fn anova_retro_report(
    summary: &AnovaSummary,
    alpha0: f64,
    variance: VarianceSpec,
    cfg: &McConfig,
) -> Result<AnovaRetroReport> {
    let table = anova_from_groups(summary)?;
    let screening = ScreeningDecision::from_statistic(table.f_overall, table.df_between, table.df_within, alpha0)?;
    if !screening.rejected {
        return Err(Error::ScreeningNotRejected { f_overall: screening.f_overall, p_overall: screening.p_overall });
    }
    let tests = table.pairwise.len();
    let pairs = table
        .pairwise
        .iter()
        .map(|pair| {
            let standard_p = f_sf(pair.f, 1, table.df_within);
            let selective = retro_selective_p(&pair_inputs(&table, pair, alpha0), variance, cfg)?;
            Ok(PairReport {
                k1: pair.k1,
                k2: pair.k2,
                f: pair.f,
                standard_p,
                sidak_p: sidak(standard_p, tests),
                selective,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnovaRetroReport { table, screening, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::RngStream;
    use approx::assert_relative_eq;

    fn g(n: usize, mean: f64, sd: f64) -> GroupSummary {
        GroupSummary::new(n, mean, sd).unwrap()
    }

    #[test]
    fn hand_arithmetic() {
        let s = AnovaSummary::new(vec![g(5, 1.0, 1.0), g(5, 3.0, 1.0)]).unwrap();
        assert_relative_eq!(s.ssb, 10.0);
        assert_relative_eq!(s.ssw, 8.0);
        let t = anova_from_groups(&s).unwrap();
        assert_relative_eq!(t.f_overall, 10.0, max_relative = 1e-14);
        assert_relative_eq!(t.pairwise[0].f, 10.0, max_relative = 1e-14);
    }

    #[test]
    fn equal_means() {
        let s = AnovaSummary::new(vec![g(6, 2.0, 1.0), g(4, 2.0, 0.5), g(5, 2.0, 2.0)]).unwrap();
        let t = anova_from_groups(&s).unwrap();
        assert_eq!(s.ssb, 0.0);
        assert_eq!(t.f_overall, 0.0);
        assert!(t.pairwise.iter().all(|p| p.f == 0.0));
        let cfg = McConfig::new(RngStream::new(1, 0));
        assert!(matches!(
            anova_retro_report(&s, 0.05, VarianceSpec::Debiased, &cfg),
            Err(Error::ScreeningNotRejected { .. })
        ));
    }

    #[test]
    fn zero_within_variance() {
        let s = AnovaSummary::new(vec![g(3, 1.0, 0.0), g(3, 2.0, 0.0)]).unwrap();
        assert_eq!(anova_from_groups(&s), Err(Error::DegenerateFit));
    }

    #[test]
    fn invalid_summaries() {
        let base = SummaryInputs { f_m: 4.2, r_squared: 0.31, rse: 1.02, n: 100, p: 10, m: 1, alpha0: 0.05 };
        let cfg = McConfig::new(RngStream::new(1, 0)).with_draws(10_000).with_min_accept(10);
        let deg = SummaryInputs { r_squared: 1.0, ..base };
        assert_eq!(retro_selective_p(&deg, VarianceSpec::PlugIn, &cfg), Err(Error::DegenerateFit));
        let bad_m = SummaryInputs { m: 11, ..base };
        assert!(matches!(retro_selective_p(&bad_m, VarianceSpec::PlugIn, &cfg), Err(Error::BadIndexSet(_))));
        let inconsistent = SummaryInputs { r_squared: 0.01, ..base };
        assert!(matches!(inconsistent.geometry(), Err(Error::Input(_))));
    }

    #[test]
    fn zero_partial_f_gives_one() {
        let s = SummaryInputs { f_m: 0.0, r_squared: 0.3, rse: 1.0, n: 60, p: 4, m: 1, alpha0: 0.05 };
        let cfg = McConfig::new(RngStream::new(2, 0)).with_draws(20_000).with_min_accept(10);
        assert_eq!(retro_selective_p(&s, VarianceSpec::PlugIn, &cfg).unwrap().estimate.p, 1.0);
    }

    #[test]
    fn boundary_r_squared_gives_zero_d() {
        let (n, p, m) = (50usize, 3usize, 3usize);
        let df = (n - p - 1) as f64;
        let f_m = 5.0;
        // r2/(1-r2) * df = f_m * m
        let ratio = f_m * m as f64 / df;
        let r2 = ratio / (1.0 + ratio);
        let s = SummaryInputs { f_m, r_squared: r2, rse: 1.3, n, p, m, alpha0: 0.05 };
        assert!(s.geometry().unwrap().d.abs() < 1e-12);
    }

    #[test]
    fn sidak_values() {
        assert_relative_eq!(sidak(0.01, 3), 1.0 - 0.99f64.powi(3), max_relative = 1e-14);
        assert_eq!(sidak(0.0, 3), 0.0);
    }
}
