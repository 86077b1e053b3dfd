//! Monte Carlo selective p-values and the debiased variance estimator.
//!
//! Given the selection geometry `(c, d, r)` the selective p-value is
//!
//! `Pr(W / Z >= r | W - c Z >= d / sigma^2)`, with `W ~ chi2_m`, `Z ~ chi2_{n-p-1}`
//!
//! estimated from independent pairs as a ratio of counts. The variance enters
//! only through `d / sigma^2`, so the known, plug-in and debiased variants
//! differ in that one scalar.

use serde::{Deserialize, Serialize};

use crate::dist::{Chi2Sampler, RngStream, Substream};
use crate::error::{Error, Result};
use crate::model::QuadraticDecomposition;
use crate::screen::{check_level, screening_c, selection_geometry, SelectionGeometry};

pub const DEFAULT_DRAWS: u64 = 200_000;
pub const DEFAULT_MIN_ACCEPT: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub draws: u64,
    pub min_accept: u64,
    pub rng: RngStream,
}

impl McConfig {
    pub fn new(rng: RngStream) -> Self {
        Self { draws: DEFAULT_DRAWS, min_accept: DEFAULT_MIN_ACCEPT, rng }
    }

    pub fn with_draws(self, draws: u64) -> Self {
        Self { draws, ..self }
    }

    pub fn with_min_accept(self, min_accept: u64) -> Self {
        Self { min_accept, ..self }
    }

    pub fn with_rng(self, rng: RngStream) -> Self {
        Self { rng, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 || self.min_accept == 0 {
            return Err(Error::BadArgument("draws and min_accept must be positive".into()));
        }
        if self.min_accept > self.draws {
            return Err(Error::BadArgument(format!("min_accept ({}) exceeds draws ({})", self.min_accept, self.draws)));
        }
        Ok(())
    }
}

/// How `sigma^2` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSpec {
    Known(f64),
    PlugIn,
    Debiased,
}

impl VarianceSpec {
    pub fn name(&self) -> &'static str {
        match self {
            VarianceSpec::Known(_) => "known",
            VarianceSpec::PlugIn => "plugin",
            VarianceSpec::Debiased => "debiased",
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            VarianceSpec::Known(s) if !(s > 0.0 && s.is_finite()) => {
                Err(Error::BadArgument(format!("known variance must be positive, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueEstimate {
    pub p: f64,
    /// Binomial standard error `sqrt(p(1-p)/accepted)`.
    pub mc_se: f64,
    pub accepted: u64,
    pub draws: u64,
}

impl PValueEstimate {
    /// Ratio estimate from `hits` among `accepted`, with the acceptance checks applied.
    pub fn from_counts(hits: u64, accepted: u64, draws: u64, min_accept: u64) -> Result<Self> {
        if accepted == 0 {
            return Err(Error::EmptyConditioningEvent { draws });
        }
        let p = hits as f64 / accepted as f64;
        let est = Self { p, mc_se: (p * (1.0 - p) / accepted as f64).sqrt(), accepted, draws };
        if accepted < min_accept {
            return Err(Error::LowAcceptance {
                accepted,
                draws,
                min_accept,
                rate: accepted as f64 / draws as f64,
                partial: Some(est),
            });
        }
        Ok(est)
    }
}

/// A selective p-value together with the variance that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectivePValue {
    pub estimate: PValueEstimate,
    pub mode: VarianceSpec,
    pub sigma2: f64,
    /// Whether the data actually passed the screen.
    pub screened: bool,
}

/// `Pr(W/Z >= r | W - cZ >= d_over_sigma2)` by plain Monte Carlo on `cfg.rng`.
pub fn mc_conditional_prob(geom: &SelectionGeometry, d_over_sigma2: f64, cfg: &McConfig) -> Result<PValueEstimate> {
    cfg.validate()?;
    if geom.r.is_nan() || geom.r < 0.0 || geom.c.is_nan() || geom.c < 0.0 || d_over_sigma2.is_nan() {
        return Err(Error::BadArgument("selection geometry must have c >= 0 and r >= 0".into()));
    }
    let w_law = Chi2Sampler::new(geom.m)?;
    let z_law = Chi2Sampler::new(geom.df_res())?;
    let (c, r) = (geom.c, geom.r);
    let counts = cfg.rng.batched(cfg.draws, |rng, len| {
        let (mut accepted, mut hits) = (0u64, 0u64);
        for _ in 0..len {
            let w = w_law.sample(rng);
            let z = z_law.sample(rng);
            if w - c * z >= d_over_sigma2 {
                accepted += 1;
                if w / z >= r {
                    hits += 1;
                }
            }
        }
        (accepted, hits)
    });
    let (accepted, hits) = counts.iter().fold((0, 0), |(a, h), &(da, dh)| (a + da, h + dh));
    PValueEstimate::from_counts(hits, accepted, cfg.draws, cfg.min_accept)
}

/// Selective p-value with `sigma^2` known. Draws from the p-value substream.
pub fn selective_p_known_var(
    decomp: &QuadraticDecomposition,
    alpha0: f64,
    sigma2: f64,
    cfg: &McConfig,
) -> Result<PValueEstimate> {
    VarianceSpec::Known(sigma2).validate()?;
    let geom = selection_geometry(decomp, alpha0)?;
    mc_conditional_prob(&geom, geom.d / sigma2, &pvalue_cfg(cfg))
}

fn pvalue_cfg(cfg: &McConfig) -> McConfig {
    cfg.with_rng(cfg.rng.substream(Substream::PValue))
}

/// `ss_res / (n - p - 1)`.
pub fn sigma_hat(decomp: &QuadraticDecomposition) -> Result<f64> {
    decomp.check_fit()?;
    Ok(decomp.ss_res / decomp.df_res() as f64)
}

/// Monte Carlo estimate of `E[Z | A >= cZ]` for `A ~ chi2_p`, `Z ~ chi2_df`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMean {
    pub mean: f64,
    pub se: f64,
    pub accepted: u64,
    pub draws: u64,
}

/// Conditional mean of the residual chi-square given screening under the
/// global null, drawing directly from `cfg.rng`.
pub fn screened_residual_mean(p: usize, df_res: usize, alpha0: f64, cfg: &McConfig) -> Result<ConditionalMean> {
    cfg.validate()?;
    let c = screening_c(p, df_res, check_level(alpha0)?)?;
    let a_law = Chi2Sampler::new(p)?;
    let z_law = Chi2Sampler::new(df_res)?;
    let sums = cfg.rng.batched(cfg.draws, |rng, len| {
        let (mut k, mut s, mut s2) = (0u64, 0.0f64, 0.0f64);
        for _ in 0..len {
            let a = a_law.sample(rng);
            let z = z_law.sample(rng);
            if a >= c * z {
                k += 1;
                s += z;
                s2 += z * z;
            }
        }
        (k, s, s2)
    });
    let (k, s, s2) = sums.iter().fold((0u64, 0.0, 0.0), |acc, b| (acc.0 + b.0, acc.1 + b.1, acc.2 + b.2));
    if k == 0 {
        return Err(Error::EmptyConditioningEvent { draws: cfg.draws });
    }
    if k < cfg.min_accept {
        return Err(Error::LowAcceptance {
            accepted: k,
            draws: cfg.draws,
            min_accept: cfg.min_accept,
            rate: k as f64 / cfg.draws as f64,
            partial: None,
        });
    }
    let mean = s / k as f64;
    let var = (s2 / k as f64 - mean * mean).max(0.0) * k as f64 / (k.max(2) - 1) as f64;
    Ok(ConditionalMean { mean, se: (var / k as f64).sqrt(), accepted: k, draws: cfg.draws })
}

/// `ss_res / E[Z | A >= cZ]`, on the variance substream.
pub fn debiased_sigma(decomp: &QuadraticDecomposition, alpha0: f64, cfg: &McConfig) -> Result<f64> {
    decomp.check_fit()?;
    let vcfg = cfg.with_rng(cfg.rng.substream(Substream::Variance));
    let cm = screened_residual_mean(decomp.p, decomp.df_res(), alpha0, &vcfg)?;
    Ok(decomp.ss_res / cm.mean)
}

/// Resolves the variance for `spec`, using `cfg` only in debiased mode.
pub fn resolve_sigma2(decomp: &QuadraticDecomposition, alpha0: f64, spec: VarianceSpec, cfg: &McConfig) -> Result<f64> {
    spec.validate()?;
    match spec {
        VarianceSpec::Known(s) => Ok(s),
        VarianceSpec::PlugIn => sigma_hat(decomp),
        VarianceSpec::Debiased => debiased_sigma(decomp, alpha0, cfg),
    }
}

/// Selective p-value for `H_0^M` with the variance chosen by `variance`.
pub fn selective_p(
    decomp: &QuadraticDecomposition,
    alpha0: f64,
    variance: VarianceSpec,
    cfg: &McConfig,
) -> Result<SelectivePValue> {
    let sigma2 = resolve_sigma2(decomp, alpha0, variance, cfg)?;
    selective_p_with_sigma2(decomp, alpha0, variance, sigma2, cfg)
}

/// As [`selective_p`] with `sigma^2` already resolved (e.g. a cached debiased value).
pub fn selective_p_with_sigma2(
    decomp: &QuadraticDecomposition,
    alpha0: f64,
    mode: VarianceSpec,
    sigma2: f64,
    cfg: &McConfig,
) -> Result<SelectivePValue> {
    VarianceSpec::Known(sigma2).validate()?;
    let geom = selection_geometry(decomp, alpha0)?;
    let estimate = mc_conditional_prob(&geom, geom.d / sigma2, &pvalue_cfg(cfg))?;
    Ok(SelectivePValue { estimate, mode, sigma2, screened: geom.screening_rejected(decomp) })
}
