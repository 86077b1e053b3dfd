//! Leftover Fisher information about `beta_1` after a chi-square screen, for
//! the conditional approach and for sample splitting.
//!
//! This module works with the raw, intercept-free design and known variance:
//! the screen rejects when `y'P_X y >= c_chi = sigma^2 chi2_p^{-1}(1 - alpha0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{
    chi2_quantile, f_quantile, ln_normal_cdf, ln_normal_pdf, ln_normal_sf, noncentral_f_sf, standard_normal, RngStream,
    Substream,
};
use crate::error::{Error, Result};
use crate::model::RANK_TOL;
use crate::screen::check_level;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherSetting {
    x: DMatrix<f64>,
    beta: DVector<f64>,
    sigma2: f64,
    alpha0: f64,
}

impl FisherSetting {
    pub fn new(x: DMatrix<f64>, beta: DVector<f64>, sigma2: f64, alpha0: f64) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 || n <= p {
            return Err(Error::InsufficientDf { n, p });
        }
        if beta.len() != p {
            return Err(Error::BadArgument(format!("beta has length {} but X has {p} columns", beta.len())));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::BadArgument(format!("variance must be positive, got {sigma2}")));
        }
        check_level(alpha0)?;
        let r = x.clone().qr().r();
        check_full_rank(&r)?;
        Ok(Self { x, beta, sigma2, alpha0 })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `sigma^2 chi2_p^{-1}(1 - alpha0)`.
    pub fn c_chi(&self) -> Result<f64> {
        Ok(self.sigma2 * chi2_quantile(1.0 - self.alpha0, self.p())?)
    }
}

fn check_full_rank(r: &DMatrix<f64>) -> Result<()> {
    let diag: Vec<f64> = (0..r.ncols()).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    match diag.iter().position(|&d| d <= RANK_TOL * largest) {
        Some(column) => Err(Error::RankDeficient { column }),
        None => Ok(()),
    }
}

/// Orthonormal basis of the span of `a`, or an `n x 0` matrix.
fn basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    a.clone().qr().q()
}

/// `x_1'(I - P_{X_{-1}})x_1`; zero when `x_1` lies in the span of the rest.
fn residual_norm2(x: &DMatrix<f64>) -> Result<f64> {
    let rest = x.columns(1, x.ncols() - 1).clone_owned();
    if rest.ncols() > 0 {
        check_full_rank(&rest.clone().qr().r()).map_err(|e| match e {
            Error::RankDeficient { column } => Error::RankDeficient { column: column + 1 },
            other => other,
        })?;
    }
    let q = basis(&rest);
    let x1 = x.column(0);
    let resid = x1 - &q * (q.transpose() * x1);
    let k2 = resid.norm_squared();
    Ok(if k2 <= (RANK_TOL * x1.norm()).powi(2) { 0.0 } else { k2 })
}

/// Precomputed projections for evaluating the conditional information on many responses.
pub struct FisherGeometry {
    q_rest: DMatrix<f64>,
    q_full: DMatrix<f64>,
    k2: f64,
    c_chi: f64,
    beta1: f64,
    sigma2: f64,
}

impl FisherGeometry {
    pub fn new(setting: &FisherSetting) -> Result<Self> {
        let rest = setting.x.columns(1, setting.p() - 1).clone_owned();
        Ok(Self {
            q_rest: basis(&rest),
            q_full: basis(&setting.x),
            k2: residual_norm2(&setting.x)?,
            c_chi: setting.c_chi()?,
            beta1: setting.beta[0],
            sigma2: setting.sigma2,
        })
    }

    /// Unconditional information `x_1'(I - P_{X_{-1}})x_1 / sigma^2`.
    pub fn unconditional(&self) -> f64 {
        self.k2 / self.sigma2
    }

    pub fn c_chi(&self) -> f64 {
        self.c_chi
    }

    /// `y'P_X y >= c_chi`.
    pub fn screened(&self, y: &DVector<f64>) -> bool {
        (self.q_full.transpose() * y).norm_squared() >= self.c_chi
    }

    /// Leftover information about `beta_1` given the screen and `P_{X_{-1}} y`.
    pub fn leftover_info(&self, y: &DVector<f64>) -> f64 {
        let nuis = (self.q_rest.transpose() * y).norm_squared();
        self.leftover_info_from_excess(self.c_chi - nuis)
    }

    /// Same, parameterized by `e = c_chi - y'P_{X_{-1}}y`.
    pub fn leftover_info_from_excess(&self, e: f64) -> f64 {
        let base = self.unconditional();
        if e <= 0.0 {
            return base;
        }
        let sigma = self.sigma2.sqrt();
        let mean = self.beta1 * self.k2.sqrt();
        let a = (-e.sqrt() - mean) / sigma;
        let b = (e.sqrt() - mean) / sigma;
        base * truncation_factor(a, b)
    }
}

/// Variance of a standard normal restricted to `(-inf, a] U [b, inf)`,
/// relative to its unrestricted value. Computed from log densities so that
/// far tails neither underflow nor produce `0 * inf`.
fn truncation_factor(a: f64, b: f64) -> f64 {
    let ln_q = {
        let (x, y) = (ln_normal_cdf(a), ln_normal_sf(b));
        let hi = x.max(y);
        hi + (x.min(y) - hi).exp().ln_1p()
    };
    let ra = (ln_normal_pdf(a) - ln_q).exp();
    let rb = (ln_normal_pdf(b) - ln_q).exp();
    let diff = ra - rb;
    1.0 - diff * diff + (b * rb - a * ra)
}

/// All unconditional information about `beta_1` in the test rows.
pub fn split_info(x_te: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    if x_te.ncols() == 0 || x_te.nrows() < x_te.ncols() {
        return Err(Error::InsufficientDf { n: x_te.nrows(), p: x_te.ncols() });
    }
    Ok(residual_norm2(x_te)? / sigma2)
}

/// Probability that the level-`alpha0` F screen on `(p, df2)` degrees of
/// freedom rejects, with noncentrality `beta'X'X beta / sigma^2`.
pub fn reject_prob(
    p: usize,
    df2: usize,
    beta: &DVector<f64>,
    x: &DMatrix<f64>,
    sigma2: f64,
    alpha0: f64,
) -> Result<f64> {
    if df2 == 0 {
        return Err(Error::InsufficientDf { n: x.nrows(), p });
    }
    let q = f_quantile(1.0 - check_level(alpha0)?, p, df2)?;
    let mean = x * beta;
    noncentral_f_sf(q, p, df2, mean.norm_squared() / sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub rho: f64,
    pub cond_expected_info: f64,
    /// Monte Carlo standard error of `cond_expected_info`.
    pub cond_info_se: f64,
    pub screened: usize,
    pub draws: usize,
    pub reject_prob: f64,
    pub product: f64,
    pub split_info: f64,
    pub split_reject_prob: f64,
    pub split_product: f64,
}

/// Per-draw output of the conditional arm.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveInfoDraws {
    pub info: Vec<f64>,
    pub screened: Vec<bool>,
    pub unconditional: f64,
}

/// Draws `y ~ N(X beta, sigma^2 I)` and evaluates the leftover information on each.
pub fn selective_info_draws(setting: &FisherSetting, draws: usize, rng: RngStream) -> Result<SelectiveInfoDraws> {
    let geom = FisherGeometry::new(setting)?;
    let mean = &setting.x * &setting.beta;
    let sigma = setting.sigma2.sqrt();
    let n = setting.n();
    let stream = rng.substream(Substream::Fisher);
    // One replicate per generator call keeps each response on its own stream.
    let per: Vec<(f64, bool)> = {
        use rayon::prelude::*;
        (0..draws as u64)
            .into_par_iter()
            .map(|i| {
                let mut r = stream.derive(i).rng();
                let y = DVector::from_fn(n, |k, _| mean[k] + sigma * standard_normal(&mut r));
                (geom.leftover_info(&y), geom.screened(&y))
            })
            .collect()
    };
    let (info, screened) = per.into_iter().unzip();
    Ok(SelectiveInfoDraws { info, screened, unconditional: geom.unconditional() })
}

fn split_rows(n: usize, rho: f64) -> Result<usize> {
    let k = rho * n as f64;
    let rounded = k.round();
    if !(rho > 0.0 && rho < 1.0) || (k - rounded).abs() > 1e-9 {
        return Err(Error::BadArgument(format!("split proportion {rho} must give an integer in 1..{n}")));
    }
    Ok(rounded as usize)
}

/// Expected leftover information times screening probability, for the
/// conditional approach and for first-rows sample splits at each `rho`.
pub fn info_comparison(setting: &FisherSetting, rhos: &[f64], draws: usize, rng: RngStream) -> Result<Vec<InfoReport>> {
    let (n, p) = (setting.n(), setting.p());
    let sel = selective_info_draws(setting, draws, rng)?;
    let kept: Vec<f64> = sel.info.iter().zip(&sel.screened).filter(|(_, &s)| s).map(|(&v, _)| v).collect();
    if kept.is_empty() {
        return Err(Error::NoScreenedDraws);
    }
    let k = kept.len() as f64;
    let cond = kept.iter().sum::<f64>() / k;
    let var = if kept.len() > 1 { kept.iter().map(|v| (v - cond).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    let rp = reject_prob(p, n - p - 1, &setting.beta, &setting.x, setting.sigma2, setting.alpha0)?;
    rhos.iter()
        .map(|&rho| {
            let n_tr = split_rows(n, rho)?;
            if n_tr < p + 2 || n - n_tr < p {
                return Err(Error::InsufficientDf { n: n_tr.min(n - n_tr), p });
            }
            let x_tr = setting.x.rows(0, n_tr).clone_owned();
            let x_te = setting.x.rows(n_tr, n - n_tr).clone_owned();
            let si = split_info(&x_te, setting.sigma2)?;
            let srp = reject_prob(p, n_tr - p - 1, &setting.beta, &x_tr, setting.sigma2, setting.alpha0)?;
            Ok(InfoReport {
                rho,
                cond_expected_info: cond,
                cond_info_se: (var / k).sqrt(),
                screened: kept.len(),
                draws,
                reject_prob: rp,
                product: cond * rp,
                split_info: si,
                split_reject_prob: srp,
                split_product: si * srp,
            })
        })
        .collect()
}

/// An `n x p` matrix with orthonormal columns, reproducible from `rng`.
pub fn orthonormal_design(n: usize, p: usize, rng: RngStream) -> DMatrix<f64> {
    let mut r = rng.rng();
    let g = DMatrix::from_fn(n, p, |_, _| standard_normal(&mut r));
    g.qr().q()
}
