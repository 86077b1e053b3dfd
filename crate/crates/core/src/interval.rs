//! Selective confidence intervals by test inversion and the conditional MLE
//! for a single coefficient `beta_j`.
//!
//! Both work in the univariate contrast coordinates: with `u` the unit vector
//! along `X_j` residualized on the other columns, `u'y ~ N(beta_j u'X_j, sigma^2)`
//! and screening constrains `(u'y)^2 - c * ss_res >= -y'P_{X_{-j}}y`.
//!
//! Every `b` is evaluated on one frozen set of draws (common random numbers),
//! so `p(b)` and the likelihood vary smoothly with the candidate value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{ln_normal_cdf, normal_cdf, standard_normal, Chi2Sampler, RngStream, Substream};
use crate::error::{Error, Result};
use crate::model::{CenteredDesign, IndexSet, PartitionedQr};
use crate::screen::{check_level, screening_c};
use crate::selective::{resolve_sigma2, McConfig, PValueEstimate, VarianceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastGeometry {
    /// Zero-based coefficient index.
    pub j: usize,
    pub u_dot_y: f64,
    /// `||(I - P_{X_{-j}}) X_j||`, always positive.
    pub u_dot_xj: f64,
    /// `-y'P_{X_{-j}}y`.
    pub d_nuis: f64,
    pub ss_res: f64,
    pub n: usize,
    pub p: usize,
}

impl ContrastGeometry {
    pub fn df_res(&self) -> usize {
        self.n - self.p - 1
    }

    /// OLS estimate `u'y / u'X_j`.
    pub fn beta_hat(&self) -> f64 {
        self.u_dot_y / self.u_dot_xj
    }

    /// Standard error of the OLS estimate for a given variance.
    pub fn se(&self, sigma2: f64) -> f64 {
        sigma2.sqrt() / self.u_dot_xj
    }

    /// `(u'y - b u'X_j)^2 / ss_res`.
    pub fn r_prime(&self, b: f64) -> f64 {
        let e = self.u_dot_y - b * self.u_dot_xj;
        e * e / self.ss_res
    }
}

pub fn contrast_geometry(design: &CenteredDesign, j: usize) -> Result<ContrastGeometry> {
    let m = IndexSet::single(j, design.p)?;
    let qr = PartitionedQr::new(design, &m)?;
    let q = qr.decomposition(design);
    q.check_fit()?;
    let last = design.p - 1;
    let rjj = qr.r[(last, last)];
    Ok(ContrastGeometry {
        j,
        u_dot_y: rjj.signum() * qr.qty[last],
        u_dot_xj: rjj.abs(),
        d_nuis: -q.ss_nuis,
        ss_res: q.ss_res,
        n: design.n,
        p: design.p,
    })
}

/// Frozen `(g, z)` pairs with `g ~ N(0, 1)` and `z ~ chi2_df`, generated in
/// the same order as the one-degree-of-freedom selective p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnDraws {
    pub g: Vec<f64>,
    pub z: Vec<f64>,
}

impl CrnDraws {
    pub fn generate(stream: RngStream, draws: u64, df: usize) -> Result<Self> {
        let z_law = Chi2Sampler::new(df)?;
        let batches = stream.batched(draws, |rng, len| {
            let mut g = Vec::with_capacity(len);
            let mut z = Vec::with_capacity(len);
            for _ in 0..len {
                // Same generator calls as a chi2_1 draw, without the square.
                g.push(standard_normal(rng));
                z.push(z_law.sample(rng));
            }
            (g, z)
        });
        let mut out = Self { g: Vec::with_capacity(draws as usize), z: Vec::with_capacity(draws as usize) };
        for (g, z) in batches {
            out.g.extend(g);
            out.z.extend(z);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

/// Counts `(accepted, hits)` for the test of `beta_j = b` on frozen draws.
fn pselb_counts(b: f64, geom: &ContrastGeometry, c: f64, sigma2: f64, draws: &CrnDraws) -> (u64, u64) {
    let sigma = sigma2.sqrt();
    let shift = b * geom.u_dot_xj / sigma;
    let rp = geom.r_prime(b);
    let dd = geom.d_nuis / sigma2;
    let (mut accepted, mut hits) = (0u64, 0u64);
    for (&g, &z) in draws.g.iter().zip(&draws.z) {
        let t = shift + g;
        if t * t - c * z >= dd {
            accepted += 1;
            if g * g / z >= rp {
                hits += 1;
            }
        }
    }
    (accepted, hits)
}

/// Selective p-value for `H_0: beta_j = b` on frozen draws.
pub fn pselb_crn(
    b: f64,
    geom: &ContrastGeometry,
    c: f64,
    sigma2: f64,
    draws: &CrnDraws,
    min_accept: u64,
) -> Result<PValueEstimate> {
    let (accepted, hits) = pselb_counts(b, geom, c, sigma2, draws);
    PValueEstimate::from_counts(hits, accepted, draws.len() as u64, min_accept)
}

/// Selective p-value for `H_0: beta_j = b`, drawing from the p-value
/// substream. At `b = 0` this reproduces the selective p-value for `M = {j}`.
pub fn pselb(b: f64, geom: &ContrastGeometry, c: f64, sigma2: f64, cfg: &McConfig) -> Result<PValueEstimate> {
    cfg.validate()?;
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::BadArgument(format!("variance must be positive, got {sigma2}")));
    }
    let draws = CrnDraws::generate(cfg.rng.substream(Substream::PValue), cfg.draws, geom.df_res())?;
    pselb_crn(b, geom, c, sigma2, &draws, cfg.min_accept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalOptions {
    pub grid_points: usize,
    /// Half-width of the initial grid in standard errors.
    pub half_width_se: f64,
    /// Bisection stops at this width, in standard errors.
    pub tol_se: f64,
    /// Number of outward grid extensions tried before declaring a side unbounded.
    pub max_extensions: usize,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        Self { grid_points: 101, half_width_se: 12.0, tol_se: 0.01, max_extensions: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalWarning {
    /// The level set has gaps on the grid; the hull is reported.
    NonContiguous,
    UnboundedBelow,
    UnboundedAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveInterval {
    /// `-inf` when unbounded below.
    pub lower: f64,
    /// `+inf` when unbounded above.
    pub upper: f64,
    pub alpha: f64,
    pub sigma2: f64,
    pub estimate_ols: f64,
    pub se: f64,
    pub warnings: Vec<IntervalWarning>,
    /// Smallest accepted-draw count over all evaluated `b`.
    pub min_accepted: u64,
}

impl SelectiveInterval {
    pub fn contains(&self, b: f64) -> bool {
        self.lower <= b && b <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

struct Inverter<'a> {
    geom: &'a ContrastGeometry,
    c: f64,
    sigma2: f64,
    draws: &'a CrnDraws,
    alpha: f64,
    min_accepted: std::sync::atomic::AtomicU64,
}

impl Inverter<'_> {
    fn p(&self, b: f64) -> f64 {
        let (accepted, hits) = pselb_counts(b, self.geom, self.c, self.sigma2, self.draws);
        self.min_accepted.fetch_min(accepted, std::sync::atomic::Ordering::Relaxed);
        if accepted == 0 {
            0.0
        } else {
            hits as f64 / accepted as f64
        }
    }

    fn inside(&self, b: f64) -> bool {
        self.p(b) >= self.alpha
    }

    /// Bisects between `out` (rejected) and `inn` (accepted).
    fn boundary(&self, mut out: f64, mut inn: f64, tol: f64) -> f64 {
        while (inn - out).abs() > tol {
            let mid = 0.5 * (out + inn);
            if self.inside(mid) {
                inn = mid;
            } else {
                out = mid;
            }
        }
        inn
    }

    /// Walks outward from `from` in steps of `step` until `b` is rejected.
    fn extend(&self, from: f64, step: f64, max_steps: usize) -> Option<(f64, f64)> {
        let mut inn = from;
        for _ in 0..max_steps {
            let out = inn + step;
            if !self.inside(out) {
                return Some((out, inn));
            }
            inn = out;
        }
        None
    }
}

/// Inverts the selective test on frozen draws for a resolved variance.
pub fn selective_ci_with(
    geom: &ContrastGeometry,
    c: f64,
    sigma2: f64,
    alpha: f64,
    draws: &CrnDraws,
    min_accept: u64,
    opts: &IntervalOptions,
) -> Result<SelectiveInterval> {
    check_level(alpha)?;
    if opts.grid_points < 3 {
        return Err(Error::BadArgument("interval grid needs at least 3 points".into()));
    }
    let center = geom.beta_hat();
    let se = geom.se(sigma2);
    let lo = center - opts.half_width_se * se;
    let step = 2.0 * opts.half_width_se * se / (opts.grid_points - 1) as f64;
    let grid: Vec<f64> = (0..opts.grid_points).map(|i| lo + i as f64 * step).collect();
    let inv = Inverter { geom, c, sigma2, draws, alpha, min_accepted: std::sync::atomic::AtomicU64::new(u64::MAX) };
    let inside: Vec<bool> = grid.par_iter().map(|&b| inv.inside(b)).collect();
    let first = inside.iter().position(|&x| x);
    let last = inside.iter().rposition(|&x| x);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::EmptyInterval);
    };
    let mut warnings = Vec::new();
    if inside[first..=last].iter().any(|&x| !x) {
        warnings.push(IntervalWarning::NonContiguous);
    }
    let tol = opts.tol_se * se;
    let span = 2.0 * opts.half_width_se * se;
    let lower = if first > 0 {
        inv.boundary(grid[first - 1], grid[first], tol)
    } else {
        match inv.extend(grid[0], -span, opts.max_extensions) {
            Some((out, inn)) => inv.boundary(out, inn, tol),
            None => {
                warnings.push(IntervalWarning::UnboundedBelow);
                f64::NEG_INFINITY
            }
        }
    };
    let n = grid.len();
    let upper = if last + 1 < n {
        inv.boundary(grid[last + 1], grid[last], tol)
    } else {
        match inv.extend(grid[n - 1], span, opts.max_extensions) {
            Some((out, inn)) => inv.boundary(out, inn, tol),
            None => {
                warnings.push(IntervalWarning::UnboundedAbove);
                f64::INFINITY
            }
        }
    };
    let min_accepted = inv.min_accepted.into_inner();
    if min_accepted < min_accept {
        let partial = None;
        return Err(Error::LowAcceptance {
            accepted: min_accepted,
            draws: draws.len() as u64,
            min_accept,
            rate: min_accepted as f64 / draws.len() as f64,
            partial,
        });
    }
    Ok(SelectiveInterval { lower, upper, alpha, sigma2, estimate_ols: center, se, warnings, min_accepted })
}

/// Selective confidence interval for `beta_j` at level `1 - alpha`.
pub fn selective_ci(
    j: usize,
    design: &CenteredDesign,
    alpha: f64,
    alpha0: f64,
    variance: VarianceSpec,
    cfg: &McConfig,
) -> Result<SelectiveInterval> {
    cfg.validate()?;
    let geom = contrast_geometry(design, j)?;
    let decomp = crate::model::decompose(design, &IndexSet::single(j, design.p)?)?;
    let sigma2 = resolve_sigma2(&decomp, alpha0, variance, cfg)?;
    let c = screening_c(design.p, design.df_res, alpha0)?;
    let draws = CrnDraws::generate(cfg.rng.substream(Substream::CommonDraws), cfg.draws, geom.df_res())?;
    selective_ci_with(&geom, c, sigma2, alpha, &draws, cfg.min_accept, &IntervalOptions::default())
}

/// Classical `1 - alpha` t interval, for comparison.
pub fn standard_ci(geom: &ContrastGeometry, alpha: f64) -> Result<(f64, f64)> {
    let t = crate::dist::t_critical(alpha, geom.df_res())?;
    let sigma2 = geom.ss_res / geom.df_res() as f64;
    let half = t * geom.se(sigma2);
    Ok((geom.beta_hat() - half, geom.beta_hat() + half))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMle {
    pub estimate: f64,
    pub log_lik: f64,
    pub bracket: (f64, f64),
    pub converged: bool,
    /// Every local maximum found on the coarse scan, in increasing order.
    pub local_maxima: Vec<f64>,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub scan_points: usize,
    pub half_width_se: f64,
    pub tol_se: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { scan_points: 101, half_width_se: 10.0, tol_se: 1e-3 }
    }
}

/// `ln(exp(a) + exp(b))`.
fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Log of the screening probability as a function of `beta_j`.
///
/// With `Z` frozen, `Pr((s + g)^2 >= t)` is available in closed form over
/// `g`, so the estimate averages normal tail pairs across the `Z` draws.
struct ScreenProbability<'a> {
    shift_per_beta: f64,
    thresholds: Vec<f64>,
    z: &'a [f64],
}

impl<'a> ScreenProbability<'a> {
    fn new(geom: &ContrastGeometry, c: f64, sigma2: f64, z: &'a [f64]) -> Self {
        let dd = geom.d_nuis / sigma2;
        let thresholds = z.iter().map(|&zi| (c * zi + dd).max(0.0).sqrt()).collect();
        Self { shift_per_beta: geom.u_dot_xj / sigma2.sqrt(), thresholds, z }
    }

    fn ln_prob(&self, beta: f64) -> f64 {
        let s = beta * self.shift_per_beta;
        let total: f64 =
            self.thresholds.iter().map(|&q| if q == 0.0 { 1.0 } else { normal_cdf(-q - s) + normal_cdf(s - q) }).sum();
        if total > 0.0 {
            return (total / self.z.len() as f64).ln();
        }
        let mut acc = f64::NEG_INFINITY;
        for &q in &self.thresholds {
            acc = ln_add_exp(acc, ln_add_exp(ln_normal_cdf(-q - s), ln_normal_cdf(s - q)));
        }
        acc - (self.z.len() as f64).ln()
    }
}

/// Conditional log-likelihood of `beta_j`, up to a constant.
pub struct ConditionalLikelihood<'a> {
    geom: &'a ContrastGeometry,
    sigma2: f64,
    screen: ScreenProbability<'a>,
}

impl<'a> ConditionalLikelihood<'a> {
    pub fn new(geom: &'a ContrastGeometry, c: f64, sigma2: f64, z: &'a [f64]) -> Self {
        Self { geom, sigma2, screen: ScreenProbability::new(geom, c, sigma2, z) }
    }

    pub fn log_lik(&self, beta: f64) -> f64 {
        let e = self.geom.u_dot_y - beta * self.geom.u_dot_xj;
        -e * e / (2.0 * self.sigma2) - self.screen.ln_prob(beta)
    }

    /// Log of the estimated screening probability at `beta`.
    pub fn ln_screen_prob(&self, beta: f64) -> f64 {
        self.screen.ln_prob(beta)
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64, bool) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            let x = 0.5 * (a + b);
            return (x, f(x), true);
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x), false)
}

/// Maximizes the conditional likelihood on frozen draws for a resolved variance.
pub fn conditional_mle_with(
    geom: &ContrastGeometry,
    c: f64,
    sigma2: f64,
    z: &[f64],
    opts: &MleOptions,
) -> Result<ConditionalMle> {
    if z.is_empty() || opts.scan_points < 3 {
        return Err(Error::BadArgument("conditional MLE needs draws and at least 3 scan points".into()));
    }
    let lik = ConditionalLikelihood::new(geom, c, sigma2, z);
    let center = geom.beta_hat();
    let se = geom.se(sigma2);
    let bracket = (center - opts.half_width_se * se, center + opts.half_width_se * se);
    let step = (bracket.1 - bracket.0) / (opts.scan_points - 1) as f64;
    let grid: Vec<f64> = (0..opts.scan_points).map(|i| bracket.0 + i as f64 * step).collect();
    let values: Vec<f64> = grid.par_iter().map(|&b| lik.log_lik(b)).collect();
    let k = values.len();
    let local: Vec<usize> = (0..k)
        .filter(|&i| {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i + 1 == k || values[i] > values[i + 1];
            left && right
        })
        .collect();
    let best = local
        .iter()
        .copied()
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .ok_or_else(|| Error::BadArgument("likelihood is not finite on the scan".into()))?;
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(k - 1)];
    let (estimate, log_lik, golden_ok) = golden_max(|x| lik.log_lik(x), a, b, opts.tol_se * se);
    let interior = best > 0 && best + 1 < k;
    let local_maxima = local.iter().map(|&i| if i == best { estimate } else { grid[i] }).collect();
    Ok(ConditionalMle { estimate, log_lik, bracket, converged: golden_ok && interior, local_maxima, sigma2 })
}

/// Conditional maximum likelihood estimate of `beta_j` given screening.
pub fn conditional_mle(
    j: usize,
    design: &CenteredDesign,
    alpha0: f64,
    variance: VarianceSpec,
    cfg: &McConfig,
) -> Result<ConditionalMle> {
    cfg.validate()?;
    let geom = contrast_geometry(design, j)?;
    let decomp = crate::model::decompose(design, &IndexSet::single(j, design.p)?)?;
    let sigma2 = resolve_sigma2(&decomp, alpha0, variance, cfg)?;
    let c = screening_c(design.p, design.df_res, alpha0)?;
    let draws = CrnDraws::generate(cfg.rng.substream(Substream::CommonDraws), cfg.draws, geom.df_res())?;
    conditional_mle_with(&geom, c, sigma2, &draws.z, &MleOptions::default())
}
