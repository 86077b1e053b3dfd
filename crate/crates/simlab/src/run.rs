use fscreen::baselines::{bonferroni, closed_testing_p, sample_split_procedure, scheffe_p, SplitResult};
use fscreen::dist::{standard_normal, RngStream, Substream};
use fscreen::fisher::{info_comparison, orthonormal_design, selective_info_draws, FisherSetting};
use fscreen::interval::{
    conditional_mle_with, contrast_geometry, selective_ci_with, standard_ci, ConditionalMle, CrnDraws, IntervalOptions,
    IntervalWarning, MleOptions, SelectiveInterval,
};
use fscreen::screen::screening_c;
use fscreen::selective::{screened_residual_mean, selective_p_with_sigma2};
use fscreen::{
    center, decompose, fit_summary, overall_test, selective_p_known_var, sigma_hat, standard_pvalue, CenteredDesign,
    Dataset, IndexSet, McConfig, PValueEstimate, QuadraticDecomposition, RegressionOutputs, VarianceSpec,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{Experiment, McSettings, SimConfig, Target};
use crate::error::{Result, SimError};
use crate::table::ResultTable;

/// Draws used once per design point for the screened residual mean behind the
/// debiased variance.
pub const VARIANCE_DRAWS: u64 = 1_000_000;
/// Low-acceptance estimates are retried once with this many times the draws.
pub const RETRY_FACTOR: u64 = 10;
/// "Generate until k screened" stops after this many attempts per screened dataset.
pub const ATTEMPTS_PER_TARGET: usize = 1000;
const CHUNK: usize = 256;

pub fn run_experiment(cfg: &SimConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let mut table = match cfg.experiment {
        Experiment::T1Null => t1_null(cfg)?,
        Experiment::Power => power(cfg)?,
        Experiment::CiCoverage | Experiment::CiWidthBeta | Experiment::CiWidthN => intervals(cfg)?,
        Experiment::FisherSweep => fisher_sweep(cfg)?,
        Experiment::MultTest => mult_test(cfg)?,
        Experiment::MleScatter => mle_scatter(cfg)?,
    };
    let mut meta = vec![
        ("experiment".to_string(), cfg.experiment.to_string()),
        ("seed".to_string(), cfg.rng.seed.to_string()),
        ("stream_id".to_string(), cfg.rng.stream_id.to_string()),
        ("library_version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("config".to_string(), cfg.to_json()),
    ];
    meta.append(&mut table.metadata);
    table.metadata = meta;
    Ok(table)
}

/// Fresh Gaussian design and response for one replicate.
struct Design {
    n: usize,
    p: usize,
    beta: DVector<f64>,
    sigma: f64,
}

impl Design {
    fn new(n: usize, beta: &[f64], sigma2: f64) -> Self {
        Self { n, p: beta.len(), beta: DVector::from_column_slice(beta), sigma: sigma2.sqrt() }
    }

    fn dataset(&self, stream: RngStream) -> fscreen::Result<Dataset> {
        let mut r = stream.substream(Substream::Data).rng();
        let x = DMatrix::from_fn(self.n, self.p, |_, _| standard_normal(&mut r));
        let noise = DVector::from_fn(self.n, |_, _| self.sigma * standard_normal(&mut r));
        let y = &x * &self.beta + noise;
        Dataset::new(x, y)
    }

    /// Centered design and the decomposition for `M = {1}`.
    fn fit(
        &self,
        stream: RngStream,
    ) -> fscreen::Result<(Dataset, CenteredDesign, QuadraticDecomposition, RegressionOutputs)> {
        let d = self.dataset(stream)?;
        let c = center(&d)?;
        let m = IndexSet::single(0, self.p)?;
        let q = decompose(&c, &m)?;
        let out = fit_summary(&c, &m)?;
        Ok((d, c, q, out))
    }
}

/// Screening outcome of one replicate.
struct Screen {
    index: u64,
    stream: RngStream,
    outputs: Option<RegressionOutputs>,
    screened: bool,
    split: Option<SplitResult>,
    flags: Vec<String>,
}

impl Screen {
    fn split_screened(&self) -> bool {
        self.split.as_ref().is_some_and(|s| s.train_rejected)
    }
}

fn screen_one(design: &Design, stream: RngStream, index: u64, alpha0: f64, split: bool) -> Screen {
    let mut s = Screen { index, stream, outputs: None, screened: false, split: None, flags: Vec::new() };
    match design.fit(stream) {
        Ok((d, _, _, out)) => {
            match overall_test(&out, alpha0) {
                Ok(dec) => s.screened = dec.rejected,
                Err(e) => s.flags.push(e.kind().into()),
            }
            s.outputs = Some(out);
            if split {
                let m = IndexSet::single(0, design.p).expect("p >= 1");
                match sample_split_procedure(&d, &m, alpha0, stream) {
                    Ok(r) => s.split = Some(r),
                    Err(e) => s.flags.push(format!("split_{}", e.kind())),
                }
            }
        }
        Err(e) => s.flags.push(e.kind().into()),
    }
    s
}

/// Screens replicates `point.derive(0), point.derive(1), ...` until the
/// target is met. With `split`, the training-half screen must meet it too.
fn collect(design: &Design, point: RngStream, alpha0: f64, target: Target, split: bool) -> Result<Vec<Screen>> {
    let run = |i: u64| screen_one(design, point.derive(i), i, alpha0, split);
    let k = match target {
        Target::Total(r) => return Ok((0..r as u64).into_par_iter().map(run).collect()),
        Target::Screened(k) => k,
    };
    let cap = ATTEMPTS_PER_TARGET * k;
    let mut out = Vec::new();
    let (mut full, mut half) = (0usize, 0usize);
    while out.len() < cap {
        let start = out.len() as u64;
        let len = CHUNK.min(cap - out.len()) as u64;
        let chunk: Vec<Screen> = (start..start + len).into_par_iter().map(run).collect();
        for s in chunk {
            full += s.screened as usize;
            half += s.split_screened() as usize;
            out.push(s);
            if full >= k && (!split || half >= k) {
                return Ok(out);
            }
        }
    }
    Err(SimError::AttemptCap { attempts: cap, screened: full, target: k, alpha0 })
}

/// Runs `f`, retrying once with more draws on low acceptance. A second
/// low-acceptance failure keeps the partial estimate when `partial` gives one.
fn retry<T>(
    mc: &McConfig,
    flags: &mut Vec<String>,
    f: impl Fn(&McConfig) -> fscreen::Result<T>,
    partial: impl Fn(&fscreen::Error) -> Option<T>,
) -> Option<T> {
    match f(mc) {
        Ok(v) => return Some(v),
        Err(fscreen::Error::LowAcceptance { .. }) => {}
        Err(e) => {
            flags.push(e.kind().into());
            return None;
        }
    }
    match f(&mc.with_draws(mc.draws * RETRY_FACTOR)) {
        Ok(v) => Some(v),
        Err(e) => {
            flags.push(e.kind().into());
            partial(&e)
        }
    }
}

fn partial_estimate(e: &fscreen::Error) -> Option<PValueEstimate> {
    match e {
        fscreen::Error::LowAcceptance { partial, .. } => *partial,
        _ => None,
    }
}

fn pvalue(
    mc: &McConfig,
    flags: &mut Vec<String>,
    f: impl Fn(&McConfig) -> fscreen::Result<PValueEstimate>,
) -> Option<PValueEstimate> {
    retry(mc, flags, f, partial_estimate)
}

fn flag(flags: Vec<String>) -> Option<String> {
    if flags.is_empty() {
        None
    } else {
        Some(flags.join(";"))
    }
}

fn b(v: bool) -> Option<f64> {
    Some(if v { 1.0 } else { 0.0 })
}

/// Resolves the debiased-variance denominator once for a design point.
fn debiased_mean(point: RngStream, p: usize, df: usize, alpha0: f64) -> Result<f64> {
    let cfg = McConfig::new(point.substream(Substream::Variance)).with_draws(VARIANCE_DRAWS).with_min_accept(1);
    Ok(screened_residual_mean(p, df, alpha0, &cfg)?.mean)
}

fn accounting(table: &mut ResultTable, label: &str, reps: &[Screen]) {
    let screened = reps.iter().filter(|s| s.screened).count();
    let flagged = reps.iter().filter(|s| !s.flags.is_empty()).count();
    table.meta(label, format!("datasets={} screened={} flagged={}", reps.len(), screened, flagged));
}

fn beta_with_first(cfg: &SimConfig, beta1: f64) -> Vec<f64> {
    let mut beta = cfg.beta.clone().expect("validated");
    beta[0] = beta1;
    beta
}

struct Common {
    p: usize,
    sigma2: f64,
    alpha0s: Vec<f64>,
    mc: McSettings,
    target: Target,
}

impl Common {
    fn new(cfg: &SimConfig) -> Result<Self> {
        Ok(Self {
            p: cfg.p.expect("validated"),
            sigma2: cfg.sigma2.expect("validated"),
            alpha0s: cfg.alpha0_list.clone().expect("validated"),
            mc: cfg.mc.expect("validated"),
            target: cfg.target()?,
        })
    }
}

struct Selective {
    known: Option<PValueEstimate>,
    plugin: Option<PValueEstimate>,
    debiased: Option<PValueEstimate>,
    sigma2_plugin: f64,
    sigma2_debiased: f64,
}

/// Known, plug-in and debiased selective p-values for `M = {1}`, all on the
/// replicate's p-value substream.
fn selective_trio(
    q: &QuadraticDecomposition,
    alpha0: f64,
    sigma2: f64,
    z_mean: f64,
    mc: &McConfig,
    flags: &mut Vec<String>,
    plugin: bool,
) -> fscreen::Result<Selective> {
    let known = pvalue(mc, flags, |mc| selective_p_known_var(q, alpha0, sigma2, mc));
    let sigma2_plugin = sigma_hat(q)?;
    let sigma2_debiased = q.ss_res / z_mean;
    let plugin = if plugin {
        pvalue(mc, flags, |mc| {
            selective_p_with_sigma2(q, alpha0, VarianceSpec::PlugIn, sigma2_plugin, mc).map(|s| s.estimate)
        })
    } else {
        None
    };
    let debiased = pvalue(mc, flags, |mc| {
        selective_p_with_sigma2(q, alpha0, VarianceSpec::Debiased, sigma2_debiased, mc).map(|s| s.estimate)
    });
    Ok(Selective { known, plugin, debiased, sigma2_plugin, sigma2_debiased })
}

fn t1_null(cfg: &SimConfig) -> Result<ResultTable> {
    let c = Common::new(cfg)?;
    let n = cfg.n.expect("validated");
    let design = Design::new(n, cfg.beta.as_deref().expect("validated"), c.sigma2);
    let mut table = ResultTable::new(&[
        "alpha0",
        "replicate",
        "screened",
        "f_overall",
        "p_overall",
        "p_standard",
        "p_known",
        "mc_se_known",
        "accepted_known",
        "p_plugin",
        "p_debiased",
        "sigma2_plugin",
        "sigma2_debiased",
    ]);
    for (a, &alpha0) in c.alpha0s.iter().enumerate() {
        let point = cfg.rng.derive(a as u64);
        let reps = collect(&design, point, alpha0, c.target, false)?;
        let z_mean = debiased_mean(point, c.p, n - c.p - 1, alpha0)?;
        let rows: Vec<_> = reps
            .par_iter()
            .map(|s| {
                let mut flags = s.flags.clone();
                let mut row = vec![Some(alpha0), Some(s.index as f64), b(s.screened)];
                let Some(out) = &s.outputs else {
                    row.resize(13, None);
                    return (row, flag(flags));
                };
                row.extend([
                    Some(out.f_overall),
                    Some(fscreen::dist::f_sf(out.f_overall, c.p, out.df_res)),
                    Some(standard_pvalue(out)),
                ]);
                let sel = if s.screened {
                    let mc = c.mc.with_stream(s.stream);
                    design
                        .fit(s.stream)
                        .and_then(|(_, _, q, _)| selective_trio(&q, alpha0, c.sigma2, z_mean, &mc, &mut flags, true))
                        .map_err(|e| flags.push(e.kind().into()))
                        .ok()
                } else {
                    None
                };
                match sel {
                    Some(sel) => row.extend([
                        sel.known.map(|e| e.p),
                        sel.known.map(|e| e.mc_se),
                        sel.known.map(|e| e.accepted as f64),
                        sel.plugin.map(|e| e.p),
                        sel.debiased.map(|e| e.p),
                        Some(sel.sigma2_plugin),
                        Some(sel.sigma2_debiased),
                    ]),
                    None => row.resize(13, None),
                }
                (row, flag(flags))
            })
            .collect();
        for (row, f) in rows {
            table.push(row, f);
        }
        accounting(&mut table, &format!("alpha0={alpha0}"), &reps);
        table.meta(&format!("screened_residual_mean[alpha0={alpha0}]"), z_mean);
    }
    Ok(table)
}

fn mult_test(cfg: &SimConfig) -> Result<ResultTable> {
    let c = Common::new(cfg)?;
    let n = cfg.n.expect("validated");
    let design = Design::new(n, cfg.beta.as_deref().expect("validated"), c.sigma2);
    let mut table = ResultTable::new(&[
        "alpha0",
        "replicate",
        "screened",
        "p_overall",
        "p_standard",
        "p_bonferroni2",
        "p_bonferroni3",
        "p_scheffe",
        "p_closed",
        "p_known",
        "mc_se_known",
    ]);
    for (a, &alpha0) in c.alpha0s.iter().enumerate() {
        let point = cfg.rng.derive(a as u64);
        let reps = collect(&design, point, alpha0, c.target, false)?;
        let rows: Vec<_> = reps
            .par_iter()
            .map(|s| {
                let mut flags = s.flags.clone();
                let mut row = vec![Some(alpha0), Some(s.index as f64), b(s.screened)];
                let Some(out) = &s.outputs else {
                    row.resize(11, None);
                    return (row, flag(flags));
                };
                let p_std = standard_pvalue(out);
                let p_all = fscreen::dist::f_sf(out.f_overall, c.p, out.df_res);
                row.extend([
                    Some(p_all),
                    Some(p_std),
                    Some(bonferroni(p_std, 2)),
                    Some(bonferroni(p_std, 3)),
                    Some(scheffe_p(out.f_m, c.p, out.df_res)),
                    Some(closed_testing_p(p_all, p_std)),
                ]);
                // The selective p-value is defined for every dataset, screened or not.
                let mc = c.mc.with_stream(s.stream);
                let known =
                    design.fit(s.stream).map_err(|e| flags.push(e.kind().into())).ok().and_then(|(_, _, q, _)| {
                        pvalue(&mc, &mut flags, |mc| selective_p_known_var(&q, alpha0, c.sigma2, mc))
                    });
                row.extend([known.map(|e| e.p), known.map(|e| e.mc_se)]);
                (row, flag(flags))
            })
            .collect();
        for (row, f) in rows {
            table.push(row, f);
        }
        accounting(&mut table, &format!("alpha0={alpha0}"), &reps);
    }
    table.meta("scheffe", "1 - F_cdf(F_1 / p; p, n - p - 1), the standard simultaneous-contrast form (assumed)");
    Ok(table)
}

fn rate(hits: usize, total: usize) -> (Option<f64>, Option<f64>) {
    if total == 0 {
        return (None, None);
    }
    let r = hits as f64 / total as f64;
    (Some(r), Some((r * (1.0 - r) / total as f64).sqrt()))
}

/// Known-variance and debiased estimates for one screened dataset, plus whether it was flagged.
type PowerDraw = (Option<PValueEstimate>, Option<PValueEstimate>, bool);

fn power(cfg: &SimConfig) -> Result<ResultTable> {
    let c = Common::new(cfg)?;
    let n = cfg.n.expect("validated");
    let alpha = cfg.alpha.expect("validated");
    let grid = cfg.beta1_grid.clone().expect("validated");
    let mut table = ResultTable::new(&[
        "beta1",
        "alpha0",
        "datasets",
        "screened",
        "screen_rate",
        "rate_standard",
        "rate_known",
        "se_known",
        "rate_debiased",
        "se_debiased",
        "split_screened",
        "split_screen_rate",
        "rate_split",
        "se_split",
        "flagged",
    ]);
    let na = c.alpha0s.len();
    for (i, &beta1) in grid.iter().enumerate() {
        let design = Design::new(n, &beta_with_first(cfg, beta1), c.sigma2);
        for (a, &alpha0) in c.alpha0s.iter().enumerate() {
            let point = cfg.rng.derive((i * na + a) as u64);
            let reps = collect(&design, point, alpha0, c.target, true)?;
            let z_mean = debiased_mean(point, c.p, n - c.p - 1, alpha0)?;
            let screened: Vec<&Screen> = reps.iter().filter(|s| s.screened).collect();
            let results: Vec<PowerDraw> = screened
                .par_iter()
                .map(|s| {
                    let mut flags = Vec::new();
                    let mc = c.mc.with_stream(s.stream);
                    let sel = design
                        .fit(s.stream)
                        .and_then(|(_, _, q, _)| selective_trio(&q, alpha0, c.sigma2, z_mean, &mc, &mut flags, false));
                    match sel {
                        Ok(sel) => (sel.known, sel.debiased, !flags.is_empty()),
                        Err(_) => (None, None, true),
                    }
                })
                .collect();
            let count = |f: &dyn Fn(&PowerDraw) -> Option<f64>| {
                let v: Vec<f64> = results.iter().filter_map(f).collect();
                rate(v.iter().filter(|&&p| p <= alpha).count(), v.len())
            };
            let (rk, sk) = count(&|r| r.0.map(|e| e.p));
            let (rd, sd) = count(&|r| r.1.map(|e| e.p));
            let std_hits =
                screened.iter().filter(|s| s.outputs.as_ref().is_some_and(|o| standard_pvalue(o) <= alpha)).count();
            let (rs, _) = rate(std_hits, screened.len());
            let split: Vec<f64> = reps.iter().filter_map(|s| s.split.as_ref().and_then(|r| r.p_test)).collect();
            let (rsp, ssp) = rate(split.iter().filter(|&&p| p <= alpha).count(), split.len());
            let flagged = reps.iter().filter(|s| !s.flags.is_empty()).count() + results.iter().filter(|r| r.2).count();
            let total = reps.len() as f64;
            table.push(
                vec![
                    Some(beta1),
                    Some(alpha0),
                    Some(total),
                    Some(screened.len() as f64),
                    Some(screened.len() as f64 / total),
                    rs,
                    rk,
                    sk,
                    rd,
                    sd,
                    Some(split.len() as f64),
                    Some(split.len() as f64 / total),
                    rsp,
                    ssp,
                    Some(flagged as f64),
                ],
                None,
            );
        }
    }
    table.meta("alpha", alpha);
    table.meta("split", "random halves, training half gets the extra row when n is odd");
    Ok(table)
}

struct IntervalPoint {
    n: usize,
    beta: Vec<f64>,
    alpha0: f64,
}

fn intervals(cfg: &SimConfig) -> Result<ResultTable> {
    let c = Common::new(cfg)?;
    let alpha = cfg.alpha.expect("validated");
    let mut points = Vec::new();
    for &alpha0 in &c.alpha0s {
        match cfg.experiment {
            Experiment::CiCoverage => points.push(IntervalPoint {
                n: cfg.n.expect("validated"),
                beta: cfg.beta.clone().expect("validated"),
                alpha0,
            }),
            Experiment::CiWidthBeta => {
                for &beta1 in cfg.beta1_grid.as_deref().expect("validated") {
                    points.push(IntervalPoint {
                        n: cfg.n.expect("validated"),
                        beta: beta_with_first(cfg, beta1),
                        alpha0,
                    });
                }
            }
            _ => {
                for &n in cfg.n_grid.as_deref().expect("validated") {
                    points.push(IntervalPoint { n, beta: cfg.beta.clone().expect("validated"), alpha0 });
                }
            }
        }
    }
    let mut table = ResultTable::new(&[
        "n",
        "beta1",
        "alpha0",
        "replicate",
        "estimate_ols",
        "known_lower",
        "known_upper",
        "known_width",
        "known_covers",
        "debiased_lower",
        "debiased_upper",
        "debiased_width",
        "debiased_covers",
        "sigma2_debiased",
        "standard_lower",
        "standard_upper",
        "standard_width",
        "standard_covers",
    ]);
    for (k, pt) in points.iter().enumerate() {
        let point = cfg.rng.derive(k as u64);
        let design = Design::new(pt.n, &pt.beta, c.sigma2);
        let reps = collect(&design, point, pt.alpha0, c.target, false)?;
        let df = pt.n - c.p - 1;
        let z_mean = debiased_mean(point, c.p, df, pt.alpha0)?;
        let cc = screening_c(c.p, df, pt.alpha0)?;
        let truth = pt.beta[0];
        let screened: Vec<&Screen> = reps.iter().filter(|s| s.screened).collect();
        let rows: Vec<_> = screened
            .par_iter()
            .map(|s| {
                let mut flags = Vec::new();
                let mut row = vec![Some(pt.n as f64), Some(truth), Some(pt.alpha0), Some(s.index as f64)];
                let fitted = design.fit(s.stream).and_then(|(_, design, q, _)| Ok((contrast_geometry(&design, 0)?, q)));
                let (geom, q) = match fitted {
                    Ok(v) => v,
                    Err(e) => {
                        flags.push(e.kind().into());
                        row.resize(18, None);
                        return (row, flag(flags));
                    }
                };
                row.push(Some(geom.beta_hat()));
                let mc = c.mc.with_stream(s.stream);
                let sigma2_deb = q.ss_res / z_mean;
                for sigma2 in [c.sigma2, sigma2_deb] {
                    let ci = interval(&geom, cc, sigma2, alpha, &mc, &mut flags);
                    row.extend(interval_cells(ci.as_ref(), truth, &mut flags));
                }
                row.push(Some(sigma2_deb));
                match standard_ci(&geom, alpha) {
                    Ok((lo, hi)) => row.extend([Some(lo), Some(hi), Some(hi - lo), b(lo <= truth && truth <= hi)]),
                    Err(e) => {
                        flags.push(e.kind().into());
                        row.resize(18, None);
                    }
                }
                flags.dedup();
                (row, flag(flags))
            })
            .collect();
        for (row, f) in rows {
            table.push(row, f);
        }
        accounting(&mut table, &format!("n={} beta1={} alpha0={}", pt.n, truth, pt.alpha0), &reps);
    }
    table.meta("alpha", alpha);
    Ok(table)
}

fn interval(
    geom: &fscreen::interval::ContrastGeometry,
    c: f64,
    sigma2: f64,
    alpha: f64,
    mc: &McConfig,
    flags: &mut Vec<String>,
) -> Option<SelectiveInterval> {
    retry(
        mc,
        flags,
        |mc| {
            let draws = CrnDraws::generate(mc.rng.substream(Substream::CommonDraws), mc.draws, geom.df_res())?;
            selective_ci_with(geom, c, sigma2, alpha, &draws, mc.min_accept, &IntervalOptions::default())
        },
        |_| None,
    )
}

fn interval_cells(ci: Option<&SelectiveInterval>, truth: f64, flags: &mut Vec<String>) -> [Option<f64>; 4] {
    let Some(ci) = ci else {
        return [None; 4];
    };
    for w in &ci.warnings {
        flags.push(
            match w {
                IntervalWarning::NonContiguous => "non_contiguous",
                IntervalWarning::UnboundedBelow | IntervalWarning::UnboundedAbove => "unbounded",
            }
            .into(),
        );
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    [finite(ci.lower), finite(ci.upper), finite(ci.width()), b(ci.contains(truth))]
}

fn mle_scatter(cfg: &SimConfig) -> Result<ResultTable> {
    let c = Common::new(cfg)?;
    let n = cfg.n.expect("validated");
    let design = Design::new(n, cfg.beta.as_deref().expect("validated"), c.sigma2);
    let mut table = ResultTable::new(&[
        "alpha0",
        "replicate",
        "standard_mle",
        "conditional_mle_known",
        "converged_known",
        "local_maxima_known",
        "conditional_mle_debiased",
        "converged_debiased",
        "local_maxima_debiased",
        "sigma2_debiased",
    ]);
    let df = n - c.p - 1;
    for (a, &alpha0) in c.alpha0s.iter().enumerate() {
        let point = cfg.rng.derive(a as u64);
        let reps = collect(&design, point, alpha0, c.target, false)?;
        let z_mean = debiased_mean(point, c.p, df, alpha0)?;
        let cc = screening_c(c.p, df, alpha0)?;
        let screened: Vec<&Screen> = reps.iter().filter(|s| s.screened).collect();
        let rows: Vec<_> = screened
            .par_iter()
            .map(|s| {
                let mut flags = Vec::new();
                let mut row = vec![Some(alpha0), Some(s.index as f64)];
                let fitted = design.fit(s.stream).and_then(|(_, design, q, _)| {
                    let geom = contrast_geometry(&design, 0)?;
                    let draws = CrnDraws::generate(s.stream.substream(Substream::CommonDraws), c.mc.draws, df)?;
                    Ok((geom, q, draws))
                });
                let (geom, q, draws) = match fitted {
                    Ok(v) => v,
                    Err(e) => {
                        flags.push(e.kind().into());
                        row.resize(10, None);
                        return (row, flag(flags));
                    }
                };
                row.push(Some(geom.beta_hat()));
                let sigma2_deb = q.ss_res / z_mean;
                for sigma2 in [c.sigma2, sigma2_deb] {
                    let mle: Option<ConditionalMle> =
                        conditional_mle_with(&geom, cc, sigma2, &draws.z, &MleOptions::default())
                            .map_err(|e| flags.push(e.kind().into()))
                            .ok();
                    if mle.as_ref().is_some_and(|m| !m.converged) {
                        flags.push("not_converged".into());
                    }
                    row.extend([
                        mle.as_ref().map(|m| m.estimate),
                        mle.as_ref().map(|m| if m.converged { 1.0 } else { 0.0 }),
                        mle.as_ref().map(|m| m.local_maxima.len() as f64),
                    ]);
                }
                row.push(Some(sigma2_deb));
                flags.dedup();
                (row, flag(flags))
            })
            .collect();
        for (row, f) in rows {
            table.push(row, f);
        }
        accounting(&mut table, &format!("alpha0={alpha0}"), &reps);
    }
    Ok(table)
}

fn fisher_sweep(cfg: &SimConfig) -> Result<ResultTable> {
    let n = cfg.n.expect("validated");
    let p = cfg.p.expect("validated");
    let sigma2 = cfg.sigma2.expect("validated");
    let draws = cfg.replicates.expect("validated");
    let alpha0s = cfg.alpha0_list.as_deref().expect("validated");
    let beta1s = cfg.beta1_grid.as_deref().expect("validated");
    let ss = cfg.s_grid.as_deref().expect("validated");
    let rhos = cfg.rho_list.as_deref().expect("validated");
    let x = orthonormal_design(n, p, cfg.rng.substream(Substream::Data));
    let mut table = ResultTable::new(&[
        "alpha0",
        "beta1",
        "s",
        "rho",
        "cond_info",
        "cond_info_se",
        "reject_prob",
        "product",
        "product_se",
        "screened",
        "draws",
        "uncond_info",
        "min_cond_info",
        "violations",
    ]);
    let mut k = 0u64;
    for &alpha0 in alpha0s {
        for &beta1 in beta1s {
            for &s in ss {
                let point = cfg.rng.derive(k);
                k += 1;
                let mut beta = DVector::from_element(p, s);
                beta[0] = beta1;
                let setting = FisherSetting::new(x.clone(), beta, sigma2, alpha0)?;
                let label = [Some(alpha0), Some(beta1), Some(s)];
                let reports = match info_comparison(&setting, rhos, draws, point) {
                    Ok(r) => r,
                    Err(e) => {
                        let mut row = label.to_vec();
                        row.push(Some(1.0));
                        row.resize(14, None);
                        table.push(row, Some(e.kind().into()));
                        continue;
                    }
                };
                let per = selective_info_draws(&setting, draws, point)?;
                let min_info = per.info.iter().copied().fold(f64::INFINITY, f64::min);
                let tol = 1e-12 * per.unconditional;
                let violations = per.info.iter().filter(|&&v| v < per.unconditional - tol).count();
                let r0 = &reports[0];
                let mut row = label.to_vec();
                row.extend([
                    Some(1.0),
                    Some(r0.cond_expected_info),
                    Some(r0.cond_info_se),
                    Some(r0.reject_prob),
                    Some(r0.product),
                    Some(r0.cond_info_se * r0.reject_prob),
                    Some(r0.screened as f64),
                    Some(r0.draws as f64),
                    Some(per.unconditional),
                    Some(min_info),
                    Some(violations as f64),
                ]);
                table.push(row, None);
                for r in &reports {
                    let mut row = label.to_vec();
                    row.extend([
                        Some(r.rho),
                        Some(r.split_info),
                        Some(0.0),
                        Some(r.split_reject_prob),
                        Some(r.split_product),
                        Some(0.0),
                        None,
                        None,
                        None,
                        None,
                        None,
                    ]);
                    table.push(row, None);
                }
            }
        }
    }
    table.meta("design", format!("orthonormal {n}x{p}, no intercept, chi-square screen"));
    table.meta("rho_1", "rows with rho = 1 are the conditional (selective) arm");
    Ok(table)
}
