use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use fscreen::dist::{f_sf, RngStream};
use fscreen::interval::{conditional_mle, selective_ci, IntervalWarning};
use fscreen::retro::{anova_from_groups, pair_inputs, retro_selective_p, sidak, AnovaSummary, SummaryInputs};
use fscreen::screen::check_level;
use fscreen::{
    center, decompose, fit_summary, overall_test, selective_p, standard_pvalue, CenteredDesign, IndexSet, McConfig,
    ScreeningDecision, VarianceSpec,
};
use fscreen_simlab::{qq_table, run_experiment, Experiment, ResultTable, SimConfig};
use serde_json::Value;

use crate::report::{render, CliReport, Format, Inference, Provenance, Screening};
use crate::{AnovaArgs, CliError, FisherArgs, McArgs, Outcome, RetroArgs, ScreenArgs, SimulateArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn parse_variance(s: &str) -> std::result::Result<VarianceSpec, String> {
    let lower = s.to_ascii_lowercase();
    match lower.as_str() {
        "plugin" | "plug-in" => Ok(VarianceSpec::PlugIn),
        "debiased" => Ok(VarianceSpec::Debiased),
        other => other
            .strip_prefix("known:")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| *v > 0.0 && v.is_finite())
            .map(VarianceSpec::Known)
            .ok_or_else(|| format!("expected known:<sigma2>, plugin or debiased, got {s:?}")),
    }
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin()));
    }
    let f = File::open(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    Ok(Box::new(f))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_table(table: &ResultTable, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => table.write_csv(create(path)?)?,
        None => table.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn mc_setup(a: &McArgs) -> Result<(McConfig, Provenance)> {
    check_level(a.alpha0)?;
    let seed = a.seed.unwrap_or_else(rand::random);
    let cfg = McConfig::new(RngStream::new(seed, 0)).with_draws(a.draws).with_min_accept(a.min_accept);
    cfg.validate()?;
    let known_sigma2 = match a.variance {
        VarianceSpec::Known(s) => Some(s),
        _ => None,
    };
    let provenance = Provenance {
        seed,
        draws: a.draws,
        min_accept: a.min_accept,
        variance_mode: a.variance.name().to_string(),
        known_sigma2,
        version: env!("CARGO_PKG_VERSION"),
    };
    Ok((cfg, provenance))
}

fn screening_block(d: &ScreeningDecision, df1: usize, df2: usize) -> Screening {
    Screening { f: d.f_overall, p: d.p_overall, rejected: d.rejected, alpha0: d.alpha0, df1, df2 }
}

fn emit(report: CliReport, format: Format) -> Result<Outcome> {
    let mut out = io::stdout().lock();
    out.write_all(render(&report, format).as_bytes())
        .map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
    if report.inference.is_none() {
        return Ok(Outcome::NotRejected { f: report.screening.f, p: report.screening.p });
    }
    Ok(Outcome::Done)
}

fn label(cols: &[usize]) -> String {
    cols.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn infer(design: &CenteredDesign, cols: &[usize], a: &ScreenArgs, cfg: &McConfig) -> Result<Inference> {
    let (alpha0, variance) = (a.mc.alpha0, a.mc.variance);
    let set = IndexSet::from_one_based(cols, design.p)?;
    let decomp = decompose(design, &set)?;
    let out = fit_summary(design, &set)?;
    let sel = selective_p(&decomp, alpha0, variance, cfg)?;
    let mut row = Inference {
        target: label(cols),
        standard_p: standard_pvalue(&out),
        selective_p: Some(sel.estimate.p),
        mc_se: Some(sel.estimate.mc_se),
        accepted: Some(sel.estimate.accepted),
        sigma2: Some(sel.sigma2),
        ..Inference::default()
    };
    if !sel.screened {
        row.flags.push("not_screened".into());
    }
    if let [j] = cols {
        let j = j - 1;
        row.estimate_ols = Some(out.beta_hat[j]);
        match selective_ci(j, design, a.alpha, alpha0, variance, cfg) {
            Ok(ci) => {
                row.ci_lower = Some(ci.lower).filter(|v| v.is_finite());
                row.ci_upper = Some(ci.upper).filter(|v| v.is_finite());
                for w in &ci.warnings {
                    row.flags.push(
                        match w {
                            IntervalWarning::NonContiguous => "ci_non_contiguous",
                            IntervalWarning::UnboundedBelow => "ci_unbounded_below",
                            IntervalWarning::UnboundedAbove => "ci_unbounded_above",
                        }
                        .into(),
                    );
                }
            }
            Err(e) => row.flags.push(format!("ci_failed:{}", e.kind())),
        }
        match conditional_mle(j, design, alpha0, variance, cfg) {
            Ok(mle) => {
                row.estimate_selective = Some(mle.estimate);
                if !mle.converged {
                    row.flags.push("mle_not_converged".into());
                }
                if mle.local_maxima.len() > 1 {
                    row.flags.push("mle_multimodal".into());
                }
            }
            Err(e) => row.flags.push(format!("mle_failed:{}", e.kind())),
        }
    }
    Ok(row)
}

pub fn screen(a: ScreenArgs) -> Result<Outcome> {
    let (cfg, provenance) = mc_setup(&a.mc)?;
    check_level(a.alpha)?;
    let data = fscreen::io::read_dataset(open(&a.csv)?, !a.no_header)?;
    let design = center(&data)?;
    let p = design.p;
    let decision = overall_test(&fit_summary(&design, &IndexSet::all(p))?, a.mc.alpha0)?;

    let mut targets: Vec<Vec<usize>> = a.coefs.iter().map(|&j| vec![j]).collect();
    if !a.m_cols.is_empty() {
        targets.push(a.m_cols.clone());
    }
    if targets.is_empty() {
        targets = (1..=p).map(|j| vec![j]).collect();
    }
    for t in &targets {
        IndexSet::from_one_based(t, p)?;
    }

    let inference = if decision.rejected || a.mc.force {
        Some(targets.iter().map(|t| infer(&design, t, &a, &cfg)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let report =
        CliReport { command: "screen", screening: screening_block(&decision, p, design.df_res), inference, provenance };
    emit(report, a.mc.format)
}

pub fn retro(a: RetroArgs) -> Result<Outcome> {
    let (cfg, provenance) = mc_setup(&a.mc)?;
    let inputs = SummaryInputs { f_m: a.f_m, r_squared: a.r2, rse: a.rse, n: a.n, p: a.p, m: a.m, alpha0: a.mc.alpha0 };
    inputs.geometry()?;
    let df = inputs.df_res();
    let decision = ScreeningDecision::from_statistic(inputs.f_overall(), a.p, df, a.mc.alpha0)?;
    let inference = if decision.rejected || a.mc.force {
        let sel = retro_selective_p(&inputs, a.mc.variance, &cfg)?;
        let mut row = Inference {
            target: format!("M (m = {})", a.m),
            standard_p: f_sf(a.f_m, a.m, df),
            selective_p: Some(sel.estimate.p),
            mc_se: Some(sel.estimate.mc_se),
            accepted: Some(sel.estimate.accepted),
            sigma2: Some(sel.sigma2),
            ..Inference::default()
        };
        if !sel.screened {
            row.flags.push("not_screened".into());
        }
        Some(vec![row])
    } else {
        None
    };
    emit(
        CliReport { command: "retro", screening: screening_block(&decision, a.p, df), inference, provenance },
        a.mc.format,
    )
}

pub fn anova_retro(a: AnovaArgs) -> Result<Outcome> {
    let (cfg, provenance) = mc_setup(&a.mc)?;
    let named = fscreen::io::read_groups(open(&a.csv)?)?;
    let summary = AnovaSummary::new(named.iter().map(|(_, g)| *g).collect())?;
    let table = anova_from_groups(&summary)?;
    let decision = ScreeningDecision::from_statistic(table.f_overall, table.df_between, table.df_within, a.mc.alpha0)?;
    let inference = if decision.rejected || a.mc.force {
        let tests = table.pairwise.len();
        let rows = table
            .pairwise
            .iter()
            .map(|pair| {
                let sel = retro_selective_p(&pair_inputs(&table, pair, a.mc.alpha0), a.mc.variance, &cfg)?;
                let standard_p = f_sf(pair.f, 1, table.df_within);
                let (g1, g2) = (&named[pair.k1], &named[pair.k2]);
                let mut row = Inference {
                    target: format!("{} vs {}", g1.0, g2.0),
                    standard_p,
                    sidak_p: Some(sidak(standard_p, tests)),
                    selective_p: Some(sel.estimate.p),
                    mc_se: Some(sel.estimate.mc_se),
                    accepted: Some(sel.estimate.accepted),
                    sigma2: Some(sel.sigma2),
                    estimate_ols: Some(g2.1.mean - g1.1.mean),
                    ..Inference::default()
                };
                if !sel.screened {
                    row.flags.push("not_screened".into());
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(rows)
    } else {
        None
    };
    let report = CliReport {
        command: "anova-retro",
        screening: screening_block(&decision, table.df_between, table.df_within),
        inference,
        provenance,
    };
    emit(report, a.mc.format)
}

/// Parses the config, reconciling its `experiment` field with the flag.
fn load_sim_config(text: &str, flag: Option<&str>) -> Result<SimConfig> {
    let mut v: Value = serde_json::from_str(text)?;
    let obj = v.as_object_mut().ok_or_else(|| CliError::Usage("simulation config must be a JSON object".into()))?;
    let from_file = match obj.get("experiment") {
        Some(Value::String(s)) => Some(s.parse::<Experiment>()?),
        Some(_) => return Err(CliError::Usage("'experiment' must be a string".into())),
        None => None,
    };
    let from_flag = flag.map(str::parse::<Experiment>).transpose()?;
    let experiment = match (from_file, from_flag) {
        (Some(f), Some(g)) if f != g => {
            return Err(CliError::Usage(format!("--experiment {g} disagrees with the config's experiment {f}")))
        }
        (Some(e), _) | (None, Some(e)) => e,
        (None, None) => return Err(CliError::Usage("no experiment given in the config or with --experiment".into())),
    };
    obj.insert("experiment".into(), serde_json::to_value(experiment)?);
    Ok(SimConfig::from_json(&v.to_string())?)
}

pub fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let text = std::fs::read_to_string(&a.config).map_err(|source| CliError::Io { path: a.config.clone(), source })?;
    let cfg = load_sim_config(&text, a.experiment.as_deref())?;
    let table = run_experiment(&cfg)?;
    if let (Some(col), Some(path)) = (&a.qq_column, &a.qq_out) {
        let values = if table.column_index("screened").is_ok() {
            table.values_where(col, "screened")?
        } else {
            table.column(col)?.into_iter().flatten().collect()
        };
        qq_table(&values, col).write_csv(create(path)?)?;
    }
    write_table(&table, a.out.as_deref())?;
    Ok(Outcome::Done)
}

const FISHER_COLUMNS: [&str; 6] = ["s", "beta1", "rho", "cond_info", "reject_prob", "product"];

pub fn fisher_info(a: FisherArgs) -> Result<Outcome> {
    let seed = a.seed.unwrap_or_else(rand::random);
    let cfg = SimConfig {
        n: Some(a.n),
        p: Some(a.p),
        sigma2: Some(a.sigma2),
        alpha0_list: Some(vec![a.alpha0]),
        replicates: Some(a.draws),
        beta1_grid: Some(a.beta1.clone()),
        s_grid: Some(a.s.clone()),
        rho_list: Some(a.rho.clone()),
        ..SimConfig::empty(Experiment::FisherSweep, RngStream::new(seed, 0))
    };
    cfg.validate()?;
    let full = run_experiment(&cfg)?;
    let idx = FISHER_COLUMNS.iter().map(|c| full.column_index(c)).collect::<fscreen_simlab::Result<Vec<_>>>()?;
    let mut table = ResultTable::new(&FISHER_COLUMNS);
    table.metadata = full.metadata.clone();
    for row in &full.rows {
        table.push(idx.iter().map(|&i| row.values[i]).collect(), row.flag.clone());
    }
    write_table(&table, a.out.as_deref())?;
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_flag() {
        assert_eq!(parse_variance("known:2.5").unwrap(), VarianceSpec::Known(2.5));
        assert_eq!(parse_variance("PlugIn").unwrap(), VarianceSpec::PlugIn);
        assert_eq!(parse_variance("debiased").unwrap(), VarianceSpec::Debiased);
        assert!(parse_variance("known:-1").is_err());
        assert!(parse_variance("known").is_err());
    }

    #[test]
    fn experiment_reconciliation() {
        let body = r#"{"n": 50, "p": 2, "beta": [0, 0], "sigma2": 1, "alpha0_list": [0.05],
            "replicates": 10, "mc": {"draws": 1000, "min_accept": 10}, "rng": {"seed": 1, "stream_id": 0}}"#;
        let cfg = load_sim_config(body, Some("t1-null")).unwrap();
        assert_eq!(cfg.experiment, Experiment::T1Null);
        assert!(load_sim_config(body, None).is_err());

        let tagged = body.replacen('{', r#"{"experiment": "MultTest", "#, 1);
        assert_eq!(load_sim_config(&tagged, None).unwrap().experiment, Experiment::MultTest);
        assert!(matches!(load_sim_config(&tagged, Some("T1Null")), Err(CliError::Usage(_))));
    }
}
