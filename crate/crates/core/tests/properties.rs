mod common;

use common::{dataset, gaussian_matrix, rng};
use fscreen::baselines::{bonferroni, closed_testing_p, sample_split_procedure, scheffe_p};
use fscreen::dist::{f_sf, RngStream};
use fscreen::interval::{contrast_geometry, pselb_crn, CrnDraws};
use fscreen::retro::{anova_from_groups, retro_selective_p, AnovaSummary, GroupSummary, SummaryInputs};
use fscreen::screen::screening_c;
use fscreen::{
    center, decompose, fit_summary, overall_test, selective_p, sigma_hat, standard_pvalue, Dataset, IndexSet, McConfig,
    VarianceSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn ks_uniform(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len() as f64;
    v.iter().enumerate().map(|(i, &x)| (x - i as f64 / k).max((i + 1) as f64 / k - x)).fold(0.0, f64::max)
}

#[test]
fn retro_path_reproduces_raw_path() {
    let mut r = rng(401);
    let modes = [VarianceSpec::PlugIn, VarianceSpec::Debiased, VarianceSpec::Known(1.3)];
    for case in 0..30 {
        let p = r.random_range(2..=8);
        let n = r.random_range(p + 12..=80);
        let mut beta = vec![0.0; p];
        beta[0] = 0.6;
        let d = dataset(gaussian_matrix(n, p, &mut r), &beta, &mut r);
        let design = center(&d).unwrap();
        let m = IndexSet::single(case % p, p).unwrap();
        let out = fit_summary(&design, &m).unwrap();
        let decomp = decompose(&design, &m).unwrap();
        let inputs = SummaryInputs { f_m: out.f_m, r_squared: out.r_squared, rse: out.rse, n, p, m: 1, alpha0: 0.1 };
        let cfg = McConfig::new(RngStream::new(900 + case as u64, 3)).with_draws(20_000).with_min_accept(1);
        let mode = modes[case % 3];
        let raw = selective_p(&decomp, 0.1, mode, &cfg).unwrap();
        let retro = retro_selective_p(&inputs, mode, &cfg).unwrap();
        assert_eq!(raw.estimate.accepted, retro.estimate.accepted, "case {case}");
        assert_eq!(raw.estimate.p, retro.estimate.p, "case {case}");
        assert_eq!(raw.screened, retro.screened, "case {case}");
        assert!((raw.sigma2 - retro.sigma2).abs() <= 1e-12 * raw.sigma2);
    }
}

/// Raw data for `sizes.len()` groups, with group means spread by `spread`.
fn grouped(sizes: &[usize], spread: f64, r: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    sizes
        .iter()
        .map(|&nk| {
            let mu = spread * r.random_range(-1.0..1.0);
            let sd = r.random_range(0.5..2.0);
            (0..nk).map(|_| mu + sd * common::normal(r)).collect()
        })
        .collect()
}

/// Treatment-coded design with group `reference` as baseline.
fn indicator_dataset(groups: &[Vec<f64>], reference: usize) -> Dataset {
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    let mut x = DMatrix::zeros(n, k - 1);
    let mut y = DVector::zeros(n);
    let mut row = 0;
    for (g, obs) in groups.iter().enumerate() {
        for &v in obs {
            if g != reference {
                let col = if g < reference { g } else { g - 1 };
                x[(row, col)] = 1.0;
            }
            y[row] = v;
            row += 1;
        }
    }
    Dataset::new(x, y).unwrap()
}

fn summarize(obs: &[f64]) -> GroupSummary {
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    GroupSummary::new(obs.len(), mean, var.sqrt()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn anova_summaries_match_indicator_regression() {
    let mut r = rng(402);
    for _ in 0..50 {
        let k = r.random_range(2..=6);
        let sizes: Vec<usize> = (0..k).map(|_| r.random_range(2..=15)).collect();
        let groups = grouped(&sizes, 2.0, &mut r);
        let summary = AnovaSummary::new(groups.iter().map(|g| summarize(g)).collect()).unwrap();
        let table = anova_from_groups(&summary).unwrap();
        for reference in 0..k {
            let design = center(&indicator_dataset(&groups, reference)).unwrap();
            for other in reference + 1..k {
                let m = IndexSet::single(other - 1, k - 1).unwrap();
                let out = fit_summary(&design, &m).unwrap();
                assert!(rel(table.r_squared, out.r_squared) < 1e-9);
                assert!(rel(table.rse, out.rse) < 1e-9);
                assert!(rel(table.f_overall, out.f_overall) < 1e-9);
                let pair = table.pairwise.iter().find(|pf| pf.k1 == reference && pf.k2 == other).unwrap();
                assert!(rel(pair.f, out.f_m) < 1e-9, "{} vs {}", pair.f, out.f_m);
            }
        }
    }
}

#[test]
fn single_covariate_screen_forces_rejection() {
    let mut r = rng(403);
    let mut screened = 0;
    for _ in 0..4_000 {
        let d = dataset(gaussian_matrix(30, 1, &mut r), &[0.0], &mut r);
        let out = fit_summary(&center(&d).unwrap(), &IndexSet::all(1)).unwrap();
        if overall_test(&out, 0.05).unwrap().rejected {
            screened += 1;
            assert!(standard_pvalue(&out) <= 0.05);
        }
    }
    assert!(screened > 100);
}

#[test]
fn split_test_pvalues_are_uniform_under_the_null() {
    let mut r = rng(404);
    let x = gaussian_matrix(40, 3, &mut r);
    let m = IndexSet::single(0, 3).unwrap();
    let mut present = Vec::new();
    let mut i = 0u64;
    while present.len() < 5_000 {
        let d = dataset(x.clone(), &[0.0; 3], &mut r);
        let s = sample_split_procedure(&d, &m, 0.05, RngStream::new(404, i)).unwrap();
        assert_eq!(s.train_rejected, s.p_test.is_some());
        present.extend(s.p_test);
        i += 1;
    }
    let ks = ks_uniform(present);
    assert!(ks < 1.63 / 5_000f64.sqrt(), "KS {ks}");
}

#[test]
fn full_set_pvalue_matches_closed_form() {
    let mut r = rng(405);
    let mut checked = 0;
    while checked < 50 {
        let p = r.random_range(2..=6);
        let n = r.random_range(p + 10..=60);
        let beta: Vec<f64> = (0..p).map(|_| 0.4).collect();
        let d = dataset(gaussian_matrix(n, p, &mut r), &beta, &mut r);
        let design = center(&d).unwrap();
        let all = IndexSet::all(p);
        let decomp = decompose(&design, &all).unwrap();
        let out = fit_summary(&design, &all).unwrap();
        let c = screening_c(p, n - p - 1, 0.05).unwrap();
        if decomp.ss_m / decomp.ss_res < c {
            continue;
        }
        let cfg = McConfig::new(RngStream::new(405, checked)).with_draws(100_000);
        let sel = selective_p(&decomp, 0.05, VarianceSpec::PlugIn, &cfg).unwrap();
        let exact = (standard_pvalue(&out) / 0.05).min(1.0);
        assert!((sel.estimate.p - exact).abs() <= 3.0 * sel.estimate.mc_se.max(1e-4), "{} vs {exact}", sel.estimate.p);
        checked += 1;
    }
}

fn screened_datasets(n: usize, p: usize, count: usize, seed: u64) -> Vec<Dataset> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let d = dataset(gaussian_matrix(n, p, &mut r), &vec![0.0; p], &mut r);
        let fit = fit_summary(&center(&d).unwrap(), &IndexSet::all(p)).unwrap();
        if overall_test(&fit, 0.05).unwrap().rejected {
            out.push(d);
        }
    }
    out
}

#[test]
fn debiased_variance_exceeds_plugin_and_tightens_the_event() {
    let sets = screened_datasets(40, 4, 300, 406);
    let mut not_smaller = 0;
    for (i, d) in sets.iter().enumerate() {
        let design = center(d).unwrap();
        let decomp = decompose(&design, &IndexSet::single(0, 4).unwrap()).unwrap();
        let cfg = McConfig::new(RngStream::new(406, i as u64)).with_draws(20_000).with_min_accept(1);
        let plug = selective_p(&decomp, 0.05, VarianceSpec::PlugIn, &cfg).unwrap();
        let deb = selective_p(&decomp, 0.05, VarianceSpec::Debiased, &cfg).unwrap();
        assert!(deb.sigma2 > sigma_hat(&decomp).unwrap());
        assert!(deb.estimate.accepted <= plug.estimate.accepted);
        let c = screening_c(4, 35, 0.05).unwrap();
        if decomp.ss_m / decomp.ss_res >= c {
            // Every dropped draw has W/Z < c, so none of them was a hit.
            assert!(deb.estimate.p >= plug.estimate.p);
        }
        if deb.estimate.p >= plug.estimate.p {
            not_smaller += 1;
        }
    }
    assert!(not_smaller as f64 >= 0.9 * sets.len() as f64, "{not_smaller}");
}

#[test]
fn frozen_draws_make_the_pvalue_curve_smooth() {
    let d = &screened_datasets(60, 3, 1, 407)[0];
    let design = center(d).unwrap();
    let geom = contrast_geometry(&design, 0).unwrap();
    let sigma2 = geom.ss_res / geom.df_res() as f64;
    let c = screening_c(3, geom.df_res(), 0.05).unwrap();
    let se = geom.se(sigma2);
    let grid: Vec<f64> = (-150..=150).map(|i| geom.beta_hat() + i as f64 * se / 50.0).collect();
    let crn = CrnDraws::generate(RngStream::new(407, 1), 50_000, geom.df_res()).unwrap();
    let frozen: Vec<f64> = grid.iter().map(|&b| pselb_crn(b, &geom, c, sigma2, &crn, 1).unwrap().p).collect();
    let fresh: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let dr = CrnDraws::generate(RngStream::new(407, 100 + i as u64), 50_000, geom.df_res()).unwrap();
            pselb_crn(b, &geom, c, sigma2, &dr, 1).unwrap().p
        })
        .collect();
    let max_jump = frozen.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    assert!(max_jump <= 0.02, "max jump {max_jump}");
    let roughness = |v: &[f64]| v.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).sum::<f64>();
    let (rf, ri) = (roughness(&frozen), roughness(&fresh));
    assert!(rf < 0.25 * ri, "frozen {rf} vs fresh {ri}");
}

#[test]
fn classical_corrections_control_unconditional_error() {
    let mut r = rng(408);
    let x = gaussian_matrix(100, 3, &mut r);
    let m = IndexSet::single(0, 3).unwrap();
    let reps = 20_000;
    let (mut bonf, mut sch, mut closed) = (0, 0, 0);
    for _ in 0..reps {
        let d = dataset(x.clone(), &[0.0; 3], &mut r);
        let out = fit_summary(&center(&d).unwrap(), &m).unwrap();
        let p1 = standard_pvalue(&out);
        let p_all = f_sf(out.f_overall, 3, out.df_res);
        bonf += (bonferroni(p1, 3) <= 0.05) as usize;
        sch += (scheffe_p(out.f_m, 3, out.df_res) <= 0.05) as usize;
        closed += (closed_testing_p(p_all, p1) <= 0.05) as usize;
    }
    let limit = 0.05 + 2.0 * (0.05f64 * 0.95 / reps as f64).sqrt();
    for (name, k) in [("bonferroni", bonf), ("scheffe", sch), ("closed", closed)] {
        let rate = k as f64 / reps as f64;
        assert!(rate <= limit, "{name} rate {rate}");
    }
}
