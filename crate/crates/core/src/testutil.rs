//! Brute-force oracles shared by the unit tests.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::Dataset;

pub fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let x = DMatrix::from_fn(n, p, |_, _| draw());
    let y = DVector::from_fn(n, |_, _| draw());
    Dataset::new(x, y).unwrap()
}

/// `A (A'A)^{-1} A'` from the normal equations.
pub fn explicit_projection(a: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = a.transpose() * a;
    a * gram.try_inverse().expect("singular gram matrix") * a.transpose()
}

pub struct OracleSummary {
    pub f_overall: f64,
    pub f_m: f64,
    pub r_squared: f64,
    pub rse: f64,
    pub beta_hat: Vec<f64>,
    pub se_beta: Vec<f64>,
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

fn rss(design: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len();
    let resid = (DMatrix::<f64>::identity(n, n) - explicit_projection(design)) * y;
    resid.norm_squared()
}

/// Uncentered regression with an explicit intercept column, solved by the
/// normal equations.
pub fn normal_equation_summary(d: &Dataset, m: &[usize]) -> OracleSummary {
    let (n, p) = (d.n(), d.p());
    let y = d.y();
    let full = with_intercept(d.x());
    let gram_inv = (full.transpose() * &full).try_inverse().unwrap();
    let coef = &gram_inv * full.transpose() * y;
    let ss_res = rss(&full, y);
    let ybar = y.mean();
    let tss = y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>();
    let df = (n - p - 1) as f64;
    let keep: Vec<usize> = (0..p).filter(|j| !m.contains(j)).collect();
    let reduced = with_intercept(&d.x().select_columns(&keep));
    let ss_reduced = rss(&reduced, y);
    let sigma2 = ss_res / df;
    OracleSummary {
        f_overall: ((tss - ss_res) / p as f64) / sigma2,
        f_m: ((ss_reduced - ss_res) / m.len() as f64) / sigma2,
        r_squared: 1.0 - ss_res / tss,
        rse: sigma2.sqrt(),
        beta_hat: (1..=p).map(|j| coef[j]).collect(),
        se_beta: (1..=p).map(|j| (sigma2 * gram_inv[(j, j)]).sqrt()).collect(),
    }
}
