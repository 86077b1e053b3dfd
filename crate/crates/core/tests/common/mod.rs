#![allow(dead_code)]

use fscreen::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Integral over `[a, b]` split into `pieces` equal panels.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces).map(|i| integrate(f, a + i as f64 * h, a + (i + 1) as f64 * h, tol / pieces as f64)).sum()
}

/// Chi-square density written out from the gamma function.
pub fn chi2_density(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = df as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - statrs::function::gamma::ln_gamma(k)).exp()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn gaussian_matrix(n: usize, p: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| normal(r))
}

pub fn dataset(x: DMatrix<f64>, beta: &[f64], r: &mut ChaCha8Rng) -> Dataset {
    let n = x.nrows();
    let b = DVector::from_column_slice(beta);
    let y = &x * b + DVector::from_fn(n, |_, _| normal(r));
    Dataset::new(x, y).unwrap()
}

/// `Pr(|N(mu, 1)| >= t)`.
pub fn outside(mu: f64, t: f64) -> f64 {
    fscreen::dist::normal_cdf(-t - mu) + fscreen::dist::normal_cdf(mu - t)
}
