//! Comparator procedures: sample splitting and the classical multiplicity
//! corrections.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dist::{f_sf, RngStream, Substream};
use crate::error::{Error, Result};
use crate::model::{center, fit_summary, Dataset, IndexSet};
use crate::screen::{overall_test, standard_pvalue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train_rejected: bool,
    /// Standard p-value on the test rows, present iff the training screen rejected.
    pub p_test: Option<f64>,
    /// Sorted training rows.
    pub train_indices: Vec<usize>,
    pub f_train: f64,
    pub p_train: f64,
}

/// Screens on a random half of the rows and tests `H_0^M` on the other half.
/// With odd `n` the training half gets the extra row.
pub fn sample_split_procedure(dataset: &Dataset, m_set: &IndexSet, alpha0: f64, rng: RngStream) -> Result<SplitResult> {
    let n = dataset.n();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng.substream(Substream::Split).rng());
    let mut train = rows[..n.div_ceil(2)].to_vec();
    train.sort_unstable();
    sample_split_fixed(dataset, m_set, alpha0, &train)
}

/// Sample splitting with the training rows given explicitly.
pub fn sample_split_fixed(dataset: &Dataset, m_set: &IndexSet, alpha0: f64, train: &[usize]) -> Result<SplitResult> {
    let n = dataset.n();
    let mut in_train = vec![false; n];
    for &i in train {
        if i >= n || in_train[i] {
            return Err(Error::BadArgument(format!("invalid training row {i}")));
        }
        in_train[i] = true;
    }
    let test: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    let p = dataset.p();
    for half in [train.len(), test.len()] {
        if half < p + 2 {
            return Err(Error::InsufficientDf { n: half, p });
        }
    }
    let tr = fit_summary(&center(&dataset.select_rows(train))?, m_set)?;
    let screen = overall_test(&tr, alpha0)?;
    let p_test = if screen.rejected {
        let te = fit_summary(&center(&dataset.select_rows(&test))?, m_set)?;
        Some(standard_pvalue(&te))
    } else {
        None
    };
    Ok(SplitResult {
        train_rejected: screen.rejected,
        p_test,
        train_indices: train.to_vec(),
        f_train: screen.f_overall,
        p_train: screen.p_overall,
    })
}

/// `min(1, k p)`.
pub fn bonferroni(p: f64, k: usize) -> f64 {
    (k as f64 * p).min(1.0)
}

/// Closed testing over `{H_M, H_{1:p}}`: reject `H_M` only if both reject.
pub fn closed_testing_p(p_overall: f64, p_m: f64) -> f64 {
    p_overall.max(p_m)
}

/// Single-coefficient contrast under Scheffe's simultaneous F band.
pub fn scheffe_p(f_j: f64, p: usize, df2: usize) -> f64 {
    f_sf(f_j / p as f64, p, df2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::f_quantile;
    use crate::testutil::random_dataset;

    #[test]
    fn corrections() {
        assert_eq!(bonferroni(0.6, 2), 1.0);
        assert_eq!(bonferroni(0.01, 3), 0.03);
        assert_eq!(closed_testing_p(0.04, 0.01), 0.04);
        let f = 4.0 * f_quantile(0.95, 4, 30).unwrap();
        assert!((scheffe_p(f, 4, 30) - 0.05).abs() < 1e-10);
    }

    #[test]
    fn odd_split_sizes() {
        let d = random_dataset(21, 2, 4);
        let m = IndexSet::single(0, 2).unwrap();
        let s = sample_split_procedure(&d, &m, 0.5, RngStream::new(3, 3)).unwrap();
        assert_eq!(s.train_indices.len(), 11);
        assert_eq!(s.p_test.is_some(), s.train_rejected);
    }

    #[test]
    fn fixed_partition_matches_modules() {
        let d = random_dataset(30, 2, 8);
        let y = d.y() + d.x().column(1) * 1.5;
        let d = Dataset::new(d.x().clone(), y).unwrap();
        let m = IndexSet::single(0, 2).unwrap();
        let train: Vec<usize> = (0..15).collect();
        let s = sample_split_fixed(&d, &m, 0.05, &train).unwrap();
        let tr = fit_summary(&center(&d.select_rows(&train)).unwrap(), &m).unwrap();
        let dec = overall_test(&tr, 0.05).unwrap();
        assert_eq!(s.train_rejected, dec.rejected);
        assert!(s.train_rejected);
        let test: Vec<usize> = (15..30).collect();
        let te = fit_summary(&center(&d.select_rows(&test)).unwrap(), &m).unwrap();
        assert_eq!(s.p_test, Some(standard_pvalue(&te)));
    }

    #[test]
    fn small_halves() {
        let d = random_dataset(7, 2, 1);
        let m = IndexSet::single(0, 2).unwrap();
        assert!(matches!(
            sample_split_procedure(&d, &m, 0.05, RngStream::new(0, 0)),
            Err(Error::InsufficientDf { .. })
        ));
    }
}
