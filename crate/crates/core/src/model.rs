//! Data ingestion, centering and the orthogonal decomposition of the response.
//!
//! Every statistic downstream is a function of three quadratic forms in the
//! centered response:
//!
//! * `ss_res  = y'(I - P_X) y`
//! * `ss_m    = y'(P_X - P_{X_{-M}}) y`
//! * `ss_nuis = y' P_{X_{-M}} y`
//!
//! They are read off a single Householder QR of the column-permuted design
//! `[X_{-M}, X_M]`: the leading block of `Q'y` spans the nuisance columns, the
//! next `m` entries span `X_M` residualized on them, and the remainder is the
//! residual. No n-by-n projection is ever formed.
//!
//! Centering stands in for the rotation onto the orthogonal complement of the
//! intercept: all quadratic forms agree, and the residual degrees of freedom
//! are taken in the ambient dimension `n - 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on `|R_ii| / max_j |R_jj|` below which a column counts
/// as linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Residual sum of squares below this fraction of the total counts as a perfect fit.
const DEGENERATE_TOL: f64 = 1e-20;

/// Raw regression data: covariates without an intercept column and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Input(format!(
                "covariate matrix has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::Input("at least one covariate is required".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("data contain non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset { x, y }
    }
}

/// Mean-centered design with degrees-of-freedom bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDesign {
    pub xc: DMatrix<f64>,
    pub yc: DVector<f64>,
    pub n: usize,
    pub p: usize,
    /// `n - p - 1`.
    pub df_res: usize,
}

impl CenteredDesign {
    /// `yc' yc`.
    pub fn total_ss(&self) -> f64 {
        self.yc.norm_squared()
    }
}

/// Centers the response and every covariate column.
pub fn center(dataset: &Dataset) -> Result<CenteredDesign> {
    let (n, p) = (dataset.n(), dataset.p());
    if n < p + 2 {
        return Err(Error::InsufficientDf { n, p });
    }
    let mut xc = dataset.x.clone();
    for mut col in xc.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut yc = dataset.y.clone();
    let ybar = yc.mean();
    yc.add_scalar_mut(-ybar);

    let qr = xc.clone().qr();
    check_rank(&qr.r(), &(0..p).collect::<Vec<_>>())?;

    Ok(CenteredDesign { xc, yc, n, p, df_res: n - p - 1 })
}

fn check_rank(r: &DMatrix<f64>, order: &[usize]) -> Result<()> {
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0_f64, f64::max);
    if largest == 0.0 {
        return Err(Error::RankDeficient { column: order.first().copied().unwrap_or(0) });
    }
    for (i, &d) in diag.iter().enumerate() {
        if d <= RANK_TOL * largest {
            return Err(Error::RankDeficient { column: order[i] });
        }
    }
    Ok(())
}

/// Zero-based set of coefficient indices `M`, sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Builds a set from zero-based indices into `0..p`.
    pub fn new(indices: impl IntoIterator<Item = usize>, p: usize) -> Result<Self> {
        let mut v: Vec<usize> = indices.into_iter().collect();
        if v.is_empty() {
            return Err(Error::BadIndexSet("index set is empty".into()));
        }
        let len = v.len();
        v.sort_unstable();
        v.dedup();
        if v.len() != len {
            return Err(Error::BadIndexSet("index set contains duplicates".into()));
        }
        if let Some(&bad) = v.iter().find(|&&j| j >= p) {
            return Err(Error::BadIndexSet(format!("index {} is out of range for {p} covariates", bad + 1)));
        }
        Ok(Self(v))
    }

    /// Builds a set from one-based indices into `1..=p`.
    pub fn from_one_based(indices: &[usize], p: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::BadIndexSet("indices are one-based; 0 is invalid".into()));
        }
        Self::new(indices.iter().map(|&j| j - 1), p)
    }

    pub fn single(j: usize, p: usize) -> Result<Self> {
        Self::new([j], p)
    }

    /// The full set `{0, ..., p-1}`.
    pub fn all(p: usize) -> Self {
        Self((0..p).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }
}

/// The three mutually independent quadratic forms of the centered response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticDecomposition {
    pub ss_res: f64,
    pub ss_m: f64,
    pub ss_nuis: f64,
    pub m: usize,
    pub n: usize,
    pub p: usize,
}

impl QuadraticDecomposition {
    pub fn df_res(&self) -> usize {
        self.n - self.p - 1
    }

    pub fn total_ss(&self) -> f64 {
        self.ss_res + self.ss_m + self.ss_nuis
    }

    pub(crate) fn check_fit(&self) -> Result<()> {
        if self.ss_res.is_nan() || self.ss_res <= DEGENERATE_TOL * self.total_ss() {
            return Err(Error::DegenerateFit);
        }
        Ok(())
    }
}

/// QR of the design with columns ordered `[X_{-M}, X_M]`.
pub(crate) struct PartitionedQr {
    /// `order[k]` is the original column at position `k`.
    pub order: Vec<usize>,
    pub r: DMatrix<f64>,
    pub qty: DVector<f64>,
    pub nuisance: usize,
}

impl PartitionedQr {
    pub fn new(design: &CenteredDesign, m_set: &IndexSet) -> Result<Self> {
        if let Some(&bad) = m_set.indices().iter().find(|&&j| j >= design.p) {
            return Err(Error::BadIndexSet(format!("index {} out of range", bad + 1)));
        }
        let mut order: Vec<usize> = (0..design.p).filter(|&j| !m_set.contains(j)).collect();
        let nuisance = order.len();
        order.extend_from_slice(m_set.indices());
        let permuted = design.xc.select_columns(&order);
        let qr = permuted.qr();
        let r = qr.r();
        check_rank(&r, &order)?;
        let mut qty = design.yc.clone();
        qr.q_tr_mul(&mut qty);
        Ok(Self { order, r, qty, nuisance })
    }

    fn block_ss(&self, range: std::ops::Range<usize>) -> f64 {
        self.qty.rows(range.start, range.len()).norm_squared()
    }

    pub fn decomposition(&self, design: &CenteredDesign) -> QuadraticDecomposition {
        let p = design.p;
        QuadraticDecomposition {
            ss_nuis: self.block_ss(0..self.nuisance),
            ss_m: self.block_ss(self.nuisance..p),
            ss_res: self.block_ss(p..design.n),
            m: p - self.nuisance,
            n: design.n,
            p,
        }
    }

    /// OLS slopes and `diag((X'X)^{-1})`, both in the original column order.
    pub fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.order.len();
        let r = &self.r;
        let mut beta_perm = vec![0.0; p];
        for i in (0..p).rev() {
            let mut s = self.qty[i];
            for k in i + 1..p {
                s -= r[(i, k)] * beta_perm[k];
            }
            beta_perm[i] = s / r[(i, i)];
        }
        // Rows of R^{-1}: diag((R'R)^{-1})_i = ||row i of R^{-1}||^2.
        let mut rinv = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            rinv[(j, j)] = 1.0 / r[(j, j)];
            for i in (0..j).rev() {
                let mut s = 0.0;
                for k in i + 1..=j {
                    s += r[(i, k)] * rinv[(k, j)];
                }
                rinv[(i, j)] = -s / r[(i, i)];
            }
        }
        let mut beta = vec![0.0; p];
        let mut xtx_inv_diag = vec![0.0; p];
        for (pos, &col) in self.order.iter().enumerate() {
            beta[col] = beta_perm[pos];
            xtx_inv_diag[col] = rinv.row(pos).norm_squared();
        }
        (beta, xtx_inv_diag)
    }
}

/// Splits `yc' yc` into residual, tested-block and nuisance sums of squares.
pub fn decompose(design: &CenteredDesign, m_set: &IndexSet) -> Result<QuadraticDecomposition> {
    Ok(PartitionedQr::new(design, m_set)?.decomposition(design))
}

/// Standard least-squares summary for the test of `beta_M = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionOutputs {
    /// Overall F statistic on `(p, n - p - 1)` degrees of freedom.
    pub f_overall: f64,
    /// Partial F statistic for `M` on `(m, n - p - 1)` degrees of freedom.
    pub f_m: f64,
    pub r_squared: f64,
    /// Residual standard error.
    pub rse: f64,
    pub beta_hat: Vec<f64>,
    pub se_beta: Vec<f64>,
    pub df_res: usize,
    pub n: usize,
    pub p: usize,
    pub m: usize,
}

impl RegressionOutputs {
    pub(crate) fn from_decomposition(
        d: &QuadraticDecomposition,
        beta_hat: Vec<f64>,
        xtx_inv_diag: &[f64],
    ) -> Result<Self> {
        d.check_fit()?;
        let df = d.df_res() as f64;
        let total = d.total_ss();
        let rse = (d.ss_res / df).sqrt();
        Ok(Self {
            f_overall: (df / d.p as f64) * (d.ss_m + d.ss_nuis) / d.ss_res,
            f_m: (df / d.m as f64) * d.ss_m / d.ss_res,
            r_squared: (1.0 - d.ss_res / total).clamp(0.0, 1.0),
            rse,
            se_beta: xtx_inv_diag.iter().map(|v| rse * v.sqrt()).collect(),
            beta_hat,
            df_res: d.df_res(),
            n: d.n,
            p: d.p,
            m: d.m,
        })
    }
}

pub fn fit_summary(design: &CenteredDesign, m_set: &IndexSet) -> Result<RegressionOutputs> {
    let qr = PartitionedQr::new(design, m_set)?;
    let d = qr.decomposition(design);
    let (beta, diag) = qr.coefficients();
    RegressionOutputs::from_decomposition(&d, beta, &diag)
}
