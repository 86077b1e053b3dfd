//! CSV input: raw regression data and ANOVA group summaries.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::retro::GroupSummary;

fn parse_field(s: &str, row: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Input(format!("row {row}: cannot parse {s:?} as a number")))
}

/// Reads a dataset whose first column is the response and the rest covariates.
pub fn read_dataset<R: Read>(reader: R, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(has_header).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(e.to_string()))?;
        let row = rec.iter().map(|s| parse_field(s, i + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Input(format!("row {} has {} fields, expected {}", i + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    let Some(width) = rows.first().map(Vec::len) else {
        return Err(Error::Input("no data rows".into()));
    };
    if width < 2 {
        return Err(Error::Input("need a response column and at least one covariate".into()));
    }
    let n = rows.len();
    let y = DVector::from_iterator(n, rows.iter().map(|r| r[0]));
    let x = DMatrix::from_fn(n, width - 1, |i, j| rows[i][j + 1]);
    Dataset::new(x, y)
}

/// Reads `group,n,mean,sd` rows; the header is required.
pub fn read_groups<R: Read>(reader: R) -> Result<Vec<(String, GroupSummary)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Input(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Input(format!("group CSV is missing the {name:?} column")))
    };
    let (ig, in_, im, is) = (find("group")?, find("n")?, find("mean")?, find("sd")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(e.to_string()))?;
        let row = i + 1;
        let get = |k: usize| rec.get(k).ok_or_else(|| Error::Input(format!("row {row} is short")));
        let n: usize =
            get(in_)?.parse().map_err(|_| Error::Input(format!("row {row}: group size must be an integer")))?;
        let g = GroupSummary::new(n, parse_field(get(im)?, row)?, parse_field(get(is)?, row)?)?;
        out.push((get(ig)?.to_string(), g));
    }
    Ok(out)
}
