use std::io::Write;

use crate::error::{Result, SimError};

/// One output row. `None` marks a value that does not apply to the row
/// (for instance a selective p-value on an unscreened dataset); it is
/// written as an empty CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub values: Vec<Option<f64>>,
    /// Semicolon-separated problems with this row, if any.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    /// Written as `# key: value` lines ahead of the header.
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), metadata: Vec::new() }
    }

    pub fn push(&mut self, values: Vec<Option<f64>>, flag: Option<String>) {
        assert_eq!(values.len(), self.columns.len(), "row width");
        debug_assert!(flag.is_some() || values.iter().flatten().all(|v| !v.is_nan()));
        self.rows.push(Row { values, flag });
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| SimError::Config(format!("no column named '{name}'")))
    }

    /// All cells of a column, in row order.
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r.values[i]).collect())
    }

    /// Present values of a column among rows where `filter` is nonzero.
    pub fn values_where(&self, name: &str, filter: &str) -> Result<Vec<f64>> {
        let (i, f) = (self.column_index(name)?, self.column_index(filter)?);
        Ok(self.rows.iter().filter(|r| r.values[f].is_some_and(|v| v != 0.0)).filter_map(|r| r.values[i]).collect())
    }

    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flag.is_some()).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        header.push("flag");
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.values.iter().map(|v| v.map(format_value).unwrap_or_default()).collect();
            rec.push(row.flag.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn format_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v}")
    }
}

/// Sorted values with uniform plotting positions `(i - 0.5) / k`, for QQ plots.
pub fn qq_table(values: &[f64], name: &str) -> ResultTable {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() as f64;
    let mut t = ResultTable::new(&["position", name]);
    for (i, x) in v.into_iter().enumerate() {
        t.push(vec![Some((i as f64 + 0.5) / k), Some(x)], None);
    }
    t.meta("qq_of", name);
    t
}
