use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Serialize)]
pub struct Screening {
    #[serde(rename = "F")]
    pub f: f64,
    pub p: f64,
    pub rejected: bool,
    pub alpha0: f64,
    pub df1: usize,
    pub df2: usize,
}

/// Results for one tested coefficient block. Values that the command cannot
/// produce (an interval from summary statistics, say) are `None`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Inference {
    pub target: String,
    pub standard_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sidak_p: Option<f64>,
    pub selective_p: Option<f64>,
    pub mc_se: Option<f64>,
    pub accepted: Option<u64>,
    pub sigma2: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub estimate_ols: Option<f64>,
    pub estimate_selective: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub draws: u64,
    pub min_accept: u64,
    pub variance_mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub known_sigma2: Option<f64>,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CliReport {
    pub command: &'static str,
    pub screening: Screening,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inference: Option<Vec<Inference>>,
    pub provenance: Provenance,
}

/// `(section, target, field, value)` for every scalar in the report.
fn cells(report: &CliReport) -> Vec<(String, String, String, String)> {
    let v = serde_json::to_value(report).expect("report serializes");
    let mut out = Vec::new();
    let obj = v.as_object().expect("report is an object");
    for (section, body) in obj {
        match body {
            Value::Object(map) => {
                for (k, val) in map {
                    out.push((section.clone(), String::new(), k.clone(), scalar(val)));
                }
            }
            Value::Array(rows) => {
                for row in rows {
                    let target = row["target"].as_str().unwrap_or_default().to_string();
                    for (k, val) in row.as_object().expect("inference rows are objects") {
                        if k != "target" {
                            out.push((section.clone(), target.clone(), k.clone(), scalar(val)));
                        }
                    }
                }
            }
            other => out.push((section.clone(), String::new(), String::new(), scalar(other))),
        }
    }
    out
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(scalar).collect::<Vec<_>>().join(";"),
        other => other.to_string(),
    }
}

pub fn render(report: &CliReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["section", "target", "field", "value"]).expect("in-memory write");
            for (a, b, c, d) in cells(report) {
                w.write_record([a, b, c, d]).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
        }
        Format::Text => {
            let mut s = String::new();
            let mut heading = (String::new(), String::new());
            for (section, target, field, value) in cells(report) {
                if field.is_empty() {
                    writeln!(s, "{section}: {value}").unwrap();
                    continue;
                }
                if heading != (section.clone(), target.clone()) {
                    if target.is_empty() {
                        writeln!(s, "[{section}]").unwrap();
                    } else {
                        writeln!(s, "[{section}: {target}]").unwrap();
                    }
                    heading = (section, target);
                }
                let value = if value.is_empty() { "-".to_string() } else { value };
                writeln!(s, "  {field:<20} {value}").unwrap();
            }
            s
        }
    }
}
