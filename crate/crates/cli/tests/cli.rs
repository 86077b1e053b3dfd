use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fscreen::dist::standard_normal;
use fscreen::{center, fit_summary, IndexSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn fscreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fscreen")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// `y = signal * x1 + noise` with three covariates.
fn write_data(dir: &Path, name: &str, signal: f64, seed: u64) -> PathBuf {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from("y,a,b,c\n");
    for _ in 0..80 {
        let x: Vec<f64> = (0..3).map(|_| standard_normal(&mut r)).collect();
        let y = signal * x[0] + standard_normal(&mut r);
        s += &format!("{y},{},{},{}\n", x[0], x[1], x[2]);
    }
    let path = dir.join(name);
    std::fs::write(&path, s).unwrap();
    path
}

const MC: [&str; 6] = ["--seed", "11", "--draws", "20000", "--min-accept", "100"];

fn screen(path: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["screen", path.to_str().unwrap()];
    args.extend_from_slice(&MC);
    args.extend_from_slice(extra);
    fscreen(&args)
}

#[test]
fn same_seed_gives_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", 0.6, 1);
    let a = screen(&data, &["--coef", "1", "--coef", "2"]);
    let b = screen(&data, &["--coef", "1", "--coef", "2"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["screening"]["rejected"], Value::Bool(true));
    assert_eq!(v["inference"].as_array().unwrap().len(), 2);
    assert_eq!(v["provenance"]["seed"], 11);
}

#[test]
fn omitted_seed_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", 0.6, 1);
    let o = fscreen(&["screen", data.to_str().unwrap(), "--coef", "1", "--draws", "20000", "--min-accept", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let seed = v["provenance"]["seed"].as_u64().unwrap().to_string();
    let again = fscreen(&[
        "screen",
        data.to_str().unwrap(),
        "--coef",
        "1",
        "--draws",
        "20000",
        "--min-accept",
        "50",
        "--seed",
        &seed,
    ]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn unscreened_data_exits_2_without_inference() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "null.csv", 0.0, 2);
    let o = screen(&data, &["--coef", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("ERROR:ScreeningNotRejected:"));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["screening"]["rejected"], Value::Bool(false));
    assert!(v.get("inference").is_none());

    let forced = screen(&data, &["--coef", "1", "--force"]);
    assert!(forced.status.success());
    let v: Value = serde_json::from_slice(&forced.stdout).unwrap();
    let row = &v["inference"][0];
    assert!(row["selective_p"].is_number());
    assert!(row["flags"].as_array().unwrap().contains(&Value::from("not_screened")));
}

fn numbers_from_json(v: &Value) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (section, body) in v.as_object().unwrap() {
        match body {
            Value::Object(m) => {
                for (k, x) in m {
                    out.insert(format!("{section}//{k}"), scalar(x));
                }
            }
            Value::Array(rows) => {
                for row in rows {
                    let t = row["target"].as_str().unwrap();
                    for (k, x) in row.as_object().unwrap() {
                        if k != "target" {
                            out.insert(format!("{section}/{t}/{k}"), scalar(x));
                        }
                    }
                }
            }
            x => {
                out.insert(format!("{section}//"), scalar(x));
            }
        }
    }
    out
}

fn scalar(x: &Value) -> String {
    match x {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(a) => a.iter().map(scalar).collect::<Vec<_>>().join(";"),
        Value::Number(n) => n.as_f64().unwrap().to_string(),
        other => other.to_string(),
    }
}

fn normalize(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) => v.to_string(),
        Err(_) => s.to_string(),
    }
}

fn numbers_from_csv(text: &str) -> BTreeMap<String, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (format!("{}/{}/{}", &r[0], &r[1], &r[2]), normalize(&r[3]))
        })
        .collect()
}

fn numbers_from_text(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut head = (String::new(), String::new());
    for line in text.lines() {
        if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            head = match inner.split_once(": ") {
                Some((s, t)) => (s.to_string(), t.to_string()),
                None => (inner.to_string(), String::new()),
            };
        } else if let Some(rest) = line.strip_prefix("  ") {
            let (k, v) = rest.split_once(' ').unwrap();
            let v = v.trim();
            let v = if v == "-" { "" } else { v };
            out.insert(format!("{}/{}/{k}", head.0, head.1), normalize(v));
        } else {
            let (s, v) = line.split_once(": ").unwrap();
            out.insert(format!("{s}//"), v.to_string());
        }
    }
    out
}

#[test]
fn formats_carry_the_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", 0.6, 3);
    let run = |fmt: &str| {
        let o = screen(&data, &["--coef", "1", "--m-cols", "2,3", "--format", fmt]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let json = numbers_from_json(&serde_json::from_str(&run("json")).unwrap());
    let csv = numbers_from_csv(&run("csv"));
    let text = numbers_from_text(&run("text"));
    assert!(json.len() > 20);
    assert_eq!(json, csv);
    assert_eq!(json, text);
}

#[test]
fn retro_matches_the_raw_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", 0.5, 4);
    let d = fscreen::io::read_dataset(std::fs::File::open(&data).unwrap(), true).unwrap();
    let design = center(&d).unwrap();
    let out = fit_summary(&design, &IndexSet::single(1, 3).unwrap()).unwrap();

    let raw = screen(&data, &["--coef", "2"]);
    let (f_m, r2, rse) = (out.f_m.to_string(), out.r_squared.to_string(), out.rse.to_string());
    let mut args = vec!["retro", "--f-m", &f_m, "--r2", &r2, "--rse", &rse, "--n", "80", "--p", "3", "--m", "1"];
    args.extend_from_slice(&MC);
    let retro = fscreen(&args);
    assert!(raw.status.success() && retro.status.success(), "{}{}", stderr(&raw), stderr(&retro));
    let (a, b): (Value, Value) =
        (serde_json::from_slice(&raw.stdout).unwrap(), serde_json::from_slice(&retro.stdout).unwrap());
    assert_eq!(a["inference"][0]["selective_p"], b["inference"][0]["selective_p"]);
    assert_eq!(a["inference"][0]["accepted"], b["inference"][0]["accepted"]);
    let (fa, fb) = (a["screening"]["F"].as_f64().unwrap(), b["screening"]["F"].as_f64().unwrap());
    assert!((fa - fb).abs() <= 1e-9 * fa);
}

#[test]
fn perfect_fit_is_degenerate() {
    let o = fscreen(&["retro", "--f-m", "4.2", "--r2", "1", "--rse", "1.02", "--n", "100", "--p", "10", "--m", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR:DegenerateFit:"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn identical_groups_are_not_screened() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    std::fs::write(&path, "group,n,mean,sd\nleft,12,3.5,1.2\nright,12,3.5,1.2\n").unwrap();
    let o = fscreen(&["anova-retro", path.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["screening"]["F"].as_f64(), Some(0.0));
    assert!(v.get("inference").is_none());
}

#[test]
fn anova_pairs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    std::fs::write(&path, "group,n,mean,sd\nlow,30,1.0,1.0\nmid,30,1.9,1.1\nhigh,30,1.3,0.9\n").unwrap();
    let mut args = vec!["anova-retro", path.to_str().unwrap()];
    args.extend_from_slice(&MC);
    let o = fscreen(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["inference"].as_array().unwrap();
    let targets: Vec<&str> = rows.iter().map(|r| r["target"].as_str().unwrap()).collect();
    assert_eq!(targets, ["low vs mid", "low vs high", "mid vs high"]);
    for r in rows {
        let (p, s) = (r["standard_p"].as_f64().unwrap(), r["sidak_p"].as_f64().unwrap());
        assert!(s >= p && s <= 1.0);
    }
    assert!((rows[0]["estimate_ols"].as_f64().unwrap() - 0.9).abs() < 1e-12);
}

#[test]
fn bad_input_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "y,a\n1,2\nx,3\n").unwrap();
    let o = fscreen(&["screen", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("ERROR:Input:") && err.trim_end().lines().count() == 1, "{err}");

    let data = write_data(dir.path(), "d.csv", 0.6, 1);
    let o = screen(&data, &["--coef", "4"]);
    assert!(stderr(&o).starts_with("ERROR:BadIndexSet:"));
}

#[test]
fn simulate_writes_tables_and_checks_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::write(
        &cfg,
        r#"{"n": 40, "p": 2, "beta": [0, 0], "sigma2": 1, "alpha0_list": [0.5], "replicates": 20,
            "mc": {"draws": 2000, "min_accept": 20}, "rng": {"seed": 5, "stream_id": 0}}"#,
    )
    .unwrap();
    let (out, qq) = (dir.path().join("t.csv"), dir.path().join("qq.csv"));
    let args = |exp: &str| {
        vec![
            "simulate".to_string(),
            "--experiment".into(),
            exp.into(),
            "--config".into(),
            cfg.to_str().unwrap().into(),
            "--out".into(),
            out.to_str().unwrap().into(),
            "--qq-column".into(),
            "p_known".into(),
            "--qq-out".into(),
            qq.to_str().unwrap().into(),
        ]
    };
    let o = Command::new(env!("CARGO_BIN_EXE_fscreen")).args(args("T1Null")).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(&out).unwrap();
    let data_lines = table.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_lines, 21);
    let screened =
        table.lines().filter(|l| !l.starts_with('#')).skip(1).filter(|l| l.split(',').nth(2) == Some("1")).count();
    let qq_lines = std::fs::read_to_string(&qq).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(qq_lines, screened + 1);

    std::fs::write(
        &cfg,
        r#"{"experiment": "MultTest", "n": 40, "p": 2, "beta": [0, 0], "sigma2": 1, "alpha0_list": [0.5],
            "replicates": 20, "mc": {"draws": 2000, "min_accept": 20}, "rng": {"seed": 5, "stream_id": 0}}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fscreen")).args(args("T1Null")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR:Usage:"));
}

#[test]
fn fisher_info_columns() {
    let o = fscreen(&["fisher-info", "--draws", "200", "--seed", "3", "--beta1", "0", "--s", "0,0.5", "--rho", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("s,beta1,rho,cond_info,reject_prob,product,flag"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').take(6).map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    let selective_null = rows.iter().find(|r| r[0] == 0.0 && r[2] == 1.0).unwrap();
    assert!((selective_null[4] - 0.05).abs() < 1e-9);
}
