use std::fmt;
use std::str::FromStr;

use fscreen::dist::RngStream;
use fscreen::McConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    T1Null,
    Power,
    CiCoverage,
    CiWidthBeta,
    CiWidthN,
    FisherSweep,
    MultTest,
    MleScatter,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::T1Null,
        Experiment::Power,
        Experiment::CiCoverage,
        Experiment::CiWidthBeta,
        Experiment::CiWidthN,
        Experiment::FisherSweep,
        Experiment::MultTest,
        Experiment::MleScatter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::T1Null => "T1Null",
            Experiment::Power => "Power",
            Experiment::CiCoverage => "CiCoverage",
            Experiment::CiWidthBeta => "CiWidthBeta",
            Experiment::CiWidthN => "CiWidthN",
            Experiment::FisherSweep => "FisherSweep",
            Experiment::MultTest => "MultTest",
            Experiment::MleScatter => "MleScatter",
        }
    }

    /// Fields this experiment reads. Everything else must be absent.
    fn fields(self) -> &'static [Field] {
        use Field::*;
        match self {
            Experiment::T1Null | Experiment::MultTest | Experiment::MleScatter => {
                &[N, P, Beta, Sigma2, Alpha0List, Count, Mc]
            }
            Experiment::Power | Experiment::CiWidthBeta => {
                &[N, P, Beta, Sigma2, Alpha0List, Alpha, Count, Mc, Beta1Grid]
            }
            Experiment::CiCoverage => &[N, P, Beta, Sigma2, Alpha0List, Alpha, Count, Mc],
            Experiment::CiWidthN => &[P, Beta, Sigma2, Alpha0List, Alpha, Count, Mc, NGrid],
            Experiment::FisherSweep => &[N, P, Sigma2, Alpha0List, Replicates, Beta1Grid, SGrid, RhoList],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = SimError;

    /// Accepts the variant name in any case, with or without `-` and `_`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_lowercase();
        Experiment::ALL
            .into_iter()
            .find(|e| e.name().to_ascii_lowercase() == key)
            .ok_or_else(|| SimError::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    N,
    P,
    Beta,
    Sigma2,
    Alpha0List,
    Alpha,
    /// `replicates` or `screened_target`, exactly one.
    Count,
    Replicates,
    Mc,
    Beta1Grid,
    NGrid,
    SGrid,
    RhoList,
}

/// Monte Carlo budget for every p-value, interval and likelihood in a run.
/// Each replicate supplies its own stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub draws: u64,
    pub min_accept: u64,
}

impl McSettings {
    pub fn with_stream(&self, rng: RngStream) -> McConfig {
        McConfig { draws: self.draws, min_accept: self.min_accept, rng }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Datasets per design point (draws per configuration for `FisherSweep`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    /// Generate datasets until this many pass the screen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screened_target: Option<usize>,
    /// Values of `beta_1`; the rest of `beta` stays as configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    /// Common value of `beta_2..beta_p` in the Fisher sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_list: Option<Vec<f64>>,
    pub rng: RngStream,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSettings>,
}

/// How many datasets a design point generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Total(usize),
    Screened(usize),
}

fn need<T: Clone>(v: &Option<T>, name: &str, e: Experiment) -> Result<T> {
    v.clone().ok_or_else(|| SimError::Config(format!("{e} requires '{name}'")))
}

fn check_prob(v: f64, name: &str) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} = {v} must lie in (0, 1)")))
    }
}

fn nonempty<T>(v: &[T], name: &str) -> Result<()> {
    if v.is_empty() {
        Err(SimError::Config(format!("'{name}' must not be empty")))
    } else {
        Ok(())
    }
}

impl SimConfig {
    /// A config with only the experiment and stream set.
    pub fn empty(experiment: Experiment, rng: RngStream) -> Self {
        Self {
            experiment,
            n: None,
            p: None,
            beta: None,
            sigma2: None,
            alpha0_list: None,
            alpha: None,
            replicates: None,
            screened_target: None,
            beta1_grid: None,
            n_grid: None,
            s_grid: None,
            rho_list: None,
            rng,
            mc: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    fn present(&self) -> Vec<(Field, &'static str)> {
        use Field::*;
        let mut out = Vec::new();
        let mut push = |set: bool, f: Field, name: &'static str| {
            if set {
                out.push((f, name));
            }
        };
        push(self.n.is_some(), N, "n");
        push(self.p.is_some(), P, "p");
        push(self.beta.is_some(), Beta, "beta");
        push(self.sigma2.is_some(), Sigma2, "sigma2");
        push(self.alpha0_list.is_some(), Alpha0List, "alpha0_list");
        push(self.alpha.is_some(), Alpha, "alpha");
        push(self.replicates.is_some(), Replicates, "replicates");
        push(self.screened_target.is_some(), Count, "screened_target");
        push(self.mc.is_some(), Mc, "mc");
        push(self.beta1_grid.is_some(), Beta1Grid, "beta1_grid");
        push(self.n_grid.is_some(), NGrid, "n_grid");
        push(self.s_grid.is_some(), SGrid, "s_grid");
        push(self.rho_list.is_some(), RhoList, "rho_list");
        out
    }

    /// Checks that exactly the fields the experiment consumes are present and valid.
    pub fn validate(&self) -> Result<()> {
        let e = self.experiment;
        let allowed = e.fields();
        for (field, name) in self.present() {
            let ok = allowed.contains(&field) || (field == Field::Replicates && allowed.contains(&Field::Count));
            if !ok {
                return Err(SimError::Config(format!("'{name}' is not used by {e}")));
            }
        }
        let p = need(&self.p, "p", e)?;
        if p == 0 {
            return Err(SimError::Config("p must be positive".into()));
        }
        let sigma2 = need(&self.sigma2, "sigma2", e)?;
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(SimError::Config(format!("sigma2 = {sigma2} must be positive")));
        }
        let alpha0s = need(&self.alpha0_list, "alpha0_list", e)?;
        nonempty(&alpha0s, "alpha0_list")?;
        for &a in &alpha0s {
            check_prob(a, "alpha0")?;
        }
        if allowed.contains(&Field::Alpha) {
            check_prob(need(&self.alpha, "alpha", e)?, "alpha")?;
        }
        if allowed.contains(&Field::Beta) {
            let beta = need(&self.beta, "beta", e)?;
            if beta.len() != p {
                return Err(SimError::Config(format!("beta has length {} but p = {p}", beta.len())));
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(SimError::Config("beta must be finite".into()));
            }
        }
        let ns = if allowed.contains(&Field::NGrid) {
            let grid = need(&self.n_grid, "n_grid", e)?;
            nonempty(&grid, "n_grid")?;
            grid
        } else {
            vec![need(&self.n, "n", e)?]
        };
        let min_n = match e {
            Experiment::Power => 2 * (p + 2),
            Experiment::FisherSweep => p + 1,
            _ => p + 2,
        };
        if let Some(&bad) = ns.iter().find(|&&n| n < min_n) {
            return Err(SimError::Config(format!("n = {bad} is too small for p = {p} in {e} (need {min_n})")));
        }
        for (field, name) in [(Field::Beta1Grid, "beta1_grid"), (Field::SGrid, "s_grid"), (Field::RhoList, "rho_list")]
        {
            if allowed.contains(&field) {
                let v = match field {
                    Field::Beta1Grid => &self.beta1_grid,
                    Field::SGrid => &self.s_grid,
                    _ => &self.rho_list,
                };
                let v = need(v, name, e)?;
                nonempty(&v, name)?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(SimError::Config(format!("'{name}' must be finite")));
                }
            }
        }
        if e == Experiment::FisherSweep {
            if p < 2 {
                return Err(SimError::Config("FisherSweep needs p >= 2".into()));
            }
            if need(&self.replicates, "replicates", e)? == 0 {
                return Err(SimError::Config("replicates must be positive".into()));
            }
            for &rho in self.rho_list.as_deref().unwrap_or_default() {
                check_prob(rho, "rho")?;
            }
        } else {
            self.target()?;
            let mc = need(&self.mc, "mc", e)?;
            mc.with_stream(self.rng).validate()?;
        }
        Ok(())
    }

    pub fn target(&self) -> Result<Target> {
        match (self.replicates, self.screened_target) {
            (Some(0), None) | (None, Some(0)) => Err(SimError::Config("replicate counts must be positive".into())),
            (Some(r), None) => Ok(Target::Total(r)),
            (None, Some(k)) => Ok(Target::Screened(k)),
            (Some(_), Some(_)) => {
                Err(SimError::Config("give either 'replicates' or 'screened_target', not both".into()))
            }
            (None, None) => {
                Err(SimError::Config(format!("{} requires 'replicates' or 'screened_target'", self.experiment)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1() -> SimConfig {
        SimConfig {
            n: Some(100),
            p: Some(10),
            beta: Some(vec![0.0; 10]),
            sigma2: Some(1.0),
            alpha0_list: Some(vec![0.05]),
            replicates: Some(10),
            mc: Some(McSettings { draws: 1000, min_accept: 10 }),
            ..SimConfig::empty(Experiment::T1Null, RngStream::new(1, 0))
        }
    }

    #[test]
    fn experiment_names_parse_loosely() {
        assert_eq!("T1Null".parse::<Experiment>().unwrap(), Experiment::T1Null);
        assert_eq!("ci-width-beta".parse::<Experiment>().unwrap(), Experiment::CiWidthBeta);
        assert_eq!("mle_scatter".parse::<Experiment>().unwrap(), Experiment::MleScatter);
        assert!("qq".parse::<Experiment>().is_err());
    }

    #[test]
    fn valid_config_round_trips_through_json() {
        let cfg = t1();
        cfg.validate().unwrap();
        let back = SimConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unused_and_missing_fields_are_rejected() {
        let extra = SimConfig { alpha: Some(0.05), ..t1() };
        assert!(matches!(extra.validate(), Err(SimError::Config(m)) if m.contains("alpha")));
        let missing = SimConfig { beta: None, ..t1() };
        assert!(missing.validate().is_err());
        let both = SimConfig { screened_target: Some(5), ..t1() };
        assert!(both.validate().is_err());
        let short = SimConfig { beta: Some(vec![0.0; 3]), ..t1() };
        assert!(short.validate().is_err());
        assert!(SimConfig::from_json(r#"{"experiment":"T1Null","rng":{"seed":1,"stream_id":0},"bogus":1}"#).is_err());
    }

    #[test]
    fn fisher_sweep_fields() {
        let cfg = SimConfig {
            n: Some(100),
            p: Some(5),
            sigma2: Some(1.0),
            alpha0_list: Some(vec![0.05]),
            replicates: Some(100),
            beta1_grid: Some(vec![0.0]),
            s_grid: Some(vec![0.0, 0.5]),
            rho_list: Some(vec![0.5]),
            ..SimConfig::empty(Experiment::FisherSweep, RngStream::new(1, 0))
        };
        cfg.validate().unwrap();
        let with_mc = SimConfig { mc: Some(McSettings { draws: 10, min_accept: 1 }), ..cfg.clone() };
        assert!(with_mc.validate().is_err());
        let bad_rho = SimConfig { rho_list: Some(vec![1.0]), ..cfg };
        assert!(bad_rho.validate().is_err());
    }
}
