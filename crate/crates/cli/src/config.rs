//! Run configuration: a TOML or JSON file, overridden by flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uniton_core::fields::Chart;
use uniton_core::loops::DEFAULT_LAMBDA_SAMPLES;
use uniton_core::zoo::VERIFY_TOL;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub chart: Chart,
    /// `[R, S]`; per-dimension default when absent.
    pub window: Option<[usize; 2]>,
    /// Iteration budget; `max(12, 3n)` when absent.
    pub budget: Option<usize>,
    pub tol: f64,
    pub lambda_samples: usize,
    /// Number of random sample points for window traces.
    pub points: usize,
    pub seed: u64,
    pub dbar: DbarConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            chart: Chart::default(),
            window: None,
            budget: None,
            tol: VERIFY_TOL,
            lambda_samples: DEFAULT_LAMBDA_SAMPLES,
            points: 4,
            seed: 0x5eed,
            dbar: DbarConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbarConfig {
    pub center: (f64, f64),
    pub r: f64,
    /// Grid resolution `h = r/m`.
    pub m: usize,
    /// Number of λ samples on the unit circle.
    pub lambdas: usize,
}

impl Default for DbarConfig {
    fn default() -> Self {
        DbarConfig { center: (0.0, 0.0), r: 0.2, m: 32, lambdas: 8 }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let cfg: Config = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.chart.validate()?;
        if !(self.tol > 0.0) {
            return Err(CliError::Invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.lambda_samples < 8 {
            return Err(CliError::Invalid(format!("lambda_samples must be at least 8, got {}", self.lambda_samples)));
        }
        if self.points == 0 {
            return Err(CliError::Invalid("points must be positive".into()));
        }
        if self.budget == Some(0) {
            return Err(CliError::Invalid("budget must be positive".into()));
        }
        if !(self.dbar.r > 0.0) || self.dbar.m < 4 || self.dbar.lambdas == 0 {
            return Err(CliError::Invalid("dbar needs r > 0, m >= 4 and at least one λ".into()));
        }
        Ok(())
    }

    pub fn budget_for(&self, n: usize) -> usize {
        self.budget.unwrap_or_else(|| uniton_core::criteria::default_budget(n))
    }
}

/// `x0,x1,y0,y1,nx,ny` or `half,n` for the square `[−half, half]²`.
pub fn parse_chart(s: &str) -> Result<Chart, CliError> {
    let bad = || CliError::Invalid(format!("--chart expects x0,x1,y0,y1,nx,ny or half,n; got '{s}'"));
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let f = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
    let u = |i: usize| parts[i].parse::<usize>().map_err(|_| bad());
    match parts.len() {
        2 => Ok(Chart::square(f(0)?, u(1)?)),
        6 => Ok(Chart { x0: f(0)?, x1: f(1)?, y0: f(2)?, y1: f(3)?, nx: u(4)?, ny: u(5)?, ..Chart::default() }),
        _ => Err(bad()),
    }
}

pub fn parse_pair(flag: &str, s: &str) -> Result<[usize; 2], CliError> {
    let bad = || CliError::Invalid(format!("{flag} expects two integers a,b; got '{s}'"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_forms() {
        assert_eq!(parse_chart("0.5,17").unwrap(), Chart::square(0.5, 17));
        let c = parse_chart("-1,2,-3,4,9,11").unwrap();
        assert_eq!((c.x0, c.x1, c.y0, c.y1, c.nx, c.ny), (-1.0, 2.0, -3.0, 4.0, 9, 11));
        assert!(parse_chart("1,2,3").is_err());
        assert!(parse_chart("a,3").is_err());
    }

    #[test]
    fn pair_and_validation() {
        assert_eq!(parse_pair("--window", "10, 6").unwrap(), [10, 6]);
        assert!(parse_pair("--window", "10").is_err());
        let mut c = Config::default();
        assert!(c.validate().is_ok());
        c.tol = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_roundtrip_with_defaults() {
        let c: Config = toml::from_str("budget = 9\n[dbar]\nr = 0.1\n").unwrap();
        assert_eq!(c.budget, Some(9));
        assert_eq!(c.dbar.r, 0.1);
        assert_eq!(c.dbar.m, 32);
        assert_eq!(c.chart, Chart::default());
        assert!(toml::from_str::<Config>("bogus = 1").is_err());
    }
}
