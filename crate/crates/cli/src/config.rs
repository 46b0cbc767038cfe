//! Run configuration: defaults, an optional JSON file, then flags.

use std::path::{Path, PathBuf};

use ara_core::adversary::DEFAULT_DELTA;
use ara_core::belief::{DEFAULT_MC_SAMPLES, DEFAULT_PRUNE_EPSILON, MIN_MC_SAMPLES};
use ara_core::engine::{DEFAULT_MAX_STEPS, DEFAULT_RHO};
use ara_core::policy::{DEFAULT_CUTPOINTS, DEFAULT_HORIZON, DEFAULT_MAX_PATHS};
use serde::Deserialize;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_GRID: &str = "6x6";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Every field is optional in the file; missing ones keep their defaults.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: String,
    pub rho: f64,
    pub delta: f64,
    pub cutpoints: [f64; 3],
    pub horizon: usize,
    pub mc_samples: usize,
    pub prune_epsilon: f64,
    pub max_paths: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub replicates: usize,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID.to_string(),
            rho: DEFAULT_RHO,
            delta: DEFAULT_DELTA,
            cutpoints: DEFAULT_CUTPOINTS,
            horizon: DEFAULT_HORIZON,
            mc_samples: DEFAULT_MC_SAMPLES,
            prune_epsilon: DEFAULT_PRUNE_EPSILON,
            max_paths: DEFAULT_MAX_PATHS,
            max_steps: DEFAULT_MAX_STEPS,
            seed: DEFAULT_SEED,
            replicates: DEFAULT_REPLICATES,
            threads: None,
            out: None,
            trace_out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))
    }

    pub fn grid_size(&self) -> Result<(usize, usize), ConfigError> {
        parse_grid(&self.grid)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError(m));
        self.grid_size()?;
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return fail(format!(
                "rho = {} out of range: must satisfy 0 < rho < 1",
                self.rho
            ));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return fail(format!(
                "delta = {} out of range: must satisfy 0 <= delta < 1",
                self.delta
            ));
        }
        let [a, b, c] = self.cutpoints;
        if !(a >= 0.0 && a < b && b < c) {
            return fail(format!(
                "cutpoints = {:?}: must be non-negative and strictly ascending",
                self.cutpoints
            ));
        }
        if self.horizon == 0 {
            return fail("horizon = 0: must be at least 1".into());
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            return fail(format!(
                "mc_samples = {}: must be at least {MIN_MC_SAMPLES}",
                self.mc_samples
            ));
        }
        if !(0.0..1.0).contains(&self.prune_epsilon) {
            return fail(format!(
                "prune_epsilon = {}: must satisfy 0 <= prune_epsilon < 1",
                self.prune_epsilon
            ));
        }
        if self.max_paths == 0 {
            return fail("max_paths = 0: must be at least 1".into());
        }
        if self.max_steps == 0 {
            return fail("max_steps = 0: must be at least 1".into());
        }
        if self.replicates == 0 {
            return fail("replicates = 0: must be at least 1".into());
        }
        if self.threads == Some(0) {
            return fail("threads = 0: must be at least 1".into());
        }
        Ok(())
    }
}

/// `"WxH"` with both sides at least 2.
pub fn parse_grid(s: &str) -> Result<(usize, usize), ConfigError> {
    let bad = || {
        ConfigError(format!(
            "grid = {s:?}: expected WIDTHxHEIGHT with both at least 2"
        ))
    };
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w < 2 || h < 2 {
        return Err(bad());
    }
    Ok((w, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(parse_grid("6x6").unwrap(), (6, 6));
        assert!(parse_grid("6by6").is_err());
        assert!(parse_grid("1x6").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"rho": 0.25}"#).unwrap();
        assert_eq!(c.rho, 0.25);
        assert_eq!(c.delta, DEFAULT_DELTA);
        assert!(serde_json::from_str::<RunConfig>(r#"{"rhoo": 0.25}"#).is_err());
    }

    #[test]
    fn errors_name_the_field() {
        let c = RunConfig {
            rho: 1.5,
            ..RunConfig::default()
        };
        let e = c.validate().unwrap_err().0;
        assert!(e.contains("rho") && e.contains("0 < rho < 1"), "{e}");
    }
}
