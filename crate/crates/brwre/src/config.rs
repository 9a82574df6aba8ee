//! TOML run configuration. Every field has a desk-scale default so a run
//! works with no config file at all; sections mirror the library modules.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentModel, PointProcessLaw};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// 0 = all available cores
    pub workers: usize,
    pub model: ModelConfig,
    pub gamma: GammaConfig,
    pub ballot: BallotConfig,
    pub brw: BrwConfig,
    pub verify: VerifyConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0x5eed_0001,
            workers: 0,
            model: ModelConfig::default(),
            gamma: GammaConfig::default(),
            ballot: BallotConfig::default(),
            brw: BrwConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// one of: dyadic-gaussian, canonical-sigma, drift-random
    pub preset: String,
    /// explicit mixture overrides the preset when non-empty
    pub atoms: Vec<ModelAtom>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelAtom {
    pub weight: f64,
    pub law: PointProcessLaw,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { preset: "canonical-sigma".into(), atoms: Vec::new() }
    }
}

impl ModelConfig {
    pub fn resolve(&self) -> Result<EnvironmentModel> {
        let model = if !self.atoms.is_empty() {
            EnvironmentModel {
                atoms: self.atoms.iter().map(|a| (a.weight, a.law.clone())).collect(),
            }
        } else {
            match self.preset.as_str() {
                "dyadic-gaussian" => EnvironmentModel::dyadic_gaussian(),
                "canonical-sigma" => EnvironmentModel::canonical_sigma(),
                "drift-random" => EnvironmentModel::drift_random(),
                other => {
                    return Err(Error::Config(format!("unknown model preset '{other}'")));
                }
            }
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaConfig {
    pub beta: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub grid_points: usize,
    pub dt: f64,
    pub environments: usize,
    pub paths_per_cell: usize,
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig {
            beta: vec![0.0, 0.25, 0.5, 1.0],
            t_min: 4.0,
            t_max: 160.0,
            grid_points: 10,
            dt: 0.02,
            environments: 24,
            paths_per_cell: 4000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallotConfig {
    pub n_grid: Vec<usize>,
    /// start/end offsets for the excursion probability
    pub x: f64,
    pub y: f64,
    pub replicates: u64,
    /// alpha for the excursion-ceiling barrier shape
    pub ceiling_alpha: f64,
}

impl Default for BallotConfig {
    fn default() -> Self {
        BallotConfig {
            n_grid: vec![64, 128, 256, 512, 1024],
            x: 2.0,
            y: 2.0,
            replicates: 400_000,
            ceiling_alpha: 0.45,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrwConfig {
    pub n_grid: Vec<usize>,
    pub replicates_per_n: usize,
    /// recursion | particle
    pub backend: String,
    pub dx: f64,
    pub prune_cap: usize,
}

impl Default for BrwConfig {
    fn default() -> Self {
        BrwConfig {
            n_grid: vec![128, 256, 512, 1024, 2048, 4096],
            replicates_per_n: 48,
            backend: "recursion".into(),
            dx: 0.05,
            prune_cap: 100_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub catalogue_seed: u64,
    pub dekking_host_n: usize,
    pub dekking_host_replicates: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            catalogue_seed: 41,
            dekking_host_n: 10,
            dekking_host_replicates: 2000,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.resolve()?;
        if self.gamma.t_min <= 0.0 || self.gamma.t_max <= self.gamma.t_min {
            return Err(Error::Config("gamma grid needs 0 < t_min < t_max".into()));
        }
        if self.gamma.dt <= 0.0 || self.gamma.grid_points < 3 {
            return Err(Error::Config("gamma needs dt > 0 and >= 3 grid points".into()));
        }
        if self.ballot.n_grid.is_empty() || self.ballot.replicates == 0 {
            return Err(Error::Config("ballot section under-specified".into()));
        }
        if !(self.ballot.ceiling_alpha >= 0.0 && self.ballot.ceiling_alpha < 0.5) {
            return Err(Error::Config("ceiling_alpha must lie in [0, 0.5)".into()));
        }
        match self.brw.backend.as_str() {
            "recursion" | "particle" => {}
            other => return Err(Error::Config(format!("unknown brw backend '{other}'"))),
        }
        if self.brw.dx <= 0.0 || self.brw.dx > 0.5 {
            return Err(Error::Config("brw dx must lie in (0, 0.5]".into()));
        }
        Ok(())
    }
}
