//! Whole-pipeline JSON configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::EventBuildConfig;
use crate::error::{Error, Result};
use crate::fit::FitOptions;
use crate::simgen::AcquisitionConfig;
use crate::spdc::{CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};

pub const SEED_ENV: &str = "BIPHOTON_SEED";

/// Bundled source, acquisition and analysis defaults.
pub const DEFAULT_JSON: &str = include_str!("../configs/default.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceConfig {
    pub window_ps: f64,
    /// Start of the first window; None centres the frames on the fitted IRF peak.
    pub origin_ps: Option<f64>,
    pub frames: usize,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self { window_ps: 150.0, origin_ps: None, frames: 5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum Background {
    #[default]
    None,
    /// Median of all cells.
    Median,
    Constant {
        level: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub background: Background,
    pub fit: FitOptions,
    /// Schmidt modes written by simulate-jsa.
    pub modes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub pump: PumpSpec,
    pub crystal: CrystalSpec,
    pub grid: GridSpec,
    pub acquisition: AcquisitionConfig,
    pub build: EventBuildConfig,
    pub slice: SliceConfig,
    pub analysis: AnalysisConfig,
    pub output_dir: Option<String>,
    /// Overrides `acquisition.seed`; itself overridden by BIPHOTON_SEED.
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_JSON).expect("bundled config parses")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// Applies the seed precedence env > `seed` > `acquisition.seed`.
    pub fn apply_seed_overrides(&mut self) -> Result<()> {
        if let Some(s) = self.seed {
            self.acquisition.seed = s;
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            let s = v.trim().parse().map_err(|_| Error::config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            self.acquisition.seed = s;
            self.seed = Some(s);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        self.crystal.validate()?;
        FrequencyGrid::from_spec(&self.grid)?.validate()?;
        self.acquisition.validate()?;
        self.build.resolve(&self.acquisition.header())?;
        if !(self.slice.window_ps >= self.acquisition.tick_ps as f64) {
            return Err(Error::config("slice.window_ps must be at least one tick"));
        }
        if self.slice.frames == 0 {
            return Err(Error::config("slice.frames must be >= 1"));
        }
        if let Background::Constant { level } = self.analysis.background {
            if !(level >= 0.0) || !level.is_finite() {
                return Err(Error::config("background level must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Canonical JSON (struct field order) used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_is_valid() {
        let c = RunConfig::bundled();
        c.validate().unwrap();
        assert_eq!(c.acquisition.sync_divider, 63);
        assert!(c.build.fold_period_ps.is_some());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"pump": {"centre_wavelength_nm": 386.6}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"acquisition": {"eta_signal": 0.5}}"#).is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.acquisition.seed += 1;
        assert_ne!(a.hash(), b.hash());
        let round = RunConfig::from_json(&a.canonical_json()).unwrap();
        assert_eq!(round.hash(), a.hash());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = RunConfig::default();
        c.slice.window_ps = 10.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.acquisition.eta_idler = 2.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
