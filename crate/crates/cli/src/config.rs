//! TOML run configuration. Every key is optional; command-line flags win.
//!
//! ```toml
//! seed = 0
//! keyframes = 8
//! stride = 4
//! min_flow = 1.5
//! balance_cap = "auto"   # or an integer
//! ray_mode = "geometric" # or "literal"
//!
//! [ransac]
//! iterations = 1024
//! inlier_threshold_rel = 0.05
//! huber_delta = 0.5
//! min_inlier_ratio = 0.3
//!
//! [analysis]
//! n = 6
//! gamma_deg = 15.0
//! view_change_threshold_deg = 20.0
//! min_turn_deg = 15.0
//!
//! [guidance]
//! w_text = 7.5
//! w_cam = 8.0
//! ```

use std::path::Path;

use camtraj::{AnalysisParams, BalanceCap, GuidanceWeights, RansacParams, RayMode};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CapSetting {
    Count(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub keyframes: usize,
    pub stride: usize,
    pub min_flow: Option<f64>,
    pub balance_cap: CapSetting,
    pub ray_mode: RayMode,
    pub ransac: RansacParams,
    pub analysis: AnalysisParams,
    pub guidance: GuidanceWeights,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: None,
            keyframes: 8,
            stride: 4,
            min_flow: None,
            balance_cap: CapSetting::Name("auto".into()),
            ray_mode: RayMode::default(),
            ransac: RansacParams::default(),
            analysis: AnalysisParams::default(),
            guidance: GuidanceWeights::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::input(format!("config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.keyframes == 0 {
            return Err(CliError::input("config: keyframes must be at least 1"));
        }
        if self.stride == 0 {
            return Err(CliError::input("config: stride must be at least 1"));
        }
        if let Some(f) = self.min_flow {
            check_min_flow(f)?;
        }
        self.cap()?;
        self.ransac.validate()?;
        self.analysis.validate()?;
        self.guidance.validate()?;
        Ok(())
    }

    pub fn cap(&self) -> Result<BalanceCap, CliError> {
        match &self.balance_cap {
            CapSetting::Count(n) => n.to_string().parse::<BalanceCap>(),
            CapSetting::Name(s) => s.parse::<BalanceCap>(),
        }
        .map_err(|e| CliError::input(format!("config: balance_cap: {e}")))
    }

    /// Flag, then config, then the RANSAC seed.
    pub fn effective_seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(self.ransac.rng_seed)
    }
}

pub fn check_min_flow(f: f64) -> Result<f64, CliError> {
    if f.is_finite() && f >= 0.0 {
        Ok(f)
    } else {
        Err(CliError::input(format!("min_flow must be finite and non-negative, got {f}")))
    }
}
