//! Settings shared by every subcommand, read from an optional TOML file and
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use phacosim_core::geometry::CoordinateMap;
use phacosim_core::renderer::MIN_RESOLUTION;
use serde::Deserialize;

/// Environment variable naming the TOML config file.
pub const CONFIG_ENV: &str = "PHACOSIM_CONFIG";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub resolution: u32,
    pub fps: f64,
    pub sim_scale: f64,
    pub out: PathBuf,
    pub bind: String,
    pub checkpoint_dir: Option<PathBuf>,
    /// Steps between automatic checkpoints; `0` disables them.
    pub checkpoint_every: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            resolution: 128,
            fps: 4.0,
            sim_scale: 1.0,
            out: PathBuf::from("out"),
            bind: "127.0.0.1:8765".into(),
            checkpoint_dir: None,
            checkpoint_every: 0,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.resolution < MIN_RESOLUTION {
            return Err(format!(
                "resolution must be at least {MIN_RESOLUTION}, got {}",
                self.resolution
            ));
        }
        if !(self.sim_scale > 0.0 && self.sim_scale.is_finite()) {
            return Err(format!("sim_scale must be positive, got {}", self.sim_scale));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(format!("fps must be positive, got {}", self.fps));
        }
        Ok(())
    }

    pub fn map(&self) -> CoordinateMap {
        CoordinateMap::square(self.resolution, self.sim_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("resolution = 64\nout = \"data\"").unwrap();
        assert_eq!(c.resolution, 64);
        assert_eq!(c.out, PathBuf::from("data"));
        assert_eq!(c.fps, 4.0);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<Config>("resolutoin = 64").is_err());
        let c = Config {
            resolution: 4,
            ..Config::default()
        };
        assert!(c.validate().is_err());
    }
}
