//! Run configuration: `key=value` lines, `#` comments, blank lines ignored.
//!
//! ```text
//! seed=7
//! alpha_fusion_init=0.7
//! directions=0,90
//! ```

use std::path::Path;

use crate::edge::{Direction, DEFAULT_FUSION_ALPHA, DEFAULT_GABOR_SCALES, DEFAULT_PYRAMID_LEVELS};
use crate::error::{Error, Result};
use crate::gas_block::DEFAULT_ALPHA_DECAY;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha_fusion_init: f64,
    pub alpha_decay_init: f64,
    pub pyramid_levels: usize,
    pub gabor_scales: usize,
    pub directions: Vec<Direction>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            alpha_fusion_init: DEFAULT_FUSION_ALPHA,
            alpha_decay_init: DEFAULT_ALPHA_DECAY,
            pyramid_levels: DEFAULT_PYRAMID_LEVELS,
            gabor_scales: DEFAULT_GABOR_SCALES,
            directions: Direction::ALL.to_vec(),
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config(format!("invalid value {raw:?} for {key}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            let (key, raw) = (key.trim(), raw.trim());
            match key {
                "seed" => cfg.seed = value(key, raw)?,
                "alpha_fusion_init" => cfg.alpha_fusion_init = value(key, raw)?,
                "alpha_decay_init" => cfg.alpha_decay_init = value(key, raw)?,
                "pyramid_levels" => cfg.pyramid_levels = value(key, raw)?,
                "gabor_scales" => cfg.gabor_scales = value(key, raw)?,
                "directions" => {
                    cfg.directions = raw
                        .split(',')
                        .map(|d| Direction::from_degrees(value(key, d.trim())?))
                        .collect::<Result<_>>()
                        .map_err(|e| Error::Config(e.to_string()))?
                }
                other => return Err(Error::Config(format!("unknown key {other:?} on line {}", n + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_fusion_init > 0.0 && self.alpha_fusion_init < 1.0) {
            return Err(Error::Config(format!("alpha_fusion_init {} must lie in (0, 1)", self.alpha_fusion_init)));
        }
        if !(self.alpha_decay_init > 0.0 && self.alpha_decay_init.is_finite()) {
            return Err(Error::Config(format!("alpha_decay_init {} must be positive", self.alpha_decay_init)));
        }
        if self.gabor_scales == 0 {
            return Err(Error::Config("gabor_scales must be at least 1".into()));
        }
        if self.directions.is_empty() {
            return Err(Error::Config("directions must not be empty".into()));
        }
        Ok(())
    }
}

impl std::fmt::Display for RunConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dirs: Vec<String> = self.directions.iter().map(|d| d.degrees().to_string()).collect();
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "alpha_fusion_init={}", self.alpha_fusion_init)?;
        writeln!(f, "alpha_decay_init={}", self.alpha_decay_init)?;
        writeln!(f, "pyramid_levels={}", self.pyramid_levels)?;
        writeln!(f, "gabor_scales={}", self.gabor_scales)?;
        writeln!(f, "directions={}", dirs.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        let c = RunConfig::parse("# run\nseed = 7\n\ndirections=90,0\npyramid_levels=2\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.directions, vec![Direction::D90, Direction::D0]);
        assert_eq!(c.pyramid_levels, 2);
        assert_eq!(c.alpha_fusion_init, 0.7);
        assert_eq!(RunConfig::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("colour=red").unwrap_err().to_string().contains("unknown key"));
        assert!(RunConfig::parse("seed=-1").is_err());
        assert!(RunConfig::parse("directions=30").is_err());
        assert!(RunConfig::parse("alpha_fusion_init=1").is_err());
        assert!(RunConfig::parse("seed").is_err());
    }
}
