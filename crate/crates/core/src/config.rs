//! Plain-text `key = value` run configuration.
//!
//! ```text
//! # scanned layers, comma separated
//! layers = conv_1, conv_2, gp, softmax
//! alpha_max = 0.5
//! statistic = berk_jones
//! aggregation = sum
//! tau = 2
//! epsilon = 0.2
//! odin_mode = low
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odin::{OdinConfig, OdinMode};
use crate::scan::{Aggregation, ScanConfig, Statistic};

/// Whether and how ODIN preprocessing is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdinSetting {
    #[default]
    Off,
    Standard,
    Low,
}

impl std::str::FromStr for OdinSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(OdinSetting::Off),
            "standard" => Ok(OdinSetting::Standard),
            "low" => Ok(OdinSetting::Low),
            _ => Err(Error::InvalidArgument(format!(
                "odin mode must be off, standard or low, got `{s}`"
            ))),
        }
    }
}

/// Values read from a config file; unset keys stay `None` so command-line
/// flags can fill or override them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub alpha_max: Option<f64>,
    pub statistic: Option<Statistic>,
    pub layers: Option<Vec<String>>,
    pub aggregation: Option<Aggregation>,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
    pub odin_mode: Option<OdinSetting>,
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("`{key}` expects a number, got `{value}`")))
}

/// Splits a comma-separated list, dropping empty entries.
pub fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':').filter(|(k, _)| !k.contains(' ')))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("config line {}: expected `key = value`", lineno + 1))
                })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "alpha_max" => cfg.alpha_max = Some(parse_f64(key, value)?),
                "statistic" => cfg.statistic = Some(value.parse()?),
                "layers" => cfg.layers = Some(parse_list(value)),
                "aggregation" => cfg.aggregation = Some(value.parse()?),
                "tau" => cfg.tau = Some(parse_f64(key, value)?),
                "epsilon" => cfg.epsilon = Some(parse_f64(key, value)?),
                "odin_mode" => cfg.odin_mode = Some(value.parse()?),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "config line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn scan_config(&self) -> Result<ScanConfig> {
        let cfg = ScanConfig {
            alpha_max: self.alpha_max.unwrap_or(crate::scan::DEFAULT_ALPHA_MAX),
            statistic: self.statistic.unwrap_or_default(),
            layers: self.layers.clone().unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// ODIN settings, or `None` when ODIN is off. Low mode falls back to the
    /// tau 2 / epsilon 0.2 preset for unset values; standard mode to the
    /// identity.
    pub fn odin_config(&self) -> Result<Option<OdinConfig>> {
        let (mode, defaults) = match self.odin_mode.unwrap_or_default() {
            OdinSetting::Off => return Ok(None),
            OdinSetting::Standard => (OdinMode::Standard, OdinConfig::identity()),
            OdinSetting::Low => (OdinMode::Low, OdinConfig::low()),
        };
        OdinConfig::new(
            self.tau.unwrap_or(defaults.tau),
            self.epsilon.unwrap_or(defaults.epsilon),
            mode,
        )
        .map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let cfg = ConfigFile::parse(
            "# comment\nalpha_max = 0.25\nstatistic = higher_criticism\nlayers = a, b ,c\n\
             aggregation = layer:b\ntau = 5\nepsilon=0.0002 # trailing\nodin_mode = standard\n",
        )
        .unwrap();
        assert_eq!(cfg.alpha_max, Some(0.25));
        assert_eq!(cfg.statistic, Some(Statistic::HigherCriticism));
        assert_eq!(cfg.layers.as_deref(), Some(&["a".to_owned(), "b".into(), "c".into()][..]));
        assert_eq!(cfg.aggregation, Some(Aggregation::Layer("b".into())));
        let odin = cfg.odin_config().unwrap().unwrap();
        assert_eq!((odin.tau, odin.epsilon, odin.mode), (5.0, 0.0002, OdinMode::Standard));
        assert_eq!(cfg.scan_config().unwrap().alpha_max, 0.25);
    }

    #[test]
    fn defaults() {
        let cfg = ConfigFile::parse("").unwrap();
        let scan = cfg.scan_config().unwrap();
        assert_eq!(scan.alpha_max, 0.5);
        assert_eq!(scan.statistic, Statistic::BerkJones);
        assert!(cfg.odin_config().unwrap().is_none());
        let low = ConfigFile::parse("odin_mode = low").unwrap().odin_config().unwrap().unwrap();
        assert_eq!((low.tau, low.epsilon), (2.0, 0.2));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ConfigFile::parse("alpha = 0.1").is_err());
        assert!(ConfigFile::parse("alpha_max = lots").is_err());
        assert!(ConfigFile::parse("just words").is_err());
        assert!(ConfigFile::parse("alpha_max = 1.5").unwrap().scan_config().is_err());
        assert!(ConfigFile::parse("odin_mode = low\ntau = -1").unwrap().odin_config().is_err());
    }
}
