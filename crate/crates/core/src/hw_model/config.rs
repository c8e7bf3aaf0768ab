use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smooth::SmoothShape;

/// Accelerator description: an `s1 x s2` weight-stationary array with an
/// on-chip buffer and a single off-chip memory channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub s1: u64,
    pub s2: u64,
    pub clock_hz: f64,
    pub onchip_bytes: u64,
    pub offchip_bytes_per_s: f64,
    pub bytes_per_elem: u64,
}

impl Default for HardwareConfig {
    /// 128x128 array at 1 GHz, 15 MB on chip, 80 GB/s off chip, 16-bit
    /// elements.
    fn default() -> Self {
        HardwareConfig {
            s1: 128,
            s2: 128,
            clock_hz: 1e9,
            onchip_bytes: 15_000_000,
            offchip_bytes_per_s: 80e9,
            bytes_per_elem: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("field `{0}` must be positive and finite")]
    NotPositive(&'static str),
}

impl HardwareConfig {
    pub fn with_array(s1: u64, s2: u64) -> Self {
        HardwareConfig {
            s1,
            s2,
            ..Default::default()
        }
    }

    /// Peak multiply-accumulates per cycle.
    pub fn peak_macs_per_cycle(&self) -> u64 {
        self.s1 * self.s2
    }

    pub fn cycles_to_seconds(&self, cycles: u64) -> f64 {
        cycles as f64 / self.clock_hz
    }

    /// Cycles needed to move `bytes` over the off-chip channel, rounded up.
    pub fn transfer_cycles(&self, bytes: u64) -> u64 {
        if bytes == 0 {
            return 0;
        }
        (bytes as f64 * self.clock_hz / self.offchip_bytes_per_s).ceil() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ints = [
            ("s1", self.s1),
            ("s2", self.s2),
            ("onchip_bytes", self.onchip_bytes),
            ("bytes_per_elem", self.bytes_per_elem),
        ];
        if let Some((name, _)) = ints.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::NotPositive(name));
        }
        for (name, v) in [
            ("clock_hz", self.clock_hz),
            ("offchip_bytes_per_s", self.offchip_bytes_per_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::NotPositive(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HardwareDoc {
    s1: Option<u64>,
    s2: Option<u64>,
    clock_hz: Option<f64>,
    onchip_bytes: Option<u64>,
    offchip_bytes_per_s: Option<f64>,
    bytes_per_elem: Option<u64>,
    smooth: Option<SmoothDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SmoothDoc {
    #[serde(rename = "C")]
    c: Option<f64>,
    #[serde(rename = "B")]
    b: Option<f64>,
    v: Option<f64>,
}

/// A hardware document: the accelerator plus optional smooth-ceiling shape
/// constants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HardwareProfile {
    pub hw: HardwareConfig,
    pub smooth: SmoothShape,
}

/// Parses a hardware document (JSON if it starts with `{`, TOML otherwise).
/// Missing fields take the default profile's values.
pub fn parse_hardware(text: &str) -> Result<HardwareProfile, ConfigError> {
    let doc: HardwareDoc = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?
    };
    let d = HardwareConfig::default();
    let hw = HardwareConfig {
        s1: doc.s1.unwrap_or(d.s1),
        s2: doc.s2.unwrap_or(d.s2),
        clock_hz: doc.clock_hz.unwrap_or(d.clock_hz),
        onchip_bytes: doc.onchip_bytes.unwrap_or(d.onchip_bytes),
        offchip_bytes_per_s: doc.offchip_bytes_per_s.unwrap_or(d.offchip_bytes_per_s),
        bytes_per_elem: doc.bytes_per_elem.unwrap_or(d.bytes_per_elem),
    };
    hw.validate()?;
    let mut smooth = SmoothShape::default();
    if let Some(s) = doc.smooth {
        smooth.c = s.c.unwrap_or(smooth.c);
        smooth.b = s.b.unwrap_or(smooth.b);
        smooth.v = s.v.unwrap_or(smooth.v);
        for (name, v) in [
            ("smooth.C", smooth.c),
            ("smooth.B", smooth.b),
            ("smooth.v", smooth.v),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::NotPositive(name));
            }
        }
    }
    Ok(HardwareProfile { hw, smooth })
}
