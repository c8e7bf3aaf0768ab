//! Layer and network cost models: the exact tile-count model and the FLOPS,
//! roofline and lookup-table baselines.

mod baseline;
mod config;
mod hard;
mod lut;

pub use baseline::{flops_cost, flops_cycles, memory_cycles, roofline_cost};
pub use config::{parse_hardware, ConfigError, HardwareConfig, HardwareProfile};
pub use hard::{hard_cycles, hard_layer_cost, macs};
pub use lut::{build_blackbox_lut, Lut, LutError, LutKey, LutOp, LutSpace, LUT_VERSION};

pub(crate) use hard::{activation_elems, weight_elems};

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::arch::{ArchError, LayerSpec, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("the blackbox model needs a lookup table")]
    MissingLut,
    #[error("layer {index} ({layer}) has no lookup-table entry")]
    LutMiss { index: usize, layer: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CostModelKind {
    Hard,
    Flops,
    Roofline,
    Blackbox,
}

impl CostModelKind {
    pub fn name(self) -> &'static str {
        match self {
            CostModelKind::Hard => "hard",
            CostModelKind::Flops => "flops",
            CostModelKind::Roofline => "roofline",
            CostModelKind::Blackbox => "blackbox",
        }
    }
}

impl fmt::Display for CostModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(CostModelKind::Hard),
            "flops" => Ok(CostModelKind::Flops),
            "roofline" => Ok(CostModelKind::Roofline),
            "blackbox" => Ok(CostModelKind::Blackbox),
            other => Err(format!("unknown cost model `{other}`")),
        }
    }
}

/// Cost of one layer under some model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerCost {
    pub macs: u64,
    pub runtime_cycles: u64,
    pub runtime_s: f64,
    pub utilization: f64,
    pub weight_bytes: u64,
    pub activation_bytes: u64,
}

impl LayerCost {
    /// Derives seconds and utilization from a cycle count. Layers that take no
    /// time count as fully utilized.
    pub fn new(layer: &LayerSpec, hw: &HardwareConfig, runtime_cycles: u64) -> Self {
        let macs = macs(layer);
        let utilization = if runtime_cycles == 0 {
            1.0
        } else {
            (macs as f64 / (hw.peak_macs_per_cycle() as f64 * runtime_cycles as f64)).min(1.0)
        };
        LayerCost {
            macs,
            runtime_cycles,
            runtime_s: hw.cycles_to_seconds(runtime_cycles),
            utilization,
            weight_bytes: weight_elems(layer) * hw.bytes_per_elem,
            activation_bytes: activation_elems(layer) * hw.bytes_per_elem,
        }
    }

    /// Utilization as an exact ratio `macs / (s1 s2 cycles)`.
    pub fn utilization_exact(&self, hw: &HardwareConfig) -> Ratio<u128> {
        if self.runtime_cycles == 0 {
            return Ratio::from_integer(1);
        }
        Ratio::new(
            self.macs as u128,
            hw.peak_macs_per_cycle() as u128 * self.runtime_cycles as u128,
        )
    }
}

/// Sum of per-layer costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkCost {
    pub layers: Vec<LayerCost>,
    pub total_cycles: u64,
    pub total_s: f64,
    pub total_macs: u64,
    /// `total_macs / (s1 s2 total_cycles)`, or 1 for a network that takes no time.
    pub network_utilization: f64,
}

impl NetworkCost {
    pub fn from_layers(layers: Vec<LayerCost>, hw: &HardwareConfig) -> Self {
        let total_cycles = layers.iter().map(|l| l.runtime_cycles).sum();
        let total_macs = layers.iter().map(|l| l.macs).sum();
        let network_utilization = if total_cycles == 0 {
            1.0
        } else {
            total_macs as f64 / (hw.peak_macs_per_cycle() as f64 * total_cycles as f64)
        };
        NetworkCost {
            layers,
            total_cycles,
            total_s: hw.cycles_to_seconds(total_cycles),
            total_macs,
            network_utilization,
        }
    }

    pub fn utilization_exact(&self, hw: &HardwareConfig) -> Ratio<u128> {
        if self.total_cycles == 0 {
            return Ratio::from_integer(1);
        }
        Ratio::new(
            self.total_macs as u128,
            hw.peak_macs_per_cycle() as u128 * self.total_cycles as u128,
        )
    }
}

/// Cost of a single layer under `kind`.
pub fn layer_cost(
    layer: &LayerSpec,
    hw: &HardwareConfig,
    kind: CostModelKind,
    lut: Option<&Lut>,
) -> Result<LayerCost, ModelError> {
    Ok(match kind {
        CostModelKind::Hard => hard_layer_cost(layer, hw),
        CostModelKind::Flops => flops_cost(layer, hw),
        CostModelKind::Roofline => roofline_cost(layer, hw),
        CostModelKind::Blackbox => {
            let lut = lut.ok_or(ModelError::MissingLut)?;
            if !layer.kind.is_compute() {
                return Ok(LayerCost::new(layer, hw, 0));
            }
            let cycles = lut.query(layer).ok_or_else(|| ModelError::LutMiss {
                index: 0,
                layer: layer.to_string(),
            })?;
            LayerCost::new(layer, hw, cycles)
        }
    })
}

pub fn layers_cost(
    layers: &[LayerSpec],
    hw: &HardwareConfig,
    kind: CostModelKind,
    lut: Option<&Lut>,
) -> Result<NetworkCost, ModelError> {
    if kind == CostModelKind::Blackbox && lut.is_none() {
        return Err(ModelError::MissingLut);
    }
    let costs = layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            layer_cost(l, hw, kind, lut).map_err(|e| match e {
                ModelError::LutMiss { layer, .. } => ModelError::LutMiss { index: i, layer },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NetworkCost::from_layers(costs, hw))
}

/// Cost of a whole network: the sum of its layers' costs.
pub fn network_cost(
    spec: &NetworkSpec,
    hw: &HardwareConfig,
    kind: CostModelKind,
    lut: Option<&Lut>,
) -> Result<NetworkCost, ModelError> {
    layers_cost(&spec.layers()?, hw, kind, lut)
}
