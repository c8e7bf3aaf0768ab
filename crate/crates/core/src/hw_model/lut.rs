//! Blackbox latency lookup table, filled from the simulator and queried by
//! nearest neighbour on every numeric axis.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::HardwareConfig;
use crate::arch::{LayerKind, LayerSpec};
use crate::sim::{simulate_layer, SimError};

pub const LUT_VERSION: u32 = 1;
const LUT_FORMAT: &str = "systolic-lut";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LutError {
    #[error("malformed lookup table: {0}")]
    Format(String),
    #[error("unsupported lookup table version {found} (expected {LUT_VERSION})")]
    Version { found: u32 },
    #[error("invalid lookup table space: {0}")]
    Space(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One operator family stored in the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LutOp {
    pub kind: LayerKind,
    pub k: u64,
    pub dilation: u64,
}

impl LutOp {
    pub const fn new(kind: LayerKind, k: u64, dilation: u64) -> Self {
        LutOp { kind, k, dilation }
    }
}

/// The dimensions a table is built over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LutSpace {
    pub ops: Vec<LutOp>,
    pub min_c: u64,
    pub max_c: u64,
    pub quantum: u64,
    pub spatial: Vec<u64>,
    pub batches: Vec<u64>,
}

impl Default for LutSpace {
    /// Every cell operator plus 1x1 convolutions and classifiers, channels
    /// 64..280 quantized by 16.
    fn default() -> Self {
        LutSpace {
            ops: vec![
                LutOp::new(LayerKind::Conv, 1, 1),
                LutOp::new(LayerKind::Conv, 3, 1),
                LutOp::new(LayerKind::Conv, 5, 1),
                LutOp::new(LayerKind::DilatedConv, 3, 2),
                LutOp::new(LayerKind::DilatedConv, 5, 2),
                LutOp::new(LayerKind::DepthwiseConv, 3, 1),
                LutOp::new(LayerKind::DepthwiseConv, 5, 1),
                LutOp::new(LayerKind::DepthwiseSeparableConv, 3, 1),
                LutOp::new(LayerKind::DepthwiseSeparableConv, 5, 1),
                LutOp::new(LayerKind::FullyConnected, 1, 1),
            ],
            min_c: 64,
            max_c: 280,
            quantum: 16,
            spatial: vec![4, 8, 16, 32, 64, 128],
            batches: vec![1],
        }
    }
}

impl LutSpace {
    /// Multiples of `quantum` covering `[min_c, max_c]`.
    pub fn channel_grid(&self) -> Vec<u64> {
        let q = self.quantum;
        let lo = (self.min_c / q * q).max(q);
        let hi = self.max_c.div_ceil(q) * q;
        (lo..=hi).step_by(q as usize).collect()
    }

    fn validate(&self) -> Result<(), LutError> {
        if self.quantum == 0 || self.min_c == 0 || self.min_c > self.max_c {
            return Err(LutError::Space(format!(
                "channel range {}..{} with quantum {}",
                self.min_c, self.max_c, self.quantum
            )));
        }
        if self.ops.is_empty() || self.spatial.is_empty() || self.batches.is_empty() {
            return Err(LutError::Space(
                "ops, spatial sizes and batches must be non-empty".into(),
            ));
        }
        if self.spatial.contains(&0) || self.batches.contains(&0) {
            return Err(LutError::Space(
                "spatial sizes and batches must be positive".into(),
            ));
        }
        if let Some(op) = self.ops.iter().find(|op| !op.kind.is_compute()) {
            return Err(LutError::Space(format!(
                "`{}` has no cost to tabulate",
                op.kind
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LutKey {
    pub op: LutOp,
    pub c: u64,
    pub f: u64,
    pub h: u64,
    pub w: u64,
    pub b: u64,
}

impl LutKey {
    pub fn to_layer(&self) -> LayerSpec {
        LayerSpec {
            kind: self.op.kind,
            k1: self.op.k,
            k2: self.op.k,
            dilation: self.op.dilation,
            stride: 1,
            c: self.c,
            f: self.f,
            h: self.h,
            w: self.w,
            b: self.b,
        }
    }
}

/// Immutable table of simulated cycle counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Lut {
    pub hw: HardwareConfig,
    pub quantum: u64,
    pub c_grid: Vec<u64>,
    pub spatial: Vec<u64>,
    pub batches: Vec<u64>,
    entries: BTreeMap<LutKey, u64>,
}

/// Closest value in an ascending grid; ties go to the smaller value.
fn nearest(grid: &[u64], x: u64) -> u64 {
    let i = grid.partition_point(|&g| g < x);
    match (i.checked_sub(1).map(|j| grid[j]), grid.get(i).copied()) {
        (Some(lo), Some(hi)) => {
            if x - lo <= hi - x {
                lo
            } else {
                hi
            }
        }
        (Some(lo), None) => lo,
        (None, Some(hi)) => hi,
        (None, None) => x,
    }
}

fn space_keys(space: &LutSpace) -> Vec<LutKey> {
    let grid = space.channel_grid();
    let mut keys = Vec::new();
    for &op in &space.ops {
        let spatial: Vec<u64> = if op.kind == LayerKind::FullyConnected {
            vec![1]
        } else {
            space.spatial.clone()
        };
        for &c in &grid {
            let fs: &[u64] = if op.kind == LayerKind::DepthwiseConv {
                std::slice::from_ref(&c)
            } else {
                &grid
            };
            for &f in fs {
                for &hw in &spatial {
                    for &b in &space.batches {
                        keys.push(LutKey {
                            op,
                            c,
                            f,
                            h: hw,
                            w: hw,
                            b,
                        });
                    }
                }
            }
        }
    }
    keys
}

/// Simulates every point of `space` (in parallel) and collects the cycle
/// counts.
pub fn build_blackbox_lut(space: &LutSpace, hw: &HardwareConfig) -> Result<Lut, LutError> {
    space.validate()?;
    let mut spatial = space.spatial.clone();
    spatial.sort_unstable();
    spatial.dedup();
    let mut batches = space.batches.clone();
    batches.sort_unstable();
    batches.dedup();
    let entries = space_keys(space)
        .into_par_iter()
        .map(|key| simulate_layer(&key.to_layer(), hw).map(|r| (key, r.total_cycles)))
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    Ok(Lut {
        hw: *hw,
        quantum: space.quantum,
        c_grid: space.channel_grid(),
        spatial,
        batches,
        entries,
    })
}

impl Lut {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &LutKey) -> Option<u64> {
        self.entries.get(key).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&LutKey, &u64)> {
        self.entries.iter()
    }

    /// Key of the nearest table point to `layer`.
    pub fn nearest_key(&self, layer: &LayerSpec) -> LutKey {
        let c = nearest(&self.c_grid, layer.c);
        let f = if layer.kind == LayerKind::DepthwiseConv {
            c
        } else {
            nearest(&self.c_grid, layer.f)
        };
        let (h, w) = if layer.kind == LayerKind::FullyConnected {
            (1, 1)
        } else {
            (
                nearest(&self.spatial, layer.h),
                nearest(&self.spatial, layer.w),
            )
        };
        LutKey {
            op: LutOp::new(layer.kind, layer.k1, layer.dilation),
            c,
            f,
            h,
            w,
            b: nearest(&self.batches, layer.b),
        }
    }

    /// Cycles of the nearest table point, or `None` when the operator family
    /// is not in the table. Non-compute layers cost nothing.
    pub fn query(&self, layer: &LayerSpec) -> Option<u64> {
        if !layer.kind.is_compute() {
            return Some(0);
        }
        if layer.k1 != layer.k2 || layer.stride != 1 {
            return None;
        }
        self.get(&self.nearest_key(layer))
    }

    pub fn to_json(&self) -> String {
        let doc = LutDoc {
            format: LUT_FORMAT.to_string(),
            version: LUT_VERSION,
            hw: self.hw,
            quantum: self.quantum,
            c_grid: self.c_grid.clone(),
            spatial: self.spatial.clone(),
            batches: self.batches.clone(),
            entries: self
                .entries
                .iter()
                .map(|(k, &cycles)| {
                    EntryDoc(
                        k.op.kind.name().to_string(),
                        k.op.k,
                        k.op.dilation,
                        k.c,
                        k.f,
                        k.h,
                        k.w,
                        k.b,
                        cycles,
                    )
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("lookup table is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Lut, LutError> {
        let header: LutHeader =
            serde_json::from_str(text).map_err(|e| LutError::Format(e.to_string()))?;
        if header.format != LUT_FORMAT {
            return Err(LutError::Format(format!(
                "unexpected format tag `{}`",
                header.format
            )));
        }
        if header.version != LUT_VERSION {
            return Err(LutError::Version {
                found: header.version,
            });
        }
        let doc: LutDoc =
            serde_json::from_str(text).map_err(|e| LutError::Format(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for EntryDoc(kind, k, dilation, c, f, h, w, b, cycles) in doc.entries {
            let kind = LayerKind::from_name(&kind)
                .ok_or_else(|| LutError::Format(format!("unknown layer kind `{kind}`")))?;
            let key = LutKey {
                op: LutOp::new(kind, k, dilation),
                c,
                f,
                h,
                w,
                b,
            };
            entries.insert(key, cycles);
        }
        Ok(Lut {
            hw: doc.hw,
            quantum: doc.quantum,
            c_grid: doc.c_grid,
            spatial: doc.spatial,
            batches: doc.batches,
            entries,
        })
    }
}

#[derive(Deserialize)]
struct LutHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct LutDoc {
    format: String,
    version: u32,
    hw: HardwareConfig,
    quantum: u64,
    c_grid: Vec<u64>,
    spatial: Vec<u64>,
    batches: Vec<u64>,
    entries: Vec<EntryDoc>,
}

#[derive(Serialize, Deserialize)]
struct EntryDoc(String, u64, u64, u64, u64, u64, u64, u64, u64);

#[cfg(test)]
mod tests {
    use super::*;

    fn small_space() -> LutSpace {
        LutSpace {
            ops: vec![
                LutOp::new(LayerKind::Conv, 3, 1),
                LutOp::new(LayerKind::DepthwiseConv, 3, 1),
                LutOp::new(LayerKind::FullyConnected, 1, 1),
            ],
            spatial: vec![8, 32],
            ..LutSpace::default()
        }
    }

    #[test]
    fn channel_grid_covers_range() {
        let grid = LutSpace::default().channel_grid();
        assert_eq!(grid.first(), Some(&64));
        assert_eq!(grid.last(), Some(&288));
        assert_eq!(grid.len(), 15);
    }

    #[test]
    fn nearest_ties_go_down() {
        let grid = [64, 80, 96];
        assert_eq!(nearest(&grid, 72), 64);
        assert_eq!(nearest(&grid, 73), 80);
        assert_eq!(nearest(&grid, 10), 64);
        assert_eq!(nearest(&grid, 500), 96);
    }

    #[test]
    fn query_snaps_to_nearest_point() {
        let hw = HardwareConfig::default();
        let lut = build_blackbox_lut(&small_space(), &hw).unwrap();
        let on_grid = LayerSpec::conv(3, 128, 128, 32, 32, 1);
        let off_grid = LayerSpec::conv(3, 130, 128, 32, 32, 1);
        assert_eq!(lut.nearest_key(&off_grid).c, 128);
        assert_eq!(lut.query(&off_grid), lut.query(&on_grid));
        let simulated = simulate_layer(&on_grid, &hw).unwrap().total_cycles;
        assert_eq!(lut.query(&on_grid), Some(simulated));
    }

    #[test]
    fn missing_family_is_none() {
        let lut = build_blackbox_lut(&small_space(), &HardwareConfig::default()).unwrap();
        assert_eq!(lut.query(&LayerSpec::conv(5, 64, 64, 8, 8, 1)), None);
        let pool = LayerSpec::passthrough(LayerKind::MaxPool, 64, 8, 8, 1);
        assert_eq!(lut.query(&pool), Some(0));
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let lut = build_blackbox_lut(&small_space(), &HardwareConfig::default()).unwrap();
        let text = lut.to_json();
        assert_eq!(Lut::from_json(&text).unwrap(), lut);
        let bumped = text.replacen("\"version\":1", "\"version\":7", 1);
        assert_eq!(Lut::from_json(&bumped), Err(LutError::Version { found: 7 }));
    }

    #[test]
    fn rejects_bad_space() {
        let space = LutSpace {
            min_c: 300,
            max_c: 200,
            ..LutSpace::default()
        };
        assert!(matches!(
            build_blackbox_lut(&space, &HardwareConfig::default()),
            Err(LutError::Space(_))
        ));
    }
}
