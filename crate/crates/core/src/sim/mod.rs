//! Tile-level weight-stationary simulator.
//!
//! Each layer is lowered to one or more matrix products. The weight matrix is
//! cut into `s1 x s2` tiles; a tile is pinned to the array while the matching
//! slice of the activation matrix streams through it, one row per cycle.
//! Off-chip traffic is priced at the configured bandwidth and overlaps
//! perfectly with compute (double buffering), so a layer part takes
//! `max(compute, dram)` cycles. Layers run back to back.

use serde::Serialize;
use thiserror::Error;

use crate::arch::{ArchError, LayerKind, LayerSpec, NetworkSpec};
use crate::hw_model::HardwareConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("{}: a single weight tile needs {needed} bytes on chip, only {available} available", layer_label(*.layer))]
    Infeasible {
        layer: Option<usize>,
        needed: u64,
        available: u64,
    },
}

fn layer_label(layer: Option<usize>) -> String {
    layer.map_or_else(|| "layer".to_string(), |i| format!("layer {i}"))
}

/// One `m x k` by `k x n` product, repeated `repeat` times on independent
/// operands (depthwise convolution runs one product per channel).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GemmShape {
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub repeat: u64,
    /// Raw input activation elements per repetition (before im2col).
    pub in_elems: u64,
    /// Output activation elements per repetition.
    pub out_elems: u64,
}

/// Matrix products a layer lowers to; empty for layers without compute.
pub fn lower_to_gemm(layer: &LayerSpec) -> Vec<GemmShape> {
    let rows = layer.stream_rows();
    match layer.kind {
        LayerKind::Conv | LayerKind::DilatedConv => vec![GemmShape {
            m: rows,
            k: layer.k1 * layer.k2 * layer.c,
            n: layer.f,
            repeat: 1,
            in_elems: layer.h * layer.w * layer.c * layer.b,
            out_elems: rows * layer.f,
        }],
        LayerKind::DepthwiseConv => vec![GemmShape {
            m: rows,
            k: layer.k1 * layer.k2,
            n: 1,
            repeat: layer.c,
            in_elems: layer.h * layer.w * layer.b,
            out_elems: rows,
        }],
        LayerKind::FullyConnected => vec![GemmShape {
            m: layer.b,
            k: layer.c,
            n: layer.f,
            repeat: 1,
            in_elems: layer.b * layer.c,
            out_elems: layer.b * layer.f,
        }],
        LayerKind::DepthwiseSeparableConv => {
            let (dw, pw) = layer.split_separable().expect("separable layer");
            let mut parts = lower_to_gemm(&dw);
            parts.extend(lower_to_gemm(&pw));
            parts
        }
        LayerKind::Identity
        | LayerKind::Zero
        | LayerKind::MaxPool
        | LayerKind::BatchNorm
        | LayerKind::ReLU => {
            vec![]
        }
    }
}

/// One weight tile mapped onto the array. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TileJob {
    /// Repetition (channel, for depthwise) this tile belongs to, 0-based.
    pub group: u64,
    pub i: u64,
    pub j: u64,
    pub rows: u64,
    pub cols: u64,
    pub stream_len: u64,
    pub weight_bytes: u64,
    pub activation_bytes: u64,
}

/// One trace line: `layer_idx, tile_i, tile_j, start_cycle, end_cycle, bytes_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TileRecord {
    pub layer_idx: usize,
    pub tile_i: u64,
    pub tile_j: u64,
    pub start_cycle: u64,
    pub end_cycle: u64,
    pub bytes_in: u64,
}

impl TileRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.layer_idx,
            self.tile_i,
            self.tile_j,
            self.start_cycle,
            self.end_cycle,
            self.bytes_in
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub macs: u64,
    pub compute_cycles: u64,
    pub dram_cycles: u64,
    pub total_cycles: u64,
    pub dram_bytes: u64,
    pub tiles: u64,
    pub utilization: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TileRecord>,
}

impl SimResult {
    pub fn memory_bound(&self) -> bool {
        self.dram_cycles > self.compute_cycles
    }
}

fn utilization(macs: u64, cycles: u64, hw: &HardwareConfig) -> f64 {
    if cycles == 0 {
        1.0
    } else {
        macs as f64 / (hw.peak_macs_per_cycle() as f64 * cycles as f64)
    }
}

/// Whether a layer part's activations stay on chip for its whole run.
fn activations_resident(g: &GemmShape, hw: &HardwareConfig) -> bool {
    let act = (g.in_elems + g.out_elems) * g.repeat * hw.bytes_per_elem;
    let tile = 2 * g.k.min(hw.s1) * g.n.min(hw.s2) * hw.bytes_per_elem;
    act + tile <= hw.onchip_bytes
}

/// Enumerates the tiles of one product in execution order: repetition, then
/// weight-row block `i`, then column block `j`. Activations are fetched once
/// when they fit on chip; otherwise the slice for row block `i` is fetched
/// once and reused across all column blocks.
pub fn tile_jobs(g: &GemmShape, hw: &HardwareConfig) -> Vec<TileJob> {
    let bpe = hw.bytes_per_elem;
    let row_blocks = g.k.div_ceil(hw.s1);
    let col_blocks = g.n.div_ceil(hw.s2);
    let resident = activations_resident(g, hw);
    let mut jobs = Vec::with_capacity((g.repeat * row_blocks * col_blocks) as usize);
    for group in 0..g.repeat {
        for i in 1..=row_blocks {
            let rows = (g.k - (i - 1) * hw.s1).min(hw.s1);
            for j in 1..=col_blocks {
                let cols = (g.n - (j - 1) * hw.s2).min(hw.s2);
                let activation_bytes = match (resident, i, j) {
                    (true, 1, 1) => g.in_elems * bpe,
                    (false, _, 1) => g.m * rows * bpe,
                    _ => 0,
                };
                jobs.push(TileJob {
                    group,
                    i,
                    j,
                    rows,
                    cols,
                    stream_len: g.m,
                    weight_bytes: rows * cols * bpe,
                    activation_bytes,
                });
            }
        }
    }
    jobs
}

struct PartResult {
    macs: u64,
    compute: u64,
    dram: u64,
    bytes: u64,
    tiles: u64,
}

fn simulate_part(
    g: &GemmShape,
    hw: &HardwareConfig,
    trace: Option<(&mut Vec<TileRecord>, usize, u64)>,
) -> Result<PartResult, SimError> {
    let tile_bytes = 2 * g.k.min(hw.s1) * g.n.min(hw.s2) * hw.bytes_per_elem;
    if tile_bytes > hw.onchip_bytes {
        return Err(SimError::Infeasible {
            layer: None,
            needed: tile_bytes,
            available: hw.onchip_bytes,
        });
    }
    let jobs = tile_jobs(g, hw);
    let mut compute = 0;
    let mut bytes = 0;
    let mut macs = 0;
    for job in &jobs {
        compute += job.stream_len;
        bytes += job.weight_bytes + job.activation_bytes;
        macs += job.stream_len * job.rows * job.cols;
    }
    if !activations_resident(g, hw) {
        bytes += g.out_elems * g.repeat * hw.bytes_per_elem;
    }
    if let Some((records, layer_idx, start)) = trace {
        let mut t = start;
        for job in &jobs {
            // Depthwise tiles are indexed by channel in the column position.
            let tile_j = if g.repeat > 1 { job.group + 1 } else { job.j };
            records.push(TileRecord {
                layer_idx,
                tile_i: job.i,
                tile_j,
                start_cycle: t,
                end_cycle: t + job.stream_len,
                bytes_in: job.weight_bytes + job.activation_bytes,
            });
            t += job.stream_len;
        }
    }
    Ok(PartResult {
        macs,
        compute,
        dram: hw.transfer_cycles(bytes),
        bytes,
        tiles: jobs.len() as u64,
    })
}

fn simulate(
    layer: &LayerSpec,
    hw: &HardwareConfig,
    mut trace: Option<(&mut Vec<TileRecord>, usize, u64)>,
) -> Result<SimResult, SimError> {
    let mut out = SimResult {
        macs: 0,
        compute_cycles: 0,
        dram_cycles: 0,
        total_cycles: 0,
        dram_bytes: 0,
        tiles: 0,
        utilization: 1.0,
        trace: Vec::new(),
    };
    for g in lower_to_gemm(layer) {
        let part_trace = trace
            .as_mut()
            .map(|(records, idx, start)| (&mut **records, *idx, *start + out.total_cycles));
        let part = simulate_part(&g, hw, part_trace)?;
        out.macs += part.macs;
        out.compute_cycles += part.compute;
        out.dram_cycles += part.dram;
        out.dram_bytes += part.bytes;
        out.tiles += part.tiles;
        out.total_cycles += part.compute.max(part.dram);
    }
    out.utilization = utilization(out.macs, out.total_cycles, hw);
    Ok(out)
}

/// Simulates one layer.
pub fn simulate_layer(layer: &LayerSpec, hw: &HardwareConfig) -> Result<SimResult, SimError> {
    simulate(layer, hw, None)
}

/// Simulates one layer and records every tile, with cycle stamps starting at
/// `start_cycle`.
pub fn simulate_layer_traced(
    layer: &LayerSpec,
    hw: &HardwareConfig,
    layer_idx: usize,
    start_cycle: u64,
) -> Result<SimResult, SimError> {
    let mut records = Vec::new();
    let mut result = simulate(layer, hw, Some((&mut records, layer_idx, start_cycle)))?;
    result.trace = records;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSim {
    pub layers: Vec<SimResult>,
    pub compute_cycles: u64,
    pub dram_cycles: u64,
    pub total_cycles: u64,
    pub total_s: f64,
    pub total_macs: u64,
    pub utilization: f64,
}

impl NetworkSim {
    pub fn trace(&self) -> impl Iterator<Item = &TileRecord> {
        self.layers.iter().flat_map(|l| l.trace.iter())
    }
}

/// Simulates an already-lowered layer list sequentially.
pub fn simulate_layers(
    layers: &[LayerSpec],
    hw: &HardwareConfig,
    trace: bool,
) -> Result<NetworkSim, SimError> {
    let mut results = Vec::with_capacity(layers.len());
    let mut clock = 0;
    for (idx, layer) in layers.iter().enumerate() {
        let r = if trace {
            simulate_layer_traced(layer, hw, idx, clock)
        } else {
            simulate_layer(layer, hw)
        }
        .map_err(|e| match e {
            SimError::Infeasible {
                needed, available, ..
            } => SimError::Infeasible {
                layer: Some(idx),
                needed,
                available,
            },
            other => other,
        })?;
        clock += r.total_cycles;
        results.push(r);
    }
    let total_cycles = results.iter().map(|r| r.total_cycles).sum();
    let total_macs = results.iter().map(|r| r.macs).sum();
    Ok(NetworkSim {
        compute_cycles: results.iter().map(|r| r.compute_cycles).sum(),
        dram_cycles: results.iter().map(|r| r.dram_cycles).sum(),
        total_cycles,
        total_s: hw.cycles_to_seconds(total_cycles),
        total_macs,
        utilization: utilization(total_macs, total_cycles, hw),
        layers: results,
    })
}

pub fn simulate_network(
    spec: &NetworkSpec,
    hw: &HardwareConfig,
    trace: bool,
) -> Result<NetworkSim, SimError> {
    simulate_layers(&spec.layers()?, hw, trace)
}
