//! Exact tile-count model.
//!
//! A convolution lowered to a `(hwb) x (k1 k2 c) x f` matrix product is cut
//! into `ceil(k1 k2 c / s1) * ceil(f / s2)` weight tiles; each tile occupies
//! the whole array for `hwb` cycles no matter how many of its rows and columns
//! are used.

use super::{HardwareConfig, LayerCost};
use crate::arch::{LayerKind, LayerSpec};

/// Multiply-accumulate count of a layer.
pub fn macs(layer: &LayerSpec) -> u64 {
    let rows = layer.stream_rows();
    match layer.kind {
        LayerKind::Conv | LayerKind::DilatedConv => rows * layer.k1 * layer.k2 * layer.c * layer.f,
        LayerKind::DepthwiseConv => rows * layer.k1 * layer.k2 * layer.c,
        LayerKind::FullyConnected => layer.b * layer.c * layer.f,
        LayerKind::DepthwiseSeparableConv => {
            let (dw, pw) = layer.split_separable().expect("separable layer");
            macs(&dw) + macs(&pw)
        }
        LayerKind::Identity
        | LayerKind::Zero
        | LayerKind::MaxPool
        | LayerKind::BatchNorm
        | LayerKind::ReLU => 0,
    }
}

/// Weight footprint in elements.
pub(crate) fn weight_elems(layer: &LayerSpec) -> u64 {
    match layer.kind {
        LayerKind::Conv | LayerKind::DilatedConv => layer.k1 * layer.k2 * layer.c * layer.f,
        LayerKind::DepthwiseConv => layer.k1 * layer.k2 * layer.c,
        LayerKind::FullyConnected => layer.c * layer.f,
        LayerKind::DepthwiseSeparableConv => {
            let (dw, pw) = layer.split_separable().expect("separable layer");
            weight_elems(&dw) + weight_elems(&pw)
        }
        _ => 0,
    }
}

/// Input plus output activation footprint in elements. Zero-cost layers
/// move nothing.
pub(crate) fn activation_elems(layer: &LayerSpec) -> u64 {
    match layer.kind {
        LayerKind::Conv | LayerKind::DilatedConv | LayerKind::DepthwiseConv => {
            layer.h * layer.w * layer.c * layer.b + layer.stream_rows() * layer.f
        }
        LayerKind::FullyConnected => layer.b * (layer.c + layer.f),
        LayerKind::DepthwiseSeparableConv => {
            let (dw, pw) = layer.split_separable().expect("separable layer");
            activation_elems(&dw) + activation_elems(&pw)
        }
        _ => 0,
    }
}

/// Exact runtime in cycles.
pub fn hard_cycles(layer: &LayerSpec, hw: &HardwareConfig) -> u64 {
    let rows = layer.stream_rows();
    match layer.kind {
        LayerKind::Conv | LayerKind::DilatedConv => {
            (layer.k1 * layer.k2 * layer.c).div_ceil(hw.s1) * layer.f.div_ceil(hw.s2) * rows
        }
        // One array column per channel, repeated for every channel.
        LayerKind::DepthwiseConv => layer.c * (layer.k1 * layer.k2).div_ceil(hw.s1) * rows,
        LayerKind::FullyConnected => layer.c.div_ceil(hw.s1) * layer.f.div_ceil(hw.s2) * layer.b,
        LayerKind::DepthwiseSeparableConv => {
            let (dw, pw) = layer.split_separable().expect("separable layer");
            hard_cycles(&dw, hw) + hard_cycles(&pw, hw)
        }
        _ => 0,
    }
}

pub fn hard_layer_cost(layer: &LayerSpec, hw: &HardwareConfig) -> LayerCost {
    LayerCost::new(layer, hw, hard_cycles(layer, hw))
}
