//! Differentiable relaxation of the exact cost model.
//!
//! Every `ceil` in the tile-count formulas is replaced by a sum of generalized
//! logistic steps, and channel counts become [`DiffScalar`]s so that runtime,
//! utilization and the hardware loss carry first derivatives with respect to
//! the cell widths.

mod ceil;
mod diff;

pub use ceil::{smooth_ceil, smooth_ceil_f64, SmoothParams, SmoothShape};
pub use diff::{DiffScalar, VarId};

use serde::Serialize;
use thiserror::Error;

use crate::arch::{ArchError, Channels, LayerKind, LayerTemplate, NetworkSpec};
use crate::hw_model::HardwareConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothError {
    #[error("smooth ceiling argument {x} outside (0, {x_max}]")]
    Domain { x: f64, x_max: f64 },
    #[error("invalid loss coefficients: lambda and beta must be finite and non-negative")]
    Coefficients,
    #[error("expected {expected} channel variables, got {got}")]
    Arity { expected: usize, got: usize },
    #[error(transparent)]
    Arch(#[from] ArchError),
}

/// Weights of the latency and utilization terms of the hardware loss
/// `lambda * runtime_s - beta * utilization`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardwareLossParams {
    pub lambda: f64,
    pub beta: f64,
}

impl HardwareLossParams {
    pub fn new(lambda: f64, beta: f64) -> Result<Self, SmoothError> {
        let p = HardwareLossParams { lambda, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SmoothError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.lambda) && ok(self.beta) {
            Ok(())
        } else {
            Err(SmoothError::Coefficients)
        }
    }

    /// The same loss on plain numbers.
    pub fn eval(&self, runtime_s: f64, utilization: f64) -> f64 {
        self.lambda * runtime_s - self.beta * utilization
    }
}

/// A layer whose channel counts are differentiable.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothLayer {
    pub kind: LayerKind,
    pub k1: u64,
    pub k2: u64,
    pub stride: u64,
    pub c: DiffScalar,
    pub f: DiffScalar,
    pub h: u64,
    pub w: u64,
    pub b: u64,
}

impl SmoothLayer {
    pub fn from_template(t: &LayerTemplate, widths: &[DiffScalar]) -> Self {
        let ch = |c: Channels| match c {
            Channels::Fixed(v) => DiffScalar::constant(v as f64),
            Channels::Cell(i) => widths[i].clone(),
        };
        SmoothLayer {
            kind: t.kind,
            k1: t.k1,
            k2: t.k2,
            stride: t.stride,
            c: ch(t.c),
            f: ch(t.f),
            h: t.h,
            w: t.w,
            b: t.b,
        }
    }

    fn stream_rows(&self) -> f64 {
        match self.kind {
            LayerKind::FullyConnected => self.b as f64,
            _ => (self.h.div_ceil(self.stride) * self.w.div_ceil(self.stride) * self.b) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothCost {
    pub macs: DiffScalar,
    pub cycles: DiffScalar,
    pub utilization: DiffScalar,
}

fn sceil(x: &DiffScalar, p: &SmoothParams) -> Result<DiffScalar, SmoothError> {
    smooth_ceil(x, p)
}

/// Smooth cycles and MACs of a layer, before utilization.
fn smooth_parts(
    l: &SmoothLayer,
    hw: &HardwareConfig,
    p: &SmoothParams,
) -> Result<(DiffScalar, DiffScalar), SmoothError> {
    let (s1, s2) = (hw.s1 as f64, hw.s2 as f64);
    let kk = (l.k1 * l.k2) as f64;
    let rows = l.stream_rows();
    Ok(match l.kind {
        LayerKind::Conv | LayerKind::DilatedConv => {
            let tiles = sceil(&(&l.c * (kk / s1)), p)? * sceil(&(&l.f / s2), p)?;
            (tiles * rows, &l.c * &l.f * (kk * rows))
        }
        LayerKind::DepthwiseConv => {
            let per_channel = sceil(&DiffScalar::constant(kk / s1), p)?;
            (&l.c * &per_channel * rows, &l.c * (kk * rows))
        }
        LayerKind::FullyConnected => {
            let tiles = sceil(&(&l.c / s1), p)? * sceil(&(&l.f / s2), p)?;
            (tiles * rows, &l.c * &l.f * rows)
        }
        LayerKind::DepthwiseSeparableConv => {
            let dw = SmoothLayer {
                kind: LayerKind::DepthwiseConv,
                f: l.c.clone(),
                ..l.clone()
            };
            let pw = SmoothLayer {
                kind: LayerKind::Conv,
                k1: 1,
                k2: 1,
                stride: 1,
                h: l.h.div_ceil(l.stride),
                w: l.w.div_ceil(l.stride),
                ..l.clone()
            };
            let (dc, dm) = smooth_parts(&dw, hw, p)?;
            let (pc, pm) = smooth_parts(&pw, hw, p)?;
            (dc + pc, dm + pm)
        }
        LayerKind::Identity
        | LayerKind::Zero
        | LayerKind::MaxPool
        | LayerKind::BatchNorm
        | LayerKind::ReLU => (DiffScalar::constant(0.0), DiffScalar::constant(0.0)),
    })
}

fn ratio_utilization(macs: &DiffScalar, cycles: &DiffScalar, hw: &HardwareConfig) -> DiffScalar {
    if cycles.value() == 0.0 {
        DiffScalar::constant(1.0)
    } else {
        macs / &(cycles * hw.peak_macs_per_cycle() as f64)
    }
}

/// Smooth cycles and utilization of one layer.
pub fn smooth_layer_cost(
    l: &SmoothLayer,
    hw: &HardwareConfig,
    p: &SmoothParams,
) -> Result<SmoothCost, SmoothError> {
    let (cycles, macs) = smooth_parts(l, hw, p)?;
    let utilization = ratio_utilization(&macs, &cycles, hw);
    Ok(SmoothCost {
        macs,
        cycles,
        utilization,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothNetworkCost {
    pub cycles: DiffScalar,
    pub macs: DiffScalar,
    pub runtime_s: DiffScalar,
    pub utilization: DiffScalar,
}

/// A network lowered once and evaluated for many width assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothNetwork {
    templates: Vec<LayerTemplate>,
    num_widths: usize,
}

impl SmoothNetwork {
    pub fn new(spec: &NetworkSpec) -> Result<Self, SmoothError> {
        Ok(SmoothNetwork {
            templates: crate::arch::lower(spec)?,
            num_widths: spec.num_widths(),
        })
    }

    pub fn templates(&self) -> &[LayerTemplate] {
        &self.templates
    }

    pub fn num_widths(&self) -> usize {
        self.num_widths
    }

    /// Smallest `x_max` (plus one step of headroom) that covers every ceiling
    /// argument with all widths at `max_width`.
    pub fn covering_x_max(&self, hw: &HardwareConfig, max_width: u64) -> f64 {
        let widths = vec![max_width; self.num_widths];
        let (s1, s2) = (hw.s1 as f64, hw.s2 as f64);
        let mut x: f64 = 1.0;
        for t in &self.templates {
            let l = t.resolve(&widths);
            let kk = (l.k1 * l.k2) as f64;
            let (c, f) = (l.c as f64, l.f as f64);
            x = x.max(match l.kind {
                LayerKind::Conv | LayerKind::DilatedConv => (kk * c / s1).max(f / s2),
                LayerKind::DepthwiseConv => kk / s1,
                LayerKind::FullyConnected => (c / s1).max(f / s2),
                LayerKind::DepthwiseSeparableConv => (kk / s1).max(c / s1).max(f / s2),
                _ => 0.0,
            });
        }
        x.ceil() + 1.0
    }

    /// Independent variables for the given widths, one per cell.
    pub fn variables(widths: &[f64]) -> Vec<DiffScalar> {
        widths
            .iter()
            .enumerate()
            .map(|(i, &w)| DiffScalar::variable(w, VarId(i)))
            .collect()
    }

    pub fn cost(
        &self,
        widths: &[DiffScalar],
        hw: &HardwareConfig,
        p: &SmoothParams,
    ) -> Result<SmoothNetworkCost, SmoothError> {
        if widths.len() != self.num_widths {
            return Err(SmoothError::Arity {
                expected: self.num_widths,
                got: widths.len(),
            });
        }
        let mut cycles = DiffScalar::constant(0.0);
        let mut macs = DiffScalar::constant(0.0);
        for t in &self.templates {
            let (c, m) = smooth_parts(&SmoothLayer::from_template(t, widths), hw, p)?;
            cycles = cycles + c;
            macs = macs + m;
        }
        let utilization = ratio_utilization(&macs, &cycles, hw);
        let runtime_s = &cycles / hw.clock_hz;
        Ok(SmoothNetworkCost {
            cycles,
            macs,
            runtime_s,
            utilization,
        })
    }

    pub fn loss(
        &self,
        widths: &[DiffScalar],
        hw: &HardwareConfig,
        p: &SmoothParams,
        hl: &HardwareLossParams,
    ) -> Result<DiffScalar, SmoothError> {
        hl.validate()?;
        let cost = self.cost(widths, hw, p)?;
        Ok(&cost.runtime_s * hl.lambda - &cost.utilization * hl.beta)
    }
}

/// `lambda * smooth runtime (s) - beta * smooth network utilization`, with
/// partials for every cell-width variable in `widths`.
pub fn hardware_loss(
    spec: &NetworkSpec,
    widths: &[DiffScalar],
    hw: &HardwareConfig,
    p: &SmoothParams,
    hl: &HardwareLossParams,
) -> Result<DiffScalar, SmoothError> {
    SmoothNetwork::new(spec)?.loss(widths, hw, p, hl)
}
