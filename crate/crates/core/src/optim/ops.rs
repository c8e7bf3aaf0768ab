use std::fmt;

use serde::Serialize;

use crate::arch::{CellSpec, LayerKind, LayerSpec};
use crate::hw_model::{hard_layer_cost, HardwareConfig};
use crate::smooth::HardwareLossParams;

/// Candidate operator on a cell edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOp {
    Conv3x3,
    Conv5x5,
    Dws3x3,
    Dws5x5,
    Dil3x3,
    Dil5x5,
    Identity,
    Zero,
}

impl CellOp {
    pub const ALL: [CellOp; 8] = [
        CellOp::Conv3x3,
        CellOp::Conv5x5,
        CellOp::Dws3x3,
        CellOp::Dws5x5,
        CellOp::Dil3x3,
        CellOp::Dil5x5,
        CellOp::Identity,
        CellOp::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellOp::Conv3x3 => "conv2d_3x3",
            CellOp::Conv5x5 => "conv2d_5x5",
            CellOp::Dws3x3 => "dws_3x3",
            CellOp::Dws5x5 => "dws_5x5",
            CellOp::Dil3x3 => "dil_3x3",
            CellOp::Dil5x5 => "dil_5x5",
            CellOp::Identity => "identity",
            CellOp::Zero => "zero",
        }
    }

    /// `(kind, kernel, dilation)`.
    pub fn parts(self) -> (LayerKind, u64, u64) {
        match self {
            CellOp::Conv3x3 => (LayerKind::Conv, 3, 1),
            CellOp::Conv5x5 => (LayerKind::Conv, 5, 1),
            CellOp::Dws3x3 => (LayerKind::DepthwiseSeparableConv, 3, 1),
            CellOp::Dws5x5 => (LayerKind::DepthwiseSeparableConv, 5, 1),
            CellOp::Dil3x3 => (LayerKind::DilatedConv, 3, 2),
            CellOp::Dil5x5 => (LayerKind::DilatedConv, 5, 2),
            CellOp::Identity => (LayerKind::Identity, 1, 1),
            CellOp::Zero => (LayerKind::Zero, 1, 1),
        }
    }

    /// The operator as a layer with `c = f = width` on an `h x w x b` input.
    pub fn layer(self, width: u64, h: u64, w: u64, b: u64) -> LayerSpec {
        let (kind, k, dilation) = self.parts();
        match kind {
            LayerKind::Conv => LayerSpec::conv(k, width, width, h, w, b),
            LayerKind::DepthwiseSeparableConv => LayerSpec::dws(k, width, width, h, w, b),
            LayerKind::DilatedConv => LayerSpec::dilated(k, dilation, width, width, h, w, b),
            other => LayerSpec::passthrough(other, width, h, w, b),
        }
    }
}

impl fmt::Display for CellOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpScore {
    pub op: CellOp,
    pub loss: f64,
    pub runtime_cycles: u64,
    pub utilization: f64,
}

/// Candidate ranking for one edge of a cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeRanking {
    pub src: u32,
    pub dst: u32,
    pub ranking: Vec<OpScore>,
}

/// Hard-model loss of every candidate operator at `width`, ranked by
/// ascending loss, then runtime, then operator order.
pub fn rank_operators(
    hw: &HardwareConfig,
    hl: &HardwareLossParams,
    width: u64,
    spatial: (u64, u64, u64),
) -> Vec<OpScore> {
    let (h, w, b) = spatial;
    let mut scores: Vec<OpScore> = CellOp::ALL
        .iter()
        .map(|&op| {
            let cost = hard_layer_cost(&op.layer(width, h, w, b), hw);
            OpScore {
                op,
                loss: hl.eval(cost.runtime_s, cost.utilization),
                runtime_cycles: cost.runtime_cycles,
                utilization: cost.utilization,
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        a.loss
            .total_cmp(&b.loss)
            .then(a.runtime_cycles.cmp(&b.runtime_cycles))
            .then(a.op.cmp(&b.op))
    });
    scores
}

/// Per-edge operator ranking for `cell` with every edge at `width` channels
/// on an `h x w x b` feature map.
pub fn score_operators(
    cell: &CellSpec,
    hw: &HardwareConfig,
    hl: &HardwareLossParams,
    width: u64,
    spatial: (u64, u64, u64),
) -> Vec<EdgeRanking> {
    let ranking = rank_operators(hw, hl, width, spatial);
    cell.edges
        .iter()
        .map(|e| EdgeRanking {
            src: e.src,
            dst: e.dst,
            ranking: ranking.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn position(r: &[OpScore], op: CellOp) -> usize {
        r.iter().position(|s| s.op == op).unwrap()
    }

    #[test]
    fn conv_beats_dws_at_array_width() {
        let hl = HardwareLossParams::new(1.0, 1.0).unwrap();
        let r = rank_operators(&HardwareConfig::default(), &hl, 128, (32, 32, 1));
        assert!(position(&r, CellOp::Conv3x3) < position(&r, CellOp::Dws3x3));
        assert!(position(&r, CellOp::Conv5x5) < position(&r, CellOp::Dws5x5));
    }

    #[test]
    fn passthrough_ops_score_minus_beta() {
        let hl = HardwareLossParams::new(3.0, 0.7).unwrap();
        let r = rank_operators(&HardwareConfig::default(), &hl, 96, (16, 16, 1));
        for op in [CellOp::Identity, CellOp::Zero] {
            assert_eq!(r[position(&r, op)].loss, -0.7);
        }
        // Ties between identity and zero resolve by operator order.
        assert!(position(&r, CellOp::Identity) < position(&r, CellOp::Zero));
    }

    #[test]
    fn ranking_invariant_under_joint_scaling() {
        let hw = HardwareConfig::default();
        let order = |l: f64, b: f64| -> Vec<CellOp> {
            rank_operators(
                &hw,
                &HardwareLossParams::new(l, b).unwrap(),
                200,
                (16, 16, 1),
            )
            .iter()
            .map(|s| s.op)
            .collect()
        };
        assert_eq!(order(1000.0, 1.0), order(4000.0, 4.0));
    }
}
