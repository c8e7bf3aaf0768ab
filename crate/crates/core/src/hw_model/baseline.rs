//! Baseline estimators that ignore tiling: operation count at peak
//! throughput, and its roofline extension with an off-chip memory arm.

use super::{hard, HardwareConfig, LayerCost};
use crate::arch::LayerSpec;

/// Operation count divided by peak throughput, assuming every PE is busy
/// every cycle.
pub fn flops_cycles(layer: &LayerSpec, hw: &HardwareConfig) -> u64 {
    hard::macs(layer).div_ceil(hw.peak_macs_per_cycle())
}

pub fn flops_cost(layer: &LayerSpec, hw: &HardwareConfig) -> LayerCost {
    LayerCost::new(layer, hw, flops_cycles(layer, hw))
}

/// Cycles needed to move the layer's weights and activations off chip.
pub fn memory_cycles(layer: &LayerSpec, hw: &HardwareConfig) -> u64 {
    let bytes = (hard::weight_elems(layer) + hard::activation_elems(layer)) * hw.bytes_per_elem;
    hw.transfer_cycles(bytes)
}

/// The slower of the compute-bound (FLOPS) and memory-bound arms.
pub fn roofline_cost(layer: &LayerSpec, hw: &HardwareConfig) -> LayerCost {
    let cycles = flops_cycles(layer, hw).max(memory_cycles(layer, hw));
    LayerCost::new(layer, hw, cycles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::LayerKind;
    use crate::hw_model::hard_layer_cost;

    #[test]
    fn flops_of_reference_conv() {
        let hw = HardwareConfig::default();
        assert_eq!(
            flops_cycles(&LayerSpec::conv(3, 128, 128, 32, 32, 1), &hw),
            9_216
        );
    }

    #[test]
    fn flops_is_optimistic_for_depthwise() {
        let hw = HardwareConfig::default();
        let l = LayerSpec::depthwise(3, 128, 32, 32, 1);
        assert_eq!(flops_cycles(&l, &hw), 72);
        assert_eq!(hard_layer_cost(&l, &hw).runtime_cycles, 131_072);
    }

    #[test]
    fn compute_bound_roofline_equals_flops() {
        let hw = HardwareConfig::default();
        let l = LayerSpec::conv(3, 128, 128, 64, 64, 1);
        assert!(memory_cycles(&l, &hw) < flops_cycles(&l, &hw));
        assert_eq!(roofline_cost(&l, &hw), flops_cost(&l, &hw));
    }

    #[test]
    fn large_fc_is_memory_bound() {
        let hw = HardwareConfig::default();
        let l = LayerSpec::fully_connected(1024, 1024, 1);
        assert_eq!(flops_cycles(&l, &hw), 64);
        let cost = roofline_cost(&l, &hw);
        // 2 MiB of weights plus 4 KiB of activations at 80 B/cycle.
        assert_eq!(
            cost.runtime_cycles,
            (2 * 1024 * 1024 + 4096u64).div_ceil(80)
        );
        assert!((cost.runtime_s * 1e6 - 26.2).abs() < 0.1);
    }

    #[test]
    fn zero_cost_ops_stay_free() {
        let hw = HardwareConfig::default();
        let l = LayerSpec::passthrough(LayerKind::MaxPool, 64, 8, 8, 1);
        assert_eq!(roofline_cost(&l, &hw).runtime_cycles, 0);
        assert_eq!(flops_cost(&l, &hw).runtime_cycles, 0);
    }
}
