//! Shared fixtures for the benchmarks.

use systolic_core::{parse_network, NetworkSpec};

pub const CIFAR_CONV: &str = include_str!("../../../networks/cifar_conv.toml");
pub const CIFAR_DWS: &str = include_str!("../../../networks/cifar_dws.toml");
pub const TWO_CELL: &str = include_str!("../../../networks/two_cell.toml");
pub const RESNET_BLOCK: &str = include_str!("../../../networks/resnet_block.json");

pub fn network(text: &str) -> NetworkSpec {
    parse_network(text).expect("bundled network parses")
}
