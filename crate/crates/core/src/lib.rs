//! Analytical runtime and utilization models for DNN layers on
//! weight-stationary systolic arrays, a tile-level reference simulator, a
//! differentiable relaxation of the models, and channel-width search on top
//! of it.

pub mod arch;
pub mod hw_model;
pub mod optim;
pub mod sim;
pub mod smooth;

pub use arch::{parse_network, ArchError, CellSpec, InputShape, LayerKind, LayerSpec, NetworkSpec};
pub use hw_model::{
    network_cost, parse_hardware, CostModelKind, HardwareConfig, HardwareProfile, LayerCost, Lut,
    LutSpace, ModelError, NetworkCost,
};
pub use optim::{
    exhaustive_search, hypervolume, optimize_channels, pareto_front, score_operators,
    ChannelSearchSpace, OptimConfig, OptimError, OptimResult, ParetoPoint,
};
pub use sim::{simulate_network, NetworkSim, SimError, SimResult};
pub use smooth::{
    hardware_loss, DiffScalar, HardwareLossParams, SmoothError, SmoothParams, SmoothShape,
};
