//! Cycle and energy models of a dense accelerator, its zero-gating variant,
//! and a weight-repetition accelerator that walks compiled indirection tables.

pub mod bank;
pub mod chip;
pub mod energy;
pub mod hw;
pub mod networks;
pub mod pe;
pub mod schedule;

pub use chip::{simulate_layer, simulate_network, LayerData, LayerReport, SimReport, Workload};
pub use energy::{EnergyBreakdown, EnergyCoefficients, Events};
pub use hw::{HwConfig, Variant};
pub use networks::LayerSpec;
pub use pe::CycleReport;
