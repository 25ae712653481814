//! AC power flow and clean snapshot generation.

mod newton;
mod snapshots;

pub use newton::{solve_nr, NrOptions, PfSolution};
pub use snapshots::{
    generate_snapshots, residual_scales, DatasetSidecar, GenerationStats, ResidualScales, SnapshotSetConfig,
    RESIDUAL_FLOOR, STEALTH_FACTOR,
};
