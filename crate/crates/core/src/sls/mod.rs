//! Finite-horizon system level synthesis on the first block column of the
//! stacked response `Phi = [Phi_x; Phi_u]`.
//!
//! Row layout of `Phi`: state blocks `t = 0..=T` (`n` rows each) followed by
//! input blocks `t = 0..T` (`p` rows each). Columns are the `n` components
//! of the initial state.

mod achievability;
mod horizon;
mod mask;
mod partitions;
mod realization;
mod response;

pub use achievability::{
    assemble_achievability, check_localizability, check_localizability_with, AchievabilityOperator,
    LocalizabilityReport, SparseRows, DEFAULT_LOCALIZABILITY_TOL,
};
pub use horizon::{HorizonSpec, RowKind, TrajectoryLayout};
pub use mask::{build_locality_mask, LocalityMask};
pub use partitions::{build_partitions, PartitionSets};
pub use realization::{realize_controller, FullResponse};
pub use response::{
    reconstruct_trajectory, ColumnBlock, FileColumn, ResponseColumn, ResponseFile, Trajectory, RESPONSE_FORMAT,
};
