//! Distributed and localized model predictive control.
//!
//! Each subsystem of a block-partitioned linear plant runs an agent that
//! solves its share of a finite-horizon MPC problem posed over the system
//! responses of system level synthesis. Agents exchange data only with
//! neighbors a few hops away in the interconnection graph.

pub mod admm;
pub mod agents;
pub mod consensus;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod model;
pub mod problem;
pub mod reference;
pub mod scalar;
pub mod sls;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SystemModelF64 = model::SystemModel<f64>;
pub type MpcProblemF64 = problem::MpcProblem<f64>;
pub type ResponseColumnF64 = sls::ResponseColumn<f64>;
pub type DistributedControllerF64 = admm::DistributedController<f64>;
pub type CondensedOracleF64 = reference::CondensedOracle<f64>;
pub type RunRecordF64 = reference::RunRecord<f64>;
pub type SystemModelF32 = model::SystemModel<f32>;
pub type MpcProblemF32 = problem::MpcProblem<f32>;
pub type ResponseColumnF32 = sls::ResponseColumn<f32>;
pub type DistributedControllerF32 = admm::DistributedController<f32>;
pub type CondensedOracleF32 = reference::CondensedOracle<f32>;
pub type RunRecordF32 = reference::RunRecord<f32>;
