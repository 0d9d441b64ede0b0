//! Message-passing execution of per-subsystem agents over `d`-local channels,
//! with instrumentation of every model, state and channel access.

mod audit;
mod channels;
mod harness;
mod message;
mod network;

pub use audit::{audit, write_message_csv, AccessLog, AgentTotals, AuditReport, ModelBlock, ModelReader};
pub use channels::{build_channels, ChannelTopology};
pub use harness::{Harness, Scheduler, Timing};
pub use message::{Message, Payload, PayloadKind, RoundId};
pub use network::{Network, Ownership, Traffic};
