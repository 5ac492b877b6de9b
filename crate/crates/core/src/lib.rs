//! Multipath secure aggregation for sensor networks: secret sharing (SMA),
//! information dispersal (DMA) and authenticated dispersal (A-DMA) over a
//! prime field, with a deterministic network simulator, attacker models
//! and an experiment harness.

pub mod adma;
pub mod adversary;
pub mod aggnet;
pub mod dma;
pub mod gfp;
pub mod harness;
pub mod share;
pub mod sma;

pub use adma::{AuthKey, KeyTable, Verdict};
pub use adversary::{AttackKind, AttackOutcome, AttackPlan};
pub use aggnet::{run_scenario, Reconstruction, RunMetrics, SimOutcome, SimParams, SinkVerdict, Topology};
pub use dma::DispersalMatrix;
pub use gfp::{FieldElement, FieldError, FieldMatrix, PrimeField};
pub use share::{Contributors, NodeId, PathShare, Scheme, SchemeError};
