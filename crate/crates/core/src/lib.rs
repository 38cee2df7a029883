//! Barrier-period solver and deterministic simulator for synchronization
//! strategies in heterogeneous data-parallel SGD.

pub mod barrier;
pub mod harness;
pub mod sim;
pub mod strategy;
pub mod training;
