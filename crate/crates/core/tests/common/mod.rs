#![allow(dead_code)]

pub use hetsync::barrier::{BarrierSolution, ClusterSpec, SolverError};

pub mod oracle;
pub mod reference;
