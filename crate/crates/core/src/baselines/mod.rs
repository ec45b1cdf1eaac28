//! Reference protocols sharing the engine, radio and metrics with the main protocol.

pub mod leach;
pub mod pegasis;

pub use leach::{leach_elect, leach_threshold, Leach, LeachConfig};
pub use pegasis::{build_chain, build_chain_by, chain_length, Chain, Pegasis, PegasisConfig};
