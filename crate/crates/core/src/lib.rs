//! Cycle-level simulator of a split scalar/vector cache hierarchy for vector
//! processors, with a conventional unified cache as baseline, a banked DRAM
//! timing model and a memory-side prefetcher.

pub mod address;
pub mod config;
pub mod dram;
pub mod engine;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod scalar_cache;
pub mod sim;
pub mod trace;
pub mod vector_cache;
pub mod workload;
pub mod write_buffer;

pub use address::PhysAddr;
pub use config::{Hierarchy, PrefetchMode, SimConfig};
