//! Deterministic out-of-order core simulator over synthetic workloads.

pub mod cache;
pub mod config;
pub mod isa;
pub mod pipeline;
pub mod predictor;
pub mod trace;
pub mod workload;

pub use config::{preset, presets, CacheLevel, DesignSet, MicroarchConfig};
pub use isa::{AbstractInstruction, FuKind, Opcode};
pub use pipeline::{simulate, simulate_warm};
pub use trace::{overall_ipc, CounterSample, CounterTrace, COUNTER_NAMES};
pub use workload::{default_profiles, generate_workload, Workload, WorkloadProfile};
