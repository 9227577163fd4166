//! Pre-silicon performance bug detection from per-probe IPC inference errors.

pub mod bugs;
pub mod error;
pub mod eval;
pub mod probes;
pub mod select;
pub mod sim;
pub mod stage1;
pub mod stage2;

pub use error::{Error, Result};
