//! Injectable performance-bug catalog and severity classification.

pub mod catalog;
pub mod hooks;
pub mod severity;
pub mod spec;

pub use catalog::{default_catalog, read_catalog, write_catalog};
pub use hooks::{instantiate_bug, HookSet, Window};
pub use severity::{severity_of, SeverityBin, SeverityReport};
pub use spec::BugSpec;
