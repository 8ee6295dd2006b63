//! Experiment runner: parses a JSON [`ExperimentSpec`], runs the named
//! study with `rib-core`, and writes a digested output bundle.

pub mod bundle;
pub mod error;
pub mod runner;
pub mod spec;

pub use bundle::{Bundle, Check, FileEntry, Manifest, Status};
pub use error::{CliError, CliResult};
pub use runner::{run, StudyOutcome};
pub use spec::{Command, Diagnostic, ExperimentSpec};
