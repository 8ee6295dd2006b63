use std::path::PathBuf;

use thiserror::Error;

use crate::spec::Diagnostic;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse experiment spec: {0}")]
    Parse(String),

    #[error("invalid experiment spec:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] rib_core::Error),
}

pub type CliResult<T> = Result<T, CliError>;

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}
