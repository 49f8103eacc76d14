use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigIssue;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", Issues(.0))]
    Invalid(Vec<ConfigIssue>),
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Threads(String),
    #[error(transparent)]
    Core(#[from] peridyn_core::Error),
}

struct Issues<'a>(&'a [ConfigIssue]);

impl fmt::Display for Issues<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {issue}")?;
        }
        Ok(())
    }
}
