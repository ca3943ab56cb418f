//! Smith-Waterman database search on a farm.
//!
//! One query is scored against every database sequence with an affine-gap
//! local-alignment kernel. Subjects stream through an order-preserving farm,
//! so the report lists scores in database order whatever the worker count.
//!
//! ```
//! use swfarm::{run_swfarm, ScoringScheme, Sequence};
//!
//! let query = Sequence::new("q", "HEAGAWGHEE");
//! let db = vec![Sequence::new("a", "PAWHEAE"), Sequence::new("b", "HEAGAWGHEE")];
//! let report = run_swfarm(&query, db, ScoringScheme::blosum50(10, 2).unwrap(), 2).unwrap();
//! assert_eq!(report.results.len(), 2);
//! assert_eq!(report.results[1].name, "b");
//! ```

use std::path::Path;

pub mod align;
pub mod fasta;
pub mod oracle;
pub mod run;
pub mod scoring;

pub use fasta::{parse_fasta, read_fasta, Sequence};
pub use run::{gcups, run_swfarm, sw_score, Report, ScoreResult};
pub use scoring::{Matrix, ScoringScheme};

#[derive(Debug, thiserror::Error)]
pub enum SwError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Fasta { path: String, line: usize, msg: String },
    #[error("substitution matrix, line {line}: {msg}")]
    Matrix { line: usize, msg: String },
    #[error("{0}")]
    Config(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error(transparent)]
    Runtime(#[from] streamfarm::Error),
}

impl SwError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SwError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
