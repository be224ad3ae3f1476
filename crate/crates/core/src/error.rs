use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dialog {dialog_id}: {message}")]
    InvalidDialog { dialog_id: String, message: String },

    #[error("duplicate dialog id {0:?}")]
    DuplicateId(String),

    #[error("unknown dialog id {0:?}")]
    UnknownDialog(String),

    #[error("{0}")]
    Invalid(String),

    #[error("missing prediction cells: {}", format_cells(.0))]
    MissingCells(Vec<(String, usize, u64)>),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn parse(line: usize, message: impl ToString) -> Self {
        Error::Parse {
            line,
            message: message.to_string(),
        }
    }
}

fn format_cells(cells: &[(String, usize, u64)]) -> String {
    cells
        .iter()
        .map(|(method, size, seed)| format!("({method}, size={size}, seed={seed})"))
        .collect::<Vec<_>>()
        .join(", ")
}
