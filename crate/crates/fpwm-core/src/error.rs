//! Crate-wide error type.

use crate::model::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("precondition violated: {0}")]
    Precondition(&'static str),

    /// A structural guarantee of the theory failed; this signals a mis-built
    /// kernel or a bug, not bad user input.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A closed-form design has no feasible solution for the given config.
    #[error("infeasible design: {0}")]
    Infeasible(String),

    /// Monte-Carlo estimation could not produce a value.
    #[error("estimation failed: {0}")]
    Estimation(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn violations(&self) -> Option<&[Violation]> {
        match self {
            Error::InvalidConfig(v) => Some(v),
            _ => None,
        }
    }
}
