//! Tight per-agent bounds on symmetric joint outputs.
//!
//! A commons problem divides the value W(x) of a symmetric n-variable
//! function among the n agents whose types x_i produced it. A lower
//! (upper) guarantee is a one-variable function g with Σ g(x_i) ≤ W(x)
//! (≥ W(x)) at every profile; a guarantee is tight when no single type's
//! bound can be improved without breaking feasibility. This crate builds
//! the constructive guarantee families for the supported welfare classes,
//! the budget-balanced sharing rules that implement them, and grid-based
//! verification oracles for every claim the library makes.
//!
//! Modules:
//! - [`welfare`]: declarative welfare functions and their classification
//! - [`guarantees`]: guarantee constructors (unanimity, simple, stand-alone,
//!   endpoint families, tangents, quota, transforms)
//! - [`contact`]: two-person contact correspondences and the integral
//!   construction of tight guarantees
//! - [`rules`]: sharing rules and the guarantees they imply
//! - [`verify`]: feasibility, tightness, ordering and derivative checks
//! - [`cli`]: the `sharebound` command-line front end

pub mod cli;
pub mod contact;
pub mod guarantees;
pub mod rules;
pub mod verify;
pub mod welfare;

use thiserror::Error as ThisError;

/// Crate-wide error type. Variants carry enough context to print a
/// one-line diagnostic; the CLI maps all of them to exit code 2.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("type {value} outside [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },
    #[error("profile length {got}, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported welfare: {0}")]
    UnsupportedWelfare(String),
    #[error("invalid half graph: {0}")]
    InvalidHalfGraph(String),
    #[error("strict semi-modularity required: {0}")]
    NotStrict(String),
    #[error("infeasible input: {0}")]
    Infeasible(String),
    #[error("scan budget exceeded: needs {needed} evaluations, cap {cap}; reduce the grid size or n")]
    Budget { needed: u64, cap: u64 },
    #[error("document error: {0}")]
    Document(String),
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
