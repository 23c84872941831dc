//! Dense arrays with reverse-mode autodiff, parameter storage, and AdamW.

mod adamw;
mod gradcheck;
mod params;
mod tape;

pub use adamw::{AdamW, AdamWConfig};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, sample_coordinates, GradCheckReport};
pub use params::{uniform_init, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar((usize, usize)),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid optimizer setting: {0}")]
    BadHyperparameter(&'static str),
}
