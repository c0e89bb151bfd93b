//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters live in
//! a [`ParamStore`] outside the tape; [`Tape::backward`] accumulates their
//! gradients there, and [`Adam`] consumes them.
//!
//! ```
//! use higraph_dti::nd::{ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::row(vec![1.0, -2.0, 3.0]), true).unwrap();
//! let mut tape = Tape::new();
//! let wv = tape.param(&store, w);
//! let loss = tape.sum_all(wv);
//! tape.backward(loss, &mut store).unwrap();
//! assert_eq!(store.get(w).grad.data(), &[1.0, 1.0, 1.0]);
//! ```

mod adam;
pub mod check;
mod checkpoint;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointError, FORMAT_VERSION, MAGIC};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{BatchStats, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("batch normalization in training mode needs at least two rows, got {rows}")]
    DegenerateBatch { rows: usize },
    #[error("backward called on an empty tape or a foreign variable")]
    NoTape,
    #[error("expected a single-element tensor, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
}

#[cfg(test)]
mod op_tests;
