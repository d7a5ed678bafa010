//! Sequence-to-sequence speech recognition trained against soft labels
//! from an external character language model.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod experiment;
pub mod frontend;
pub mod lm;
pub mod manifest;
pub mod numerics;
pub mod optim;
pub mod seq2seq;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
