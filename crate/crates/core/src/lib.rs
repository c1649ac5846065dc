//! An anchor-free Siamese tracker that localises targets by
//! predicting their top-left and bottom-right corners.

pub mod autodiff;
pub mod config;
pub mod corner_pooling;
pub mod correlation;
pub mod cropping;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod selection;
pub mod selftest;
pub mod synth;
pub mod targets;
pub mod tensor;
pub mod tracker;

pub use error::{Error, Result};
pub use tensor::Tensor;
