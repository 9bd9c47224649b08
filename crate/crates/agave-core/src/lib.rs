//! Desk-scale laboratory for hybrid generative image models that pair a
//! factored variational decoder with a masked-convolution autoregressive
//! decoder conditioned on its output.
//!
//! The crate is self-contained: it ships its own reverse-mode tensor engine
//! ([`tensor`]), neural layers and the Adamax optimizer ([`nn`]), probability
//! building blocks ([`distributions`]), the model itself ([`model`]), the
//! training objective and bound/code-length evaluation ([`objective`]),
//! exactly enumerable reference models for bound checking ([`toy`]), and
//! dataset / image / checkpoint IO ([`data`], [`checkpoint`]).

pub mod checkpoint;
pub mod data;
pub mod distributions;
pub mod model;
pub mod nn;
pub mod objective;
pub mod rng;
pub mod tensor;
pub mod toy;

pub use tensor::{Graph, Scalar, TensorId};
