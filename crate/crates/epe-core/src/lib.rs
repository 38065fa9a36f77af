//! Training-free performance estimation for cell-based neural architectures.
//!
//! The library scores freshly initialized networks by how differently their
//! input-Jacobian rows behave across the classes in a single batch, and uses
//! that score to drive random search over a fixed cell search space.
//!
//! - [`tensor`]: dense f64 tensors, layer kernels, and a reverse-mode tape
//!   that differentiates a scalar network output with respect to the input.
//! - [`arch`]: the 15625-cell search space, its string codec, and the macro
//!   skeleton that turns a cell into a runnable network.
//! - [`scorer`]: per-class Jacobian correlation scoring of untrained networks.
//! - [`data`]: batch loading (CIFAR-10 binary, raw tensor container, synthetic).
//! - [`search`]: random search, repeat-run aggregation, rank correlation, and
//!   timing benchmarks.

pub mod arch;
pub mod data;
pub mod error;
pub mod scorer;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
