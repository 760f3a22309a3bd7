//! Equivariant graph neural network interatomic potential with dual-path
//! dynamic attention message passing and multi-perspective pooling.

pub mod app;
pub mod bench;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod io;
pub mod irreps;
pub mod md;
pub mod model;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
