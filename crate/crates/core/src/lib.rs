//! Multi-level transversal injection (MLTI): exact channel simulation of
//! rotation-state injection, the surface-code error and volume model built
//! on it, a plan optimizer, and comparisons against distillation and gate
//! synthesis.

pub mod costs;
pub mod error;
pub mod exec;
pub mod injection;
pub mod level1mc;
pub mod noise;
pub mod optimizer;
pub mod pipeline;
pub mod qstate;
pub mod sweep;
pub mod teleport;

pub use error::{Error, Result};
