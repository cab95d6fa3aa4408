//! Data-driven decentralized state-feedback design for interconnected
//! discrete-time systems.
//!
//! Each subsystem is identified only through a short excitation record. From that
//! record a per-subsystem linear matrix inequality is solved for a stabilizing gain,
//! and the assembled loop is checked by spectral radius, Lyapunov decrease and
//! simulation.

pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod numerics;
pub mod pipeline;
pub mod plant;
pub mod representation;
pub mod sdp;
pub mod synthesis;

pub use error::{Error, Result};
pub use linalg::Matrix;
