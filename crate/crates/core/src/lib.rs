//! Simulation, channel verification and surrogate-driven training for
//! layered quantum circuits with mid-circuit ancilla measurement and reset.
//!
//! The crate is `no_std` (it needs `alloc`); file formats, configuration and
//! the command line live in the `surqnn` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ansatz;
pub mod channels;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod nn;
pub mod pipeline;
pub mod qstate;
pub mod rng;
pub mod surrogate;

pub use ansatz::{CircuitModel, CircuitSpec, MeasurementModel, MeasurementVector, ParamVector};
pub use channels::KrausSet;
pub use data::{Dataset, Image};
pub use error::{Error, Result};
pub use gradcheck::GradReport;
pub use linalg::{CMatrix, C64};
pub use loss::{LossAdapter, Observable, SquaredError};
pub use pipeline::{PipelineState, TrainConfig};
pub use qstate::{DensityMatrix, GateMatrix, PureState, QuantumState};
pub use surrogate::{SampleBatch, SurrogateNet, TrustRegion};
