//! Quantum convolutional neural network simulation for binary image classification.
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity
)]

pub mod ansatz;
pub mod cnn;
pub mod data;
pub mod encoding;
pub mod error;
pub mod model;
pub mod preprocess;
pub mod simulator;
pub mod training;

pub use ansatz::{build_conv, build_pool, AnsatzId, CircuitTemplate};
pub use cnn::{Cnn, CnnPlan, CnnSpec};
pub use data::{Dataset, DatasetName, Split};
pub use encoding::{EncodingKind, EncodingSpec};
pub use error::{QcnnError, Result};
pub use model::{Boundary, Model, ModelSpec, Sharing, WiringPlan};
pub use preprocess::{FittedReducer, ReductionMethod, ReductionSpec};
pub use simulator::{GateMatrix, Readout, StateVector, C64};
pub use training::{GradientMethod, Loss, Optimizer, Reduction, TrainConfig, TrainRun};
