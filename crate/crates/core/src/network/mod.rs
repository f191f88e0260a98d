//! Burst-fusion super-resolution network, its training loop, checkpoint
//! format and finite-difference gradient checks.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub(crate) mod loss;
mod model;
mod scalar;
mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use loss::{loss_and_grad, loss_value, LossKind};
pub use model::{Architecture, ConvSlot, GroupSlots, GroupTrace, Network, NetworkConfig, ParamEntry, ShiftSource, Trace};
pub use scalar::Scalar;
pub use tensor::TensorMap;
pub use train::{train, Adam, LossRecord, TrainHyper, TrainItem, TrainOutcome, Trainer};
