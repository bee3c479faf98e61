//! Minimal dense-tensor reverse-mode autodiff with the layer set both the
//! synthesis and recognition models need, the losses (L1, BCE, CE, CTC) and
//! a plain SGD optimizer with a resettable step-decay schedule.
//!
//! Training runs in `f32`; gradient checks instantiate the same generic code
//! in `f64`. A [`Tape`] lives for one forward/backward pass; parameters live
//! in a [`ParamStore`] and are bound onto the tape as leaves.

mod ctc;
pub mod gradcheck;
mod init;
mod layers;
mod losses;
mod optim;
mod store;
mod tensor;


pub use ctc::{ctc_loss, ctc_min_frames};
pub use init::glorot_uniform;
pub use layers::{conv1d_same, Blstm, Conv1d, Conv2d, Embedding, Linear, LstmCell, LstmState, PadMode};
pub use losses::{bce_loss, ce_loss, l1_loss};
pub use optim::{Sgd, SgdConfig};
pub use store::{ParamId, ParamStore};
pub use tensor::{concat_cols, concat_vecs, stack_rows, Gradients, Scalar, Tape, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label {label} out of vocabulary (size {vocab})")]
    LabelOutOfRange { label: usize, vocab: usize },
    #[error("ctc infeasible: {frames} frames cannot emit {labels} labels ({min_frames} needed)")]
    CtcInfeasible { frames: usize, labels: usize, min_frames: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
