//! Dense tensors, reverse-mode differentiation, ADAM and parameter I/O.

mod adam;
mod checkpoint;
mod gradcheck;
mod init;
mod tape;
mod tensor;

pub use self::adam::{AdamConfig, AdamState};
pub use self::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use self::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use self::init::{xavier_bound, xavier_uniform};
pub use self::tape::{Gradients, ParamEntry, ParamId, ParamStore, Tape, Var};
pub use self::tensor::{log_sum_exp, sigmoid, softmax_in_place, Real, Tensor};
