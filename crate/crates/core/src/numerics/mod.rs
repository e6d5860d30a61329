//! Dense kernels, parameters and reverse-mode gradients.

mod params;
mod tape;
mod tensor;

pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::{
    activate, dropout, dropout_mask, logsumexp, sigmoid, softmax, Activation, Mode, Tensor,
    LEAKY_SLOPE,
};
