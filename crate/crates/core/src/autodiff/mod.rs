//! Reverse-mode automatic differentiation over dense row-major tensors.

mod lstm;
mod optim;
mod tape;
mod tensor;

pub use lstm::{lstm_forward, LstmLayer, LstmOutput};
pub use optim::{Adam, AdamConfig};
pub use tape::{softmax_rows, BatchStats, Grads, Tape, Var};
pub use tensor::{ParamId, ParamStore, Real, Tensor};
