//! Dense tensors, a reverse-mode tape, and a finite-difference gradient oracle.

pub mod container;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use container::{load_tensor, save_tensor, Dtype};
pub use gradcheck::{finite_diff_check, finite_diff_check_params, relative_error};
pub use tape::{Gradients, ParamId, Params, Tape, Var};
pub use tensor::{sigmoid, softplus, Tensor};
