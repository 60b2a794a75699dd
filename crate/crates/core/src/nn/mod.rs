//! Dense `f64` neural kernels with hand-written backward passes.

pub mod attention;
pub mod checkpoint;
pub mod conv1d;
pub mod embedding;
pub mod ffn;
pub mod freeze;
pub mod gradcheck;
pub mod kernel;
pub mod layernorm;
pub mod linear;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod param;
pub mod transformer;

pub use freeze::{Component, FreezeSchedule, Mode};
pub use gradcheck::{grad_check, GradCheckReport};
pub use kernel::{Kernel, KernelSpec};
pub use optim::{apply_schedule, sgd_step};
pub use param::{ParamId, ParamStore, Parameter};
