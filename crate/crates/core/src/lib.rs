// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod forward;
pub mod gp;
pub mod optim;
pub mod posterior;
pub mod samplers;

pub use bounds::Bounds;
pub use density::{FnDensity, LogDensity};
pub use error::{Error, Result};
pub use posterior::PosteriorContext;
