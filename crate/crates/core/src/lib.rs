pub mod error;
pub mod distribution;
pub mod special;
pub mod design;
pub mod optim;
pub mod estimation;
pub mod inference;
pub mod simulate;
pub mod selection;
pub mod diagnostics;
pub mod io;

pub use error::{Error, Result};
