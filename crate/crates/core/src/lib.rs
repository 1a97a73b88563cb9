pub mod error;
pub mod experiments;
pub mod grid;
pub mod linalg;
pub mod clock;
pub mod lindblad_ref;
pub mod qcore;
pub mod sse;

pub use error::{Error, Result};
pub use grid::ClockGrid;
