pub mod bethe;
pub mod cmps;
pub mod error;
pub mod excitation;
pub mod ground;
pub mod linalg;
pub mod studies;

pub use error::{Error, Result};
