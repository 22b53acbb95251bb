pub mod berry;
pub mod eigen;
pub mod error;
pub mod floquet;
pub mod model;
pub mod propagator;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
