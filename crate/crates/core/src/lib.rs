pub mod design;
pub mod error;
pub mod estimators;
pub mod exposure;
pub mod linalg;
pub mod mivlue;
pub mod network;
pub mod simulation;
pub mod verify;

pub use error::{LueError, Result};
