pub mod belief;
pub mod bounds;
pub mod config;
pub mod discrete;
pub mod error;
pub mod linalg;
pub mod motion;
pub mod parallel;
pub mod partition;
pub mod planner;
pub mod runner;
pub mod sim;
pub mod synthetic;

pub use error::{Error, Result};
