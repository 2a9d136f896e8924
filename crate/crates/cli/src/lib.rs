//! REST service and command-line front end for the try-on engine.

pub mod commands;
pub mod config;
pub mod error;
pub mod images;
pub mod service;

pub use config::ServiceConfig;
pub use error::CliError;
pub use service::{router, AppState};
