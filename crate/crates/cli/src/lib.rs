//! Command-line entry points and the HTTP service for `meshforge`.

pub mod commands;
pub mod error;
pub mod service;
