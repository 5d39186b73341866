//! Pipeline orchestration, run storage, HTTP API and CLI for comment topic
//! discovery.

pub mod api;
pub mod assign;
pub mod cli;
pub mod config;
pub mod error;
pub mod files;
pub mod journal;
pub mod manifest;
pub mod pipeline;
pub mod remote;
pub mod reports;
pub mod store;

pub use error::{Result, ServiceError};
