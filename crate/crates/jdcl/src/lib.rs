//! Filesystem and command-line companion to `jdcl-core`.
//!
//! This crate reads the media and manifest formats (PNG/BMP/raw images,
//! 16-bit PCM WAV, `path,label` CSV manifests), writes checkpoints and logs
//! atomically, parses TOML experiment configs and runs multi-stage transfer
//! pipelines. The `jdcl` binary exposes it as a CLI.

pub mod cli;
pub mod config;
pub mod error;
pub mod files;
pub mod manifest;
pub mod media;
pub mod pipeline;
pub mod recipe;

pub use error::{Error, Result};
