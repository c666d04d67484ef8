//! File formats, dataset IO and the `darksplat` command line.
//!
//! The numerical pipeline lives in [`darksplat_core`]; this crate reads and
//! writes its inputs and outputs and wires the pieces into subcommands.

pub mod cli;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod event_io;
pub mod image_io;
pub mod scene_io;

pub use darksplat_core as core;
pub use error::{DataError, Result};
