use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures while reading or writing files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{} (byte {offset}): {message}", path.display())]
    Corrupt { path: PathBuf, offset: u64, message: String },
    #[error("{}: unsupported version {found} (expected {expected})", path.display())]
    UnsupportedVersion { path: PathBuf, found: u32, expected: u32 },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{}: {source}", path.display())]
    Core { path: PathBuf, source: darksplat_core::Error },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Parse { path: path.to_path_buf(), line, message: message.into() }
    }

    pub(crate) fn corrupt(path: &Path, offset: u64, message: impl Into<String>) -> Self {
        Self::Corrupt { path: path.to_path_buf(), offset, message: message.into() }
    }

    pub(crate) fn core(path: &Path, source: darksplat_core::Error) -> Self {
        Self::Core { path: path.to_path_buf(), source }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
