//! Flat `key = value` configuration files.
//!
//! Keys are long flag names of the chosen subcommand (`iters`, `lambda1`,
//! `window-us`; underscores are accepted for dashes). Blank lines and lines
//! starting with `#` are ignored. The file is merged into the argument list
//! ahead of the real flags, so flags given on the command line win.

use std::fs;
use std::path::Path;

use crate::error::{DataError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_config(path: &Path, text: &str) -> Result<Vec<ConfigEntry>> {
    let mut entries: Vec<ConfigEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| DataError::parse(path, i + 1, "expected `key = value`"))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(DataError::parse(path, i + 1, "empty key"));
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(DataError::parse(path, i + 1, format!("duplicate key `{key}`")));
        }
        let value = value.trim().trim_matches('"').to_string();
        entries.push(ConfigEntry { key, value, line: i + 1 });
    }
    Ok(entries)
}

pub fn read_config(path: &Path) -> Result<Vec<ConfigEntry>> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_config(path, &text)
}
