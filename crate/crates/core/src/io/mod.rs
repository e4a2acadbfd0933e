//! File formats: observation CSVs, run configuration, ground-truth
//! companions, model documents and result tables.
//!
//! Every text artifact is UTF-8 with LF line endings, and floats are written
//! with 17 significant digits so they read back bit for bit.

pub mod config;
pub mod dataset;
pub mod model_file;
pub mod tables;
pub mod truth;

use std::fs;
use std::path::Path;

use crate::error::{GdrfError, Result};

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `contents` to `path`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| GdrfError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| GdrfError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GdrfError::io(path, e))
}
