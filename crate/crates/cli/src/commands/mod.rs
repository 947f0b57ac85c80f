pub mod benchmark;
pub mod fit;
pub mod generate;
pub mod metrics;
pub mod predict;
pub mod replay;

use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}
