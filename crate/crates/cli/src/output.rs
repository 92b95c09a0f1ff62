//! File writing helpers with path-aware errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use wdistortion::io::save_heatmap_png;
use wdistortion::{wdgrid, Grid};

use crate::error::{CliError, CliResult};

/// Creates the directory that will hold `path`.
pub fn make_parent(path: &Path) -> CliResult<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => ensure_dir(dir),
        None => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    make_parent(path)?;
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    write_text(path, &(text + "\n"))
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

/// `prefix` with its extension replaced by `ext`.
pub fn sibling(prefix: &Path, ext: &str) -> PathBuf {
    prefix.with_extension(ext)
}

#[derive(Serialize)]
struct HeatmapSidecar<'a> {
    wdgrid: &'a str,
    png: &'a str,
    height: usize,
    width: usize,
    /// PNG level 0 maps to `min`, 255 to `max`.
    min: f64,
    max: f64,
}

/// Writes `<prefix>.wdgrid`, `<prefix>.png` and `<prefix>.json`.
pub fn write_heatmap(prefix: &Path, field: &Grid<f64>) -> CliResult<()> {
    let grid_path = sibling(prefix, "wdgrid");
    let png_path = sibling(prefix, "png");
    make_parent(prefix)?;
    // the container holds f32; normalize from what it stores
    let stored: Grid<f64> = field.cast::<f32>().cast();
    wdgrid::save_grid(&stored, &grid_path)?;
    let (min, max) = save_heatmap_png(&stored, &png_path)?;
    let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    write_json(
        &sibling(prefix, "json"),
        &HeatmapSidecar {
            wdgrid: &name(&grid_path),
            png: &name(&png_path),
            height: field.height(),
            width: field.width(),
            min,
            max,
        },
    )
}
