pub mod bench;
pub mod distortion;
pub mod features;
pub mod limits;
pub mod pairwise;
pub mod progression;
pub mod sigma_map;
pub mod synthesize;

use std::path::Path;

use wdistortion::io::load_png;
use wdistortion::sigma_map::constant_sigma;
use wdistortion::{ImageGrid, SigmaMap};

use crate::error::{CliError, CliResult};
use crate::Ctx;

pub fn load_image(path: &Path) -> CliResult<ImageGrid<f64>> {
    if !path.exists() {
        return Err(CliError::Read {
            path: path.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    Ok(load_png(path)?)
}

/// `--sigma-map` if given, else a constant `--sigma` map, checked against `dims`.
pub fn resolve_sigma_map(ctx: &Ctx, dims: (usize, usize)) -> CliResult<SigmaMap<f64>> {
    let map = match (&ctx.sigma_map, ctx.sigma) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(CliError::Read {
                    path: path.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                });
            }
            SigmaMap::load(path)?
        }
        (None, Some(s)) => constant_sigma(dims, s)?,
        (None, None) => return Err(CliError::Usage("give --sigma-map or --sigma".into())),
    };
    if map.dims() != dims {
        return Err(CliError::Mismatch(format!(
            "sigma map is {:?}, image is {:?}",
            map.dims(),
            dims
        )));
    }
    Ok(map)
}

pub fn same_shape(a: &ImageGrid<f64>, b: &ImageGrid<f64>) -> CliResult<()> {
    if !a.same_shape(b) {
        return Err(CliError::Mismatch(format!(
            "images differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

pub fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
