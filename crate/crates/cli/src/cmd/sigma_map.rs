use std::path::{Path, PathBuf};

use clap::Args;
use wdistortion::sigma_map::{constant_sigma, saliency_sigma, SaliencyGrid};
use wdistortion::SigmaMap;

use super::load_image;
use crate::error::{CliError, CliResult};
use crate::output::{make_parent, write_heatmap};
use crate::Ctx;

#[derive(Args, Debug)]
pub struct SigmaMapArgs {
    /// Saliency PNG (color images are averaged over channels).
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// `HxW` of a constant map built from --sigma.
    #[arg(long)]
    size: Option<String>,
    /// Visualization prefix: `<prefix>.png` plus its `<prefix>.json` sidecar.
    #[arg(long)]
    preview: Option<PathBuf>,
}

pub fn from_saliency(ctx: &Ctx, path: &Path, dims: (usize, usize)) -> CliResult<SigmaMap<f64>> {
    let img = load_image(path)?;
    if (img.height(), img.width()) != dims {
        return Err(CliError::Mismatch(format!(
            "saliency is {}x{}, expected {:?}",
            img.height(),
            img.width(),
            dims
        )));
    }
    let d = img.depth() as f64;
    let values = img.as_slice().chunks_exact(img.depth()).map(|px| px.iter().sum::<f64>() / d).collect();
    let sal = SaliencyGrid::new(img.height(), img.width(), values)?;
    let s = &ctx.config.sigma_map;
    let edge = s.edge_sigma.unwrap_or(dims.1 as f64);
    Ok(saliency_sigma(&sal, s.threshold, edge)?)
}

fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("--size expects HxW, got {s:?}"));
    let (h, w) = s.split_once('x').ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

pub fn run(ctx: &Ctx, args: &SigmaMapArgs) -> CliResult<()> {
    let out = ctx.out()?;
    let map = match (&args.saliency, &args.size, ctx.sigma) {
        (Some(p), _, _) => {
            let img = load_image(p)?;
            from_saliency(ctx, p, (img.height(), img.width()))?
        }
        (None, Some(size), Some(s)) => constant_sigma(parse_size(size)?, s)?,
        _ => return Err(CliError::Usage("give --saliency, or --size with --sigma".into())),
    };
    make_parent(out)?;
    map.save(out)?;
    if let Some(prefix) = &args.preview {
        write_heatmap(prefix, &map.to_grid())?;
    }
    eprintln!("sigma map {:?}, max {}", map.dims(), map.max());
    Ok(())
}
