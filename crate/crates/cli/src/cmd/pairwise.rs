use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use wdistortion::distortion::pairwise_distortion;
use wdistortion::FeatureNet;

use super::{file_label, load_image};
use crate::error::{CliError, CliResult};
use crate::output::write_text;
use crate::Ctx;

#[derive(Args, Debug)]
pub struct PairwiseArgs {
    /// Two or more PNG images; resolutions may differ.
    images: Vec<PathBuf>,
}

pub fn run(ctx: &Ctx, args: &PairwiseArgs) -> CliResult<()> {
    if args.images.len() < 2 {
        return Err(CliError::Usage("pairwise needs at least 2 images".into()));
    }
    let cfg = &ctx.config;
    let p = &cfg.pairwise;
    let sigma = ctx.sigma.unwrap_or(p.sigma);
    let images = args.images.iter().map(|i| load_image(i)).collect::<CliResult<Vec<_>>>()?;
    let depth = images[0].depth();
    if let Some((i, _)) = images.iter().enumerate().find(|(_, im)| im.depth() != depth) {
        return Err(CliError::Mismatch(format!(
            "{} has {} channels, {} has {depth}",
            args.images[i].display(),
            images[i].depth(),
            args.images[0].display()
        )));
    }
    let net = FeatureNet::new(depth, &cfg.stack)?;
    let stacks = images
        .iter()
        .map(|im| {
            cfg.stack.validate(im.height(), im.width())?;
            Ok(net.forward(im)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let n = stacks.len();
    let values = (0..n * n)
        .into_par_iter()
        .map(|k| pairwise_distortion(&stacks[k / n], &stacks[k % n], sigma, p.grid_rows, p.grid_cols, &cfg.backend))
        .collect::<Result<Vec<f64>, _>>()?;
    let labels: Vec<String> = args.images.iter().map(|p| file_label(p)).collect();
    let mut csv = String::from("image");
    for l in &labels {
        let _ = write!(csv, ",{l}");
    }
    csv.push('\n');
    for (i, l) in labels.iter().enumerate() {
        csv.push_str(l);
        for j in 0..n {
            let _ = write!(csv, ",{}", values[i * n + j]);
        }
        csv.push('\n');
    }
    match &ctx.out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
