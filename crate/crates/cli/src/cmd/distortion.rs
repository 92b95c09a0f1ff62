use std::path::PathBuf;

use clap::Args;
use wdistortion::distortion::{build_poi_plan, distortion_heatmap, total_distortion, ActiveSet};
use wdistortion::FeatureNet;

use super::{load_image, resolve_sigma_map, same_shape};
use crate::error::CliResult;
use crate::output::{write_heatmap, write_text};
use crate::Ctx;

#[derive(Args, Debug)]
pub struct DistortionArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    reconstruction: PathBuf,
    /// Also write `<prefix>.wdgrid`, `<prefix>.png` and `<prefix>.json`.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: &DistortionArgs) -> CliResult<()> {
    let cfg = &ctx.config;
    let reference = load_image(&args.reference)?;
    let reconstruction = load_image(&args.reconstruction)?;
    same_shape(&reference, &reconstruction)?;
    let dims = (reference.height(), reference.width());
    let map = resolve_sigma_map(ctx, dims)?;
    cfg.stack.validate(dims.0, dims.1)?;
    let net = FeatureNet::new(reference.depth(), &cfg.stack)?;
    let a = net.forward(&reference)?;
    let b = net.forward(&reconstruction)?;
    let layers = cfg.synthesis_config().layers();
    let plan = build_poi_plan(&map, &layers, cfg.poi.n_random, cfg.poi.n_sets, cfg.seed)?.with_active(ActiveSet::All);
    let mult = cfg.multipliers();
    let report = total_distortion(&a, &b, &map, &plan, &mult, &cfg.backend)?;
    let json = report.to_json()? + "\n";
    match &ctx.out {
        Some(p) => write_text(p, &json)?,
        None => print!("{json}"),
    }
    if let Some(prefix) = &args.heatmap {
        let field = distortion_heatmap(&a, &b, &map, &mult, &cfg.backend)?;
        write_heatmap(prefix, &field)?;
    }
    eprintln!("total distortion ({}): {}", cfg.backend, report.total);
    Ok(())
}
