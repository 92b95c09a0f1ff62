use std::path::PathBuf;

use clap::Args;
use wdistortion::io::save_png;
use wdistortion::synthesis::synthesize;

use super::{load_image, resolve_sigma_map};
use super::sigma_map::from_saliency;
use crate::error::CliResult;
use crate::output::{make_parent, write_text};
use crate::Ctx;

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[arg(long)]
    reference: PathBuf,
    /// Saliency PNG; overrides --sigma-map and --sigma.
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// Per-iteration loss CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: &SynthesizeArgs) -> CliResult<()> {
    let out = ctx.out()?;
    let reference = load_image(&args.reference)?;
    let dims = (reference.height(), reference.width());
    let map = match &args.saliency {
        Some(p) => from_saliency(ctx, p, dims)?,
        None => resolve_sigma_map(ctx, dims)?,
    };
    let cfg = ctx.config.synthesis_config();
    let (image, trace) = synthesize(&reference, &map, &cfg)?;
    make_parent(out)?;
    save_png(&image, out)?;
    if let Some(p) = &args.trace {
        write_text(p, &trace.to_csv())?;
    }
    eprintln!(
        "{} iterations, {:?}, loss {} -> {}, pixel MSE {}",
        trace.iterations,
        trace.stop_reason,
        trace.initial_loss(),
        trace.final_loss(),
        image.mean_squared_error(&reference)?
    );
    Ok(())
}
