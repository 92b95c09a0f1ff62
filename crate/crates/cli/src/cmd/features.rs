use std::path::PathBuf;

use clap::Args;
use wdistortion::wdgrid::save_stack;
use wdistortion::FeatureNet;

use super::load_image;
use crate::error::CliResult;
use crate::output::make_parent;
use crate::Ctx;

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    image: PathBuf,
}

pub fn run(ctx: &Ctx, args: &ExportArgs) -> CliResult<()> {
    let out = ctx.out()?;
    let img = load_image(&args.image)?;
    ctx.config.stack.validate(img.height(), img.width())?;
    let stack = FeatureNet::new(img.depth(), &ctx.config.stack)?.forward(&img)?;
    make_parent(out)?;
    save_stack(&stack, out)?;
    eprintln!("{} layers, {} features", stack.len(), stack.feature_count());
    Ok(())
}
