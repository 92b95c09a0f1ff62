use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use wdistortion::io::save_png;
use wdistortion::synthesis::sigma_progression;

use super::load_image;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, write_text};
use crate::Ctx;

#[derive(Args, Debug)]
pub struct ProgressionArgs {
    #[arg(long)]
    reference: PathBuf,
    /// Comma-separated ascending widths; overrides the config.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
}

pub fn run(ctx: &Ctx, args: &ProgressionArgs) -> CliResult<()> {
    let out = ctx.out()?;
    let reference = load_image(&args.reference)?;
    let sigmas = args.sigmas.clone().unwrap_or_else(|| ctx.config.progression.sigmas.clone());
    if sigmas.is_empty() {
        return Err(CliError::Usage("no widths given".into()));
    }
    let entries = sigma_progression(&reference, &sigmas, &ctx.config.synthesis_config())?;
    ensure_dir(out)?;
    let mut csv = String::from("index,sigma,pixel_mse,final_loss,iterations,stop_reason\n");
    for (i, e) in entries.iter().enumerate() {
        save_png(&e.image, out.join(format!("sigma_{i:02}.png")))?;
        write_text(&out.join(format!("trace_{i:02}.csv")), &e.trace.to_csv())?;
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{:?}",
            e.sigma, e.pixel_mse, e.final_loss, e.trace.iterations, e.trace.stop_reason
        );
    }
    write_text(&out.join("progression.csv"), &csv)?;
    for e in &entries {
        eprintln!("sigma {:>10}: pixel MSE {:.6}", e.sigma, e.pixel_mse);
    }
    Ok(())
}
