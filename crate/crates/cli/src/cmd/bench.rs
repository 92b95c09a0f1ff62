use std::fmt::Write as _;
use std::time::Instant;

use wdistortion::distortion::{even_grid_points, kernel_at, kernel_pair_distortion, Backend};
use wdistortion::synthesis::noise_image;
use wdistortion::Grid;

use crate::error::{CliError, CliResult};
use crate::output::write_text;
use crate::Ctx;

/// Seconds for one pass over the grid points with `backend`; best of `repeats`.
pub fn time_backend(a: &Grid<f64>, b: &Grid<f64>, points: &[(usize, usize)], sigma: f64, backend: &Backend, repeats: usize) -> CliResult<f64> {
    let dims = (a.height(), a.width());
    let kernels = points.iter().map(|&p| kernel_at(sigma, p, dims)).collect::<Result<Vec<_>, _>>()?;
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let mut acc = 0.0;
        for k in &kernels {
            acc += kernel_pair_distortion(a, k, b, k, backend)?;
        }
        std::hint::black_box(acc);
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.config.bench;
    if cfg.sides.is_empty() || cfg.backends.is_empty() || cfg.depth == 0 {
        return Err(CliError::Usage("bench needs sides, backends and a positive depth".into()));
    }
    let backends = cfg
        .backends
        .iter()
        .map(|b| {
            let mut be: Backend = b.parse()?;
            if let Backend::Sliced { seed, .. } = &mut be {
                *seed = ctx.config.seed;
            }
            Ok(be)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let sigma = ctx.sigma.unwrap_or(cfg.sigma);
    let mut csv = String::from("side,pixels,depth");
    for b in &backends {
        let _ = write!(csv, ",{b}_seconds");
    }
    csv.push('\n');
    let mut times = vec![Vec::new(); backends.len()];
    let mut pixels = Vec::new();
    for &side in &cfg.sides {
        let a = noise_image::<f64>(side, side, cfg.depth, ctx.config.seed);
        let b = noise_image::<f64>(side, side, cfg.depth, ctx.config.seed.wrapping_add(1));
        let points = even_grid_points((side, side), cfg.grid, cfg.grid);
        let _ = write!(csv, "{side},{},{}", side * side, cfg.depth);
        for (i, be) in backends.iter().enumerate() {
            let t = time_backend(&a, &b, &points, sigma, be, cfg.repeats)?;
            times[i].push(t);
            let _ = write!(csv, ",{t}");
        }
        csv.push('\n');
        pixels.push((side * side) as f64);
    }
    match &ctx.out {
        Some(p) => write_text(p, &csv)?,
        None => print!("{csv}"),
    }
    if pixels.len() >= 2 {
        for (be, t) in backends.iter().zip(&times) {
            eprintln!("{be}: time ~ N^{:.3}", log_slope(&pixels, t));
        }
    }
    if backends.len() >= 2 {
        for (k, &side) in cfg.sides.iter().enumerate() {
            eprintln!("side {side}: {} / {} = {:.2}x", backends[1], backends[0], times[1][k] / times[0][k]);
        }
    }
    Ok(())
}
