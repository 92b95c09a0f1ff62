//! Image synthesis by minimizing distortion to a reference over the pixels.

pub mod gram;
pub mod lbfgs;
pub mod objective;

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::{build_poi_plan, ActiveSet, Backend, LayerPlan, Multipliers, PoiPlan};
use crate::error::{invalid, mismatch, Result};
use crate::features::StackSpec;
use crate::grid::{Grid, ImageGrid};
use crate::scalar::Real;
use crate::sigma_map::{constant_sigma, BoolGrid, SigmaMap};

pub use gram::{gram_distance, gram_matrix, GramObjective};
pub use lbfgs::{lbfgs_minimize, EarlyStop, LbfgsConfig, OptimTrace, Optimizer, StopReason};
pub use objective::{ReferenceArtifacts, VARIANCE_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Independent uniform `[0, 1)` pixels.
    UniformNoise { seed: u64 },
    /// Start from a caller-supplied image.
    Provided,
}

/// Point-of-interest sampling parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoiParams {
    pub n_random: usize,
    pub n_sets: usize,
    pub seed: u64,
}

impl Default for PoiParams {
    fn default() -> Self {
        Self {
            n_random: crate::distortion::plan::DEFAULT_RANDOM_POINTS,
            n_sets: crate::distortion::plan::DEFAULT_POINT_SETS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub max_iterations: usize,
    pub optimizer: Optimizer,
    pub lbfgs_memory: usize,
    pub early_stop: EarlyStop,
    pub grad_tol: f64,
    pub init: Init,
    pub backend: Backend,
    /// `None` uses [`Multipliers::standard`] for the stack depth.
    pub multipliers: Option<Multipliers>,
    pub poi: PoiParams,
    pub stack: StackSpec,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            optimizer: Optimizer::AdamFallback,
            lbfgs_memory: 20,
            early_stop: EarlyStop::default(),
            grad_tol: 1e-12,
            init: Init::UniformNoise { seed: 0 },
            backend: Backend::Diag,
            multipliers: None,
            poi: PoiParams::default(),
            stack: StackSpec::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn multipliers(&self) -> Multipliers {
        self.multipliers
            .clone()
            .unwrap_or_else(|| Multipliers::standard(self.stack.num_layers))
    }

    pub fn lbfgs(&self, resample: bool) -> LbfgsConfig {
        LbfgsConfig {
            max_iterations: self.max_iterations,
            memory: self.lbfgs_memory,
            early_stop: self.early_stop,
            grad_tol: self.grad_tol,
            optimizer: self.optimizer,
            resample_each_iteration: resample,
            ..LbfgsConfig::default()
        }
    }

    /// `(layer_id, scale)` of every layer the stack produces.
    pub fn layers(&self) -> Vec<(u16, u32)> {
        std::iter::once((0u16, 1u32))
            .chain((1..=self.stack.num_layers).map(|l| (l as u16, StackSpec::scale_of(l))))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.lbfgs(false).validate()?;
        if let Some(m) = &self.multipliers {
            m.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisTrace<T> {
    pub losses: Vec<T>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub evaluations: usize,
    pub fallback_at: Option<usize>,
    /// Seconds; excluded from reproducibility comparisons.
    pub wall_time: f64,
}

impl<T: Real> SynthesisTrace<T> {
    fn from_optim(t: &OptimTrace<T>, wall_time: f64) -> Self {
        Self {
            losses: t.losses.clone(),
            stop_reason: t.stop_reason,
            iterations: t.iterations,
            evaluations: t.evaluations,
            fallback_at: t.fallback_at,
            wall_time,
        }
    }

    pub fn initial_loss(&self) -> T {
        self.losses[0]
    }

    pub fn final_loss(&self) -> T {
        *self.losses.last().unwrap()
    }

    /// `iteration,loss` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            let _ = writeln!(s, "{i},{l}");
        }
        s
    }
}

/// Seeded uniform-noise image.
pub fn noise_image<T: Real>(height: usize, width: usize, channels: usize, seed: u64) -> ImageGrid<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..height * width * channels)
        .map(|_| T::lit(rng.random::<f64>()))
        .collect();
    Grid::new(height, width, channels, data).unwrap()
}

fn initial_image<T: Real>(reference: &ImageGrid<T>, cfg: &SynthesisConfig, init: Option<&ImageGrid<T>>) -> Result<ImageGrid<T>> {
    match (cfg.init, init) {
        (_, Some(img)) => {
            if !img.same_shape(reference) {
                return Err(mismatch("initial image does not match the reference"));
            }
            Ok(img.clone())
        }
        (Init::UniformNoise { seed }, None) => Ok(noise_image(
            reference.height(),
            reference.width(),
            reference.depth(),
            seed,
        )),
        (Init::Provided, None) => Err(invalid("init is 'provided' but no initial image was given")),
    }
}

/// Runs the optimizer on `artifacts` from `x0`; the rotating set is redrawn every iteration.
pub fn optimize<T: Real>(
    artifacts: &ReferenceArtifacts<T>,
    x0: &ImageGrid<T>,
    cfg: &SynthesisConfig,
) -> Result<(ImageGrid<T>, SynthesisTrace<T>)> {
    let start = Instant::now();
    let rotating = artifacts.has_rotating_sets();
    let seed = cfg.poi.seed;
    let (h, w, c) = x0.dims();
    let objective = |x: &[T], counter: u64| -> Result<(T, Vec<T>)> {
        let img = Grid::new(h, w, c, x.to_vec())?;
        let active = if rotating {
            ActiveSet::Draw { seed, counter }
        } else {
            ActiveSet::None
        };
        let (l, g) = artifacts.loss_and_gradient(&img, active)?;
        Ok((l, g.into_vec()))
    };
    let tr = lbfgs_minimize(objective, x0.as_slice().to_vec(), &cfg.lbfgs(rotating))?;
    let image = Grid::new(h, w, c, tr.x.clone())?;
    Ok((image, SynthesisTrace::from_optim(&tr, start.elapsed().as_secs_f64())))
}

/// Precomputes reference artifacts for `sigma_map` with the plan drawn from `cfg.poi`.
pub fn prepare<T: Real>(
    reference: &ImageGrid<T>,
    sigma_map: &SigmaMap<T>,
    cfg: &SynthesisConfig,
) -> Result<ReferenceArtifacts<T>> {
    cfg.validate()?;
    if sigma_map.dims() != (reference.height(), reference.width()) {
        return Err(mismatch(format!(
            "sigma map {:?} does not match image {}x{}",
            sigma_map.dims(),
            reference.height(),
            reference.width()
        )));
    }
    let plan = build_poi_plan(sigma_map, &cfg.layers(), cfg.poi.n_random, cfg.poi.n_sets, cfg.poi.seed)?;
    ReferenceArtifacts::new(reference, &cfg.stack, sigma_map, &plan, &cfg.multipliers(), &cfg.backend)
}

/// Synthesizes an image matching `reference` under `sigma_map`. The returned image
/// is clamped to `[0, 1]`; optimization itself is unconstrained.
pub fn synthesize<T: Real>(
    reference: &ImageGrid<T>,
    sigma_map: &SigmaMap<T>,
    cfg: &SynthesisConfig,
) -> Result<(ImageGrid<T>, SynthesisTrace<T>)> {
    synthesize_from(reference, sigma_map, cfg, None)
}

pub fn synthesize_from<T: Real>(
    reference: &ImageGrid<T>,
    sigma_map: &SigmaMap<T>,
    cfg: &SynthesisConfig,
    init: Option<&ImageGrid<T>>,
) -> Result<(ImageGrid<T>, SynthesisTrace<T>)> {
    let artifacts = prepare(reference, sigma_map, cfg)?;
    let x0 = initial_image(reference, cfg, init)?;
    let (img, trace) = optimize(&artifacts, &x0, cfg)?;
    Ok((img.clamped_unit(), trace))
}

/// Grid step for the sparse progression plan: at most 255 points per axis and
/// no finer than every 8 pixels.
pub fn progression_spacing(dim: usize) -> usize {
    8usize.max(dim.div_ceil(255))
}

/// Centered points every `progression_spacing` pixels along each axis.
pub fn progression_points(dims: (usize, usize)) -> Vec<(usize, usize)> {
    let axis = |n: usize| {
        let s = progression_spacing(n);
        let start = (s / 2).min(n - 1);
        (start..n).step_by(s).collect::<Vec<_>>()
    };
    let rs = axis(dims.0);
    let cs = axis(dims.1);
    rs.iter().flat_map(|&r| cs.iter().map(move |&c| (r, c))).collect()
}

/// The sparse grid mapped onto every layer (duplicates removed).
pub fn progression_plan(dims: (usize, usize), layers: &[(u16, u32)]) -> Result<PoiPlan> {
    let base = progression_points(dims);
    let plan = PoiPlan {
        layers: layers
            .iter()
            .map(|&(layer_id, scale)| {
                let s = scale.max(1) as usize;
                let mut pts: Vec<(usize, usize)> = base.iter().map(|&(r, c)| (r / s, c / s)).collect();
                pts.sort_unstable();
                pts.dedup();
                LayerPlan {
                    layer_id,
                    scale,
                    dims: (dims.0.div_ceil(s), dims.1.div_ceil(s)),
                    fixed: pts,
                    rotating_sets: Vec::new(),
                }
            })
            .collect(),
        active: ActiveSet::None,
    };
    plan.validate()?;
    Ok(plan)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProgressionEntry<T> {
    pub sigma: T,
    #[serde(skip)]
    pub image: ImageGrid<T>,
    pub pixel_mse: T,
    pub final_loss: T,
    pub trace: SynthesisTrace<T>,
}

/// One synthesis per width, same width everywhere. Positive widths are evaluated
/// on the sparse even grid; width 0 pins every pixel.
pub fn sigma_progression<T: Real>(
    reference: &ImageGrid<T>,
    sigmas: &[T],
    cfg: &SynthesisConfig,
) -> Result<Vec<ProgressionEntry<T>>> {
    if sigmas.is_empty() {
        return Err(invalid("progression needs at least one width"));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < T::zero()) || sigmas.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("progression widths must be finite, nonnegative and ascending"));
    }
    cfg.validate()?;
    let dims = (reference.height(), reference.width());
    sigmas
        .par_iter()
        .map(|&sigma| {
            let map = constant_sigma(dims, sigma)?;
            let plan = if sigma == T::zero() {
                build_poi_plan(&map, &cfg.layers(), 0, 1, cfg.poi.seed)?
            } else {
                progression_plan(dims, &cfg.layers())?
            };
            let art = ReferenceArtifacts::new(reference, &cfg.stack, &map, &plan, &cfg.multipliers(), &cfg.backend)?;
            let x0 = initial_image(reference, cfg, None)?;
            let (img, trace) = optimize(&art, &x0, cfg)?;
            let image = img.clamped_unit();
            let pixel_mse = image.mean_squared_error(reference)?;
            Ok(ProgressionEntry {
                sigma,
                image,
                pixel_mse,
                final_loss: trace.final_loss(),
                trace,
            })
        })
        .collect()
}

/// Minimizes masked MSE plus `gram_weight` times the Gram distance over conv layers.
pub fn baseline_mse_plus_gram<T: Real>(
    reference: &ImageGrid<T>,
    saliency_mask: &BoolGrid,
    gram_weight: T,
    cfg: &SynthesisConfig,
    init: Option<&ImageGrid<T>>,
) -> Result<(ImageGrid<T>, SynthesisTrace<T>)> {
    cfg.validate()?;
    let start = Instant::now();
    let obj = GramObjective::new(reference, saliency_mask, gram_weight, &cfg.stack)?;
    let x0 = initial_image(reference, cfg, init)?;
    let (h, w, c) = x0.dims();
    let f = |x: &[T], _: u64| -> Result<(T, Vec<T>)> {
        let (l, g) = obj.loss_and_gradient(&Grid::new(h, w, c, x.to_vec())?)?;
        Ok((l, g.into_vec()))
    };
    let tr = lbfgs_minimize(f, x0.into_vec(), &cfg.lbfgs(false))?;
    let img = Grid::new(h, w, c, tr.x.clone())?.clamped_unit();
    Ok((img, SynthesisTrace::from_optim(&tr, start.elapsed().as_secs_f64())))
}

/// Pixel MSE restricted to `mask`.
pub fn masked_mse<T: Real>(a: &ImageGrid<T>, b: &ImageGrid<T>, mask: &BoolGrid) -> Result<T> {
    if !a.same_shape(b) || (mask.height, mask.width) != (a.height(), a.width()) {
        return Err(mismatch("masked MSE operands differ in shape"));
    }
    let mut acc = T::zero();
    let mut n = 0usize;
    for r in 0..a.height() {
        for c in 0..a.width() {
            if mask.get(r, c) {
                for (x, y) in a.pixel(r, c).iter().zip(b.pixel(r, c)) {
                    acc += (*x - *y) * (*x - *y);
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(invalid("mask selects no pixels"));
    }
    Ok(acc / T::from_usize_lossy(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn progression_grid_rule() {
        assert_eq!(progression_spacing(64), 8);
        assert_eq!(progression_spacing(4096), 17);
        let pts = progression_points((64, 64));
        assert_eq!(pts.len(), 64);
        assert_eq!(pts[0], (4, 4));
        assert_eq!(pts[63], (60, 60));
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = SynthesisConfig::default();
        let js = serde_json::to_string(&cfg).unwrap();
        let back: SynthesisConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<SynthesisConfig>(r#"{"max_iter": 3}"#).is_err());
        let partial: SynthesisConfig = serde_json::from_str(r#"{"max_iterations": 3}"#).unwrap();
        assert_eq!(partial.max_iterations, 3);
    }

    #[test]
    fn gram_baseline_from_reference_starts_at_zero() {
        let reference = Grid::from_fn(8, 8, 1, |r, c, _| ((r + 2 * c) % 5) as f64 / 5.0);
        let mask = BoolGrid::from_fn(8, 8, |r, _| r < 4);
        let cfg = SynthesisConfig {
            max_iterations: 5,
            init: Init::Provided,
            stack: StackSpec {
                num_layers: 2,
                widths: vec![2, 3],
                kernel_size: 3,
                seed: 0,
            },
            ..Default::default()
        };
        let (_, tr) = baseline_mse_plus_gram(&reference, &mask, 1.0, &cfg, Some(&reference)).unwrap();
        assert_eq!(tr.losses[0], 0.0);
    }
}
