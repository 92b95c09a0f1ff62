use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::sigma_map::{rescale_sigma_for_layer, SigmaMap};

pub const DEFAULT_RANDOM_POINTS: usize = 25;
pub const DEFAULT_POINT_SETS: usize = 20;

/// Points of interest for one feature layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layer_id: u16,
    pub scale: u32,
    pub dims: (usize, usize),
    /// Evaluated on every call.
    pub fixed: Vec<(usize, usize)>,
    /// Only one of these sets is evaluated per call.
    pub rotating_sets: Vec<Vec<(usize, usize)>>,
}

/// Which rotating set a distortion evaluation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveSet {
    /// Ignore rotating sets.
    None,
    Index(usize),
    /// Uniform draw keyed by `(seed, counter)`.
    Draw { seed: u64, counter: u64 },
    /// Every rotating set at once.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoiPlan {
    pub layers: Vec<LayerPlan>,
    pub active: ActiveSet,
}

/// Uniform index in `0..n` for evaluation `counter` of a run seeded with `seed`.
pub fn draw_set_index(seed: u64, counter: u64, n: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng.random_range(0..n)
}

impl PoiPlan {
    pub fn layer(&self, id: u16) -> Option<&LayerPlan> {
        self.layers.iter().find(|l| l.layer_id == id)
    }

    pub fn with_active(mut self, active: ActiveSet) -> Self {
        self.active = active;
        self
    }

    pub fn set_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.rotating_sets.len())
            .max()
            .unwrap_or(0)
    }

    /// Points evaluated for `layer` under the current [`ActiveSet`].
    pub fn active_points(&self, layer: &LayerPlan) -> Result<Vec<(usize, usize)>> {
        let mut pts = layer.fixed.clone();
        let n = layer.rotating_sets.len();
        match self.active {
            ActiveSet::None => {}
            _ if n == 0 => {}
            ActiveSet::Index(i) => {
                let set = layer.rotating_sets.get(i).ok_or_else(|| {
                    invalid(format!("rotating set {i} requested, layer has {n}"))
                })?;
                pts.extend_from_slice(set);
            }
            ActiveSet::Draw { seed, counter } => {
                pts.extend_from_slice(&layer.rotating_sets[draw_set_index(seed, counter, n)]);
            }
            ActiveSet::All => {
                for s in &layer.rotating_sets {
                    pts.extend_from_slice(s);
                }
            }
        }
        Ok(pts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid("point-of-interest plan has no layers"));
        }
        let mut any = false;
        for l in &self.layers {
            let (h, w) = l.dims;
            let all = l.fixed.iter().chain(l.rotating_sets.iter().flatten());
            for &(r, c) in all {
                if r >= h || c >= w {
                    return Err(Error::OutOfBounds {
                        row: r,
                        col: c,
                        height: h,
                        width: w,
                    });
                }
                any = true;
            }
            if let Some(first) = l.rotating_sets.first() {
                if l.rotating_sets.iter().any(|s| s.len() != first.len()) {
                    return Err(invalid(format!(
                        "rotating sets of layer {} differ in size",
                        l.layer_id
                    )));
                }
            }
        }
        if !any {
            return Err(invalid("point-of-interest plan is empty"));
        }
        Ok(())
    }

    /// The same explicit points on every layer.
    pub fn explicit(layers: &[(u16, u32, (usize, usize))], points: &[(usize, usize)]) -> Result<Self> {
        let plan = Self {
            layers: layers
                .iter()
                .map(|&(layer_id, scale, dims)| LayerPlan {
                    layer_id,
                    scale,
                    dims,
                    fixed: points.to_vec(),
                    rotating_sets: Vec::new(),
                })
                .collect(),
            active: ActiveSet::None,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// One point per layer at the layer center.
    pub fn center(layers: &[(u16, u32, (usize, usize))]) -> Result<Self> {
        let plan = Self {
            layers: layers
                .iter()
                .map(|&(layer_id, scale, (h, w))| LayerPlan {
                    layer_id,
                    scale,
                    dims: (h, w),
                    fixed: vec![(h / 2, w / 2)],
                    rotating_sets: Vec::new(),
                })
                .collect(),
            active: ActiveSet::None,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// A `rows x cols` even grid per layer, cells centered.
    pub fn even_grid(layers: &[(u16, u32, (usize, usize))], rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("grid needs at least one row and column"));
        }
        let plan = Self {
            layers: layers
                .iter()
                .map(|&(layer_id, scale, (h, w))| LayerPlan {
                    layer_id,
                    scale,
                    dims: (h, w),
                    fixed: even_grid_points((h, w), rows, cols),
                    rotating_sets: Vec::new(),
                })
                .collect(),
            active: ActiveSet::None,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn point_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.fixed.len() + l.rotating_sets.first().map_or(0, Vec::len))
            .sum()
    }
}

/// Cell centers of an even `rows x cols` grid over `dims` (duplicates removed).
pub fn even_grid_points(dims: (usize, usize), rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let axis = |n: usize, k: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..k).map(|i| ((2 * i + 1) * n) / (2 * k)).collect();
        v.dedup();
        v
    };
    let rs = axis(dims.0, rows);
    let cs = axis(dims.1, cols);
    rs.iter()
        .flat_map(|&r| cs.iter().map(move |&c| (r, c)))
        .collect()
}

/// Fixed points are every `sigma = 0` pixel of the layer-rescaled map; each rotating
/// set holds `n_random` distinct `sigma > 0` pixels.
pub fn build_poi_plan<T: Real>(
    sigma_map: &SigmaMap<T>,
    layers: &[(u16, u32)],
    n_random: usize,
    n_sets: usize,
    seed: u64,
) -> Result<PoiPlan> {
    if n_sets == 0 {
        return Err(invalid("need at least one rotating set"));
    }
    if layers.is_empty() {
        return Err(invalid("no layers to plan"));
    }
    let mut out = Vec::with_capacity(layers.len());
    for (li, &(layer_id, scale)) in layers.iter().enumerate() {
        let map = rescale_sigma_for_layer(sigma_map, scale);
        let (h, w) = map.dims();
        let mut fixed = Vec::new();
        let mut pool = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if map.get(r, c) == T::zero() {
                    fixed.push((r, c));
                } else {
                    pool.push((r, c));
                }
            }
        }
        let rotating_sets = if pool.is_empty() || n_random == 0 {
            Vec::new()
        } else {
            if n_random > pool.len() {
                return Err(invalid(format!(
                    "{n_random} random points requested but layer {layer_id} has only {} with sigma > 0",
                    pool.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(li as u64);
            (0..n_sets)
                .map(|_| {
                    let mut idx = sample(&mut rng, pool.len(), n_random).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|i| pool[i]).collect()
                })
                .collect()
        };
        out.push(LayerPlan {
            layer_id,
            scale,
            dims: (h, w),
            fixed,
            rotating_sets,
        });
    }
    let plan = PoiPlan {
        layers: out,
        active: ActiveSet::Draw { seed, counter: 0 },
    };
    plan.validate()?;
    Ok(plan)
}

/// Per-layer and per-width weights on the distortion terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Multipliers {
    /// `(layer_id, M_l)`; layers not listed get weight 1.
    pub layers: Vec<(u16, f64)>,
    pub sigma_zero: f64,
    pub sigma_pos: f64,
}

impl Multipliers {
    /// All ones.
    pub fn uniform() -> Self {
        Self {
            layers: Vec::new(),
            sigma_zero: 1.0,
            sigma_pos: 1.0,
        }
    }

    /// 100 on layer 0; conv layers `1..=num_conv` get 10, 5, 1 by thirds.
    /// `M_sigma` is 1 at zero width and 200 elsewhere.
    pub fn standard(num_conv: usize) -> Self {
        let mut layers = vec![(0u16, 100.0)];
        for l in 1..=num_conv {
            let t = (l - 1) as f64 / num_conv as f64;
            let m = if t < 1.0 / 3.0 {
                10.0
            } else if t < 2.0 / 3.0 {
                5.0
            } else {
                1.0
            };
            layers.push((l as u16, m));
        }
        Self {
            layers,
            sigma_zero: 1.0,
            sigma_pos: 200.0,
        }
    }

    pub fn layer(&self, id: u16) -> f64 {
        self.layers
            .iter()
            .find(|(l, _)| *l == id)
            .map_or(1.0, |(_, m)| *m)
    }

    pub fn sigma<T: Real>(&self, sigma: T) -> f64 {
        if sigma == T::zero() {
            self.sigma_zero
        } else {
            self.sigma_pos
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |m: f64| m.is_finite() && m > 0.0;
        if !ok(self.sigma_zero) || !ok(self.sigma_pos) || self.layers.iter().any(|(_, m)| !ok(*m)) {
            return Err(invalid("multipliers must be finite and strictly positive"));
        }
        Ok(())
    }
}

impl Default for Multipliers {
    fn default() -> Self {
        Self::standard(4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigma_map::{constant_sigma, pinned_sigma, BoolGrid};

    #[test]
    fn all_zero_map_fixes_everything() {
        let m = constant_sigma((6, 5), 0.0f64).unwrap();
        let p = build_poi_plan(&m, &[(0, 1), (2, 2)], 25, 20, 1).unwrap();
        assert_eq!(p.layers[0].fixed.len(), 30);
        assert!(p.layers[0].rotating_sets.is_empty());
        assert_eq!(p.layers[1].dims, (3, 3));
        assert_eq!(p.layers[1].fixed.len(), 9);
    }

    #[test]
    fn seeded_plans_repeat() {
        let pins = BoolGrid::from_fn(16, 16, |r, c| r == 8 && c == 8);
        let m = pinned_sigma(&pins, 16.0f64).unwrap();
        let a = build_poi_plan(&m, &[(0, 1), (1, 1)], 25, 20, 9).unwrap();
        let b = build_poi_plan(&m, &[(0, 1), (1, 1)], 25, 20, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers[0].fixed, vec![(8, 8)]);
        assert_eq!(a.layers[0].rotating_sets.len(), 20);
        for s in &a.layers[0].rotating_sets {
            assert_eq!(s.len(), 25);
            let mut u = s.clone();
            u.dedup();
            assert_eq!(u.len(), 25);
            assert!(!s.contains(&(8, 8)));
        }
        let c = build_poi_plan(&m, &[(0, 1), (1, 1)], 25, 20, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_many_random_points() {
        let m = constant_sigma((3, 3), 1.0f64).unwrap();
        assert!(build_poi_plan(&m, &[(0, 1)], 10, 2, 0).is_err());
        assert!(build_poi_plan(&m, &[(0, 1)], 9, 0, 0).is_err());
    }

    #[test]
    fn grid_spacing() {
        let pts = even_grid_points((64, 64), 3, 3);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], (10, 10));
        assert_eq!(pts[4], (32, 32));
    }

    #[test]
    fn standard_multipliers() {
        let m = Multipliers::standard(4);
        assert_eq!(m.layer(0), 100.0);
        assert_eq!(
            (1..=4).map(|l| m.layer(l)).collect::<Vec<_>>(),
            vec![10.0, 10.0, 5.0, 1.0]
        );
        let m6 = Multipliers::standard(6);
        assert_eq!(
            (1..=6).map(|l| m6.layer(l)).collect::<Vec<_>>(),
            vec![10.0, 10.0, 5.0, 5.0, 1.0, 1.0]
        );
        assert_eq!(m.sigma(0.0f64), 1.0);
        assert_eq!(m.sigma(0.5f64), 200.0);
    }

    #[test]
    fn draw_is_deterministic_and_spread() {
        let idx: Vec<usize> = (0..200).map(|c| draw_set_index(4, c, 20)).collect();
        assert_eq!(idx, (0..200).map(|c| draw_set_index(4, c, 20)).collect::<Vec<_>>());
        let mut seen = idx.clone();
        seen.sort_unstable();
        seen.dedup();
        assert!(seen.len() > 15);
    }
}
