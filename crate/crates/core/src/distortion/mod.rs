//! Pooled feature statistics, the distance backends, and the aggregated loss.

pub mod moments;
pub mod plan;
pub mod proxy;
pub mod wasserstein;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::features::{FeatureLayer, FeatureStack};
use crate::grid::Grid;
use crate::pooling::{PoolingKernel2D, DEFAULT_TAIL_MASS_BOUND};
use crate::scalar::Real;
use crate::sigma_map::{rescale_sigma_for_layer, SigmaMap};

pub use moments::{pooled_covariance, pooled_moments, pooled_moments_grid, PooledMoments};
pub use plan::{build_poi_plan, even_grid_points, ActiveSet, LayerPlan, Multipliers, PoiPlan};
pub use proxy::{bures_w2, diag_w2, gaussianized_diag_w2, squared_distance};
pub use wasserstein::{exact_w_p_1d, random_directions, sliced_w_p, WeightedEmpirical};

/// Distance between the pooled feature distributions of reference and reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum Backend {
    /// Gaussians with diagonal covariance.
    #[default]
    Diag,
    /// Gaussians with full covariance.
    Bures,
    /// Sum over coordinates of exact `W_p^p` between the scalar marginals.
    Exact1d { p: f64 },
    /// Sliced `W_p^p`; `projections = 0` means one per feature.
    Sliced { projections: usize, p: f64, seed: u64 },
}


impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Diag => "diag",
            Backend::Bures => "bures",
            Backend::Exact1d { .. } => "exact1d",
            Backend::Sliced { .. } => "sliced",
        }
    }

    /// Whether the backend is defined when the two fields have different resolutions.
    pub fn allows_mixed_resolution(&self) -> bool {
        true
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag" => Ok(Backend::Diag),
            "bures" => Ok(Backend::Bures),
            "exact1d" => Ok(Backend::Exact1d { p: 2.0 }),
            "sliced" => Ok(Backend::Sliced {
                projections: 0,
                p: 2.0,
                seed: 0,
            }),
            other => Err(invalid(format!(
                "unknown backend '{other}' (expected diag, bures, exact1d or sliced)"
            ))),
        }
    }
}

/// Pooling kernel of width `sigma` centered at `point` of a `bounds`-sized layer.
pub fn kernel_at<T: Real>(
    sigma: T,
    point: (usize, usize),
    bounds: (usize, usize),
) -> Result<PoolingKernel2D<T>> {
    PoolingKernel2D::two_sided_geometric(sigma, point, bounds, T::lit(DEFAULT_TAIL_MASS_BOUND))
}

fn weighted_support<T: Real>(grid: &Grid<T>, kernel: &PoolingKernel2D<T>) -> (Vec<T>, Vec<T>) {
    let d = grid.depth();
    let mut samples = Vec::with_capacity(kernel.len() * d);
    let mut weights = Vec::with_capacity(kernel.len());
    for (r, wr) in kernel.rows() {
        for (c, wc) in kernel.cols() {
            samples.extend_from_slice(grid.pixel(r, c));
            weights.push(wr * wc);
        }
    }
    (samples, weights)
}

/// Distance between the pooled distribution of `a` under `ka` and of `b` under `kb`.
/// The two grids may differ in height and width but not in depth.
pub fn kernel_pair_distortion<T: Real>(
    a: &Grid<T>,
    ka: &PoolingKernel2D<T>,
    b: &Grid<T>,
    kb: &PoolingKernel2D<T>,
    backend: &Backend,
) -> Result<T> {
    if a.depth() != b.depth() {
        return Err(mismatch(format!(
            "feature depths differ: {} vs {}",
            a.depth(),
            b.depth()
        )));
    }
    moments::check_kernel(a, ka)?;
    moments::check_kernel(b, kb)?;
    let d = a.depth();
    match *backend {
        Backend::Diag => {
            if ka.is_delta() && kb.is_delta() {
                let (ca, cb) = (ka.center(), kb.center());
                return Ok(squared_distance(a.pixel(ca.0, ca.1), b.pixel(cb.0, cb.1)));
            }
            let ma = pooled_moments_grid(a, ka)?;
            let mb = pooled_moments_grid(b, kb)?;
            gaussianized_diag_w2(&ma, &mb)
        }
        Backend::Bures => {
            let (mean_a, cov_a) = pooled_covariance(a, ka)?;
            let (mean_b, cov_b) = pooled_covariance(b, kb)?;
            bures_w2(&mean_a, &cov_a, &mean_b, &cov_b)
        }
        Backend::Exact1d { p } => {
            let (sa, wa) = weighted_support(a, ka);
            let (sb, wb) = weighted_support(b, kb);
            let mut acc = T::zero();
            for i in 0..d {
                let ea = WeightedEmpirical::from_parts(
                    sa.iter().skip(i).step_by(d).copied().collect(),
                    wa.clone(),
                );
                let eb = WeightedEmpirical::from_parts(
                    sb.iter().skip(i).step_by(d).copied().collect(),
                    wb.clone(),
                );
                acc += exact_w_p_1d(&ea, &eb, T::lit(p))?;
            }
            Ok(acc)
        }
        Backend::Sliced {
            projections,
            p,
            seed,
        } => {
            let (sa, wa) = weighted_support(a, ka);
            let (sb, wb) = weighted_support(b, kb);
            let n = if projections == 0 { d } else { projections };
            sliced_w_p(&sa, &wa, &sb, &wb, d, n, T::lit(p), seed)
        }
    }
}

fn check_point(point: (usize, usize), dims: (usize, usize)) -> Result<()> {
    if point.0 >= dims.0 || point.1 >= dims.1 {
        return Err(Error::OutOfBounds {
            row: point.0,
            col: point.1,
            height: dims.0,
            width: dims.1,
        });
    }
    Ok(())
}

fn layer_pair<'a, T: Real>(
    reference: &'a FeatureStack<T>,
    reconstruction: &'a FeatureStack<T>,
    layer_id: u16,
) -> Result<(&'a FeatureLayer<T>, &'a FeatureLayer<T>)> {
    let a = reference
        .layer(layer_id)
        .ok_or_else(|| invalid(format!("reference has no layer {layer_id}")))?;
    let b = reconstruction
        .layer(layer_id)
        .ok_or_else(|| invalid(format!("reconstruction has no layer {layer_id}")))?;
    if a.values.dims() != b.values.dims() || a.scale != b.scale {
        return Err(mismatch(format!(
            "layer {layer_id}: reference {:?} at scale {}, reconstruction {:?} at scale {}",
            a.values.dims(),
            a.scale,
            b.values.dims(),
            b.scale
        )));
    }
    Ok((a, b))
}

/// `D_{n,sigma}` for one layer at one point (in that layer's pixel units).
pub fn local_distortion<T: Real>(
    reference: &FeatureStack<T>,
    reconstruction: &FeatureStack<T>,
    layer_id: u16,
    point: (usize, usize),
    sigma: T,
    backend: &Backend,
) -> Result<T> {
    let (a, b) = layer_pair(reference, reconstruction, layer_id)?;
    let dims = (a.values.height(), a.values.width());
    check_point(point, dims)?;
    let k = kernel_at(sigma, point, dims)?;
    kernel_pair_distortion(&a.values, &k, &b.values, &k, backend)
}

/// One evaluated point of interest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointTerm<T> {
    pub layer_id: u16,
    pub row: usize,
    pub col: usize,
    pub sigma: T,
    /// Unweighted local distortion.
    pub distortion: T,
    /// `distortion * M_l * M_sigma`, the contribution to the total.
    pub value: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionReport<T> {
    pub backend: Backend,
    pub total: T,
    pub per_layer: BTreeMap<u16, T>,
    pub per_point: Vec<PointTerm<T>>,
    #[serde(skip)]
    pub heatmap: Option<Grid<T>>,
}

impl<T: Real> DistortionReport<T> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid(format!("report serialization: {e}")))
    }
}

/// Checks that `map` covers the base resolution of `stack` and returns it rescaled per layer.
pub fn layer_sigma_maps<T: Real>(
    stack: &FeatureStack<T>,
    sigma_map: &SigmaMap<T>,
) -> Result<BTreeMap<u16, SigmaMap<T>>> {
    let mut out = BTreeMap::new();
    for l in &stack.layers {
        let m = rescale_sigma_for_layer(sigma_map, l.scale);
        let dims = (l.values.height(), l.values.width());
        if m.dims() != dims {
            return Err(mismatch(format!(
                "sigma map {:?} rescaled by {} gives {:?}, layer {} is {:?}",
                sigma_map.dims(),
                l.scale,
                m.dims(),
                l.layer_id,
                dims
            )));
        }
        out.insert(l.layer_id, m);
    }
    Ok(out)
}

/// `sum_l sum_points D * M_sigma * M_l` over the active points of `plan`.
pub fn total_distortion<T: Real>(
    reference: &FeatureStack<T>,
    reconstruction: &FeatureStack<T>,
    sigma_map: &SigmaMap<T>,
    plan: &PoiPlan,
    mult: &Multipliers,
    backend: &Backend,
) -> Result<DistortionReport<T>> {
    plan.validate()?;
    mult.validate()?;
    let maps = layer_sigma_maps(reference, sigma_map)?;
    let mut jobs = Vec::new();
    for lp in &plan.layers {
        let (a, _) = layer_pair(reference, reconstruction, lp.layer_id)?;
        if a.values.height() != lp.dims.0 || a.values.width() != lp.dims.1 {
            return Err(mismatch(format!(
                "plan for layer {} is {:?}, layer is {}x{}",
                lp.layer_id,
                lp.dims,
                a.values.height(),
                a.values.width()
            )));
        }
        let map = &maps[&lp.layer_id];
        for (r, c) in plan.active_points(lp)? {
            jobs.push((lp.layer_id, r, c, map.get(r, c)));
        }
    }
    if jobs.is_empty() {
        return Err(invalid("no active points of interest"));
    }
    let values: Vec<Result<T>> = jobs
        .par_iter()
        .map(|&(id, r, c, s)| local_distortion(reference, reconstruction, id, (r, c), s, backend))
        .collect();
    let mut per_point = Vec::with_capacity(jobs.len());
    let mut per_layer = BTreeMap::new();
    let mut total = T::zero();
    for (&(layer_id, row, col, sigma), v) in jobs.iter().zip(values) {
        let distortion = v?;
        let w = T::lit(mult.layer(layer_id) * mult.sigma(sigma));
        let value = distortion * w;
        total += value;
        *per_layer.entry(layer_id).or_insert(T::zero()) += value;
        per_point.push(PointTerm {
            layer_id,
            row,
            col,
            sigma,
            distortion,
            value,
        });
    }
    Ok(DistortionReport {
        backend: *backend,
        total,
        per_layer,
        per_point,
        heatmap: None,
    })
}

/// Dense weighted distortion at every layer position, summed across layers at
/// base resolution (each base pixel reads its layer ancestor at `(i / s, j / s)`).
pub fn distortion_heatmap<T: Real>(
    reference: &FeatureStack<T>,
    reconstruction: &FeatureStack<T>,
    sigma_map: &SigmaMap<T>,
    mult: &Multipliers,
    backend: &Backend,
) -> Result<Grid<T>> {
    mult.validate()?;
    let maps = layer_sigma_maps(reference, sigma_map)?;
    let (h, w) = sigma_map.dims();
    let mut out = Grid::zeros(h, w, 1);
    for l in &reference.layers {
        let (lh, lw) = (l.values.height(), l.values.width());
        let map = &maps[&l.layer_id];
        let dense: Vec<Result<T>> = (0..lh * lw)
            .into_par_iter()
            .map(|i| {
                let (r, c) = (i / lw, i % lw);
                let s = map.get(r, c);
                let v = local_distortion(reference, reconstruction, l.layer_id, (r, c), s, backend)?;
                Ok(v * T::lit(mult.layer(l.layer_id) * mult.sigma(s)))
            })
            .collect();
        let dense = dense.into_iter().collect::<Result<Vec<T>>>()?;
        let s = l.scale.max(1) as usize;
        for i in 0..h {
            for j in 0..w {
                let v = out.get(i, j, 0) + dense[(i / s) * lw + j / s];
                out.set(i, j, 0, v);
            }
        }
    }
    Ok(out)
}

/// Distortion between two stacks that may differ in resolution, evaluated on a
/// `rows x cols` even grid in each layer and normalized by the total feature
/// count and the number of points per layer.
pub fn pairwise_distortion<T: Real>(
    a: &FeatureStack<T>,
    b: &FeatureStack<T>,
    sigma: T,
    rows: usize,
    cols: usize,
    backend: &Backend,
) -> Result<T> {
    if rows == 0 || cols == 0 {
        return Err(invalid("grid needs at least one row and column"));
    }
    let mut jobs = Vec::new();
    let mut features = 0usize;
    for la in &a.layers {
        let lb = b
            .layer(la.layer_id)
            .ok_or_else(|| mismatch(format!("second stack has no layer {}", la.layer_id)))?;
        if la.values.depth() != lb.values.depth() || la.scale != lb.scale {
            return Err(mismatch(format!("layer {} differs in depth or scale", la.layer_id)));
        }
        features += la.values.depth();
        let pa = even_grid_points((la.values.height(), la.values.width()), rows, cols);
        let pb = even_grid_points((lb.values.height(), lb.values.width()), rows, cols);
        if pa.len() != pb.len() {
            return Err(mismatch(format!(
                "layer {} is too small for a {rows}x{cols} grid",
                la.layer_id
            )));
        }
        let s = sigma / T::from_u32(la.scale.max(1)).unwrap();
        for (p, q) in pa.into_iter().zip(pb) {
            jobs.push((la, lb, p, q, s));
        }
    }
    if jobs.is_empty() {
        return Err(invalid("stacks have no layers"));
    }
    let values: Vec<Result<T>> = jobs
        .par_iter()
        .map(|&(la, lb, p, q, s)| {
            let ka = kernel_at(s, p, (la.values.height(), la.values.width()))?;
            let kb = kernel_at(s, q, (lb.values.height(), lb.values.width()))?;
            kernel_pair_distortion(&la.values, &ka, &lb.values, &kb, backend)
        })
        .collect();
    let mut total = T::zero();
    for v in values {
        total += v?;
    }
    let points = T::from_usize_lossy(rows * cols);
    Ok(total / (T::from_usize_lossy(features) * points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{random_feature_stack, StackSpec};
    use crate::sigma_map::constant_sigma;

    fn stacks() -> (FeatureStack<f64>, FeatureStack<f64>) {
        let spec = StackSpec {
            num_layers: 2,
            widths: vec![3, 4],
            kernel_size: 3,
            seed: 5,
        };
        let a = Grid::from_fn(10, 12, 1, |r, c, _| ((r * 3 + c * 5) % 7) as f64 / 7.0);
        let b = Grid::from_fn(10, 12, 1, |r, c, _| ((r * 2 + c) % 5) as f64 / 5.0);
        (
            random_feature_stack(&a, &spec).unwrap(),
            random_feature_stack(&b, &spec).unwrap(),
        )
    }

    const BACKENDS: [Backend; 4] = [
        Backend::Diag,
        Backend::Bures,
        Backend::Exact1d { p: 2.0 },
        Backend::Sliced {
            projections: 0,
            p: 2.0,
            seed: 1,
        },
    ];

    #[test]
    fn identical_stacks_give_zero() {
        let (a, _) = stacks();
        for be in &BACKENDS {
            for s in [0.0, 0.7, 50.0] {
                let v = local_distortion(&a, &a, 1, (4, 5), s, be).unwrap();
                assert!(v.abs() < 1e-12, "{be} {s} {v}");
            }
        }
    }

    #[test]
    fn delta_diag_is_squared_distance() {
        let (a, b) = stacks();
        let v = local_distortion(&a, &b, 2, (2, 3), 0.0, &Backend::Diag).unwrap();
        let la = &a.layer(2).unwrap().values;
        let lb = &b.layer(2).unwrap().values;
        assert_eq!(v, squared_distance(la.pixel(2, 3), lb.pixel(2, 3)));
    }

    #[test]
    fn single_point_total_matches_local() {
        let (a, b) = stacks();
        let map = constant_sigma((10, 12), 0.0).unwrap();
        let plan = PoiPlan::explicit(&[(1, 1, (10, 12))], &[(3, 3)]).unwrap();
        let rep = total_distortion(&a, &b, &map, &plan, &Multipliers::uniform(), &Backend::Diag).unwrap();
        let local = local_distortion(&a, &b, 1, (3, 3), 0.0, &Backend::Diag).unwrap();
        assert_eq!(rep.total, local);
        assert_eq!(rep.per_point.len(), 1);
    }

    #[test]
    fn backend_names_round_trip() {
        for name in ["diag", "bures", "exact1d", "sliced"] {
            assert_eq!(name.parse::<Backend>().unwrap().name(), name);
        }
        assert!("sinkhorn".parse::<Backend>().is_err());
    }

    #[test]
    fn report_serializes() {
        let (a, b) = stacks();
        let map = constant_sigma((10, 12), 2.0).unwrap();
        let plan = PoiPlan::center(&[(0, 1, (10, 12)), (2, 2, (5, 6))]).unwrap();
        let rep = total_distortion(&a, &b, &map, &plan, &Multipliers::standard(2), &Backend::Diag).unwrap();
        let js: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert!(js["total"].as_f64().unwrap() > 0.0);
        assert_eq!(js["per_point"].as_array().unwrap().len(), 2);
        assert_eq!(js["backend"]["kind"], "diag");
    }

    #[test]
    fn heatmap_is_zero_for_identical() {
        let (a, _) = stacks();
        let map = constant_sigma((10, 12), 1.5).unwrap();
        let h = distortion_heatmap(&a, &a, &map, &Multipliers::uniform(), &Backend::Diag).unwrap();
        assert_eq!(h.dims(), (10, 12, 1));
        assert!(h.as_slice().iter().all(|v| v.abs() < 1e-12));
    }
}
