//! Per-pixel pooling-width maps.
//!
//! `sigma = 0` marks pure-fidelity pixels; widths grow linearly with the Euclidean
//! distance to the nearest such pixel, reaching `edge_sigma` at the farthest pixel.

use std::path::Path;

use crate::error::{invalid, mismatch, Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

/// Default saliency threshold above which a pixel is pinned at `sigma = 0`.
pub const DEFAULT_SALIENCY_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaMap<T> {
    height: usize,
    width: usize,
    sigma: Vec<T>,
}

impl<T: Real> SigmaMap<T> {
    pub fn new(height: usize, width: usize, sigma: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("sigma map must be non-empty"));
        }
        if sigma.len() != height * width {
            return Err(mismatch(format!(
                "{} values for a {height}x{width} sigma map",
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s < T::zero()) {
            return Err(invalid("sigma values must be finite and nonnegative"));
        }
        Ok(Self {
            height,
            width,
            sigma,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.sigma[row * self.width + col]
    }

    pub fn values(&self) -> &[T] {
        &self.sigma
    }

    pub fn max(&self) -> T {
        self.sigma.iter().copied().fold(T::zero(), T::max)
    }

    pub fn is_all_zero(&self) -> bool {
        self.sigma.iter().all(|s| *s == T::zero())
    }

    pub fn to_grid(&self) -> Grid<T> {
        Grid::new(self.height, self.width, 1, self.sigma.clone()).unwrap()
    }

    pub fn from_grid(grid: &Grid<T>) -> Result<Self> {
        if grid.depth() != 1 {
            return Err(invalid(format!(
                "sigma map grid must have depth 1, got {}",
                grid.depth()
            )));
        }
        Self::new(grid.height(), grid.width(), grid.as_slice().to_vec())
    }

    /// Loads a map stored as a single-layer WDGRID with `d = 1`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_grid(&crate::wdgrid::load_grid(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::wdgrid::save_grid(&self.to_grid(), path)
    }
}

/// Saliency values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyGrid<T> {
    height: usize,
    width: usize,
    saliency: Vec<T>,
}

impl<T: Real> SaliencyGrid<T> {
    /// Clamps every value into `[0, 1]`.
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(mismatch("saliency buffer does not match its dimensions"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("saliency contains NaN".into()));
        }
        Ok(Self {
            height,
            width,
            saliency: values
                .into_iter()
                .map(|v| v.max(T::zero()).min(T::one()))
                .collect(),
        })
    }

    /// 8-bit grayscale levels normalized by 255.
    pub fn from_u8(height: usize, width: usize, levels: &[u8]) -> Result<Self> {
        Self::new(
            height,
            width,
            levels.iter().map(|&v| T::lit(v as f64 / 255.0)).collect(),
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.saliency[row * self.width + col]
    }

    /// Pixels strictly above `threshold`.
    pub fn mask_above(&self, threshold: T) -> BoolGrid {
        BoolGrid {
            height: self.height,
            width: self.width,
            cells: self.saliency.iter().map(|&s| s > threshold).collect(),
        }
    }
}

/// A boolean raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolGrid {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<bool>,
}

impl BoolGrid {
    pub fn new(height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || cells.len() != height * width {
            return Err(mismatch("mask buffer does not match its dimensions"));
        }
        Ok(Self {
            height,
            width,
            cells,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                cells.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            cells,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    /// A filled disc of the given radius around `center`.
    pub fn disc(height: usize, width: usize, center: (usize, usize), radius: f64) -> Self {
        Self::from_fn(height, width, |r, c| {
            let dr = r as f64 - center.0 as f64;
            let dc = c as f64 - center.1 as f64;
            (dr * dr + dc * dc).sqrt() <= radius
        })
    }
}

/// Uniform pooling width everywhere.
pub fn constant_sigma<T: Real>(dims: (usize, usize), sigma: T) -> Result<SigmaMap<T>> {
    if !sigma.is_finite() || sigma < T::zero() {
        return Err(invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    SigmaMap::new(dims.0, dims.1, vec![sigma; dims.0 * dims.1])
}

/// 1-D squared distance transform of a sampled function by lower envelope of parabolas.
/// Sites with infinite `f` are skipped.
fn lower_envelope_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let sites: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut v = Vec::with_capacity(sites.len());
    let mut z = Vec::with_capacity(sites.len() + 1);
    v.push(sites[0]);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    let isect = |p: usize, q: usize| {
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    for &q in &sites[1..] {
        let mut s = isect(*v.last().unwrap(), q);
        while s <= z[z.len() - 2] {
            v.pop();
            z.pop();
            s = isect(*v.last().unwrap(), q);
        }
        v.push(q);
        let last = z.len() - 1;
        z[last] = s;
        z.push(f64::INFINITY);
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every pixel to the nearest `true` pixel.
///
/// Returns `+inf` everywhere when the mask has no `true` pixel.
pub fn distance_transform(mask: &BoolGrid) -> Vec<f64> {
    let (h, w) = (mask.height, mask.width);
    let mut sq = vec![0.0f64; h * w];
    // columns
    let mut col = vec![0.0f64; h];
    let mut res = vec![0.0f64; h];
    for c in 0..w {
        for r in 0..h {
            col[r] = if mask.get(r, c) { 0.0 } else { f64::INFINITY };
        }
        lower_envelope_1d(&col, &mut res);
        for r in 0..h {
            sq[r * w + c] = res[r];
        }
    }
    // rows
    let mut row = vec![0.0f64; w];
    for r in 0..h {
        row.copy_from_slice(&sq[r * w..(r + 1) * w]);
        lower_envelope_1d(&row, &mut sq[r * w..(r + 1) * w]);
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// `sigma(p) = edge_sigma * dist(p) / max_dist`, zero exactly on the pins.
pub fn pinned_sigma<T: Real>(pins: &BoolGrid, edge_sigma: T) -> Result<SigmaMap<T>> {
    if !(edge_sigma > T::zero()) || !edge_sigma.is_finite() {
        return Err(invalid("edge sigma must be positive and finite"));
    }
    if pins.count() == 0 {
        return Err(Error::Degenerate("pin set is empty".into()));
    }
    let dist = distance_transform(pins);
    let max_dist = dist.iter().copied().fold(0.0f64, f64::max);
    let values = if max_dist == 0.0 {
        vec![T::zero(); dist.len()]
    } else {
        dist.iter()
            .map(|&d| edge_sigma * T::lit(d / max_dist))
            .collect()
    };
    SigmaMap::new(pins.height, pins.width, values)
}

/// Pixels with saliency above `threshold` get `sigma = 0`; the rest grow linearly
/// with distance to that set.
pub fn saliency_sigma<T: Real>(
    saliency: &SaliencyGrid<T>,
    threshold: T,
    edge_sigma: T,
) -> Result<SigmaMap<T>> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(invalid(format!("saliency threshold must lie in (0, 1), got {threshold}")));
    }
    let mask = saliency.mask_above(threshold);
    if mask.count() == 0 {
        return Err(Error::Degenerate(format!(
            "no pixel has saliency above {threshold}; lower the threshold"
        )));
    }
    pinned_sigma(&mask, edge_sigma)
}

/// Expresses a map in the pixel units of a layer downsampled by `scale`:
/// `out(i, j) = map(i * scale, j * scale) / scale`, dims `ceil(dims / scale)`.
pub fn rescale_sigma_for_layer<T: Real>(map: &SigmaMap<T>, scale: u32) -> SigmaMap<T> {
    if scale <= 1 {
        return map.clone();
    }
    let s = scale as usize;
    let h = map.height.div_ceil(s);
    let w = map.width.div_ceil(s);
    let div = T::from_u32(scale).unwrap();
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            out.push(map.get(i * s, j * s) / div);
        }
    }
    SigmaMap {
        height: h,
        width: w,
        sigma: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_maps() {
        let m = constant_sigma((256, 256), 4000.0f64).unwrap();
        assert!(m.values().iter().all(|&s| s == 4000.0));
        assert!(constant_sigma((4, 4), 0.0f64).unwrap().is_all_zero());
        assert_eq!(constant_sigma((1, 1), 3.0f64).unwrap().values(), &[3.0]);
        assert!(constant_sigma((2, 2), -1.0f64).is_err());
    }

    #[test]
    fn corner_seed_distances() {
        let mask = BoolGrid::from_fn(3, 3, |r, c| r == 0 && c == 0);
        let d = distance_transform(&mask);
        let s2 = 2f64.sqrt();
        let s5 = 5f64.sqrt();
        let s8 = 8f64.sqrt();
        assert_eq!(d, vec![0.0, 1.0, 2.0, 1.0, s2, s5, 2.0, s5, s8]);
    }

    #[test]
    fn degenerate_masks() {
        let all = BoolGrid::from_fn(4, 5, |_, _| true);
        assert!(distance_transform(&all).iter().all(|&x| x == 0.0));
        let none = BoolGrid::from_fn(4, 5, |_, _| false);
        assert!(distance_transform(&none).iter().all(|x| x.is_infinite()));
    }

    #[test]
    fn center_pin_reaches_edge_sigma_at_corner() {
        let n = 257;
        let pins = BoolGrid::from_fn(n, n, |r, c| r == 128 && c == 128);
        let m = pinned_sigma(&pins, 257.0f64).unwrap();
        assert_eq!(m.get(0, 0), 257.0);
        assert_eq!(m.get(128, 128), 0.0);
        // nondecreasing along rays leaving the pin
        for (dr, dc) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 2), (-1, -1)] {
            let (mut r, mut c) = (128i64, 128i64);
            let mut prev = 0.0;
            while r >= 0 && c >= 0 && r < n as i64 && c < n as i64 {
                let s = m.get(r as usize, c as usize);
                assert!(s >= prev);
                prev = s;
                r += dr;
                c += dc;
            }
        }
    }

    #[test]
    fn all_pins_give_zero_map_and_empty_pins_fail() {
        let all = BoolGrid::from_fn(3, 4, |_, _| true);
        assert!(pinned_sigma(&all, 4.0f64).unwrap().is_all_zero());
        let none = BoolGrid::from_fn(3, 4, |_, _| false);
        assert!(pinned_sigma(&none, 4.0f64).is_err());
    }

    #[test]
    fn saliency_maps() {
        let full = SaliencyGrid::new(4, 4, vec![1.0f64; 16]).unwrap();
        assert!(saliency_sigma(&full, 0.1, 4.0).unwrap().is_all_zero());
        let none = SaliencyGrid::new(4, 4, vec![0.05f64; 16]).unwrap();
        assert!(matches!(saliency_sigma(&none, 0.1, 4.0), Err(Error::Degenerate(_))));
        assert!(saliency_sigma(&full, 1.0, 4.0).is_err());

        let n = 33;
        let mut v = vec![0.0f64; n * n];
        v[16 * n + 16] = 0.9;
        let sal = SaliencyGrid::new(n, n, v).unwrap();
        let a = saliency_sigma(&sal, DEFAULT_SALIENCY_THRESHOLD, 33.0).unwrap();
        let pins = BoolGrid::from_fn(n, n, |r, c| r == 16 && c == 16);
        let b = pinned_sigma(&pins, 33.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saliency_ingestion_clamps_and_normalizes() {
        let s = SaliencyGrid::<f64>::new(1, 3, vec![-0.5, 0.5, 2.0]).unwrap();
        assert_eq!((s.get(0, 0), s.get(0, 1), s.get(0, 2)), (0.0, 0.5, 1.0));
        let u = SaliencyGrid::<f64>::from_u8(1, 2, &[0, 255]).unwrap();
        assert_eq!(u.get(0, 1), 1.0);
    }

    #[test]
    fn rescaling() {
        let m = constant_sigma((64, 64), 4000.0f64).unwrap();
        assert_eq!(rescale_sigma_for_layer(&m, 1), m);
        let q = rescale_sigma_for_layer(&m, 4);
        assert_eq!(q.dims(), (16, 16));
        assert!(q.values().iter().all(|&s| s == 1000.0));
        let z = rescale_sigma_for_layer(&constant_sigma((5, 7), 0.0f64).unwrap(), 2);
        assert_eq!(z.dims(), (3, 4));
        assert!(z.is_all_zero());
    }
}
