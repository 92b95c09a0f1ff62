//! Dense `H x W x D` rasters stored row-major as (row, col, channel).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::scalar::Real;

/// A dense raster of `depth`-dimensional vectors.
///
/// Images are grids with depth 1 or 3; feature layers use arbitrary depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<T>,
}

/// An image raster: a [`Grid`] whose depth is the channel count.
pub type ImageGrid<T> = Grid<T>;

impl<T: Real> Grid<T> {
    pub fn new(height: usize, width: usize, depth: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(invalid(format!(
                "grid dimensions must be positive, got {height}x{width}x{depth}"
            )));
        }
        if data.len() != height * width * depth {
            return Err(mismatch(format!(
                "buffer of length {} does not match {height}x{width}x{depth}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            depth,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, depth: usize) -> Self {
        Self::filled(height, width, depth, T::zero())
    }

    pub fn filled(height: usize, width: usize, depth: usize, value: T) -> Self {
        assert!(height > 0 && width > 0 && depth > 0, "empty grid");
        Self {
            height,
            width,
            depth,
            data: vec![value; height * width * depth],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        depth: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * depth);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..depth {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, depth, data).expect("from_fn dimensions")
    }

    /// Validates an image: 1 or 3 channels, finite values.
    pub fn image(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(invalid(format!("images have 1 or 3 channels, got {channels}")));
        }
        let g = Self::new(height, width, channels, data)?;
        g.ensure_finite("image")?;
        Ok(g)
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
    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * self.depth
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[self.index(row, col) + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: T) {
        let i = self.index(row, col) + ch;
        self.data[i] = value;
    }

    /// The feature vector at a pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let i = self.index(row, col);
        &self.data[i..i + self.depth]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let i = self.index(row, col);
        let d = self.depth;
        &mut self.data[i..i + d]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} contains NaN or infinity")))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            depth: self.depth,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Clamps every value into `[0, 1]`.
    pub fn clamped_unit(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    pub fn mean_squared_error(&self, other: &Self) -> Result<T> {
        if !self.same_shape(other) {
            return Err(mismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let sum: T = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        Ok(sum / T::from_usize_lossy(self.data.len()))
    }

    /// Converts the scalar type element-wise.
    pub fn cast<U: Real>(&self) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            depth: self.depth,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    /// 2x2 average pooling with partial windows at odd edges; output dims are `ceil(dim / 2)`.
    pub fn avg_pool2(&self) -> Self {
        let h = self.height.div_ceil(2);
        let w = self.width.div_ceil(2);
        let d = self.depth;
        let mut out = Self::zeros(h, w, d);
        for r in 0..h {
            for c in 0..w {
                let rows = (2 * r)..(2 * r + 2).min(self.height);
                let cols = (2 * c)..(2 * c + 2).min(self.width);
                let count = T::from_usize_lossy(rows.len() * cols.len());
                let dst = out.index(r, c);
                for rr in rows {
                    for cc in cols.clone() {
                        let src = self.index(rr, cc);
                        for ch in 0..d {
                            out.data[dst + ch] += self.data[src + ch];
                        }
                    }
                }
                for ch in 0..d {
                    out.data[dst + ch] /= count;
                }
            }
        }
        out
    }

    /// Adjoint of [`Grid::avg_pool2`]: spreads pooled gradients back onto a
    /// `height x width` grid.
    pub fn avg_pool2_backward(grad: &Self, height: usize, width: usize) -> Self {
        let d = grad.depth;
        let mut out = Self::zeros(height, width, d);
        for r in 0..grad.height {
            for c in 0..grad.width {
                let rows = (2 * r)..(2 * r + 2).min(height);
                let cols = (2 * c)..(2 * c + 2).min(width);
                let count = T::from_usize_lossy(rows.len() * cols.len());
                let src = grad.index(r, c);
                for rr in rows {
                    for cc in cols.clone() {
                        let dst = out.index(rr, cc);
                        for ch in 0..d {
                            out.data[dst + ch] += grad.data[src + ch] / count;
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_buffer() {
        assert!(Grid::<f64>::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Grid::<f64>::image(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Grid::<f64>::image(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn avg_pool_odd_edges_use_partial_windows() {
        let g = Grid::<f64>::from_fn(3, 3, 1, |r, c, _| (r * 3 + c) as f64);
        let p = g.avg_pool2();
        assert_eq!(p.dims(), (2, 2, 1));
        assert_eq!(p.get(0, 0, 0), (0.0 + 1.0 + 3.0 + 4.0) / 4.0);
        assert_eq!(p.get(0, 1, 0), (2.0 + 5.0) / 2.0);
        assert_eq!(p.get(1, 1, 0), 8.0);
    }

    #[test]
    fn avg_pool_backward_is_adjoint() {
        let x = Grid::<f64>::from_fn(5, 4, 2, |r, c, ch| ((r * 7 + c * 3 + ch) % 5) as f64 - 2.0);
        let y = Grid::<f64>::from_fn(3, 2, 2, |r, c, ch| (r + 2 * c) as f64 * 0.5 - ch as f64);
        let lhs: f64 = x
            .avg_pool2()
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        let back = Grid::avg_pool2_backward(&y, 5, 4);
        let rhs: f64 = x.as_slice().iter().zip(back.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
