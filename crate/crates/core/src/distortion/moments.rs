use serde::Serialize;

use crate::error::{mismatch, Result};
use crate::features::FeatureLayer;
use crate::grid::Grid;
use crate::pooling::PoolingKernel2D;
use crate::scalar::Real;

/// First and second pooled moments of a feature field around one location.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PooledMoments<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub mass_center: (usize, usize),
    pub sigma: T,
}

impl<T: Real> PooledMoments<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub(crate) fn check_kernel<T: Real>(grid: &Grid<T>, kernel: &PoolingKernel2D<T>) -> Result<()> {
    if kernel.bounds() != (grid.height(), grid.width()) {
        return Err(mismatch(format!(
            "kernel bounds {:?} do not match layer {}x{}",
            kernel.bounds(),
            grid.height(),
            grid.width()
        )));
    }
    Ok(())
}

/// Pooled mean and variance of `layer` under `kernel`.
///
/// Uses a single pass shifted by the center value: `mean = K + E[z - K]`,
/// `var = E[(z - K)^2] - (mean - K)^2`, clamped at 0.
pub fn pooled_moments<T: Real>(
    layer: &FeatureLayer<T>,
    kernel: &PoolingKernel2D<T>,
) -> Result<PooledMoments<T>> {
    pooled_moments_grid(&layer.values, kernel)
}

pub fn pooled_moments_grid<T: Real>(
    grid: &Grid<T>,
    kernel: &PoolingKernel2D<T>,
) -> Result<PooledMoments<T>> {
    check_kernel(grid, kernel)?;
    let d = grid.depth();
    let (cr, cc) = kernel.center();
    let shift = grid.pixel(cr, cc).to_vec();
    if kernel.is_delta() {
        return Ok(PooledMoments {
            mean: shift,
            var: vec![T::zero(); d],
            mass_center: kernel.center(),
            sigma: kernel.sigma(),
        });
    }
    let mut s1 = vec![T::zero(); d];
    let mut s2 = vec![T::zero(); d];
    let mut row1 = vec![T::zero(); d];
    let mut row2 = vec![T::zero(); d];
    for (r, wr) in kernel.rows() {
        row1.iter_mut().for_each(|x| *x = T::zero());
        row2.iter_mut().for_each(|x| *x = T::zero());
        for (c, wc) in kernel.cols() {
            let px = grid.pixel(r, c);
            for i in 0..d {
                let y = px[i] - shift[i];
                let wy = wc * y;
                row1[i] += wy;
                row2[i] += wy * y;
            }
        }
        for i in 0..d {
            s1[i] += wr * row1[i];
            s2[i] += wr * row2[i];
        }
    }
    let mut mean = Vec::with_capacity(d);
    let mut var = Vec::with_capacity(d);
    for i in 0..d {
        mean.push(shift[i] + s1[i]);
        var.push((s2[i] - s1[i] * s1[i]).max(T::zero()));
    }
    Ok(PooledMoments {
        mean,
        var,
        mass_center: kernel.center(),
        sigma: kernel.sigma(),
    })
}

/// Pooled mean and full covariance (`d x d`, row-major).
pub fn pooled_covariance<T: Real>(
    grid: &Grid<T>,
    kernel: &PoolingKernel2D<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    check_kernel(grid, kernel)?;
    let d = grid.depth();
    let mut mean = vec![T::zero(); d];
    for ((dr, dc), w) in kernel.offsets() {
        let (r, c) = offset_pos(kernel, dr, dc);
        for (m, &z) in mean.iter_mut().zip(grid.pixel(r, c)) {
            *m += w * z;
        }
    }
    let mut cov = vec![T::zero(); d * d];
    let mut y = vec![T::zero(); d];
    for ((dr, dc), w) in kernel.offsets() {
        let (r, c) = offset_pos(kernel, dr, dc);
        for (yi, (&z, &m)) in y.iter_mut().zip(grid.pixel(r, c).iter().zip(&mean)) {
            *yi = z - m;
        }
        for i in 0..d {
            let wy = w * y[i];
            for j in i..d {
                cov[i * d + j] += wy * y[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    Ok((mean, cov))
}

#[inline]
pub(crate) fn offset_pos<T: Real>(kernel: &PoolingKernel2D<T>, dr: i64, dc: i64) -> (usize, usize) {
    let (cr, cc) = kernel.center();
    ((cr as i64 + dr) as usize, (cc as i64 + dc) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pooling::{make_tsg_pmf, product_kernel_2d};

    fn layer(g: Grid<f64>) -> FeatureLayer<f64> {
        FeatureLayer {
            layer_id: 1,
            scale: 1,
            values: g,
        }
    }

    #[test]
    fn delta_pooling_returns_center() {
        let g = Grid::from_fn(5, 5, 2, |r, c, ch| (r * 5 + c) as f64 + ch as f64 * 0.5);
        let k = product_kernel_2d(&make_tsg_pmf(0.0, 1e-9).unwrap(), (2, 3), (5, 5)).unwrap();
        let m = pooled_moments(&layer(g.clone()), &k).unwrap();
        assert_eq!(m.mean, g.pixel(2, 3).to_vec());
        assert_eq!(m.var, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_field_has_zero_variance() {
        let g = Grid::filled(9, 9, 3, 0.7);
        let k = product_kernel_2d(&make_tsg_pmf(2.0, 1e-9).unwrap(), (1, 7), (9, 9)).unwrap();
        let m = pooled_moments(&layer(g), &k).unwrap();
        assert!(m.mean.iter().all(|&x| (x - 0.7).abs() < 1e-15));
        assert!(m.var.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn hand_weighted_moments() {
        let g = Grid::new(1, 3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let k = PoolingKernel2D::from_marginals(1.0, (0, 0), (1, 3), 0, vec![1.0], 0, vec![0.5, 0.25, 0.25])
            .unwrap();
        let m = pooled_moments(&layer(g.clone()), &k).unwrap();
        // brute force
        let w = [0.5, 0.25, 0.25];
        let v = [0.0, 1.0, 2.0];
        let mu: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let var: f64 = w.iter().zip(&v).map(|(a, b)| a * (b - mu) * (b - mu)).sum();
        assert!((m.mean[0] - 0.75).abs() < 1e-15 && (mu - 0.75).abs() < 1e-15);
        assert!((m.var[0] - 0.6875).abs() < 1e-15 && (var - 0.6875).abs() < 1e-15);
        let (mean, cov) = pooled_covariance(&g, &k).unwrap();
        assert!((mean[0] - 0.75).abs() < 1e-15 && (cov[0] - 0.6875).abs() < 1e-15);
    }

    #[test]
    fn bounds_mismatch() {
        let g = Grid::<f64>::zeros(4, 4, 1);
        let k = product_kernel_2d(&make_tsg_pmf(1.0, 1e-9).unwrap(), (1, 1), (5, 4)).unwrap();
        assert!(pooled_moments(&layer(g), &k).is_err());
    }
}
