//! Closed-form W2^2 between Gaussian summaries of pooled distributions.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::distortion::moments::PooledMoments;
use crate::error::{mismatch, Result};
use crate::scalar::Real;

/// `sum_i (mu_i - mu^_i)^2 + (sqrt(V_i) - sqrt(V^_i))^2`: W2^2 between Gaussians
/// with diagonal covariance.
pub fn gaussianized_diag_w2<T: Real>(a: &PooledMoments<T>, b: &PooledMoments<T>) -> Result<T> {
    diag_w2(&a.mean, &a.var, &b.mean, &b.var)
}

pub fn diag_w2<T: Real>(mean_a: &[T], var_a: &[T], mean_b: &[T], var_b: &[T]) -> Result<T> {
    let d = mean_a.len();
    if var_a.len() != d || mean_b.len() != d || var_b.len() != d {
        return Err(mismatch(format!(
            "moment dimensions differ: {d}, {}, {}, {}",
            var_a.len(),
            mean_b.len(),
            var_b.len()
        )));
    }
    let mut acc = T::zero();
    for i in 0..d {
        let dm = mean_a[i] - mean_b[i];
        let ds = var_a[i].max(T::zero()).sqrt() - var_b[i].max(T::zero()).sqrt();
        acc += dm * dm + ds * ds;
    }
    Ok(acc)
}

/// Squared Euclidean distance of two feature vectors: the diagonal proxy at zero variance.
pub fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn to_matrix<T: Real>(d: usize, data: &[T]) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(d, d, &data.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
    (&m + m.transpose()) * 0.5
}

/// Principal square root of a symmetrized PSD matrix (negative eigenvalues clamped to 0).
fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `||mu - mu^||^2 + Tr(C + C^ - 2 (C^^{1/2} C C^^{1/2})^{1/2})`: W2^2 between Gaussians
/// with full covariance. Covariances are `d x d` row-major, symmetrized on entry.
pub fn bures_w2<T: Real>(mean_a: &[T], cov_a: &[T], mean_b: &[T], cov_b: &[T]) -> Result<T> {
    let d = mean_a.len();
    if mean_b.len() != d {
        return Err(mismatch("mean dimensions differ"));
    }
    if cov_a.len() != d * d || cov_b.len() != d * d {
        return Err(mismatch(format!(
            "covariances must be {d}x{d}, got {} and {} entries",
            cov_a.len(),
            cov_b.len()
        )));
    }
    let mean_term: f64 = mean_a
        .iter()
        .zip(mean_b)
        .map(|(&x, &y)| {
            let t = (x - y).as_f64();
            t * t
        })
        .sum();
    let c = to_matrix(d, cov_a);
    let c_hat = to_matrix(d, cov_b);
    let root_hat = psd_sqrt(c_hat.clone());
    let inner = &root_hat * &c * &root_hat;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let trace = c.trace() + c_hat.trace() - 2.0 * cross;
    Ok(T::lit((mean_term + trace).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(mean: Vec<f64>, var: Vec<f64>) -> PooledMoments<f64> {
        PooledMoments {
            mean,
            var,
            mass_center: (0, 0),
            sigma: 1.0,
        }
    }

    #[test]
    fn diag_examples() {
        let a = moments(vec![0.0, 0.0], vec![1.0, 1.0]);
        let b = moments(vec![3.0, 4.0], vec![4.0, 1.0]);
        assert_eq!(gaussianized_diag_w2(&a, &b).unwrap(), 26.0);
        assert_eq!(gaussianized_diag_w2(&a, &a).unwrap(), 0.0);
        let p = moments(vec![1.0, 2.0], vec![0.0, 0.0]);
        let q = moments(vec![4.0, -2.0], vec![0.0, 0.0]);
        assert_eq!(gaussianized_diag_w2(&p, &q).unwrap(), 25.0);
        let bad = moments(vec![1.0], vec![0.0]);
        assert!(gaussianized_diag_w2(&p, &bad).is_err());
    }

    #[test]
    fn bures_scalar_case() {
        let v = bures_w2(&[3.0f64], &[4.0], &[0.0], &[1.0]).unwrap();
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn bures_identical_is_zero() {
        let cov = [2.0f64, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 0.7];
        let mean = [0.3, -1.0, 2.0];
        let v = bures_w2(&mean, &cov, &mean, &cov).unwrap();
        assert!(v.abs() < 1e-10, "{v}");
    }

    #[test]
    fn bures_rejects_bad_shapes() {
        assert!(bures_w2(&[0.0f64, 0.0], &[1.0; 3], &[0.0, 0.0], &[1.0; 4]).is_err());
        assert!(bures_w2(&[0.0f64], &[1.0], &[0.0, 0.0], &[1.0; 4]).is_err());
    }
}
