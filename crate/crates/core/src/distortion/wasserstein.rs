//! Exact 1-D Wasserstein distances between weighted empirical measures, and the
//! sliced distance built on them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, mismatch, Result};
use crate::scalar::{compensated_sum, Real};

/// Tolerance on the total weight of an empirical measure.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Allowed deviation of the total weight from 1 for `n` atoms.
pub fn weight_tolerance<T: Real>(n: usize) -> T {
    let rounding = T::epsilon() * T::lit(8.0) * T::from_usize_lossy(n.max(1)).sqrt();
    T::lit(WEIGHT_SUM_TOL).max(rounding)
}

/// A finitely supported probability measure on the real line.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEmpirical<T> {
    support: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> WeightedEmpirical<T> {
    pub fn new(support: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(mismatch("support and weights differ in length"));
        }
        if support.is_empty() {
            return Err(invalid("empirical measure needs at least one atom"));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(invalid("support must be finite"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - T::one()).abs() > weight_tolerance::<T>(weights.len()) {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { support, weights })
    }

    /// Skips validation; weights are renormalized when the CDF is built.
    pub(crate) fn from_parts(support: Vec<T>, weights: Vec<T>) -> Self {
        debug_assert_eq!(support.len(), weights.len());
        Self { support, weights }
    }

    /// Equal weights on the given points.
    pub fn uniform(support: Vec<T>) -> Result<Self> {
        let n = support.len().max(1);
        let w = T::one() / T::from_usize_lossy(n);
        Self::new(support, vec![w; n])
    }

    pub fn point_mass(x: T) -> Self {
        Self {
            support: vec![x],
            weights: vec![T::one()],
        }
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Atoms sorted by position, with cumulative weights normalized to end at 1.
    fn sorted_cdf(&self) -> (Vec<T>, Vec<T>) {
        let mut idx: Vec<usize> = (0..self.support.len()).collect();
        idx.sort_by(|&a, &b| self.support[a].partial_cmp(&self.support[b]).unwrap());
        let total = compensated_sum(self.weights.iter().copied());
        let mut acc = T::zero();
        let mut comp = T::zero();
        let mut xs = Vec::with_capacity(idx.len());
        let mut cdf = Vec::with_capacity(idx.len());
        for i in idx {
            // Kahan-compensated running sum
            let y = self.weights[i] / total - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            xs.push(self.support[i]);
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = T::one();
        }
        (xs, cdf)
    }
}

#[inline]
fn cost<T: Real>(x: T, y: T, p: T) -> T {
    let d = (x - y).abs();
    if p == T::one() {
        d
    } else if p == T::lit(2.0) {
        d * d
    } else {
        d.powf(p)
    }
}

/// `W_p^p(a, b)` on the real line via the monotone (quantile) coupling, traversing
/// the merged breakpoints of the two CDFs.
pub fn exact_w_p_1d<T: Real>(a: &WeightedEmpirical<T>, b: &WeightedEmpirical<T>, p: T) -> Result<T> {
    if !(p >= T::one()) || !p.is_finite() {
        return Err(invalid(format!("order p must be finite and >= 1, got {p}")));
    }
    let (xa, ca) = a.sorted_cdf();
    let (xb, cb) = b.sorted_cdf();
    Ok(quantile_cost(&xa, &ca, &xb, &cb, p))
}

fn quantile_cost<T: Real>(xa: &[T], ca: &[T], xb: &[T], cb: &[T], p: T) -> T {
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = T::zero();
    let mut total = T::zero();
    while i < xa.len() && j < xb.len() {
        let next = ca[i].min(cb[j]);
        let mass = next - prev;
        if mass > T::zero() {
            total += mass * cost(xa[i], xb[j], p);
            prev = next;
        }
        if ca[i] <= next {
            i += 1;
        }
        if cb[j] <= next {
            j += 1;
        }
    }
    total
}

/// Average over `num_projections` random unit directions of `W_p^p` between the
/// projected weighted clouds. Samples are `n x d` row-major.
pub fn sliced_w_p<T: Real>(
    a_samples: &[T],
    a_weights: &[T],
    b_samples: &[T],
    b_weights: &[T],
    dim: usize,
    num_projections: usize,
    p: T,
    seed: u64,
) -> Result<T> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if num_projections == 0 {
        return Err(invalid("need at least one projection"));
    }
    if a_samples.len() != a_weights.len() * dim || b_samples.len() != b_weights.len() * dim {
        return Err(mismatch(format!(
            "sample buffers do not hold {dim}-dimensional points matching the weights"
        )));
    }
    let a = WeightedEmpirical::new(vec![T::zero(); a_weights.len()], a_weights.to_vec())?;
    let b = WeightedEmpirical::new(vec![T::zero(); b_weights.len()], b_weights.to_vec())?;
    let dirs = random_directions::<T>(dim, num_projections, seed);
    let mut acc = T::zero();
    let mut pa = a;
    let mut pb = b;
    for u in dirs.chunks_exact(dim) {
        project_into(a_samples, u, &mut pa.support);
        project_into(b_samples, u, &mut pb.support);
        acc += exact_w_p_1d(&pa, &pb, p)?;
    }
    Ok(acc / T::from_usize_lossy(num_projections))
}

fn project_into<T: Real>(samples: &[T], u: &[T], out: &mut [T]) {
    let d = u.len();
    for (o, x) in out.iter_mut().zip(samples.chunks_exact(d)) {
        let mut s = T::zero();
        for k in 0..d {
            s += x[k] * u[k];
        }
        *o = s;
    }
}

/// `count` unit vectors in `R^dim`, uniform on the sphere, as one flat buffer.
pub fn random_directions<T: Real>(dim: usize, count: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(dim * count);
    let mut v = vec![0.0f64; dim];
    for _ in 0..count {
        loop {
            for x in v.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                out.extend(v.iter().map(|x| T::lit(x / norm)));
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_masses() {
        let a = WeightedEmpirical::point_mass(0.0f64);
        let b = WeightedEmpirical::point_mass(1.0f64);
        assert_eq!(exact_w_p_1d(&a, &b, 1.0).unwrap(), 1.0);
        assert_eq!(exact_w_p_1d(&a, &a, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn two_atoms_against_one() {
        let a = WeightedEmpirical::new(vec![0.0f64, 1.0], vec![0.5, 0.5]).unwrap();
        let b = WeightedEmpirical::new(vec![0.5f64], vec![1.0]).unwrap();
        // the only coupling sends both atoms to 0.5
        let brute = 0.5 * 0.25 + 0.5 * 0.25;
        let v = exact_w_p_1d(&a, &b, 2.0).unwrap();
        assert!((v - 0.25).abs() < 1e-15 && (v - brute).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(WeightedEmpirical::new(vec![0.0f64, 1.0], vec![0.5, 0.4]).is_err());
        assert!(WeightedEmpirical::new(vec![0.0f64], vec![1.0, 0.0]).is_err());
        assert!(WeightedEmpirical::new(vec![f64::NAN], vec![1.0]).is_err());
        let a = WeightedEmpirical::point_mass(0.0f64);
        assert!(exact_w_p_1d(&a, &a, 0.5).is_err());
    }

    #[test]
    fn sliced_identical_clouds_are_zero() {
        let s = [0.0f64, 1.0, 2.0, -1.0, 0.5, 0.5];
        let w = [0.2, 0.3, 0.5];
        for seed in 0..4 {
            assert_eq!(sliced_w_p(&s, &w, &s, &w, 2, 8, 2.0, seed).unwrap(), 0.0);
        }
    }

    #[test]
    fn sliced_in_one_dimension_equals_exact() {
        let xa = [0.0f64, 2.0, 3.5];
        let wa = [0.2, 0.3, 0.5];
        let xb = [1.0f64, -1.0];
        let wb = [0.6, 0.4];
        let exact = exact_w_p_1d(
            &WeightedEmpirical::new(xa.to_vec(), wa.to_vec()).unwrap(),
            &WeightedEmpirical::new(xb.to_vec(), wb.to_vec()).unwrap(),
            2.0,
        )
        .unwrap();
        for seed in 0..5 {
            let s = sliced_w_p(&xa, &wa, &xb, &wb, 1, 3, 2.0, seed).unwrap();
            assert!((s - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn directions_are_unit_and_seeded() {
        let a: Vec<f64> = random_directions(5, 10, 3);
        assert_eq!(a, random_directions::<f64>(5, 10, 3));
        for u in a.chunks(5) {
            let n: f64 = u.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
