use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::grid::Grid;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Identity,
    Rectify,
}

impl Nonlinearity {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::Rectify => x.max(T::zero()),
        }
    }

    /// Derivative, with the rectifier's subgradient at 0 taken as 0.
    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Nonlinearity::Identity => T::one(),
            Nonlinearity::Rectify => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Mirror about the edge pixel without repeating it (`..., 2, 1, 0, 1, 2, ...`).
    #[default]
    Reflect,
}

/// Reflected index into `0..n`.
#[inline]
pub(crate) fn reflect(mut i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as i64;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// A bank of `d_out x d_in x k x k` centered convolution taps followed by a pointwise nonlinearity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBank<T> {
    d_out: usize,
    d_in: usize,
    size: usize,
    taps: Vec<T>,
    nonlinearity: Nonlinearity,
    seed: Option<u64>,
}

impl<T: Real> KernelBank<T> {
    pub fn new(
        d_out: usize,
        d_in: usize,
        size: usize,
        taps: Vec<T>,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(invalid(format!("kernel size must be odd, got {size}")));
        }
        if d_out == 0 || d_in == 0 {
            return Err(invalid("kernel bank needs positive channel counts"));
        }
        if taps.len() != d_out * d_in * size * size {
            return Err(mismatch(format!(
                "{} taps for a {d_out}x{d_in}x{size}x{size} bank",
                taps.len()
            )));
        }
        Ok(Self {
            d_out,
            d_in,
            size,
            taps,
            nonlinearity,
            seed: None,
        })
    }

    /// Zero-mean Gaussian taps with standard deviation `1 / sqrt(d_in * k * k)`.
    pub fn random(
        d_out: usize,
        d_in: usize,
        size: usize,
        nonlinearity: Nonlinearity,
        seed: u64,
    ) -> Result<Self> {
        let n = d_out * d_in * size * size;
        let scale = 1.0 / ((d_in * size * size) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z * scale)
            })
            .collect();
        let mut bank = Self::new(d_out, d_in, size, taps, nonlinearity)?;
        bank.seed = Some(seed);
        Ok(bank)
    }

    /// A single `1x1` identity tap per channel.
    pub fn identity(channels: usize) -> Self {
        let mut taps = vec![T::zero(); channels * channels];
        for c in 0..channels {
            taps[c * channels + c] = T::one();
        }
        Self::new(channels, channels, 1, taps, Nonlinearity::Identity).unwrap()
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    #[inline]
    pub fn tap(&self, o: usize, i: usize, a: usize, b: usize) -> T {
        self.taps[((o * self.d_in + i) * self.size + a) * self.size + b]
    }

    /// Taps regrouped as `[a][b][o][i]` so the inner loop is a contiguous dot product.
    fn spatial_major(&self) -> Vec<T> {
        let (k, d_out, d_in) = (self.size, self.d_out, self.d_in);
        let mut out = vec![T::zero(); self.taps.len()];
        for o in 0..d_out {
            for i in 0..d_in {
                for a in 0..k {
                    for b in 0..k {
                        out[((a * k + b) * d_out + o) * d_in + i] = self.tap(o, i, a, b);
                    }
                }
            }
        }
        out
    }

    fn check_input(&self, input: &Grid<T>) -> Result<()> {
        if input.depth() != self.d_in {
            return Err(mismatch(format!(
                "bank expects {} input channels, got {}",
                self.d_in,
                input.depth()
            )));
        }
        Ok(())
    }

    /// Centered cross-correlation with reflect padding, before the nonlinearity.
    pub fn correlate(&self, input: &Grid<T>, _boundary: Boundary) -> Result<Grid<T>> {
        self.check_input(input)?;
        let (h, w, _) = input.dims();
        let (k, d_out, d_in) = (self.size, self.d_out, self.d_in);
        let half = (k / 2) as i64;
        let rows = reflect_table(h, k, half);
        let cols = reflect_table(w, k, half);
        let taps = self.spatial_major();
        let src = input.as_slice();
        let mut out = Grid::zeros(h, w, d_out);
        let dst = out.as_mut_slice();
        for r in 0..h {
            for c in 0..w {
                let o_base = (r * w + c) * d_out;
                for a in 0..k {
                    let rr = rows[r * k + a];
                    for b in 0..k {
                        let cc = cols[c * k + b];
                        let px = &src[(rr * w + cc) * d_in..][..d_in];
                        let slab = &taps[(a * k + b) * d_out * d_in..][..d_out * d_in];
                        for o in 0..d_out {
                            let row = &slab[o * d_in..][..d_in];
                            let mut acc = T::zero();
                            for i in 0..d_in {
                                acc += row[i] * px[i];
                            }
                            dst[o_base + o] += acc;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of [`KernelBank::correlate`] with respect to its input.
    pub fn correlate_backward(&self, grad_out: &Grid<T>) -> Result<Grid<T>> {
        if grad_out.depth() != self.d_out {
            return Err(mismatch("gradient depth does not match bank output"));
        }
        let (h, w, _) = grad_out.dims();
        let (k, d_out, d_in) = (self.size, self.d_out, self.d_in);
        let half = (k / 2) as i64;
        let rows = reflect_table(h, k, half);
        let cols = reflect_table(w, k, half);
        let taps = self.spatial_major();
        let g = grad_out.as_slice();
        let mut out = Grid::zeros(h, w, d_in);
        let dst = out.as_mut_slice();
        for r in 0..h {
            for c in 0..w {
                let g_px = &g[(r * w + c) * d_out..][..d_out];
                if g_px.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                for a in 0..k {
                    let rr = rows[r * k + a];
                    for b in 0..k {
                        let cc = cols[c * k + b];
                        let slab = &taps[(a * k + b) * d_out * d_in..][..d_out * d_in];
                        let px = &mut dst[(rr * w + cc) * d_in..][..d_in];
                        for (o, &go) in g_px.iter().enumerate() {
                            if go == T::zero() {
                                continue;
                            }
                            let row = &slab[o * d_in..][..d_in];
                            for i in 0..d_in {
                                px[i] += row[i] * go;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn activate(&self, pre: &Grid<T>) -> Grid<T> {
        let nl = self.nonlinearity;
        pre.map(|v| nl.apply(v))
    }
}

fn reflect_table(n: usize, k: usize, half: i64) -> Vec<usize> {
    let mut t = Vec::with_capacity(n * k);
    for p in 0..n {
        for a in 0..k {
            t.push(reflect(p as i64 + a as i64 - half, n));
        }
    }
    t
}

/// Applies a kernel bank: each output channel is the centered cross-correlation
/// with its tap slab, followed by the bank's nonlinearity. Spatial dims are preserved.
pub fn conv_bank_apply<T: Real>(
    input: &Grid<T>,
    bank: &KernelBank<T>,
    boundary: Boundary,
) -> Result<Grid<T>> {
    let pre = bank.correlate(input, boundary)?;
    Ok(bank.activate(&pre))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
        assert_eq!(reflect(9, 2), 1);
    }

    #[test]
    fn identity_bank_is_identity() {
        let g = Grid::<f64>::from_fn(5, 4, 3, |r, c, ch| (r * 13 + c * 7 + ch) as f64 * 0.1);
        let out = conv_bank_apply(&g, &KernelBank::identity(3), Boundary::Reflect).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn box_filter_preserves_constants() {
        let g = Grid::<f64>::filled(6, 7, 1, 0.37);
        let bank = KernelBank::new(1, 1, 3, vec![1.0 / 9.0; 9], Nonlinearity::Identity).unwrap();
        let out = conv_bank_apply(&g, &bank, Boundary::Reflect).unwrap();
        assert!(out.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn rejects_even_kernels_and_channel_mismatch() {
        assert!(KernelBank::<f64>::new(1, 1, 2, vec![0.0; 4], Nonlinearity::Identity).is_err());
        let bank = KernelBank::<f64>::random(2, 3, 3, Nonlinearity::Rectify, 1).unwrap();
        let g = Grid::<f64>::zeros(4, 4, 1);
        assert!(conv_bank_apply(&g, &bank, Boundary::Reflect).is_err());
    }

    #[test]
    fn random_bank_is_seeded() {
        let a = KernelBank::<f64>::random(4, 3, 3, Nonlinearity::Rectify, 9).unwrap();
        let b = KernelBank::<f64>::random(4, 3, 3, Nonlinearity::Rectify, 9).unwrap();
        let c = KernelBank::<f64>::random(4, 3, 3, Nonlinearity::Rectify, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.taps(), c.taps());
        assert_eq!(a.seed(), Some(9));
    }

    #[test]
    fn backward_is_adjoint_of_correlate() {
        let bank = KernelBank::<f64>::random(3, 2, 5, Nonlinearity::Identity, 4).unwrap();
        let x = Grid::<f64>::from_fn(4, 6, 2, |r, c, ch| ((r * 31 + c * 17 + ch * 5) % 11) as f64 / 11.0);
        let y = Grid::<f64>::from_fn(4, 6, 3, |r, c, ch| ((r * 7 + c * 3 + ch * 13) % 5) as f64 - 2.0);
        let ax = bank.correlate(&x, Boundary::Reflect).unwrap();
        let lhs: f64 = ax.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        let aty = bank.correlate_backward(&y).unwrap();
        let rhs: f64 = x.as_slice().iter().zip(aty.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }
}
