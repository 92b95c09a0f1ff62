//! Masked pixel MSE plus Gram-matrix texture loss, the classical baseline.

use crate::error::{invalid, mismatch, Result};
use crate::features::{FeatureNet, FeatureStack, StackSpec};
use crate::grid::{Grid, ImageGrid};
use crate::scalar::Real;
use crate::sigma_map::BoolGrid;

/// `G = F^T F / N` for an `N x d` feature field, row-major `d x d`.
pub fn gram_matrix<T: Real>(values: &Grid<T>) -> Vec<T> {
    let d = values.depth();
    let n = values.height() * values.width();
    let mut g = vec![T::zero(); d * d];
    for px in values.as_slice().chunks_exact(d) {
        for i in 0..d {
            let xi = px[i];
            for j in i..d {
                g[i * d + j] += xi * px[j];
            }
        }
    }
    let inv = T::one() / T::from_usize_lossy(n.max(1));
    for i in 0..d {
        for j in i..d {
            let v = g[i * d + j] * inv;
            g[i * d + j] = v;
            g[j * d + i] = v;
        }
    }
    g
}

/// `||G - G^||_F^2` and, if asked, its gradient with respect to the feature field.
pub fn gram_distance<T: Real>(values: &Grid<T>, target: &[T], grad: Option<&mut Grid<T>>) -> Result<T> {
    let d = values.depth();
    if target.len() != d * d {
        return Err(mismatch(format!("target Gram has {} entries, expected {}", target.len(), d * d)));
    }
    let g = gram_matrix(values);
    let e: Vec<T> = g.iter().zip(target).map(|(&a, &b)| a - b).collect();
    let loss = e.iter().fold(T::zero(), |acc, &x| acc + x * x);
    if let Some(out) = grad {
        let n = values.height() * values.width();
        let scale = T::lit(4.0) / T::from_usize_lossy(n.max(1));
        for (o, px) in out.as_mut_slice().chunks_exact_mut(d).zip(values.as_slice().chunks_exact(d)) {
            for k in 0..d {
                let mut s = T::zero();
                for j in 0..d {
                    s += e[k * d + j] * px[j];
                }
                o[k] += scale * s;
            }
        }
    }
    Ok(loss)
}

/// Reference-side data for the baseline objective.
#[derive(Clone, Debug)]
pub struct GramObjective<T> {
    net: FeatureNet<T>,
    reference: ImageGrid<T>,
    mask: BoolGrid,
    targets: Vec<(u16, Vec<T>)>,
    gram_weight: T,
}

impl<T: Real> GramObjective<T> {
    /// Gram terms use every convolutional layer (ids >= 1).
    pub fn new(reference: &ImageGrid<T>, mask: &BoolGrid, gram_weight: T, spec: &StackSpec) -> Result<Self> {
        if !(gram_weight >= T::zero()) || !gram_weight.is_finite() {
            return Err(invalid("gram weight must be finite and >= 0"));
        }
        if (mask.height, mask.width) != (reference.height(), reference.width()) {
            return Err(mismatch("saliency mask does not match the reference"));
        }
        let net = FeatureNet::new(reference.depth(), spec)?.without_raw_layer();
        let stack = net.forward(reference)?;
        Ok(Self {
            targets: grams(&stack),
            net,
            reference: reference.clone(),
            mask: mask.clone(),
            gram_weight,
        })
    }

    pub fn loss_and_gradient(&self, pixels: &ImageGrid<T>) -> Result<(T, Grid<T>)> {
        if !pixels.same_shape(&self.reference) {
            return Err(mismatch("image does not match reference"));
        }
        let (h, w, ch) = pixels.dims();
        let mut grad = Grid::zeros(h, w, ch);
        let mut loss = T::zero();
        let count = self.mask.count() * ch;
        if count > 0 {
            let inv = T::one() / T::from_usize_lossy(count);
            for r in 0..h {
                for c in 0..w {
                    if !self.mask.get(r, c) {
                        continue;
                    }
                    let x = pixels.pixel(r, c).to_vec();
                    let gp = grad.pixel_mut(r, c);
                    for (k, (&xi, &ri)) in x.iter().zip(self.reference.pixel(r, c)).enumerate() {
                        let e = xi - ri;
                        loss += inv * e * e;
                        gp[k] += T::lit(2.0) * inv * e;
                    }
                }
            }
        }
        if self.gram_weight > T::zero() {
            let (stack, tape) = self.net.forward_taped(pixels)?;
            let max_id = stack.layer_ids().into_iter().max().unwrap_or(0) as usize;
            let mut layer_grads: Vec<Option<Grid<T>>> = vec![None; max_id + 1];
            for (id, target) in &self.targets {
                let values = &stack.layer(*id).unwrap().values;
                let mut g = Grid::zeros(values.height(), values.width(), values.depth());
                loss += self.gram_weight * gram_distance(values, target, Some(&mut g))?;
                g.as_mut_slice().iter_mut().for_each(|v| *v *= self.gram_weight);
                layer_grads[*id as usize] = Some(g);
            }
            let gi = self.net.backward(&tape, &layer_grads)?;
            for (a, b) in grad.as_mut_slice().iter_mut().zip(gi.as_slice()) {
                *a += *b;
            }
        }
        Ok((loss, grad))
    }
}

fn grams<T: Real>(stack: &FeatureStack<T>) -> Vec<(u16, Vec<T>)> {
    stack
        .layers
        .iter()
        .filter(|l| l.layer_id >= 1)
        .map(|l| (l.layer_id, gram_matrix(&l.values)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_of_constant_field() {
        let g = Grid::filled(3, 4, 2, 2.0f64);
        assert_eq!(gram_matrix(&g), vec![4.0; 4]);
    }

    #[test]
    fn gram_gradient_by_differences() {
        let f = Grid::from_fn(3, 3, 2, |r, c, k| ((r * 5 + c * 3 + k * 7) % 11) as f64 / 11.0 - 0.3);
        let target = vec![0.1, 0.02, 0.02, 0.3];
        let mut g = Grid::zeros(3, 3, 2);
        gram_distance(&f, &target, Some(&mut g)).unwrap();
        let h = 1e-6;
        for i in 0..f.len() {
            let mut p = f.clone();
            p.as_mut_slice()[i] += h;
            let mut m = f.clone();
            m.as_mut_slice()[i] -= h;
            let fd = (gram_distance(&p, &target, None).unwrap() - gram_distance(&m, &target, None).unwrap()) / (2.0 * h);
            assert!((fd - g.as_slice()[i]).abs() < 1e-8, "{i}: {fd} vs {}", g.as_slice()[i]);
        }
    }
}
