//! Loss and exact reverse-mode gradient of the diagonal-proxy distortion with
//! respect to the pixels.

use rayon::prelude::*;

use crate::distortion::{kernel_at, layer_sigma_maps, pooled_moments_grid, ActiveSet, Backend, Multipliers, PoiPlan};
use crate::error::{invalid, mismatch, Error, Result};
use crate::features::{FeatureNet, FeatureStack, StackSpec};
use crate::grid::{Grid, ImageGrid};
use crate::pooling::PoolingKernel2D;
use crate::scalar::Real;
use crate::sigma_map::SigmaMap;

/// `V` is floored at this before taking `1 / sqrt(V)` in the gradient.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Points processed per parallel task; fixed so reductions are reproducible.
const CHUNK: usize = 64;

#[derive(Clone, Debug)]
struct PointTerm<T> {
    kernel: PoolingKernel2D<T>,
    ref_mean: Vec<T>,
    ref_std: Vec<T>,
    weight: T,
}

#[derive(Clone, Debug)]
struct LayerTerms<T> {
    layer_id: u16,
    fixed: Vec<PointTerm<T>>,
    sets: Vec<Vec<PointTerm<T>>>,
}

/// Everything about the reference that stays fixed during one synthesis run.
#[derive(Clone, Debug)]
pub struct ReferenceArtifacts<T> {
    net: FeatureNet<T>,
    reference: ImageGrid<T>,
    stack: FeatureStack<T>,
    layers: Vec<LayerTerms<T>>,
    max_layer: usize,
}

fn term<T: Real>(
    stack: &FeatureStack<T>,
    layer_id: u16,
    sigma: T,
    point: (usize, usize),
    weight: T,
) -> Result<PointTerm<T>> {
    let l = stack.layer(layer_id).unwrap();
    let kernel = kernel_at(sigma, point, (l.values.height(), l.values.width()))?;
    let m = pooled_moments_grid(&l.values, &kernel)?;
    Ok(PointTerm {
        kernel,
        ref_std: m.var.iter().map(|v| v.sqrt()).collect(),
        ref_mean: m.mean,
        weight,
    })
}

impl<T: Real> ReferenceArtifacts<T> {
    /// Precomputes reference features, pooling kernels and reference moments for
    /// every point the plan can ever evaluate.
    pub fn new(
        reference: &ImageGrid<T>,
        spec: &StackSpec,
        sigma_map: &SigmaMap<T>,
        plan: &PoiPlan,
        mult: &Multipliers,
        backend: &Backend,
    ) -> Result<Self> {
        if *backend != Backend::Diag {
            return Err(invalid(format!(
                "gradients are available for the diag backend only, got {backend}"
            )));
        }
        if sigma_map.dims() != (reference.height(), reference.width()) {
            return Err(mismatch(format!(
                "sigma map {:?} does not match image {}x{}",
                sigma_map.dims(),
                reference.height(),
                reference.width()
            )));
        }
        plan.validate()?;
        mult.validate()?;
        let net = FeatureNet::new(reference.depth(), spec)?;
        let stack = net.forward(reference)?;
        let maps = layer_sigma_maps(&stack, sigma_map)?;
        let mut layers = Vec::with_capacity(plan.layers.len());
        for lp in &plan.layers {
            let l = stack
                .layer(lp.layer_id)
                .ok_or_else(|| invalid(format!("plan names layer {} not in the stack", lp.layer_id)))?;
            if (l.values.height(), l.values.width()) != lp.dims {
                return Err(mismatch(format!(
                    "plan for layer {} is {:?}, layer is {}x{}",
                    lp.layer_id,
                    lp.dims,
                    l.values.height(),
                    l.values.width()
                )));
            }
            let map = &maps[&lp.layer_id];
            let ml = mult.layer(lp.layer_id);
            let build = |pts: &[(usize, usize)]| -> Result<Vec<PointTerm<T>>> {
                pts.par_iter()
                    .map(|&(r, c)| {
                        let s = map.get(r, c);
                        term(&stack, lp.layer_id, s, (r, c), T::lit(ml * mult.sigma(s)))
                    })
                    .collect()
            };
            let fixed = build(&lp.fixed)?;
            let sets = lp
                .rotating_sets
                .iter()
                .map(|s| build(s))
                .collect::<Result<Vec<_>>>()?;
            layers.push(LayerTerms {
                layer_id: lp.layer_id,
                fixed,
                sets,
            });
        }
        let max_layer = stack.layer_ids().into_iter().max().unwrap_or(0) as usize;
        Ok(Self {
            net,
            reference: reference.clone(),
            stack,
            layers,
            max_layer,
        })
    }

    pub fn reference(&self) -> &ImageGrid<T> {
        &self.reference
    }

    pub fn reference_stack(&self) -> &FeatureStack<T> {
        &self.stack
    }

    pub fn net(&self) -> &FeatureNet<T> {
        &self.net
    }

    pub fn has_rotating_sets(&self) -> bool {
        self.layers.iter().any(|l| !l.sets.is_empty())
    }

    fn active_terms<'a>(&'a self, l: &'a LayerTerms<T>, active: ActiveSet) -> Result<Vec<&'a PointTerm<T>>> {
        let mut out: Vec<&PointTerm<T>> = l.fixed.iter().collect();
        let n = l.sets.len();
        if n == 0 {
            return Ok(out);
        }
        match active {
            ActiveSet::None => {}
            ActiveSet::Index(i) => out.extend(
                l.sets
                    .get(i)
                    .ok_or_else(|| invalid(format!("rotating set {i} out of range")))?,
            ),
            ActiveSet::Draw { seed, counter } => {
                out.extend(&l.sets[crate::distortion::plan::draw_set_index(seed, counter, n)])
            }
            ActiveSet::All => {
                for s in &l.sets {
                    out.extend(s);
                }
            }
        }
        Ok(out)
    }

    /// Total weighted distortion of `pixels` and its gradient with respect to every pixel.
    pub fn loss_and_gradient(&self, pixels: &ImageGrid<T>, active: ActiveSet) -> Result<(T, Grid<T>)> {
        self.evaluate(pixels, active, true)
            .map(|(l, g)| (l, g.expect("gradient requested")))
    }

    pub fn loss(&self, pixels: &ImageGrid<T>, active: ActiveSet) -> Result<T> {
        Ok(self.evaluate(pixels, active, false)?.0)
    }

    fn evaluate(&self, pixels: &ImageGrid<T>, active: ActiveSet, with_grad: bool) -> Result<(T, Option<Grid<T>>)> {
        if !pixels.same_shape(&self.reference) {
            return Err(mismatch(format!(
                "image {:?} does not match reference {:?}",
                pixels.dims(),
                self.reference.dims()
            )));
        }
        let (stack, tape) = self.net.forward_taped(pixels)?;
        let mut layer_grads: Vec<Option<Grid<T>>> = vec![None; self.max_layer + 1];
        let mut total = T::zero();
        for lt in &self.layers {
            let values = &stack.layer(lt.layer_id).unwrap().values;
            let terms = self.active_terms(lt, active)?;
            let parts: Vec<(T, Option<Grid<T>>)> = terms
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grad = with_grad.then(|| Grid::zeros(values.height(), values.width(), values.depth()));
                    let mut loss = T::zero();
                    for t in chunk {
                        loss += point_loss_grad(values, t, grad.as_mut());
                    }
                    (loss, grad)
                })
                .collect();
            let mut lg = with_grad.then(|| Grid::zeros(values.height(), values.width(), values.depth()));
            for (loss, g) in parts {
                total += loss;
                if let (Some(acc), Some(g)) = (lg.as_mut(), g) {
                    for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a += *b;
                    }
                }
            }
            layer_grads[lt.layer_id as usize] = lg;
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("synthesis loss".into()));
        }
        if !with_grad {
            return Ok((total, None));
        }
        let g = self.net.backward(&tape, &layer_grads)?;
        Ok((total, Some(g)))
    }
}

/// Weighted diagonal-proxy distortion at one point; adds its gradient into `grad`.
fn point_loss_grad<T: Real>(values: &Grid<T>, t: &PointTerm<T>, grad: Option<&mut Grid<T>>) -> T {
    let k = &t.kernel;
    let d = values.depth();
    if k.is_delta() {
        let (r, c) = k.center();
        let z = values.pixel(r, c);
        let mut loss = T::zero();
        for i in 0..d {
            let e = z[i] - t.ref_mean[i];
            loss += e * e;
        }
        if let Some(g) = grad {
            let two_w = T::lit(2.0) * t.weight;
            for (gi, (&zi, &mi)) in g.pixel_mut(r, c).iter_mut().zip(z.iter().zip(&t.ref_mean)) {
                *gi += two_w * (zi - mi);
            }
        }
        return t.weight * loss;
    }
    let m = pooled_moments_grid(values, k).expect("kernel built for this layer");
    let mut loss = T::zero();
    let floor = T::lit(VARIANCE_FLOOR);
    let mut a = vec![T::zero(); d];
    let mut b = vec![T::zero(); d];
    for i in 0..d {
        let dm = m.mean[i] - t.ref_mean[i];
        let s = m.var[i].sqrt();
        let ds = s - t.ref_std[i];
        loss += dm * dm + ds * ds;
        a[i] = T::lit(2.0) * dm * t.weight;
        b[i] = T::lit(2.0) * ds / m.var[i].max(floor).sqrt() * t.weight;
    }
    if let Some(g) = grad {
        for (r, wr) in k.rows() {
            for (c, wc) in k.cols() {
                let w = wr * wc;
                let z = values.pixel(r, c).to_vec();
                let gp = g.pixel_mut(r, c);
                for i in 0..d {
                    gp[i] += w * (a[i] + b[i] * (z[i] - m.mean[i]));
                }
            }
        }
    }
    t.weight * loss
}
