//! Feature fields: raw pixels (layer 0), convolution banks, and random-convolution
//! stacks with 2x2 average-pool downsampling between layers.

mod conv;

use serde::{Deserialize, Serialize};

pub use conv::{conv_bank_apply, Boundary, KernelBank, Nonlinearity};

use crate::error::{invalid, mismatch, Error, Result};
use crate::grid::{Grid, ImageGrid};
use crate::scalar::Real;

/// One layer of a feature stack.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLayer<T> {
    pub layer_id: u16,
    /// Downsampling factor relative to layer 0.
    pub scale: u32,
    pub values: Grid<T>,
}

impl<T: Real> FeatureLayer<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.values.dims()
    }
}

/// An ordered list of feature layers computed from one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack<T> {
    pub layers: Vec<FeatureLayer<T>>,
}

impl<T: Real> FeatureStack<T> {
    pub fn new(layers: Vec<FeatureLayer<T>>) -> Result<Self> {
        validate_layers(
            layers
                .iter()
                .map(|l| (l.layer_id, l.scale, l.values.height(), l.values.width())),
        )?;
        Ok(Self { layers })
    }

    pub fn layer(&self, id: u16) -> Option<&FeatureLayer<T>> {
        self.layers.iter().find(|l| l.layer_id == id)
    }

    pub fn layer_ids(&self) -> Vec<u16> {
        self.layers.iter().map(|l| l.layer_id).collect()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Total feature count `sum_l d_l`.
    pub fn feature_count(&self) -> usize {
        self.layers.iter().map(|l| l.values.depth()).sum()
    }
}

/// Checks that layer ids are unique, layer 0 has scale 1, and every
/// `(H_l, W_l) = ceil((H, W) / scale)` for one common base size.
pub(crate) fn validate_layers(
    layers: impl Iterator<Item = (u16, u32, usize, usize)>,
) -> Result<()> {
    let mut seen = Vec::new();
    let (mut h_lo, mut h_hi) = (1usize, usize::MAX);
    let (mut w_lo, mut w_hi) = (1usize, usize::MAX);
    for (id, scale, h, w) in layers {
        if seen.contains(&id) {
            return Err(invalid(format!("duplicate layer id {id}")));
        }
        seen.push(id);
        if scale == 0 {
            return Err(Error::ScaleDimsMismatch(format!("layer {id} has scale 0")));
        }
        if id == 0 && scale != 1 {
            return Err(Error::ScaleDimsMismatch("layer 0 must have scale 1".into()));
        }
        if h == 0 || w == 0 {
            return Err(Error::ScaleDimsMismatch(format!("layer {id} is empty")));
        }
        let s = scale as usize;
        // H_l = ceil(H / s)  <=>  (H_l - 1) s < H <= H_l s
        h_lo = h_lo.max((h - 1) * s + 1);
        h_hi = h_hi.min(h * s);
        w_lo = w_lo.max((w - 1) * s + 1);
        w_hi = w_hi.min(w * s);
        if h_lo > h_hi || w_lo > w_hi {
            return Err(Error::ScaleDimsMismatch(format!(
                "layer {id} ({h}x{w} at scale {scale}) is inconsistent with the other layers"
            )));
        }
    }
    Ok(())
}

/// Layer 0: the raw image values, copied verbatim.
pub fn raw_pixel_layer<T: Real>(image: &ImageGrid<T>) -> FeatureLayer<T> {
    FeatureLayer {
        layer_id: 0,
        scale: 1,
        values: image.clone(),
    }
}

/// Shape of a random-convolution feature stack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    pub num_layers: usize,
    /// Output width `d_l` of each random layer.
    pub widths: Vec<usize>,
    pub kernel_size: usize,
    pub seed: u64,
}

impl Default for StackSpec {
    fn default() -> Self {
        Self {
            num_layers: 4,
            widths: vec![16, 32, 64, 64],
            kernel_size: 3,
            seed: 0,
        }
    }
}

impl StackSpec {
    /// Scale of random layer `l` (1-based): 1, 1, 2, 4, ...
    pub fn scale_of(layer: usize) -> u32 {
        if layer <= 1 {
            1
        } else {
            1u32 << (layer - 1).min(31)
        }
    }

    /// Per-layer seed derived from the stack seed.
    pub fn layer_seed(&self, layer: usize) -> u64 {
        self.seed
            .wrapping_add((layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.num_layers == 0 {
            return Err(invalid("a random stack needs at least one layer"));
        }
        if self.widths.len() != self.num_layers {
            return Err(invalid(format!(
                "{} widths given for {} layers",
                self.widths.len(),
                self.num_layers
            )));
        }
        if self.widths.contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(invalid("kernel size must be odd"));
        }
        let deepest = Self::scale_of(self.num_layers) as usize;
        if deepest > height || deepest > width {
            return Err(invalid(format!(
                "{}x{} image is too small for {} layers (deepest scale {deepest})",
                height, width, self.num_layers
            )));
        }
        Ok(())
    }
}

/// A fixed random-convolution network: conv + rectify per layer, average pooling in between.
#[derive(Clone, Debug)]
pub struct FeatureNet<T> {
    spec: StackSpec,
    banks: Vec<KernelBank<T>>,
    include_raw: bool,
}

/// Intermediate values retained by [`FeatureNet::forward_taped`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    pre_activations: Vec<Grid<T>>,
    image_dims: (usize, usize),
}

impl<T: Real> Tape<T> {
    /// Sign pattern of every pre-activation (`true` where strictly positive).
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.pre_activations
            .iter()
            .flat_map(|g| g.as_slice().iter().map(|v| *v > T::zero()))
            .collect()
    }
}

impl<T: Real> FeatureNet<T> {
    pub fn new(in_channels: usize, spec: &StackSpec) -> Result<Self> {
        if spec.widths.len() != spec.num_layers || spec.num_layers == 0 {
            return Err(invalid("stack spec widths must match num_layers >= 1"));
        }
        let mut banks = Vec::with_capacity(spec.num_layers);
        let mut d_in = in_channels;
        for (l, &d_out) in spec.widths.iter().enumerate() {
            banks.push(KernelBank::random(
                d_out,
                d_in,
                spec.kernel_size,
                Nonlinearity::Rectify,
                spec.layer_seed(l + 1),
            )?);
            d_in = d_out;
        }
        Ok(Self {
            spec: spec.clone(),
            banks,
            include_raw: true,
        })
    }

    /// Drops layer 0 from the produced stacks.
    pub fn without_raw_layer(mut self) -> Self {
        self.include_raw = false;
        self
    }

    pub fn spec(&self) -> &StackSpec {
        &self.spec
    }

    pub fn banks(&self) -> &[KernelBank<T>] {
        &self.banks
    }

    pub fn forward(&self, image: &ImageGrid<T>) -> Result<FeatureStack<T>> {
        Ok(self.forward_taped(image)?.0)
    }

    pub fn forward_taped(&self, image: &ImageGrid<T>) -> Result<(FeatureStack<T>, Tape<T>)> {
        self.spec.validate(image.height(), image.width())?;
        if self.banks[0].d_in() != image.depth() {
            return Err(mismatch(format!(
                "network built for {} channels, image has {}",
                self.banks[0].d_in(),
                image.depth()
            )));
        }
        let mut layers = Vec::with_capacity(self.banks.len() + 1);
        if self.include_raw {
            layers.push(raw_pixel_layer(image));
        }
        let mut pre_activations = Vec::with_capacity(self.banks.len());
        let mut prev: Option<Grid<T>> = None;
        for (l, bank) in self.banks.iter().enumerate() {
            let input = match prev.take() {
                None => image.clone(),
                Some(p) => p.avg_pool2(),
            };
            let pre = bank.correlate(&input, Boundary::Reflect)?;
            let out = bank.activate(&pre);
            layers.push(FeatureLayer {
                layer_id: (l + 1) as u16,
                scale: StackSpec::scale_of(l + 1),
                values: out.clone(),
            });
            pre_activations.push(pre);
            prev = Some(out);
        }
        Ok((
            FeatureStack { layers },
            Tape {
                pre_activations,
                image_dims: (image.height(), image.width()),
            },
        ))
    }

    /// Pulls per-layer gradients (indexed by layer id; `None` for untouched
    /// layers) back to a gradient on the image.
    pub fn backward(&self, tape: &Tape<T>, layer_grads: &[Option<Grid<T>>]) -> Result<Grid<T>> {
        let n = self.banks.len();
        let grad_for = |id: usize| layer_grads.get(id).and_then(|g| g.as_ref());
        let (h, w) = tape.image_dims;
        let channels = self.banks[0].d_in();
        let mut carry: Option<Grid<T>> = None;
        for l in (0..n).rev() {
            let bank = &self.banks[l];
            let pre = &tape.pre_activations[l];
            let mut g_out = match grad_for(l + 1) {
                Some(g) => g.clone(),
                None => Grid::zeros(pre.height(), pre.width(), pre.depth()),
            };
            if let Some(c) = carry.take() {
                for (a, b) in g_out.as_mut_slice().iter_mut().zip(c.as_slice()) {
                    *a += *b;
                }
            }
            if g_out.as_slice().iter().all(|v| *v == T::zero()) {
                // nothing flows below this layer unless a shallower layer has its own gradient
                continue;
            }
            let nl = bank.nonlinearity();
            for (g, &p) in g_out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *g *= nl.derivative(p);
            }
            let g_in = bank.correlate_backward(&g_out)?;
            if l == 0 {
                carry = Some(g_in);
            } else {
                let below = &tape.pre_activations[l - 1];
                carry = Some(Grid::avg_pool2_backward(&g_in, below.height(), below.width()));
            }
        }
        let mut g_image = carry.unwrap_or_else(|| Grid::zeros(h, w, channels));
        if self.include_raw {
            if let Some(g0) = grad_for(0) {
                for (a, b) in g_image.as_mut_slice().iter_mut().zip(g0.as_slice()) {
                    *a += *b;
                }
            }
        }
        Ok(g_image)
    }
}

/// Builds `[raw pixels] + num_layers` random conv layers at scales 1, 1, 2, 4, ...
pub fn random_feature_stack<T: Real>(image: &ImageGrid<T>, spec: &StackSpec) -> Result<FeatureStack<T>> {
    spec.validate(image.height(), image.width())?;
    FeatureNet::new(image.depth(), spec)?.forward(image)
}
