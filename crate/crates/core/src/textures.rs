//! Deterministic procedural textures for tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, ImageGrid};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    /// Sinusoidal stripes pushed toward a square wave.
    Stripes { period: f64, angle: f64 },
    Checker { cell: usize },
    /// Discs on a jittered lattice.
    Dots { spacing: usize, radius: f64, seed: u64 },
    /// Bilinear value noise on a lattice of the given cell size.
    Noise { cell: usize, seed: u64 },
}

const PALETTES: [[[f64; 3]; 2]; 4] = [
    [[0.05, 0.1, 0.2], [0.95, 0.85, 0.3]],
    [[0.9, 0.9, 0.9], [0.1, 0.3, 0.1]],
    [[0.2, 0.05, 0.05], [0.3, 0.7, 0.95]],
    [[0.4, 0.25, 0.1], [0.85, 0.75, 0.6]],
];

impl Texture {
    /// Intensity in `[0, 1]` at `(r, c)`, before colouring.
    fn field(&self, height: usize, width: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; height * width];
        match *self {
            Texture::Stripes { period, angle } => {
                if !(period > 0.0) {
                    return Err(invalid("stripe period must be positive"));
                }
                let (s, c) = angle.sin_cos();
                for r in 0..height {
                    for col in 0..width {
                        let t = (r as f64 * s + col as f64 * c) / period;
                        let v = (std::f64::consts::TAU * t).sin();
                        out[r * width + col] = 0.5 + 0.5 * (3.0 * v).tanh() / 3f64.tanh();
                    }
                }
            }
            Texture::Checker { cell } => {
                if cell == 0 {
                    return Err(invalid("checker cell must be positive"));
                }
                for r in 0..height {
                    for c in 0..width {
                        out[r * width + c] = ((r / cell + c / cell) % 2) as f64;
                    }
                }
            }
            Texture::Dots {
                spacing,
                radius,
                seed,
            } => {
                if spacing == 0 || !(radius > 0.0) {
                    return Err(invalid("dot spacing and radius must be positive"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let jitter = spacing as f64 * 0.25;
                let mut centers = Vec::new();
                for i in 0..height.div_ceil(spacing) + 1 {
                    for j in 0..width.div_ceil(spacing) + 1 {
                        let cy = i as f64 * spacing as f64 + rng.random_range(-jitter..=jitter);
                        let cx = j as f64 * spacing as f64 + rng.random_range(-jitter..=jitter);
                        centers.push((cy, cx));
                    }
                }
                for r in 0..height {
                    for c in 0..width {
                        let inside = centers.iter().any(|&(cy, cx)| {
                            let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                            dy * dy + dx * dx <= radius * radius
                        });
                        out[r * width + c] = if inside { 1.0 } else { 0.0 };
                    }
                }
            }
            Texture::Noise { cell, seed } => {
                if cell == 0 {
                    return Err(invalid("noise cell must be positive"));
                }
                let gh = height / cell + 2;
                let gw = width / cell + 2;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random::<f64>()).collect();
                for r in 0..height {
                    for c in 0..width {
                        let (fy, fx) = (r as f64 / cell as f64, c as f64 / cell as f64);
                        let (iy, ix) = (fy as usize, fx as usize);
                        let (ty, tx) = (fy - iy as f64, fx - ix as f64);
                        let at = |y: usize, x: usize| lattice[y * gw + x];
                        let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
                        let bot = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
                        out[r * width + c] = top * (1.0 - ty) + bot * ty;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Renders an RGB image using palette `palette % 4`.
    pub fn render<T: Real>(&self, height: usize, width: usize, palette: usize) -> Result<ImageGrid<T>> {
        if height == 0 || width == 0 {
            return Err(invalid("texture dimensions must be positive"));
        }
        let f = self.field(height, width)?;
        let [lo, hi] = PALETTES[palette % PALETTES.len()];
        Ok(Grid::from_fn(height, width, 3, |r, c, ch| {
            let t = f[r * width + c];
            T::lit(lo[ch] + (hi[ch] - lo[ch]) * t)
        }))
    }
}

/// A small library of visually distinct textures.
pub fn texture_bank() -> Vec<(&'static str, Texture, usize)> {
    vec![
        (
            "stripes",
            Texture::Stripes {
                period: 8.0,
                angle: 0.6,
            },
            0,
        ),
        ("checker", Texture::Checker { cell: 6 }, 1),
        (
            "dots",
            Texture::Dots {
                spacing: 12,
                radius: 3.5,
                seed: 4,
            },
            2,
        ),
        ("noise", Texture::Noise { cell: 5, seed: 9 }, 3),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        for (_, t, p) in texture_bank() {
            let a: Grid<f64> = t.render(20, 24, p).unwrap();
            let b: Grid<f64> = t.render(20, 24, p).unwrap();
            assert_eq!(a, b);
            assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            let lo = a.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.as_slice().iter().copied().fold(0.0, f64::max);
            assert!(hi - lo > 0.3, "texture has too little contrast");
        }
    }
}
