//! The WDGRID binary container for feature stacks, sigma maps and heatmaps.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "WDGD" | version: u16 = 1 | layer_count: u16
//! per layer: layer_id u16 | scale u16 | H u32 | W u32 | d u32
//! per layer: H * W * d f32 values, row-major (row, col, channel)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::features::{validate_layers, FeatureLayer, FeatureStack};
use crate::grid::Grid;
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"WDGD";
pub const VERSION: u16 = 1;

struct Header {
    layer_id: u16,
    scale: u16,
    height: u32,
    width: u32,
    depth: u32,
}

pub fn write_stack<T: Real, W: Write>(stack: &FeatureStack<T>, mut w: W) -> Result<()> {
    if stack.layers.len() > u16::MAX as usize {
        return Err(invalid("too many layers for WDGRID"));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(stack.layers.len() as u16).to_le_bytes())?;
    for l in &stack.layers {
        let (h, wd, d) = l.values.dims();
        let scale = u16::try_from(l.scale).map_err(|_| invalid("scale exceeds u16"))?;
        let dim = |x: usize| u32::try_from(x).map_err(|_| invalid("dimension exceeds u32"));
        w.write_all(&l.layer_id.to_le_bytes())?;
        w.write_all(&scale.to_le_bytes())?;
        w.write_all(&dim(h)?.to_le_bytes())?;
        w.write_all(&dim(wd)?.to_le_bytes())?;
        w.write_all(&dim(d)?.to_le_bytes())?;
    }
    for l in &stack.layers {
        let mut buf = Vec::with_capacity(l.values.len() * 4);
        for v in l.values.as_slice() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated,
        _ => Error::Io(e),
    })
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_stack<T: Real, R: Read>(mut r: R) -> Result<FeatureStack<T>> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = read_u16(&mut r)? as usize;
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        headers.push(Header {
            layer_id: read_u16(&mut r)?,
            scale: read_u16(&mut r)?,
            height: read_u32(&mut r)?,
            width: read_u32(&mut r)?,
            depth: read_u32(&mut r)?,
        });
    }
    validate_layers(
        headers
            .iter()
            .map(|h| (h.layer_id, h.scale as u32, h.height as usize, h.width as usize)),
    )?;
    let mut layers = Vec::with_capacity(count);
    for h in &headers {
        if h.depth == 0 {
            return Err(Error::ScaleDimsMismatch(format!(
                "layer {} has zero depth",
                h.layer_id
            )));
        }
        let n = (h.height as usize)
            .checked_mul(h.width as usize)
            .and_then(|x| x.checked_mul(h.depth as usize))
            .ok_or_else(|| invalid("layer too large"))?;
        let mut bytes = vec![0u8; n * 4];
        read_exact_or_truncated(&mut r, &mut bytes)?;
        let values: Vec<T> = bytes
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        layers.push(FeatureLayer {
            layer_id: h.layer_id,
            scale: h.scale as u32,
            values: Grid::new(h.height as usize, h.width as usize, h.depth as usize, values)?,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(invalid("trailing bytes after WDGRID payload"));
    }
    Ok(FeatureStack { layers })
}

pub fn save_stack<T: Real>(stack: &FeatureStack<T>, path: impl AsRef<Path>) -> Result<()> {
    write_stack(stack, BufWriter::new(File::create(path)?))
}

pub fn load_stack<T: Real>(path: impl AsRef<Path>) -> Result<FeatureStack<T>> {
    read_stack(BufReader::new(File::open(path)?))
}

/// Saves one `H x W x d` grid as a single-layer container (layer 0, scale 1).
pub fn save_grid<T: Real>(grid: &Grid<T>, path: impl AsRef<Path>) -> Result<()> {
    save_stack(
        &FeatureStack {
            layers: vec![FeatureLayer {
                layer_id: 0,
                scale: 1,
                values: grid.clone(),
            }],
        },
        path,
    )
}

pub fn load_grid<T: Real>(path: impl AsRef<Path>) -> Result<Grid<T>> {
    let mut stack = load_stack::<T>(path)?;
    if stack.layers.len() != 1 {
        return Err(invalid(format!(
            "expected a single-layer WDGRID, found {} layers",
            stack.layers.len()
        )));
    }
    Ok(stack.layers.pop().unwrap().values)
}

/// Imports an externally computed feature stack.
pub fn import_feature_stack<T: Real>(path: impl AsRef<Path>) -> Result<FeatureStack<T>> {
    load_stack(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{random_feature_stack, StackSpec};

    fn header(layers: &[(u16, u16, u32, u32, u32)]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&(layers.len() as u16).to_le_bytes());
        for &(id, s, h, w, d) in layers {
            b.extend_from_slice(&id.to_le_bytes());
            b.extend_from_slice(&s.to_le_bytes());
            b.extend_from_slice(&h.to_le_bytes());
            b.extend_from_slice(&w.to_le_bytes());
            b.extend_from_slice(&d.to_le_bytes());
        }
        b
    }

    #[test]
    fn exact_byte_layout() {
        let g = Grid::<f32>::new(1, 2, 1, vec![1.0, -2.5]).unwrap();
        let stack = FeatureStack {
            layers: vec![FeatureLayer {
                layer_id: 0,
                scale: 1,
                values: g,
            }],
        };
        let mut buf = Vec::new();
        write_stack(&stack, &mut buf).unwrap();
        let mut expected = header(&[(0, 1, 1, 2, 1)]);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(buf.len(), 4 + 2 + 2 + 16 + 8);
    }

    #[test]
    fn f32_stack_round_trips_bitwise() {
        let img = Grid::<f32>::from_fn(12, 10, 3, |r, c, ch| ((r * 7 + c * 3 + ch) % 17) as f32 / 17.0);
        let spec = StackSpec {
            num_layers: 2,
            widths: vec![4, 5],
            kernel_size: 3,
            seed: 3,
        };
        let stack = random_feature_stack(&img, &spec).unwrap();
        let mut buf = Vec::new();
        write_stack(&stack, &mut buf).unwrap();
        let back: FeatureStack<f32> = read_stack(buf.as_slice()).unwrap();
        assert_eq!(back, stack);
    }

    #[test]
    fn bad_magic() {
        let mut b = header(&[(0, 1, 1, 1, 1)]);
        b[0] = b'X';
        b.extend_from_slice(&0f32.to_le_bytes());
        let err = read_stack::<f64, _>(b.as_slice()).unwrap_err();
        assert_eq!(err.to_string(), "bad magic");
    }

    #[test]
    fn truncated_payload() {
        let mut b = header(&[(0, 1, 2, 2, 1)]);
        b.extend_from_slice(&[0u8; 12]);
        assert!(matches!(read_stack::<f64, _>(b.as_slice()), Err(Error::Truncated)));
    }

    #[test]
    fn scale_dims_mismatch() {
        let mut b = header(&[(0, 1, 64, 64, 1), (3, 4, 17, 16, 1)]);
        b.extend_from_slice(&vec![0u8; (64 * 64 + 17 * 16) * 4]);
        let err = read_stack::<f64, _>(b.as_slice()).unwrap_err();
        assert!(err.to_string().starts_with("scale/dims mismatch"), "{err}");
    }
}
