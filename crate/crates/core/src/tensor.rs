//! Dense row-major tensors and the PLT1 file format.
//!
//! A PLT1 file is laid out as
//!
//! ```text
//! "PLT1"            4 bytes ASCII magic
//! dtype code        u32 LE (1 = float32, 2 = float64)
//! ndim              u32 LE
//! extents           ndim x u64 LE
//! payload           row-major values, little-endian, last axis fastest
//! ```
//!
//! Tensors always compute in `f64`. A tensor tagged [`DType::F32`] holds values
//! that are exactly representable as `f32`, so writing and reading it back is
//! bit-exact.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PLT1";
const MAX_AXES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Semantic role of a tensor axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisRole {
    Height,
    Width,
    Color,
    Polarization,
}

impl AxisRole {
    pub fn name(self) -> &'static str {
        match self {
            AxisRole::Height => "H",
            AxisRole::Width => "W",
            AxisRole::Color => "C",
            AxisRole::Polarization => "P",
        }
    }
}

/// Axis bindings of the three tensor kinds exchanged through files.
pub const SCENE_AXES: [AxisRole; 4] = [
    AxisRole::Height,
    AxisRole::Width,
    AxisRole::Color,
    AxisRole::Polarization,
];
pub const MEASUREMENT_AXES: [AxisRole; 3] = [AxisRole::Height, AxisRole::Width, AxisRole::Color];
pub const MASK_AXES: [AxisRole; 3] = [AxisRole::Height, AxisRole::Width, AxisRole::Polarization];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    dtype: DType,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.is_empty() || dims.len() > MAX_AXES {
        return Err(Error::invalid(format!(
            "tensor must have 1 to {MAX_AXES} axes, got {}",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("zero extent in dims {dims:?}")));
    }
    let n: usize = dims.iter().product();
    if n != len {
        return Err(Error::invalid(format!(
            "dims {dims:?} describe {n} values but {len} were supplied"
        )));
    }
    Ok(())
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

impl Tensor {
    /// Builds a float64 tensor. Rejects shape mismatches and non-finite values.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_dims(&dims, data.len())?;
        check_finite(&data)?;
        Ok(Tensor {
            dims,
            dtype: DType::F64,
            data,
        })
    }

    pub fn new_f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Tensor::new(dims, data.into_iter().map(f64::from).collect())
            .map(|t| t.with_dtype_unchecked(DType::F32))
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = dims.iter().product();
        Tensor::new(dims, vec![0.0; n])
    }

    /// Retags the storage dtype. Converting to float32 rounds every value.
    pub fn with_dtype(self, dtype: DType) -> Result<Self> {
        match dtype {
            DType::F64 => Ok(self.with_dtype_unchecked(DType::F64)),
            DType::F32 => {
                let data: Vec<f64> = self.data.iter().map(|&v| f64::from(v as f32)).collect();
                check_finite(&data)?;
                Ok(Tensor {
                    dims: self.dims,
                    dtype: DType::F32,
                    data,
                })
            }
        }
    }

    fn with_dtype_unchecked(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major flat offset of a multi-index.
    pub fn flat_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {i} out of bounds for extent {d}");
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    /// Copies out the slice at `index` along `axis`, dropping that axis.
    pub fn slice_axis(&self, axis: usize, index: usize) -> Result<Tensor> {
        if axis >= self.ndim() || self.ndim() == 1 {
            return Err(Error::invalid(format!(
                "cannot slice axis {axis} of a {}-axis tensor",
                self.ndim()
            )));
        }
        if index >= self.dims[axis] {
            return Err(Error::invalid(format!(
                "slice index {index} out of range for extent {}",
                self.dims[axis]
            )));
        }
        let outer: usize = self.dims[..axis].iter().product();
        let inner: usize = self.dims[axis + 1..].iter().product();
        let extent = self.dims[axis];
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * extent + index) * inner;
            data.extend_from_slice(&self.data[start..start + inner]);
        }
        let mut dims = self.dims.clone();
        dims.remove(axis);
        Ok(Tensor {
            dims,
            dtype: self.dtype,
            data,
        })
    }

    /// Checks that the tensor binds exactly the given axis roles with the
    /// given extents (`None` leaves an extent free).
    pub fn expect_axes(&self, roles: &[AxisRole], extents: &[Option<usize>]) -> Result<()> {
        if self.ndim() != roles.len() {
            return Err(Error::invalid(format!(
                "expected a {}-axis tensor ({}), got dims {:?}",
                roles.len(),
                roles.iter().map(|r| r.name()).collect::<Vec<_>>().join(","),
                self.dims
            )));
        }
        for ((role, expected), &got) in roles.iter().zip(extents).zip(&self.dims) {
            if let Some(e) = expected {
                crate::error::check_axis(role.name(), *e, got)?;
            }
        }
        Ok(())
    }

    /// Serializes to the PLT1 byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = 4 + 4 + 4 + 8 * self.dims.len();
        let mut out = Vec::with_capacity(header + self.len() * self.dtype.size_of());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.dtype.code().to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match self.dtype {
            DType::F32 => {
                for &v in &self.data {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            DType::F64 => {
                for &v in &self.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Tensor> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a PLT1 file".into()));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let dtype = DType::from_code(u32_at(4))?;
        let ndim = u32_at(8) as usize;
        if ndim == 0 || ndim > MAX_AXES {
            return Err(Error::Format(format!("unsupported axis count {ndim}")));
        }
        let header = 12 + 8 * ndim;
        if bytes.len() < header {
            return Err(Error::Format(format!(
                "expected {header} header bytes, got {}",
                bytes.len()
            )));
        }
        let dims: Vec<usize> = (0..ndim)
            .map(|k| {
                let at = 12 + 8 * k;
                u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize
            })
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("extents {dims:?} overflow")))?;
        let expected = count
            .checked_mul(dtype.size_of())
            .ok_or_else(|| Error::Format(format!("extents {dims:?} overflow")))?;
        let payload = &bytes[header..];
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} bytes, got {}",
                payload.len()
            )));
        }
        let data: Vec<f64> = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        check_dims(&dims, data.len()).map_err(|e| Error::Format(e.to_string()))?;
        check_finite(&data)?;
        Ok(Tensor { dims, dtype, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Tensor::from_bytes(&bytes)
    }
}

/// Min-max scaling policy for previews.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalize {
    Global,
    PerChannel,
}

/// Offsets and spans used to map values to 8-bit, one entry per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PreviewScaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Renders an (H, W) or (H, W, C<=3) tensor into 8-bit RGB or grayscale
/// pixels. A degenerate value range renders mid-gray.
pub fn render_preview(t: &Tensor, normalize: Normalize) -> Result<(u32, u32, Vec<u8>, usize, PreviewScaling)> {
    let (h, w, c) = match t.dims() {
        [h, w] => (*h, *w, 1),
        [h, w, c] if *c <= 3 => (*h, *w, *c),
        dims => {
            return Err(Error::invalid(format!(
                "preview needs an (H,W) or (H,W,C<=3) tensor; got dims {dims:?}, select a channel/polarization slice first"
            )))
        }
    };
    let data = t.data();
    let range = |ch: Option<usize>| {
        let it = data
            .iter()
            .enumerate()
            .filter(|(i, _)| ch.is_none_or(|ch| i % c == ch))
            .map(|(_, &v)| v);
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (mins, maxs): (Vec<f64>, Vec<f64>) = match normalize {
        Normalize::Global => {
            let (lo, hi) = range(None);
            (vec![lo; c], vec![hi; c])
        }
        Normalize::PerChannel => (0..c).map(|ch| range(Some(ch))).unzip(),
    };
    let out_channels = if c == 1 { 1 } else { 3 };
    let mut pixels = vec![0u8; h * w * out_channels];
    for px in 0..h * w {
        for ch in 0..c {
            let (lo, hi) = (mins[ch], maxs[ch]);
            let v = data[px * c + ch];
            let byte = if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                128
            };
            pixels[px * out_channels + ch] = byte;
        }
    }
    Ok((
        w as u32,
        h as u32,
        pixels,
        out_channels,
        PreviewScaling {
            min: mins,
            max: maxs,
        },
    ))
}

/// Writes a PNG preview of `t`; see [`render_preview`].
pub fn export_preview(t: &Tensor, path: impl AsRef<Path>, normalize: Normalize) -> Result<PreviewScaling> {
    let path = path.as_ref();
    let (w, h, pixels, channels, scaling) = render_preview(t, normalize)?;
    let color = if channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(path, &pixels, w, h, color, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    log::info!(
        "preview {}: min {:?} max {:?} ({normalize:?})",
        path.display(),
        scaling.min,
        scaling.max
    );
    Ok(scaling)
}
