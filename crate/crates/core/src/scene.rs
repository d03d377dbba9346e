//! Polarized scenes and sensor measurements.
//!
//! Both are stored planar (one contiguous H x W plane per color/polarization
//! pair) because every operator works plane by plane. File exchange uses the
//! interleaved (H, W, C, P) and (H, W, C) tensor bindings.

use crate::error::{check_axis, Error, Result};
use crate::tensor::{Tensor, MEASUREMENT_AXES, SCENE_AXES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SceneExtent {
    pub height: usize,
    pub width: usize,
    pub colors: usize,
    pub polarizations: usize,
}

impl SceneExtent {
    pub fn new(height: usize, width: usize, colors: usize, polarizations: usize) -> Result<Self> {
        if height == 0 || width == 0 || colors == 0 || polarizations == 0 {
            return Err(Error::invalid(format!(
                "scene extents must be positive, got {height}x{width}x{colors}x{polarizations}"
            )));
        }
        Ok(SceneExtent {
            height,
            width,
            colors,
            polarizations,
        })
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.plane_len() * self.colors * self.polarizations
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn measurement_len(&self) -> usize {
        self.plane_len() * self.colors
    }
}

/// Intensity of every (pixel, color, polarization) sample; the reconstruction unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizedScene {
    extent: SceneExtent,
    /// planes ordered [color][polarization], each row-major H x W
    data: Vec<f64>,
}

impl PolarizedScene {
    pub fn zeros(extent: SceneExtent) -> Self {
        PolarizedScene {
            extent,
            data: vec![0.0; extent.len()],
        }
    }

    /// Wraps planar data laid out [color][polarization][row][col].
    pub fn from_planar(extent: SceneExtent, data: Vec<f64>) -> Result<Self> {
        if data.len() != extent.len() {
            return Err(Error::invalid(format!(
                "planar scene needs {} values, got {}",
                extent.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(PolarizedScene { extent, data })
    }

    /// Builds the scene from per-(color, polarization) planes computed by `f`.
    pub fn from_fn(extent: SceneExtent, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(extent.len());
        for c in 0..extent.colors {
            for p in 0..extent.polarizations {
                for i in 0..extent.height {
                    for j in 0..extent.width {
                        data.push(f(i, j, c, p));
                    }
                }
            }
        }
        PolarizedScene::from_planar(extent, data)
    }

    pub fn extent(&self) -> SceneExtent {
        self.extent
    }

    pub fn planar(&self) -> &[f64] {
        &self.data
    }

    pub fn into_planar(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize, p: usize) -> &[f64] {
        let n = self.extent.plane_len();
        let k = c * self.extent.polarizations + p;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize, c: usize, p: usize) -> f64 {
        self.plane(c, p)[i * self.extent.width + j]
    }

    /// Interleaved (H, W, C, P) tensor.
    pub fn to_tensor(&self) -> Tensor {
        let e = self.extent;
        let mut out = vec![0.0; e.len()];
        for c in 0..e.colors {
            for p in 0..e.polarizations {
                let plane = self.plane(c, p);
                for (px, &v) in plane.iter().enumerate() {
                    out[(px * e.colors + c) * e.polarizations + p] = v;
                }
            }
        }
        Tensor::new(
            vec![e.height, e.width, e.colors, e.polarizations],
            out,
        )
        .expect("finite scene")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        t.expect_axes(&SCENE_AXES, &[None; 4])?;
        let d = t.dims();
        let extent = SceneExtent::new(d[0], d[1], d[2], d[3])?;
        let src = t.data();
        let mut data = vec![0.0; extent.len()];
        let n = extent.plane_len();
        for c in 0..extent.colors {
            for p in 0..extent.polarizations {
                let k = c * extent.polarizations + p;
                for px in 0..n {
                    data[k * n + px] = src[(px * extent.colors + c) * extent.polarizations + p];
                }
            }
        }
        Ok(PolarizedScene { extent, data })
    }

    /// The (H, W, C) slice for one polarization channel.
    pub fn polarization_slice(&self, p: usize) -> SensorMeasurement {
        let e = self.extent;
        let mut data = Vec::with_capacity(e.measurement_len());
        for c in 0..e.colors {
            data.extend_from_slice(self.plane(c, p));
        }
        SensorMeasurement {
            height: e.height,
            width: e.width,
            colors: e.colors,
            data,
        }
    }

    /// Stacks equally sized (H, W, C) images along a new polarization axis.
    pub fn stack_polarizations(slices: &[SensorMeasurement]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero polarization slices"))?;
        let extent = SceneExtent::new(first.height, first.width, first.colors, slices.len())?;
        for s in slices {
            check_axis("H", first.height, s.height)?;
            check_axis("W", first.width, s.width)?;
            check_axis("C", first.colors, s.colors)?;
        }
        let mut data = Vec::with_capacity(extent.len());
        for c in 0..extent.colors {
            for s in slices {
                data.extend_from_slice(s.plane(c));
            }
        }
        Ok(PolarizedScene { extent, data })
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Single-snapshot sensor image y, one plane per color channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorMeasurement {
    height: usize,
    width: usize,
    colors: usize,
    data: Vec<f64>,
}

impl SensorMeasurement {
    pub fn zeros(height: usize, width: usize, colors: usize) -> Self {
        SensorMeasurement {
            height,
            width,
            colors,
            data: vec![0.0; height * width * colors],
        }
    }

    pub fn from_planar(height: usize, width: usize, colors: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * colors {
            return Err(Error::invalid(format!(
                "planar measurement needs {} values, got {}",
                height * width * colors,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(SensorMeasurement {
            height,
            width,
            colors,
            data,
        })
    }


    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn colors(&self) -> usize {
        self.colors
    }

    pub fn planar(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn to_tensor(&self) -> Tensor {
        let n = self.height * self.width;
        let mut out = vec![0.0; n * self.colors];
        for c in 0..self.colors {
            for (px, &v) in self.plane(c).iter().enumerate() {
                out[px * self.colors + c] = v;
            }
        }
        Tensor::new(vec![self.height, self.width, self.colors], out).expect("finite measurement")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        t.expect_axes(&MEASUREMENT_AXES, &[None; 3])?;
        let (h, w, colors) = (t.dims()[0], t.dims()[1], t.dims()[2]);
        let n = h * w;
        let mut data = vec![0.0; n * colors];
        for c in 0..colors {
            for px in 0..n {
                data[c * n + px] = t.data()[px * colors + c];
            }
        }
        Ok(SensorMeasurement {
            height: h,
            width: w,
            colors,
            data,
        })
    }
}
