//! Striped polarization masks: ideal indicators, Malus-law calibration
//! responses, and the blur / noise / interpolation perturbation families.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_axis, Error, Result};
use crate::tensor::{Tensor, MASK_AXES};

/// Direction along which stripe identity changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StripeAxis {
    /// Vertical stripes; identity varies along the width (column index).
    Vertical,
    /// Horizontal stripes; identity varies along the height (row index).
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StripeGeometry {
    /// Stripe width in pixels.
    pub stripe_width: usize,
    /// Polarizer angle of each stripe in one period, degrees.
    pub orientation_cycle: Vec<f64>,
    pub stripe_axis: StripeAxis,
    /// Shift of all stripe boundaries, pixels.
    pub phase_offset: i64,
}

impl Default for StripeGeometry {
    /// Prototype layout: 256 px stripes cycling 0/45/90/135 degrees.
    fn default() -> Self {
        StripeGeometry {
            stripe_width: 256,
            orientation_cycle: vec![0.0, 45.0, 90.0, 135.0],
            stripe_axis: StripeAxis::Vertical,
            phase_offset: 0,
        }
    }
}

impl StripeGeometry {
    pub fn with_width(stripe_width: usize) -> Self {
        StripeGeometry {
            stripe_width,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stripe_width == 0 {
            return Err(Error::invalid("stripe_width must be >= 1"));
        }
        if self.orientation_cycle.is_empty() {
            return Err(Error::invalid("orientation_cycle is empty"));
        }
        for (k, &a) in self.orientation_cycle.iter().enumerate() {
            if !(0.0..180.0).contains(&a) {
                return Err(Error::invalid(format!(
                    "orientation_cycle[{k}] = {a} is outside [0, 180)"
                )));
            }
            if self.orientation_cycle[..k].contains(&a) {
                return Err(Error::invalid(format!("orientation {a} repeated in orientation_cycle")));
            }
        }
        Ok(())
    }

    pub fn polarizations(&self) -> usize {
        self.orientation_cycle.len()
    }

    /// Index into `orientation_cycle` of the stripe covering pixel (i, j).
    pub fn stripe_at(&self, i: usize, j: usize) -> usize {
        let coord = match self.stripe_axis {
            StripeAxis::Vertical => j,
            StripeAxis::Horizontal => i,
        } as i64;
        let stripe = (coord - self.phase_offset).div_euclid(self.stripe_width as i64);
        stripe.rem_euclid(self.orientation_cycle.len() as i64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    Blur { sigma: f64 },
    Noise { sigma: f64, seed: u64 },
    Interpolation { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaskProvenance {
    IdealIndicator,
    MeasuredResponse { extinction: f64 },
    /// Spatially constant transmission, e.g. the no-mask reference.
    Uniform { value: f64 },
    Perturbed {
        base: Box<MaskProvenance>,
        perturbation: Perturbation,
    },
    /// Read from a file without a recorded provenance.
    External,
}

/// P transmission maps S_p in [0, 1], stored planar [p][row][col].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMaps {
    height: usize,
    width: usize,
    polarizations: usize,
    data: Vec<f64>,
    provenance: MaskProvenance,
    geometry: StripeGeometry,
}

fn check_range(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::invalid(format!(
            "mask value {} at flat index {i} is outside [0, 1]",
            data[i]
        ))),
        None => Ok(()),
    }
}

impl MaskMaps {
    pub fn from_planar(
        height: usize,
        width: usize,
        polarizations: usize,
        data: Vec<f64>,
        provenance: MaskProvenance,
        geometry: StripeGeometry,
    ) -> Result<Self> {
        if height * width * polarizations != data.len() || data.is_empty() {
            return Err(Error::invalid(format!(
                "mask {height}x{width}x{polarizations} needs {} values, got {}",
                height * width * polarizations,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        check_range(&data)?;
        Ok(MaskMaps {
            height,
            width,
            polarizations,
            data,
            provenance,
            geometry,
        })
    }

    /// Every map identically `value`.
    pub fn uniform(height: usize, width: usize, polarizations: usize, value: f64) -> Result<Self> {
        MaskMaps::from_planar(
            height,
            width,
            polarizations,
            vec![value; height * width * polarizations],
            MaskProvenance::Uniform { value },
            StripeGeometry::default(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn polarizations(&self) -> usize {
        self.polarizations
    }

    pub fn provenance(&self) -> &MaskProvenance {
        &self.provenance
    }

    pub fn geometry(&self) -> &StripeGeometry {
        &self.geometry
    }

    pub fn planar(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, p: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[p * n..(p + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize, p: usize) -> f64 {
        self.map(p)[i * self.width + j]
    }

    /// Keeps only the listed maps, in the given order.
    pub fn select(&self, maps: &[usize]) -> Result<MaskMaps> {
        let mut data = Vec::with_capacity(maps.len() * self.height * self.width);
        for &p in maps {
            if p >= self.polarizations {
                return Err(Error::invalid(format!("mask has no map {p}")));
            }
            data.extend_from_slice(self.map(p));
        }
        MaskMaps::from_planar(
            self.height,
            self.width,
            maps.len(),
            data,
            self.provenance.clone(),
            self.geometry.clone(),
        )
    }

    /// Interleaved (H, W, P) tensor.
    pub fn to_tensor(&self) -> Tensor {
        let n = self.height * self.width;
        let p_count = self.polarizations;
        let mut out = vec![0.0; n * p_count];
        for p in 0..p_count {
            for (px, &v) in self.map(p).iter().enumerate() {
                out[px * p_count + p] = v;
            }
        }
        Tensor::new(vec![self.height, self.width, p_count], out).expect("finite mask")
    }

    pub fn from_tensor(t: &Tensor, provenance: MaskProvenance, geometry: StripeGeometry) -> Result<Self> {
        t.expect_axes(&MASK_AXES, &[None; 3])?;
        let (h, w, p_count) = (t.dims()[0], t.dims()[1], t.dims()[2]);
        let n = h * w;
        let mut data = vec![0.0; n * p_count];
        for p in 0..p_count {
            for px in 0..n {
                data[p * n + px] = t.data()[px * p_count + p];
            }
        }
        MaskMaps::from_planar(h, w, p_count, data, provenance, geometry)
    }

    fn derived(&self, data: Vec<f64>, perturbation: Perturbation) -> MaskMaps {
        MaskMaps {
            height: self.height,
            width: self.width,
            polarizations: self.polarizations,
            data,
            provenance: MaskProvenance::Perturbed {
                base: Box::new(self.provenance.clone()),
                perturbation,
            },
            geometry: self.geometry.clone(),
        }
    }
}

/// Binary indicator stripes: S_p(i, j) = 1 iff the stripe at (i, j) has
/// orientation `orientation_cycle[p]`. Partial stripes at the borders are kept.
pub fn make_ideal_mask(height: usize, width: usize, geom: &StripeGeometry) -> Result<MaskMaps> {
    geom.validate()?;
    let p_count = geom.polarizations();
    let mut data = vec![0.0; height * width * p_count];
    for i in 0..height {
        for j in 0..width {
            let s = geom.stripe_at(i, j);
            data[(s * height + i) * width + j] = 1.0;
        }
    }
    MaskMaps::from_planar(height, width, p_count, data, MaskProvenance::IdealIndicator, geom.clone())
}

/// Intensity passed by a polarizer stripe at `stripe_deg` when probed with
/// linearly polarized light at `probe_deg`: Malus' law plus leakage.
pub fn malus_transmission(probe_deg: f64, stripe_deg: f64, extinction: f64) -> f64 {
    let delta = (probe_deg - stripe_deg).to_radians();
    // cos^2 via the half-angle form keeps the 0/45/90 degree levels exact
    let cos2 = 0.5 * (1.0 + (2.0 * delta).cos());
    (1.0 - extinction) * cos2 + 0.5 * extinction
}

/// Emulates the calibration capture: map p is the response of every stripe to
/// an external polarizer at `orientation_cycle[p]`.
pub fn synthesize_measured_response(
    geom: &StripeGeometry,
    height: usize,
    width: usize,
    extinction: f64,
) -> Result<MaskMaps> {
    geom.validate()?;
    if !(0.0..1.0).contains(&extinction) {
        return Err(Error::invalid(format!("extinction {extinction} must lie in [0, 1)")));
    }
    let p_count = geom.polarizations();
    let mut data = Vec::with_capacity(height * width * p_count);
    for &probe in &geom.orientation_cycle {
        for i in 0..height {
            for j in 0..width {
                let stripe = geom.orientation_cycle[geom.stripe_at(i, j)];
                data.push(malus_transmission(probe, stripe, extinction).clamp(0.0, 1.0));
            }
        }
    }
    MaskMaps::from_planar(
        height,
        width,
        p_count,
        data,
        MaskProvenance::MeasuredResponse { extinction },
        geom.clone(),
    )
}

/// Unit-sum discrete Gaussian taps for offsets `-r..=r`, `r = ceil(4 sigma)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// 1D Gaussian blur of every map perpendicular to the stripes (along the axis
/// where stripe identity changes), with replicate padding.
pub fn blur_mask(m: &MaskMaps, sigma: f64) -> Result<MaskMaps> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("blur sigma must be >= 0, got {sigma}")));
    }
    let perturbation = Perturbation::Blur { sigma };
    if sigma == 0.0 {
        return Ok(m.derived(m.data.clone(), perturbation));
    }
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as i64;
    let (h, w) = (m.height, m.width);
    let mut out = vec![0.0; m.data.len()];
    for p in 0..m.polarizations {
        let src = m.map(p);
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (k, &tap) in taps.iter().enumerate() {
                    let off = k as i64 - radius;
                    let (si, sj) = match m.geometry.stripe_axis {
                        StripeAxis::Vertical => (i, (j as i64 + off).clamp(0, w as i64 - 1) as usize),
                        StripeAxis::Horizontal => ((i as i64 + off).clamp(0, h as i64 - 1) as usize, j),
                    };
                    acc += tap * src[si * w + sj];
                }
                dst[i * w + j] = acc.clamp(0.0, 1.0);
            }
        }
    }
    Ok(m.derived(out, perturbation))
}

/// Adds i.i.d. N(0, sigma^2) noise from a seeded ChaCha8 stream (planar
/// order), then clamps to [0, 1].
pub fn noise_mask(m: &MaskMaps, sigma: f64, seed: u64) -> Result<MaskMaps> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let perturbation = Perturbation::Noise { sigma, seed };
    if sigma == 0.0 {
        return Ok(m.derived(m.data.clone(), perturbation));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = m
        .data
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    Ok(m.derived(data, perturbation))
}

/// Min-max normalizes each map independently to [0, 1]. A constant map has
/// no range to stretch and is kept as is.
pub fn normalize_per_map(m: &MaskMaps) -> MaskMaps {
    let n = m.height * m.width;
    let mut data = m.data.clone();
    for map in data.chunks_mut(n) {
        let (lo, hi) = map
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi > lo {
            for v in map.iter_mut() {
                *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0);
            }
        }
    }
    MaskMaps {
        data,
        ..m.clone()
    }
}

/// `(1 - t) * normalized(measured) + t * simulated`.
pub fn interpolate_masks(measured: &MaskMaps, simulated: &MaskMaps, t: f64) -> Result<MaskMaps> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("interpolation t = {t} outside [0, 1]")));
    }
    check_axis("H", measured.height, simulated.height)?;
    check_axis("W", measured.width, simulated.width)?;
    check_axis("P", measured.polarizations, simulated.polarizations)?;
    let normalized = normalize_per_map(measured);
    let data = normalized
        .data
        .iter()
        .zip(&simulated.data)
        .map(|(&a, &b)| ((1.0 - t) * a + t * b).clamp(0.0, 1.0))
        .collect();
    Ok(measured.derived(data, Perturbation::Interpolation { t }))
}
