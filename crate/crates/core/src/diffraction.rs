//! Scalar diffraction across the mask to sensor gap: angular-spectrum
//! propagation, an ideal thin lens and a 1D amplitude grating.
//!
//! Grid coordinates are `x_j = (j - N/2) * pitch` for rows and columns alike;
//! row index follows y, column index follows x.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;

/// Square sampled complex amplitude, row-major `[y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    n: usize,
    pitch: f64,
    wavelength: f64,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(n: usize, pitch: f64, wavelength: f64, data: Vec<Complex64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("grid size must be >= 2, got {n}")));
        }
        if !n.is_power_of_two() {
            log::warn!("grid size {n} is not a power of two; FFTs will be slower");
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::invalid(format!("pitch must be > 0, got {pitch}")));
        }
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::invalid(format!("wavelength must be > 0, got {wavelength}")));
        }
        if data.len() != n * n {
            return Err(Error::invalid(format!("field needs {} samples, got {}", n * n, data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ComplexField { n, pitch, wavelength, data })
    }

    pub fn from_fn(n: usize, pitch: f64, wavelength: f64, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let data = (0..n * n)
            .map(|k| f(coord(k % n, n, pitch), coord(k / n, n, pitch)))
            .collect();
        Self::new(n, pitch, wavelength, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn side_length(&self) -> f64 {
        self.n as f64 * self.pitch
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        coord(j, self.n, self.pitch)
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `sum |U|^2 * pitch^2`
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.pitch * self.pitch
    }
}

fn coord(j: usize, n: usize, pitch: f64) -> f64 {
    (j as f64 - (n / 2) as f64) * pitch
}

/// FFT frequency of bin `k` on an `n` grid.
fn freq(k: usize, n: usize, pitch: f64) -> f64 {
    let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * pitch)
}

/// Angular-spectrum propagation over `z >= 0`. Evanescent components are
/// dropped.
pub fn angular_spectrum_propagate(u: &ComplexField, z: f64) -> Result<ComplexField> {
    if !(z >= 0.0) {
        return Err(Error::invalid(format!("propagation distance must be >= 0, got {z}")));
    }
    propagate_signed(u, z)
}

/// Propagation for either sign of `z`; back-propagation is the conjugate
/// transfer function on the band.
pub fn propagate_signed(u: &ComplexField, z: f64) -> Result<ComplexField> {
    if !z.is_finite() {
        return Err(Error::invalid(format!("propagation distance must be finite, got {z}")));
    }
    let (n, pitch, lambda) = (u.n, u.pitch, u.wavelength);
    let k = 2.0 * PI / lambda;
    let plan = Fft2::new(n, n);
    let mut spec = u.data.clone();
    plan.forward(&mut spec);
    let f: Vec<f64> = (0..n).map(|j| freq(j, n, pitch)).collect();
    for (r, fy) in f.iter().enumerate() {
        for (c, fx) in f.iter().enumerate() {
            let arg = 1.0 - (lambda * fx).powi(2) - (lambda * fy).powi(2);
            let v = &mut spec[r * n + c];
            *v = if arg >= 0.0 {
                *v * Complex64::from_polar(1.0, k * z * arg.sqrt())
            } else {
                Complex64::default()
            };
        }
    }
    plan.inverse(&mut spec);
    ComplexField::new(n, pitch, lambda, spec)
}

/// Unit-amplitude circular pupil times the lens phase
/// `exp(-i k (x^2 + y^2) / (2 f))`. An infinite `focal_length` gives the bare
/// pupil.
pub fn thin_lens_field(
    n: usize,
    pitch: f64,
    wavelength: f64,
    focal_length: f64,
    pupil_radius: f64,
) -> Result<ComplexField> {
    let half = (n / 2) as f64 * pitch;
    if !(pupil_radius > 0.0) || pupil_radius > half {
        return Err(Error::invalid(format!(
            "pupil radius {pupil_radius} m does not fit the grid half-extent {half} m"
        )));
    }
    if !(focal_length > 0.0) {
        return Err(Error::invalid(format!("focal length must be > 0, got {focal_length}")));
    }
    let k = 2.0 * PI / wavelength;
    ComplexField::from_fn(n, pitch, wavelength, |x, y| {
        let r2 = x * x + y * y;
        if r2 > pupil_radius * pupil_radius {
            Complex64::default()
        } else if focal_length.is_infinite() {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, -k * r2 / (2.0 * focal_length))
        }
    })
}

/// Vertical-stripe amplitude grating. Stripe `s` covers
/// `[offset + s w, offset + (s+1) w)` and transmits `levels[s mod len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GratingSpec {
    pub stripe_width: f64,
    pub amplitude_levels: Vec<f64>,
    pub offset: f64,
}

impl Default for GratingSpec {
    fn default() -> Self {
        GratingSpec {
            stripe_width: 880e-6,
            amplitude_levels: vec![0.0, 0.5f64.sqrt(), 1.0, 0.5f64.sqrt()],
            offset: 0.0,
        }
    }
}

impl GratingSpec {
    pub fn validate(&self, pitch: f64) -> Result<()> {
        if !(self.stripe_width >= pitch) {
            return Err(Error::invalid(format!(
                "stripe width {} m is below the grid pitch {pitch} m",
                self.stripe_width
            )));
        }
        if self.amplitude_levels.is_empty() {
            return Err(Error::invalid("grating needs at least one amplitude level"));
        }
        if let Some(v) = self.amplitude_levels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("amplitude level {v} outside [0, 1]")));
        }
        if !self.offset.is_finite() {
            return Err(Error::invalid("grating offset must be finite"));
        }
        Ok(())
    }

    pub fn transmission(&self, x: f64) -> f64 {
        let s = ((x - self.offset) / self.stripe_width).floor() as i64;
        self.amplitude_levels[s.rem_euclid(self.amplitude_levels.len() as i64) as usize]
    }
}

pub fn apply_grating(u: &ComplexField, g: &GratingSpec) -> Result<ComplexField> {
    g.validate(u.pitch)?;
    let n = u.n;
    let t: Vec<f64> = (0..n).map(|j| g.transmission(u.coordinate(j))).collect();
    let data = u.data.iter().enumerate().map(|(k, v)| v * t[k % n]).collect();
    ComplexField::new(n, u.pitch, u.wavelength, data)
}

/// Geometry of the lens, grating and sensor simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapConfig {
    pub grid: usize,
    pub pitch: f64,
    pub wavelength: f64,
    pub focal_length: f64,
    pub pupil_radius: f64,
    /// Mask to sensor distance; the lens to mask distance is `focal_length - z2`.
    pub z2: f64,
    pub grating: GratingSpec,
}

impl GapConfig {
    /// 4096 samples at 3 um (12.288 mm), f = 20 mm, pupil radius 1.2288 mm,
    /// z2 = 1.66 mm.
    pub fn paper_scale() -> Self {
        let n = 4096;
        let pitch = 3e-6;
        GapConfig {
            grid: n,
            pitch,
            wavelength: 532e-9,
            focal_length: 20e-3,
            pupil_radius: 0.1 * n as f64 * pitch,
            z2: 1.66e-3,
            grating: GratingSpec::default(),
        }
    }

    /// 1024 samples at the same 3 um pitch and the same physical pupil, so the
    /// lens phase stays sampled above Nyquist. The window shrinks to 3.072 mm.
    pub fn desk_scale() -> Self {
        GapConfig {
            grid: 1024,
            ..Self::paper_scale()
        }
    }

    pub fn z1(&self) -> f64 {
        self.focal_length - self.z2
    }
}

impl Default for GapConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

/// Sensor-plane result for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCase {
    pub label: &'static str,
    pub intensity: Vec<f64>,
    /// Intensity along the center row.
    pub profile_x: Vec<f64>,
    pub second_moment_x: f64,
    pub second_moment_y: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub config: GapConfig,
    pub with_grating: GapCase,
    pub without_grating: GapCase,
}

impl GapReport {
    pub fn spreading_ratio(&self) -> f64 {
        self.with_grating.second_moment_x / self.without_grating.second_moment_x
    }

    /// `case,z2,second_moment_x,second_moment_y,energy` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,z2,second_moment_x,second_moment_y,energy\n");
        for c in [&self.with_grating, &self.without_grating] {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                c.label, self.config.z2, c.second_moment_x, c.second_moment_y, c.energy
            );
        }
        out
    }

    /// `x,with_grating,without_grating` center-row profiles.
    pub fn profiles_csv(&self) -> String {
        let mut out = String::from("x,with_grating,without_grating\n");
        let n = self.config.grid;
        for j in 0..n {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e}",
                coord(j, n, self.config.pitch),
                self.with_grating.profile_x[j],
                self.without_grating.profile_x[j]
            );
        }
        out
    }
}

/// Second moments `(along x, along y)` of an `n x n` intensity normalized to
/// unit sum, each about its own centroid.
pub fn second_moments(intensity: &[f64], n: usize, pitch: f64) -> Result<(f64, f64)> {
    let total: f64 = intensity.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("intensity has no energy; second moment undefined"));
    }
    let mut marg_x = vec![0.0; n];
    let mut marg_y = vec![0.0; n];
    for (k, v) in intensity.iter().enumerate() {
        marg_x[k % n] += v / total;
        marg_y[k / n] += v / total;
    }
    let moment = |m: &[f64]| {
        let mean: f64 = m.iter().enumerate().map(|(j, w)| w * coord(j, n, pitch)).sum();
        m.iter()
            .enumerate()
            .map(|(j, w)| w * (coord(j, n, pitch) - mean).powi(2))
            .sum::<f64>()
    };
    Ok((moment(&marg_x), moment(&marg_y)))
}

fn summarize(label: &'static str, u: &ComplexField) -> Result<GapCase> {
    let n = u.n;
    let intensity = u.intensity();
    let (second_moment_x, second_moment_y) = second_moments(&intensity, n, u.pitch)?;
    Ok(GapCase {
        label,
        profile_x: intensity[(n / 2) * n..(n / 2 + 1) * n].to_vec(),
        second_moment_x,
        second_moment_y,
        energy: u.energy(),
        intensity,
    })
}

/// Sensor-plane intensity of a focused beam with and without the grating
/// placed `z2` in front of the sensor.
pub fn mask_gap_experiment(cfg: &GapConfig) -> Result<GapReport> {
    if !(cfg.z2 >= 0.0) || cfg.z2 >= cfg.focal_length {
        return Err(Error::invalid(format!(
            "z2 must lie in [0, focal_length), got {} with focal length {}",
            cfg.z2, cfg.focal_length
        )));
    }
    cfg.grating.validate(cfg.pitch)?;
    let lens = thin_lens_field(cfg.grid, cfg.pitch, cfg.wavelength, cfg.focal_length, cfg.pupil_radius)?;
    let at_mask = angular_spectrum_propagate(&lens, cfg.z1())?;
    let masked = apply_grating(&at_mask, &cfg.grating)?;
    let (with, without) = rayon::join(
        || angular_spectrum_propagate(&masked, cfg.z2),
        || angular_spectrum_propagate(&at_mask, cfg.z2),
    );
    let report = GapReport {
        config: cfg.clone(),
        with_grating: summarize("with_grating", &with?)?,
        without_grating: summarize("without_grating", &without?)?,
    };
    log::info!(
        "mask gap: second moment x {:.4e} (grating) vs {:.4e} (none), ratio {:.4}",
        report.with_grating.second_moment_x,
        report.without_grating.second_moment_x,
        report.spreading_ratio()
    );
    Ok(report)
}
