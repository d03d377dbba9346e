//! PSNR and SSIM against a reference reconstruction.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{check_axis, Error, Result};
use crate::scene::PolarizedScene;

/// PSNR in dB, or a marker for zero error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsnrValue {
    Db(f64),
    Identical,
}

impl PsnrValue {
    pub fn db(self) -> Option<f64> {
        match self {
            PsnrValue::Db(v) => Some(v),
            PsnrValue::Identical => None,
        }
    }

    /// dB value for ordering, with `Identical` above every finite value.
    pub fn rank(self) -> f64 {
        self.db().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for PsnrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsnrValue::Db(v) => write!(f, "{v:.6}"),
            PsnrValue::Identical => f.write_str("identical"),
        }
    }
}

impl Serialize for PsnrValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PsnrValue::Db(v) => s.serialize_f64(*v),
            PsnrValue::Identical => s.serialize_str("identical"),
        }
    }
}

pub fn psnr(x: &[f64], reference: &[f64], data_range: f64) -> Result<PsnrValue> {
    check_axis("flat", reference.len(), x.len())?;
    if !(data_range > 0.0) {
        return Err(Error::invalid(format!("data_range must be > 0, got {data_range}")));
    }
    if x.is_empty() {
        return Err(Error::invalid("psnr of empty input"));
    }
    let mse = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(PsnrValue::Identical);
    }
    Ok(PsnrValue::Db(10.0 * (data_range * data_range / mse).log10()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|k| (-(k as f64 - half).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable valid-region filtering of an `h x w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = taps.iter().enumerate().map(|(k, t)| t * img[i * w + j + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = taps.iter().enumerate().map(|(k, t)| t * rows[(i + k) * ow + j]).sum();
        }
    }
    out
}

/// Mean SSIM of one grayscale `h x w` image pair over all full windows.
pub fn ssim(x: &[f64], reference: &[f64], h: usize, w: usize, data_range: f64, params: SsimParams) -> Result<f64> {
    check_axis("flat", h * w, x.len())?;
    check_axis("flat", h * w, reference.len())?;
    if params.window % 2 == 0 || params.window == 0 {
        return Err(Error::invalid(format!("ssim window must be odd, got {}", params.window)));
    }
    if h < params.window || w < params.window {
        return Err(Error::invalid(format!(
            "image {h}x{w} is smaller than the {}x{} ssim window",
            params.window, params.window
        )));
    }
    if !(data_range > 0.0) {
        return Err(Error::invalid(format!("data_range must be > 0, got {data_range}")));
    }
    let taps = gaussian_window(params.window, params.sigma);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = filter_valid(x, h, w, &taps);
    let my = filter_valid(reference, h, w, &taps);
    let mxx = filter_valid(&prod(x, x), h, w, &taps);
    let myy = filter_valid(&prod(reference, reference), h, w, &taps);
    let mxy = filter_valid(&prod(x, reference), h, w, &taps);
    let c1 = (params.k1 * data_range).powi(2);
    let c2 = (params.k2 * data_range).powi(2);
    let mut total = 0.0;
    for k in 0..mx.len() {
        let (ux, uy) = (mx[k], my[k]);
        let vx = mxx[k] - ux * ux;
        let vy = myy[k] - uy * uy;
        let cov = mxy[k] - ux * uy;
        total += (2.0 * ux * uy + c1) * (2.0 * cov + c2) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

/// Per-polarization and mean quality figures of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub reference: String,
    pub data_range: f64,
    pub psnr_db: Vec<PsnrValue>,
    pub ssim: Vec<f64>,
    /// `Identical` only when every channel is identical; otherwise the
    /// average of the finite channels.
    pub mean_psnr_db: PsnrValue,
    pub mean_ssim: f64,
}

/// One CSV row of a metric report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// Polarization index, or `None` for the mean row.
    pub channel: Option<usize>,
    pub psnr_db: PsnrValue,
    pub ssim: f64,
}

impl MetricRow {
    pub fn channel_label(&self) -> String {
        self.channel.map_or_else(|| "mean".to_string(), |p| p.to_string())
    }
}

impl MetricReport {
    /// One row per polarization followed by the mean row.
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows: Vec<MetricRow> = self
            .psnr_db
            .iter()
            .zip(&self.ssim)
            .enumerate()
            .map(|(p, (&psnr_db, &ssim))| MetricRow {
                channel: Some(p),
                psnr_db,
                ssim,
            })
            .collect();
        rows.push(MetricRow {
            channel: None,
            psnr_db: self.mean_psnr_db,
            ssim: self.mean_ssim,
        });
        rows
    }

    /// `scene,perturbation,param,channel,psnr_db,ssim` rows with a header.
    pub fn to_csv(&self, scene: &str, perturbation: &str, param: f64) -> String {
        let mut out = String::from("scene,perturbation,param,channel,psnr_db,ssim\n");
        for r in self.rows() {
            out.push_str(&format!(
                "{scene},{perturbation},{param},{},{},{:.6}\n",
                r.channel_label(),
                r.psnr_db,
                r.ssim
            ));
        }
        out
    }
}

fn mean_psnr(values: &[PsnrValue]) -> PsnrValue {
    let finite: Vec<f64> = values.iter().filter_map(|v| v.db()).collect();
    if finite.is_empty() {
        PsnrValue::Identical
    } else {
        PsnrValue::Db(finite.iter().sum::<f64>() / finite.len() as f64)
    }
}

/// Both scenes are divided by `max(reference)` and compared with data range
/// 1. PSNR is taken over each polarization sub-volume (all colors); SSIM is
/// computed per color plane and averaged over colors.
pub fn evaluate_against_reference(
    x: &PolarizedScene,
    reference: &PolarizedScene,
    reference_id: &str,
) -> Result<MetricReport> {
    let (ex, er) = (x.extent(), reference.extent());
    check_axis("H", er.height, ex.height)?;
    check_axis("W", er.width, ex.width)?;
    check_axis("C", er.colors, ex.colors)?;
    check_axis("P", er.polarizations, ex.polarizations)?;
    let peak = reference.max_value();
    if !(peak > 0.0) {
        return Err(Error::invalid("reference has no positive values; cannot normalize"));
    }
    let params = SsimParams::default();
    let mut psnr_db = Vec::with_capacity(er.polarizations);
    let mut ssims = Vec::with_capacity(er.polarizations);
    for p in 0..er.polarizations {
        let mut xs = Vec::with_capacity(er.plane_len() * er.colors);
        let mut rs = Vec::with_capacity(er.plane_len() * er.colors);
        let mut ssim_sum = 0.0;
        for c in 0..er.colors {
            let xp: Vec<f64> = x.plane(c, p).iter().map(|v| v / peak).collect();
            let rp: Vec<f64> = reference.plane(c, p).iter().map(|v| v / peak).collect();
            ssim_sum += ssim(&xp, &rp, er.height, er.width, 1.0, params)?;
            xs.extend(xp);
            rs.extend(rp);
        }
        psnr_db.push(psnr(&xs, &rs, 1.0)?);
        ssims.push(ssim_sum / er.colors as f64);
    }
    Ok(MetricReport {
        reference: reference_id.to_string(),
        data_range: 1.0,
        mean_psnr_db: mean_psnr(&psnr_db),
        mean_ssim: ssims.iter().sum::<f64>() / ssims.len() as f64,
        psnr_db,
        ssim: ssims,
    })
}
