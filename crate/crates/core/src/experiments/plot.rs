//! Bare-bones raster line plots: a frame, light grid lines and polylines.
//! No text is drawn; axis ranges travel alongside in CSV summaries.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
    pub dashed: bool,
}

/// Value ranges mapped onto the plot frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRange {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

const MARGIN: i64 = 24;

fn bounds(series: &[Series]) -> PlotRange {
    let mut r = PlotRange {
        x: (f64::INFINITY, f64::NEG_INFINITY),
        y: (f64::INFINITY, f64::NEG_INFINITY),
    };
    for &(x, y) in series.iter().flat_map(|s| &s.points) {
        if x.is_finite() && y.is_finite() {
            r.x = (r.x.0.min(x), r.x.1.max(x));
            r.y = (r.y.0.min(y), r.y.1.max(y));
        }
    }
    let widen = |(lo, hi): (f64, f64)| {
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    PlotRange {
        x: widen(r.x),
        y: widen(r.y),
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3], dashed: bool) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err, mut step) = (x0, y0, dx + dy, 0usize);
    loop {
        if !dashed || (step / 6) % 2 == 0 {
            put(img, x, y, c);
            put(img, x, y + 1, c);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        step += 1;
    }
}

/// Renders `series` into a `width x height` image and returns the value
/// ranges used for the axes.
pub fn line_plot(series: &[Series], width: u32, height: u32) -> (RgbImage, PlotRange) {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let range = bounds(series);
    let (w, h) = (width as i64, height as i64);
    let (left, right, top, bottom) = (MARGIN, w - MARGIN, MARGIN, h - MARGIN);
    let to_px = |x: f64, y: f64| {
        let fx = (x - range.x.0) / (range.x.1 - range.x.0);
        let fy = (y - range.y.0) / (range.y.1 - range.y.0);
        (
            left + (fx * (right - left) as f64).round() as i64,
            bottom - (fy * (bottom - top) as f64).round() as i64,
        )
    };
    let grid = [225, 225, 225];
    for k in 1..4 {
        let gy = top + k * (bottom - top) / 4;
        let gx = left + k * (right - left) / 4;
        line(&mut img, (left, gy), (right, gy), grid, false);
        line(&mut img, (gx, top), (gx, bottom), grid, false);
    }
    let frame = [0, 0, 0];
    line(&mut img, (left, top), (right, top), frame, false);
    line(&mut img, (left, bottom), (right, bottom), frame, false);
    line(&mut img, (left, top), (left, bottom), frame, false);
    line(&mut img, (right, top), (right, bottom), frame, false);
    for s in series {
        let pts: Vec<(i64, i64)> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| to_px(x, y))
            .collect();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], s.color, s.dashed);
        }
        for &(x, y) in &pts {
            for d in -2..=2 {
                put(&mut img, x + d, y, s.color);
                put(&mut img, x, y + d, s.color);
            }
        }
    }
    (img, range)
}

pub fn save_plot(series: &[Series], path: impl AsRef<Path>) -> Result<PlotRange> {
    let (img, range) = line_plot(series, 480, 320);
    img.save(path.as_ref())
        .map_err(|e| Error::Image(format!("{}: {e}", path.as_ref().display())))?;
    Ok(range)
}
