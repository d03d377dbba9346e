//! Row-major 2D complex FFTs built from rustfft 1D plans.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const BLOCK: usize = 32;

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Planned 2D transform for a fixed `rows x cols` grid.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        if buf.is_empty() {
            return;
        }
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward_rows(data, 0..self.rows);
    }

    /// Forward transform where only rows in `live` may be nonzero.
    pub fn forward_rows(&self, data: &mut [Complex64], live: Range<usize>) {
        assert_eq!(data.len(), self.len());
        Self::run(&self.row_fwd, &mut data[live.start * self.cols..live.end * self.cols]);
        let mut t = vec![Complex64::default(); self.len()];
        transpose(data, &mut t, self.rows, self.cols);
        Self::run(&self.col_fwd, &mut t);
        transpose(&t, data, self.cols, self.rows);
    }

    /// Inverse transform normalized by `1/(rows*cols)`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_rows(data, 0..self.rows);
    }

    /// Inverse transform that only finalizes the rows in `keep`; other rows
    /// are left holding intermediate values.
    pub fn inverse_rows(&self, data: &mut [Complex64], keep: Range<usize>) {
        assert_eq!(data.len(), self.len());
        let mut t = vec![Complex64::default(); self.len()];
        transpose(data, &mut t, self.rows, self.cols);
        Self::run(&self.col_inv, &mut t);
        // copy back only the rows we will finish
        for r in keep.clone() {
            for c in 0..self.cols {
                data[r * self.cols + c] = t[c * self.rows + r];
            }
        }
        let span = &mut data[keep.start * self.cols..keep.end * self.cols];
        Self::run(&self.row_inv, span);
        let scale = 1.0 / self.len() as f64;
        for v in span.iter_mut() {
            *v *= scale;
        }
    }
}
