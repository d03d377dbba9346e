//! Linear Stokes parameters from four polarizer angles (0, 45, 90, 135).

use crate::error::{Error, Result};
use crate::scene::PolarizedScene;

/// DoLP denominator floor.
pub const S0_FLOOR: f64 = 1e-12;

/// Per-pixel Stokes maps, planar [c][H][W].
#[derive(Debug, Clone, PartialEq)]
pub struct StokesMaps {
    pub height: usize,
    pub width: usize,
    pub colors: usize,
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub dolp: Vec<f64>,
    /// Degrees in [-90, 90). Zero where `aolp_valid` is false.
    pub aolp_deg: Vec<f64>,
    /// False where S1 = S2 = 0 and the angle is undefined.
    pub aolp_valid: Vec<bool>,
}

impl StokesMaps {
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    /// DoLP averaged over pixels and colors.
    pub fn mean_dolp(&self) -> f64 {
        self.dolp.iter().sum::<f64>() / self.dolp.len() as f64
    }
}

/// Wraps an angle in degrees into [-90, 90).
pub fn wrap_half_turn(deg: f64) -> f64 {
    let w = (deg + 90.0).rem_euclid(180.0) - 90.0;
    if w >= 90.0 {
        w - 180.0
    } else {
        w
    }
}

pub fn stokes_from_subimages(x: &PolarizedScene) -> Result<StokesMaps> {
    let e = x.extent();
    if e.polarizations != 4 {
        return Err(Error::Dimension {
            axis: "P",
            expected: 4,
            got: e.polarizations,
        });
    }
    let n = e.plane_len() * e.colors;
    let mut m = StokesMaps {
        height: e.height,
        width: e.width,
        colors: e.colors,
        s0: Vec::with_capacity(n),
        s1: Vec::with_capacity(n),
        s2: Vec::with_capacity(n),
        dolp: Vec::with_capacity(n),
        aolp_deg: Vec::with_capacity(n),
        aolp_valid: Vec::with_capacity(n),
    };
    for c in 0..e.colors {
        let (i0, i45, i90, i135) = (x.plane(c, 0), x.plane(c, 1), x.plane(c, 2), x.plane(c, 3));
        for k in 0..e.plane_len() {
            let s0 = i0[k] + i90[k];
            let s1 = i0[k] - i90[k];
            let s2 = i45[k] - i135[k];
            let valid = s1 != 0.0 || s2 != 0.0;
            m.s0.push(s0);
            m.s1.push(s1);
            m.s2.push(s2);
            m.dolp.push(s1.hypot(s2) / s0.max(S0_FLOOR));
            m.aolp_deg
                .push(if valid { wrap_half_turn(0.5 * s2.atan2(s1).to_degrees()) } else { 0.0 });
            m.aolp_valid.push(valid);
        }
    }
    Ok(m)
}

/// Intensity behind an ideal linear polarizer at `theta_deg` for light with
/// total intensity `s0`, degree `dolp` and angle `aolp_deg`.
pub fn polarizer_intensity(s0: f64, dolp: f64, aolp_deg: f64, theta_deg: f64) -> f64 {
    0.5 * s0 * (1.0 + dolp * (2.0 * (theta_deg - aolp_deg).to_radians()).cos())
}
